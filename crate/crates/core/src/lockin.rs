//! Dual-phase lock-in amplifier simulation.
//!
//! The polarimeter signal `s(t) = X·cos(ωt) + Y·sin(ωt) + n(t)` is sampled,
//! mixed with the reference and low-passed; the filter output at the end of
//! the record is the reading. [`Acquisition::Analytic`] replaces the sample
//! loop with the exact filter step response and the propagated noise
//! variance, which is what makes full-resolution sweeps cheap.

use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::magnetometer::{lineshape, ResonanceParams};
use crate::math::{cos, exp, sin, sqrt, Complex64};
use crate::hz_to_rad;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LockinError {
    #[error("sample rate {sample_rate} Hz does not exceed twice the drive frequency {drive_hz} Hz")]
    NyquistViolation { sample_rate: f64, drive_hz: f64 },
    #[error("signal has {got} samples, drive expects {expected}")]
    LengthMismatch { got: usize, expected: usize },
    #[error("invalid drive configuration: {0}")]
    InvalidDrive(&'static str),
    #[error("sweep needs at least 5 points, got {0}")]
    TooFewPoints(usize),
    #[error("invalid sweep record: {0}")]
    InvalidRecord(&'static str),
}

impl LockinError {
    pub fn kind(&self) -> &'static str {
        match self {
            LockinError::NyquistViolation { .. } => "NyquistViolation",
            LockinError::LengthMismatch { .. } => "LengthMismatch",
            LockinError::InvalidDrive(_) => "InvalidDrive",
            LockinError::TooFewPoints(_) => "TooFewPoints",
            LockinError::InvalidRecord(_) => "InvalidRecord",
        }
    }
}

/// How a lock-in reading is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Acquisition {
    /// Sample-by-sample synthesis and demodulation.
    #[default]
    TimeDomain,
    /// Closed-form filter response plus equivalent Gaussian output noise.
    Analytic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriveConfig {
    /// rad/s.
    pub omega_rf: f64,
    /// Record length, s.
    pub duration: f64,
    /// Hz.
    pub sample_rate: f64,
    /// Time constant of each low-pass stage, s.
    pub lp_time_constant: f64,
    /// Number of cascaded single-pole stages.
    pub lp_order: u32,
    /// Reference phase lag, rad: the reference is `cos(ωt − φ_ref)`, which
    /// rotates the output by `−φ_ref`.
    pub reference_phase: f64,
    pub acquisition: Acquisition,
}

impl Default for DriveConfig {
    /// 2 MHz sampling, 3 ms single-pole filter, 15 ms dwell at 105 kHz.
    fn default() -> Self {
        Self {
            omega_rf: hz_to_rad(105e3),
            duration: 15e-3,
            sample_rate: 2e6,
            lp_time_constant: 3e-3,
            lp_order: 1,
            reference_phase: 0.0,
            acquisition: Acquisition::TimeDomain,
        }
    }
}

impl DriveConfig {
    pub fn validate(&self) -> Result<(), LockinError> {
        if !(self.omega_rf > 0.0) {
            return Err(LockinError::InvalidDrive("drive frequency must be > 0"));
        }
        if !(self.sample_rate > 0.0) || !(self.lp_time_constant > 0.0) {
            return Err(LockinError::InvalidDrive("sample rate and time constant must be > 0"));
        }
        let drive_hz = self.omega_rf / (2.0 * core::f64::consts::PI);
        if !(self.sample_rate > 2.0 * drive_hz) {
            return Err(LockinError::NyquistViolation { sample_rate: self.sample_rate, drive_hz });
        }
        if self.duration < 5.0 * self.lp_time_constant * (1.0 - 1e-12) {
            return Err(LockinError::InvalidDrive("duration must be at least 5 time constants"));
        }
        if self.lp_order == 0 {
            return Err(LockinError::InvalidDrive("filter order must be >= 1"));
        }
        Ok(())
    }

    pub fn n_samples(&self) -> usize {
        libm::round(self.duration * self.sample_rate) as usize
    }

    pub fn with_omega(&self, omega_rf: f64) -> Self {
        Self { omega_rf, ..*self }
    }

    /// Per-sample smoothing coefficient of one stage, `1 − e^{−dt/τ}`.
    fn alpha(&self) -> f64 {
        1.0 - exp(-1.0 / (self.sample_rate * self.lp_time_constant))
    }
}

/// White Gaussian voltage noise on the polarimeter signal.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NoiseSpec {
    /// Per-sample RMS, V.
    pub rms_voltage: f64,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn silent() -> Self {
        Self::default()
    }
}

/// Lock-in readings across a frequency sweep.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SweepRecord {
    pub omegas: Vec<f64>,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl SweepRecord {
    pub fn validate(&self) -> Result<(), LockinError> {
        let n = self.omegas.len();
        if n == 0 || self.x.len() != n || self.y.len() != n {
            return Err(LockinError::InvalidRecord("columns must be non-empty and equal length"));
        }
        if self.omegas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LockinError::InvalidRecord("frequencies must be strictly increasing"));
        }
        if self.omegas.iter().chain(&self.x).chain(&self.y).any(|v| !v.is_finite()) {
            return Err(LockinError::InvalidRecord("non-finite value"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.omegas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omegas.is_empty()
    }
}

/// Sweep range `center ± half_width`, rad/s.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpan {
    pub center: f64,
    pub half_width: f64,
}

impl SweepSpan {
    /// `ω₀ − 5Γ → ω₀ + 5Γ`.
    pub fn around(omega0: f64, gamma_fwhm: f64) -> Self {
        Self { center: omega0, half_width: 5.0 * gamma_fwhm }
    }

    pub fn points(&self, n: usize) -> Vec<f64> {
        let lo = self.center - self.half_width;
        let step = 2.0 * self.half_width / (n - 1) as f64;
        (0..n).map(|k| lo + k as f64 * step).collect()
    }
}

/// Child seed for stream `tag` of `parent` (SplitMix64 finalizer).
pub fn derive_seed(parent: u64, tag: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }
    mix(parent ^ mix(tag))
}

/// Unit phasor `(cos, sin)` of `ω·k·dt + phase`, advanced by rotation and
/// re-anchored to libm every 256 samples.
struct Oscillator {
    k: usize,
    omega_dt: f64,
    phase: f64,
    c: f64,
    s: f64,
    rc: f64,
    rs: f64,
}

impl Oscillator {
    const ANCHOR: usize = 256;

    fn new(omega: f64, sample_rate: f64, phase: f64) -> Self {
        let omega_dt = omega / sample_rate;
        Self { k: 0, omega_dt, phase, c: cos(phase), s: sin(phase), rc: cos(omega_dt), rs: sin(omega_dt) }
    }

    #[inline]
    fn next(&mut self) -> (f64, f64) {
        let out = (self.c, self.s);
        self.k += 1;
        if self.k.is_multiple_of(Self::ANCHOR) {
            let arg = self.omega_dt * self.k as f64 + self.phase;
            self.c = cos(arg);
            self.s = sin(arg);
        } else {
            let c = self.c * self.rc - self.s * self.rs;
            self.s = self.s * self.rc + self.c * self.rs;
            self.c = c;
        }
        out
    }
}

/// Cascade of identical single-pole low-pass stages on the two mixer arms.
struct LowPass {
    alpha: f64,
    order: usize,
    x: [f64; 8],
    y: [f64; 8],
}

impl LowPass {
    fn new(drive: &DriveConfig) -> Self {
        Self { alpha: drive.alpha(), order: (drive.lp_order as usize).min(8), x: [0.0; 8], y: [0.0; 8] }
    }

    #[inline]
    fn push(&mut self, mut ix: f64, mut iy: f64) {
        for j in 0..self.order {
            self.x[j] += self.alpha * (ix - self.x[j]);
            self.y[j] += self.alpha * (iy - self.y[j]);
            ix = self.x[j];
            iy = self.y[j];
        }
    }

    fn output(&self) -> (f64, f64) {
        (self.x[self.order - 1], self.y[self.order - 1])
    }
}

/// Polarimeter time series for one drive frequency.
pub fn synthesize(
    params: &ResonanceParams,
    drive: &DriveConfig,
    b_transverse: Complex64,
    noise: &NoiseSpec,
) -> Result<Vec<f64>, LockinError> {
    drive.validate()?;
    let (x, y) = lineshape(params, drive.omega_rf, b_transverse);
    let n = drive.n_samples();
    let mut osc = Oscillator::new(drive.omega_rf, drive.sample_rate, 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let sigma = noise.rms_voltage;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let (c, s) = osc.next();
        let mut v = x * c + y * s;
        if sigma > 0.0 {
            let g: f64 = rng.sample(StandardNormal);
            v += sigma * g;
        }
        out.push(v);
    }
    Ok(out)
}

/// `X = 2·LP[s·cos(ωt − φ_ref)]`, `Y = 2·LP[s·sin(ωt − φ_ref)]` at the end of
/// the record.
pub fn demodulate(signal: &[f64], drive: &DriveConfig) -> Result<(f64, f64), LockinError> {
    drive.validate()?;
    let expected = drive.n_samples();
    if signal.len() != expected {
        return Err(LockinError::LengthMismatch { got: signal.len(), expected });
    }
    let mut osc = Oscillator::new(drive.omega_rf, drive.sample_rate, -drive.reference_phase);
    let mut lp = LowPass::new(drive);
    for &v in signal {
        let (c, s) = osc.next();
        lp.push(2.0 * v * c, 2.0 * v * s);
    }
    Ok(lp.output())
}

/// Fused `demodulate(synthesize(..))` without materializing the record.
/// Bit-identical to the two-step path.
fn acquire_time_domain(x: f64, y: f64, drive: &DriveConfig, noise: &NoiseSpec) -> (f64, f64) {
    let n = drive.n_samples();
    let mut sig = Oscillator::new(drive.omega_rf, drive.sample_rate, 0.0);
    let mut reference = Oscillator::new(drive.omega_rf, drive.sample_rate, -drive.reference_phase);
    let mut lp = LowPass::new(drive);
    let sigma = noise.rms_voltage;
    if sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        for _ in 0..n {
            let (c, s) = sig.next();
            let g: f64 = rng.sample(StandardNormal);
            let v = x * c + y * s + sigma * g;
            let (rc, rs) = reference.next();
            lp.push(2.0 * v * rc, 2.0 * v * rs);
        }
    } else {
        for _ in 0..n {
            let (c, s) = sig.next();
            let v = x * c + y * s;
            let (rc, rs) = reference.next();
            lp.push(2.0 * v * rc, 2.0 * v * rs);
        }
    }
    lp.output()
}

/// Step response and noise gain of the output filter for one record length.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterResponse {
    /// Cascade output after `n` samples of unit input from rest.
    pub settle: f64,
    /// `√Σ h_j²` of the cascade impulse response over the record.
    pub noise_gain: f64,
}

impl FilterResponse {
    pub fn for_drive(drive: &DriveConfig) -> Self {
        let n = drive.n_samples();
        let alpha = drive.alpha();
        let order = (drive.lp_order as usize).min(8);
        let mut step = [0.0f64; 8];
        let mut imp = [0.0f64; 8];
        let mut sum_h2 = 0.0;
        // The impulse enters at the first sample; tally h_j over the record.
        for k in 0..n {
            let mut s_in = 1.0;
            let mut i_in = if k == 0 { 1.0 } else { 0.0 };
            for j in 0..order {
                step[j] += alpha * (s_in - step[j]);
                imp[j] += alpha * (i_in - imp[j]);
                s_in = step[j];
                i_in = imp[j];
            }
            sum_h2 += imp[order - 1] * imp[order - 1];
        }
        Self { settle: step[order - 1], noise_gain: sqrt(sum_h2) }
    }

    /// Analytic reading: settled signal plus output noise of standard
    /// deviation `√2·σ·noise_gain` per arm, rotated by the reference phase.
    pub fn acquire(&self, x: f64, y: f64, drive: &DriveConfig, noise: &NoiseSpec) -> (f64, f64) {
        let (cp, sp) = (cos(drive.reference_phase), sin(drive.reference_phase));
        let mut xo = self.settle * (x * cp + y * sp);
        let mut yo = self.settle * (-x * sp + y * cp);
        if noise.rms_voltage > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
            let sd = core::f64::consts::SQRT_2 * noise.rms_voltage * self.noise_gain;
            let gx: f64 = rng.sample(StandardNormal);
            let gy: f64 = rng.sample(StandardNormal);
            xo += sd * gx;
            yo += sd * gy;
        }
        (xo, yo)
    }
}

/// One lock-in reading at `drive.omega_rf` using the configured acquisition.
pub fn acquire(
    params: &ResonanceParams,
    drive: &DriveConfig,
    b_transverse: Complex64,
    noise: &NoiseSpec,
) -> Result<(f64, f64), LockinError> {
    drive.validate()?;
    let (x, y) = lineshape(params, drive.omega_rf, b_transverse);
    Ok(match drive.acquisition {
        Acquisition::TimeDomain => acquire_time_domain(x, y, drive, noise),
        Acquisition::Analytic => FilterResponse::for_drive(drive).acquire(x, y, drive, noise),
    })
}

/// Sweep `n_points` evenly spaced drive frequencies across `span`. Point `k`
/// draws its noise from `derive_seed(noise.seed, k)`.
pub fn run_sweep(
    params: &ResonanceParams,
    drive: &DriveConfig,
    span: SweepSpan,
    n_points: usize,
    noise: &NoiseSpec,
    b_transverse: Complex64,
) -> Result<SweepRecord, LockinError> {
    if n_points < 5 {
        return Err(LockinError::TooFewPoints(n_points));
    }
    if !(span.half_width > 0.0) {
        return Err(LockinError::InvalidDrive("sweep span must be > 0"));
    }
    let omegas = span.points(n_points);
    let analytic = match drive.acquisition {
        Acquisition::Analytic => {
            drive.validate()?;
            Some(FilterResponse::for_drive(drive))
        }
        Acquisition::TimeDomain => None,
    };
    let mut x = Vec::with_capacity(n_points);
    let mut y = Vec::with_capacity(n_points);
    for (k, &w) in omegas.iter().enumerate() {
        let d = drive.with_omega(w);
        d.validate()?;
        let point_noise = NoiseSpec { rms_voltage: noise.rms_voltage, seed: derive_seed(noise.seed, k as u64) };
        let (xs, ys) = lineshape(params, w, b_transverse);
        let (xo, yo) = match &analytic {
            Some(resp) => resp.acquire(xs, ys, &d, &point_noise),
            None => acquire_time_domain(xs, ys, &d, &point_noise),
        };
        x.push(xo);
        y.push(yo);
    }
    Ok(SweepRecord { omegas, x, y })
}
