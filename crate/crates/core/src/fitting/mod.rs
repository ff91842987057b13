//! Resonance fitting of lock-in sweeps.
//!
//! The default joint fit models the complex reading
//! `X + iY = A·e^{iφ}·h/(h − iδ) + x₀ + i·y₀` with shared `(ω₀, h, A, φ)`.
//! Fits run in normalized units (frequency relative to the sweep center in
//! half-spans, voltage relative to the largest reading), which makes the
//! result equivariant under frequency shifts and amplitude scaling.

mod lm;

pub use lm::{minimize, LmOutcome, LmSettings, Problem};

use alloc::vec::Vec;

use thiserror::Error;

use crate::lockin::SweepRecord;
use crate::magnetometer::{complex_lorentzian, ResonanceParams};
use crate::math::{abs, atan2, hypot, median, sqrt, wrap_angle, Complex64};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("degenerate sweep: {0}")]
    DegenerateSweep(&'static str),
    #[error("phase undefined: both quadratures are zero")]
    UndefinedPhase,
    #[error("invalid sweep record")]
    InvalidRecord,
}

impl FitError {
    pub fn kind(&self) -> &'static str {
        match self {
            FitError::DegenerateSweep(_) => "DegenerateSweep",
            FitError::UndefinedPhase => "UndefinedPhase",
            FitError::InvalidRecord => "InvalidRecord",
        }
    }
}

/// Order of the arguments in the phase arctangent.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseConvention {
    /// `atan2(X, Y)`: π/2 on resonance for an unrotated line.
    #[default]
    XOverY,
    /// `atan2(Y, X)`: 0 on resonance.
    YOverX,
}

impl PhaseConvention {
    pub fn phase(self, x: f64, y: f64) -> f64 {
        match self {
            PhaseConvention::XOverY => atan2(x, y),
            PhaseConvention::YOverX => atan2(y, x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum FitMode {
    /// One complex model over both quadratures.
    #[default]
    Joint,
    /// X to an absorptive and Y to a dispersive profile, independently;
    /// shared parameters are averaged.
    Separate,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FitOptions {
    pub mode: FitMode,
    pub phase: PhaseConvention,
    pub lm: LmSettings,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitResult {
    pub params: ResonanceParams,
    /// Fitted radius at δ = 0, V.
    pub r_peak: f64,
    pub phi_peak: f64,
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
    /// One-sigma uncertainties from the residual-scaled covariance; NaN when
    /// the normal matrix is singular.
    pub omega0_stderr: f64,
    pub gamma_stderr: f64,
    pub amplitude_stderr: f64,
}

/// Radius and phase of the fitted quadratures at `omega`, offsets excluded.
pub fn r_phi(params: &ResonanceParams, omega: f64) -> Result<(f64, f64), FitError> {
    r_phi_with(params, omega, PhaseConvention::default())
}

pub fn r_phi_with(
    params: &ResonanceParams,
    omega: f64,
    convention: PhaseConvention,
) -> Result<(f64, f64), FitError> {
    let rot = Complex64::from_polar(params.amplitude, params.phase0);
    let z = rot * complex_lorentzian(omega - params.omega0, params.half_width());
    if z.re == 0.0 && z.im == 0.0 {
        return Err(FitError::UndefinedPhase);
    }
    Ok((hypot(z.re, z.im), convention.phase(z.re, z.im)))
}

fn first_argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (k, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = k;
        }
    }
    best
}

/// Full width at half height of `v` about its maximum, interpolated
/// linearly between samples. Falls back to twice the one-sided width when
/// only one crossing exists.
fn half_max_width(omegas: &[f64], v: &[f64], peak: usize, base: f64) -> Option<f64> {
    let level = base + 0.5 * (v[peak] - base);
    if !(v[peak] > base) {
        return None;
    }
    let cross = |i: usize, j: usize| {
        let t = (v[i] - level) / (v[i] - v[j]);
        omegas[i] + t * (omegas[j] - omegas[i])
    };
    let left = (1..=peak).rev().find(|&k| v[k - 1] < level).map(|k| cross(k, k - 1));
    let right = (peak..v.len() - 1).find(|&k| v[k + 1] < level).map(|k| cross(k, k + 1));
    match (left, right) {
        (Some(l), Some(r)) => Some(r - l),
        (Some(l), None) => Some(2.0 * (omegas[peak] - l)),
        (None, Some(r)) => Some(2.0 * (r - omegas[peak])),
        (None, None) => None,
    }
}

/// Starting point read directly off the X quadrature. The half-maximum level
/// sits halfway between the peak and the lowest reading.
pub fn initial_guess(record: &SweepRecord) -> ResonanceParams {
    let span = record.omegas[record.omegas.len() - 1] - record.omegas[0];
    let peak = first_argmax(&record.x);
    let x_base = median(&record.x);
    let amplitude = record.x[peak] - x_base;
    let floor = record.x.iter().cloned().fold(f64::INFINITY, f64::min);
    let gamma = half_max_width(&record.omegas, &record.x, peak, floor)
        .filter(|g| *g > 0.0 && amplitude > 0.0)
        .unwrap_or(span / 3.0);
    ResonanceParams {
        omega0: record.omegas[peak],
        gamma_fwhm: gamma,
        amplitude,
        x_offset: x_base,
        y_offset: median(&record.y),
        phase0: 0.0,
        drive_reference: 1.0,
    }
}

/// Sweep mapped to normalized units.
struct Normalized {
    center: f64,
    half_span: f64,
    scale: f64,
    u: Vec<f64>,
    x: Vec<f64>,
    y: Vec<f64>,
}

impl Normalized {
    fn new(record: &SweepRecord) -> Self {
        let n = record.omegas.len();
        let (lo, hi) = (record.omegas[0], record.omegas[n - 1]);
        let center = 0.5 * (lo + hi);
        let half_span = 0.5 * (hi - lo);
        let peak = record.x.iter().chain(&record.y).fold(0.0f64, |m, v| m.max(abs(*v)));
        let scale = if peak > 0.0 { peak } else { 1.0 };
        Self {
            center,
            half_span,
            scale,
            u: record.omegas.iter().map(|w| (w - center) / half_span).collect(),
            x: record.x.iter().map(|v| v / scale).collect(),
            y: record.y.iter().map(|v| v / scale).collect(),
        }
    }
}

/// Parameters `[u₀, h, a, φ, x₀, y₀]`.
struct JointProblem<'a>(&'a Normalized);

impl Problem for JointProblem<'_> {
    fn n_params(&self) -> usize {
        6
    }

    fn n_residuals(&self) -> usize {
        2 * self.0.u.len()
    }

    fn eval(&self, p: &[f64], r: &mut [f64], jac: Option<&mut [f64]>) {
        let d = self.0;
        let n = d.u.len();
        let (u0, h, a, phi, xo, yo) = (p[0], p[1], p[2], p[3], p[4], p[5]);
        let rot = Complex64::from_polar(1.0, phi);
        let i = Complex64::new(0.0, 1.0);
        let mut jac = jac;
        for k in 0..n {
            let delta = d.u[k] - u0;
            let den = Complex64::new(h, -delta);
            let l = h / den;
            let z = rot * l * a;
            r[k] = z.re + xo - d.x[k];
            r[n + k] = z.im + yo - d.y[k];
            if let Some(j) = jac.as_deref_mut() {
                let den2 = den * den;
                let dz_du0 = -(rot * a * i * h / den2);
                let dz_dh = rot * a * (-i * delta) / den2;
                let dz_da = rot * l;
                let dz_dphi = i * z;
                let re = &mut j[6 * k..6 * k + 6];
                re.copy_from_slice(&[dz_du0.re, dz_dh.re, dz_da.re, dz_dphi.re, 1.0, 0.0]);
                let im = &mut j[6 * (n + k)..6 * (n + k) + 6];
                im.copy_from_slice(&[dz_du0.im, dz_dh.im, dz_da.im, dz_dphi.im, 0.0, 1.0]);
            }
        }
    }
}

/// One quadrature alone, parameters `[u₀, h, a, offset]`.
struct QuadratureProblem<'a> {
    u: &'a [f64],
    v: &'a [f64],
    dispersive: bool,
}

impl Problem for QuadratureProblem<'_> {
    fn n_params(&self) -> usize {
        4
    }

    fn n_residuals(&self) -> usize {
        self.u.len()
    }

    fn eval(&self, p: &[f64], r: &mut [f64], jac: Option<&mut [f64]>) {
        let (u0, h, a, off) = (p[0], p[1], p[2], p[3]);
        let mut jac = jac;
        for k in 0..self.u.len() {
            let delta = self.u[k] - u0;
            let den = delta * delta + h * h;
            let den2 = den * den;
            let (shape, d_delta, d_h) = if self.dispersive {
                (h * delta / den, h * (h * h - delta * delta) / den2, delta * (delta * delta - h * h) / den2)
            } else {
                (h * h / den, -2.0 * h * h * delta / den2, 2.0 * h * delta * delta / den2)
            };
            r[k] = a * shape + off - self.v[k];
            if let Some(j) = jac.as_deref_mut() {
                j[4 * k..4 * k + 4].copy_from_slice(&[-a * d_delta, a * d_h, shape, 1.0]);
            }
        }
    }
}

fn stderr(out: &LmOutcome, dof: usize, idx: usize) -> f64 {
    match (&out.inv_normal, dof) {
        (Some(inv), d) if d > 0 => {
            let n = out.params.len();
            sqrt(out.cost / d as f64 * inv[idx * n + idx].max(0.0))
        }
        _ => f64::NAN,
    }
}

/// Fit a sweep with the default options.
pub fn fit_resonance(record: &SweepRecord) -> Result<FitResult, FitError> {
    fit_resonance_with(record, &FitOptions::default())
}

pub fn fit_resonance_with(record: &SweepRecord, options: &FitOptions) -> Result<FitResult, FitError> {
    record.validate().map_err(|_| FitError::InvalidRecord)?;
    let n = record.len();
    if n < 5 {
        return Err(FitError::DegenerateSweep("fewer than 5 points"));
    }
    let guess = initial_guess(record);
    let span = record.omegas[n - 1] - record.omegas[0];
    if span < 2.0 * guess.gamma_fwhm {
        return Err(FitError::DegenerateSweep("sweep spans less than two linewidths"));
    }
    let norm = Normalized::new(record);
    let mut result = match options.mode {
        FitMode::Joint => fit_joint(&norm, record, options),
        FitMode::Separate => fit_separate(&norm, record, options),
    };
    let spacing = span / (n - 1) as f64;
    let lo = record.omegas[0];
    let hi = record.omegas[n - 1];
    let p = &result.params;
    // A line narrower than the point spacing is only believed when both its
    // width and its height are well determined.
    let narrow_ok = p.gamma_fwhm > 5.0 * result.gamma_stderr && p.amplitude > 5.0 * result.amplitude_stderr;
    if !(p.gamma_fwhm >= spacing || narrow_ok)
        || !(p.omega0 >= lo && p.omega0 <= hi)
        || !result.residual_rms.is_finite()
    {
        result.converged = false;
    }
    Ok(result)
}

/// Rotate the data by the phase found at the radius peak so the guess logic,
/// which reads the absorptive quadrature, also works for rotated lines.
fn joint_start(norm: &Normalized) -> [f64; 6] {
    let xo = median(&norm.x);
    let yo = median(&norm.y);
    let radius: Vec<f64> = norm.x.iter().zip(&norm.y).map(|(x, y)| hypot(x - xo, y - yo)).collect();
    let peak = first_argmax(&radius);
    let phi = atan2(norm.y[peak] - yo, norm.x[peak] - xo);
    let rot = Complex64::from_polar(1.0, -phi);
    let mut along = Vec::with_capacity(norm.x.len());
    for (x, y) in norm.x.iter().zip(&norm.y) {
        along.push((rot * Complex64::new(x - xo, y - yo)).re);
    }
    let rotated = SweepRecord { omegas: norm.u.clone(), x: along, y: Vec::new() };
    let peak = first_argmax(&rotated.x);
    let base = median(&rotated.x);
    let a = rotated.x[peak] - base;
    let floor = rotated.x.iter().cloned().fold(f64::INFINITY, f64::min);
    let h = half_max_width(&rotated.omegas, &rotated.x, peak, floor)
        .filter(|g| *g > 0.0 && a > 0.0)
        .unwrap_or(2.0 / 3.0)
        * 0.5;
    [norm.u[peak], h, a.max(1e-12), phi, xo, yo]
}

#[allow(clippy::too_many_arguments)]
fn finish(
    norm: &Normalized,
    options: &FitOptions,
    p: [f64; 6],
    cost: f64,
    n_res: usize,
    iterations: usize,
    converged: bool,
    errs: [f64; 3],
) -> FitResult {
    let (mut u0, h, mut a, mut phi, xo, yo) = (p[0], p[1], p[2], p[3], p[4], p[5]);
    if a < 0.0 {
        a = -a;
        phi += core::f64::consts::PI;
    }
    phi = wrap_angle(phi);
    if !u0.is_finite() {
        u0 = f64::NAN;
    }
    let params = ResonanceParams {
        omega0: norm.center + norm.half_span * u0,
        gamma_fwhm: 2.0 * norm.half_span * h,
        amplitude: norm.scale * a,
        x_offset: norm.scale * xo,
        y_offset: norm.scale * yo,
        phase0: phi,
        drive_reference: 1.0,
    };
    let (zx, zy) = (params.amplitude * libm::cos(phi), params.amplitude * libm::sin(phi));
    FitResult {
        params,
        r_peak: params.amplitude,
        phi_peak: options.phase.phase(zx, zy),
        residual_rms: norm.scale * sqrt(cost / n_res as f64),
        converged: converged && h > 0.0 && a.is_finite(),
        iterations,
        omega0_stderr: norm.half_span * errs[0],
        gamma_stderr: 2.0 * norm.half_span * errs[1],
        amplitude_stderr: norm.scale * errs[2],
    }
}

fn fit_joint(norm: &Normalized, _record: &SweepRecord, options: &FitOptions) -> FitResult {
    let problem = JointProblem(norm);
    let out = minimize(&problem, &joint_start(norm), &options.lm);
    let m = problem.n_residuals();
    let dof = m.saturating_sub(6);
    let errs = [stderr(&out, dof, 0), stderr(&out, dof, 1), stderr(&out, dof, 2)];
    let p: [f64; 6] = out.params[..6].try_into().unwrap_or([f64::NAN; 6]);
    finish(norm, options, p, out.cost, m, out.iterations, out.converged, errs)
}

fn fit_separate(norm: &Normalized, record: &SweepRecord, options: &FitOptions) -> FitResult {
    let g = initial_guess(record);
    let u0 = (g.omega0 - norm.center) / norm.half_span;
    let h = 0.5 * g.gamma_fwhm / norm.half_span;
    let start_x = [u0, h, g.amplitude / norm.scale, g.x_offset / norm.scale];
    let px = QuadratureProblem { u: &norm.u, v: &norm.x, dispersive: false };
    let ox = minimize(&px, &start_x, &options.lm);
    // The dispersive fit starts from the absorptive solution.
    let start_y = [ox.params[0], ox.params[1], ox.params[2], median(&norm.y)];
    let py = QuadratureProblem { u: &norm.u, v: &norm.y, dispersive: true };
    let oy = minimize(&py, &start_y, &options.lm);
    let avg = |i: usize| 0.5 * (ox.params[i] + oy.params[i]);
    let dof = norm.u.len().saturating_sub(4);
    let comb = |i: usize| 0.5 * hypot(stderr(&ox, dof, i), stderr(&oy, dof, i));
    let p = [avg(0), avg(1), avg(2), 0.0, ox.params[3], oy.params[3]];
    finish(
        norm,
        options,
        p,
        ox.cost + oy.cost,
        2 * norm.u.len(),
        ox.iterations + oy.iterations,
        ox.converged && oy.converged && ox.params[1] > 0.0 && oy.params[1] > 0.0,
        [comb(0), comb(1), comb(2)],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hz_to_rad;
    use crate::lockin::SweepSpan;
    use crate::magnetometer::{lineshape, DEFAULT_LINEWIDTH};
    use alloc::vec;

    fn truth() -> ResonanceParams {
        ResonanceParams {
            x_offset: 0.013,
            y_offset: -0.021,
            ..ResonanceParams::new(hz_to_rad(105e3), DEFAULT_LINEWIDTH, 0.8)
        }
    }

    fn record(p: &ResonanceParams, n: usize) -> SweepRecord {
        let omegas = SweepSpan::around(p.omega0 + 0.3 * p.gamma_fwhm, p.gamma_fwhm).points(n);
        let b = Complex64::new(1.0, 0.0);
        let (x, y) = omegas.iter().map(|w| lineshape(p, *w, b)).unzip();
        SweepRecord { omegas, x, y }
    }

    #[test]
    fn noiseless_joint_recovery() {
        let p = truth();
        let fit = fit_resonance(&record(&p, 50)).unwrap();
        assert!(fit.converged);
        assert!(abs(fit.params.omega0 - p.omega0) < 1e-6 * p.gamma_fwhm);
        assert!(abs(fit.params.gamma_fwhm / p.gamma_fwhm - 1.0) < 1e-6);
        assert!(abs(fit.r_peak - 0.8) < 1e-9);
        assert!(fit.residual_rms < 1e-10 * 0.8);
        assert!(abs(fit.phi_peak - core::f64::consts::FRAC_PI_2) < 1e-9);
    }

    #[test]
    fn noiseless_separate_recovery() {
        let p = truth();
        let opts = FitOptions { mode: FitMode::Separate, ..FitOptions::default() };
        let fit = fit_resonance_with(&record(&p, 50), &opts).unwrap();
        assert!(fit.converged);
        assert!(abs(fit.params.omega0 - p.omega0) < 1e-6 * p.gamma_fwhm);
        assert!(abs(fit.params.gamma_fwhm / p.gamma_fwhm - 1.0) < 1e-6);
        assert!(abs(fit.params.amplitude - 0.8) < 1e-8);
    }

    #[test]
    fn rotated_line_is_recovered() {
        let p = ResonanceParams { phase0: 2.6, ..truth() };
        let fit = fit_resonance(&record(&p, 40)).unwrap();
        assert!(fit.converged);
        assert!(abs(wrap_angle(fit.params.phase0 - 2.6)) < 1e-9);
        assert!(abs(fit.params.amplitude - 0.8) < 1e-9);
    }

    #[test]
    fn five_point_minimum() {
        let p = truth();
        let fit = fit_resonance(&record(&p, 5)).unwrap();
        assert!(fit.converged);
        assert!(abs(fit.params.omega0 - p.omega0) < 1e-6 * p.gamma_fwhm);
        assert!(matches!(fit_resonance(&record(&p, 4)), Err(FitError::DegenerateSweep(_))));
    }

    #[test]
    fn narrow_span_is_degenerate() {
        let p = truth();
        let omegas: Vec<f64> = (0..9).map(|k| p.omega0 + (k as f64 - 4.0) * 0.05 * p.gamma_fwhm).collect();
        let (x, y) = omegas.iter().map(|w| lineshape(&p, *w, Complex64::new(1.0, 0.0))).unzip();
        let rec = SweepRecord { omegas, x, y };
        assert!(matches!(fit_resonance(&rec), Err(FitError::DegenerateSweep(_))));
    }

    #[test]
    fn guess_examples() {
        let p = truth();
        let rec = record(&p, 50);
        let g = initial_guess(&rec);
        let step = rec.omegas[1] - rec.omegas[0];
        assert!(abs(g.omega0 - p.omega0) <= step);

        let tie = SweepRecord {
            omegas: vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            x: vec![0.0, 1.0, 0.2, 0.2, 1.0, 0.0],
            y: vec![0.0; 6],
        };
        assert_eq!(initial_guess(&tie).omega0, 2.0);

        let flat = SweepRecord { omegas: vec![0.0, 1.0, 2.0, 3.0, 6.0], x: vec![0.5; 5], y: vec![0.0; 5] };
        let g = initial_guess(&flat);
        assert_eq!(g.gamma_fwhm, 2.0);
        assert_eq!(g.amplitude, 0.0);
    }

    #[test]
    fn r_phi_examples() {
        let p = ResonanceParams::new(10.0, 2.0, 0.7);
        let (r, phi) = r_phi(&p, 10.0).unwrap();
        assert!(abs(r - 0.7) < 1e-15 && abs(phi - core::f64::consts::FRAC_PI_2) < 1e-15);
        let (r_far, _) = r_phi(&p, 1e9).unwrap();
        assert!(r_far < 1e-8);
        let h = p.half_width();
        for k in -20..=20 {
            let d = k as f64 * 0.37;
            let (r, _) = r_phi(&p, 10.0 + d).unwrap();
            let closed = 0.7 * h / sqrt(d * d + h * h);
            assert!(abs(r - closed) < 1e-12);
        }
        let zero = ResonanceParams::new(10.0, 2.0, 0.0);
        assert_eq!(r_phi(&zero, 10.0), Err(FitError::UndefinedPhase));
        let (_, phi) = r_phi_with(&p, 10.0, PhaseConvention::YOverX).unwrap();
        assert_eq!(phi, 0.0);
    }

    #[test]
    fn shift_and_scale_equivariance() {
        let p = truth();
        let rec = record(&p, 50);
        let base = fit_resonance(&rec).unwrap();
        let shift = 1234.5;
        let shifted = SweepRecord { omegas: rec.omegas.iter().map(|w| w + shift).collect(), ..rec.clone() };
        let fs = fit_resonance(&shifted).unwrap();
        assert!(abs(fs.params.omega0 - (base.params.omega0 + shift)) < 1e-9 * p.omega0);
        let c = 3.7;
        let scaled = SweepRecord {
            omegas: rec.omegas.clone(),
            x: rec.x.iter().map(|v| c * v).collect(),
            y: rec.y.iter().map(|v| c * v).collect(),
        };
        let fc = fit_resonance(&scaled).unwrap();
        assert!(abs(fc.params.amplitude - c * base.params.amplitude) < 1e-9 * c);
        assert!(abs(fc.params.x_offset - c * base.params.x_offset) < 1e-9 * c);
        assert!(abs(fc.params.omega0 - base.params.omega0) < 1e-9 * p.omega0);
    }
}
