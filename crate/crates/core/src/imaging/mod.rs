//! Scan orchestration, background normalization, smoothing and timing.
//!
//! A scan is prepared once ([`ScanScenario::prepare`]: raster plan, induced
//! eddy meshes, filter response) and then evaluated pixel by pixel. Every
//! pixel draws its noise from a stream derived from the master seed, the
//! pixel index and the scan mode, so any evaluation order reproduces the same
//! image.

mod post;
mod region;
mod timing;

pub use post::{normalize, smooth};
pub use region::{
    classify_footprint, contrast, shape_summary, threshold_region, Contrast, FootprintClass, Region,
    ShapeClass, ShapeSummary,
};
pub use timing::{timing_report, Phase, TimingReport};

use alloc::vec::Vec;

use thiserror::Error;

use crate::beamsteer::{plan_raster, AodSpec, LensSpec, PixelGrid, RasterPlan};
use crate::fields::{coil_field, induce, mesh_plate_with, total_rf_field, CoilSpec, EddyMesh, EddyModel, TargetPlate};
use crate::fitting::{fit_resonance_with, FitOptions};
use crate::lockin::{self, derive_seed, Acquisition, DriveConfig, FilterResponse, NoiseSpec, SweepSpan};
use crate::magnetometer::{lineshape, Magnetometer, ResonanceParams};
use crate::math::{hypot, Complex64, Vec3};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImagingError {
    #[error("image grids differ")]
    GridMismatch,
    #[error("fast mode needs one table entry per pixel: expected {expected}, got {got}")]
    MissingOmegaTable { expected: usize, got: usize },
    #[error("invalid scenario: {0}")]
    InvalidScenario(&'static str),
}

impl ImagingError {
    pub fn kind(&self) -> &'static str {
        match self {
            ImagingError::GridMismatch => "GridMismatch",
            ImagingError::MissingOmegaTable { .. } => "MissingOmegaTable",
            ImagingError::InvalidScenario(_) => "InvalidScenario",
        }
    }
}

/// Predetermined drive point of one pixel in fast mode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FastPoint {
    /// Drive frequency, rad/s.
    pub omega: f64,
    /// Linewidth carried over for reporting, rad/s.
    pub gamma: f64,
    pub x_offset: f64,
    pub y_offset: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScanMode {
    /// Sweep `n_points` across `ω₀ ± 5Γ` and fit every pixel.
    FullSweep { n_points: usize },
    /// One reading per pixel at a predetermined drive frequency.
    FastSinglePoint { dwell: f64, table: Vec<FastPoint> },
}

impl Default for ScanMode {
    fn default() -> Self {
        ScanMode::FullSweep { n_points: 50 }
    }
}

impl ScanMode {
    fn tag(&self) -> u64 {
        match self {
            ScanMode::FullSweep { .. } => 0,
            ScanMode::FastSinglePoint { .. } => 1,
        }
    }

    /// Drive frequencies and offsets from a fitted background image. Pixels
    /// whose fit failed fall back to `fallback_omega` and zero offsets.
    pub fn fast_from_background(background: &EmiImage, dwell: f64, fallback_omega: f64) -> Self {
        let table = (0..background.len())
            .map(|i| {
                let ok = background.converged[i] && background.omega0[i].is_finite();
                if ok {
                    FastPoint {
                        omega: background.omega0[i],
                        gamma: background.gamma[i],
                        x_offset: background.x_offset[i],
                        y_offset: background.y_offset[i],
                    }
                } else {
                    FastPoint { omega: fallback_omega, gamma: f64::NAN, x_offset: 0.0, y_offset: 0.0 }
                }
            })
            .collect();
        ScanMode::FastSinglePoint { dwell, table }
    }
}

/// Complete description of one imaging run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScanScenario {
    /// Cell, bias map, amplitude profile and lineshape constants.
    pub magnetometer: Magnetometer,
    pub coil: CoilSpec,
    pub targets: Vec<TargetPlate>,
    pub grid: PixelGrid,
    /// Deflectors for the x and z axes.
    pub aods: [AodSpec; 2],
    pub lens: LensSpec,
    /// Per-point lock-in settings; in fast mode the duration is the dwell.
    pub drive: DriveConfig,
    pub noise: NoiseSpec,
    pub mode: ScanMode,
    /// Instrument-control time per pixel, s.
    pub control_latency: f64,
    /// On-resonance X at the cell centre with no target, V.
    pub pixel_amplitude: f64,
    /// y of the plane in which the pump and probe beams cross, m.
    pub sensor_y: f64,
    /// Eddy-current mesh pitch, m.
    pub eddy_pitch: f64,
    pub eddy_model: EddyModel,
    pub fit: FitOptions,
}

impl Default for ScanScenario {
    /// The 25 × 25 × 1 mm copper square over a 35 × 35, 1 mm grid.
    fn default() -> Self {
        Self {
            magnetometer: Magnetometer::default(),
            coil: CoilSpec::default(),
            targets: alloc::vec![TargetPlate::square(25e-3, 0.0, 0.0, 1e-3, 22.5e-3)],
            grid: PixelGrid::default(),
            aods: [AodSpec::default(), AodSpec::default()],
            lens: LensSpec::default(),
            drive: DriveConfig::default(),
            noise: NoiseSpec { rms_voltage: 0.5, seed: 1 },
            mode: ScanMode::default(),
            control_latency: 0.1,
            pixel_amplitude: 1.0,
            sensor_y: 0.0,
            eddy_pitch: 2.5e-3,
            eddy_model: EddyModel::default(),
            fit: FitOptions::default(),
        }
    }
}

impl ScanScenario {
    /// Same instrument with every target removed.
    pub fn without_targets(&self) -> Self {
        Self { targets: Vec::new(), ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let cell = &self.magnetometer.cell;
        cell.validate()?;
        self.coil.validate()?;
        self.grid.validate()?;
        for a in &self.aods {
            a.validate()?;
        }
        self.lens.validate()?;
        self.drive.validate()?;
        let half = cell.dimensions * 0.5;
        let [x0, x1, z0, z1] = self.grid.extent();
        let tol = 1e-12;
        if x0 < cell.center.x - half.x - tol
            || x1 > cell.center.x + half.x + tol
            || z0 < cell.center.z - half.z - tol
            || z1 > cell.center.z + half.z + tol
        {
            return Err(ImagingError::InvalidScenario("grid does not fit the cell cross-section").into());
        }
        let half_y = 0.5 * cell.dimensions.y;
        if !(self.sensor_y.abs() <= half_y + cell.center.y.abs() && cell.contains(Vec3::new(cell.center.x, self.sensor_y, cell.center.z))) {
            return Err(ImagingError::InvalidScenario("sensor plane must lie inside the cell").into());
        }
        if !(self.coil.center.y > cell.top()) {
            return Err(ImagingError::InvalidScenario("coil plane must lie above the cell").into());
        }
        for t in &self.targets {
            t.validate()?;
            let lo = t.height_y - 0.5 * t.thickness;
            let hi = t.height_y + 0.5 * t.thickness;
            if !(lo > cell.top() && hi < self.coil.center.y) {
                return Err(ImagingError::InvalidScenario("targets must sit between the cell and the coil").into());
            }
        }
        if !(self.noise.rms_voltage >= 0.0) {
            return Err(ImagingError::InvalidScenario("noise RMS must be >= 0").into());
        }
        if !(self.control_latency >= 0.0) || !(self.pixel_amplitude >= 0.0) {
            return Err(ImagingError::InvalidScenario("latency and amplitude must be >= 0").into());
        }
        if !(self.eddy_pitch > 0.0) {
            return Err(ImagingError::InvalidScenario("eddy mesh pitch must be > 0").into());
        }
        match &self.mode {
            ScanMode::FullSweep { n_points } if *n_points < 5 => {
                Err(lockin::LockinError::TooFewPoints(*n_points).into())
            }
            ScanMode::FastSinglePoint { table, .. } if table.len() != self.grid.len() => {
                Err(ImagingError::MissingOmegaTable { expected: self.grid.len(), got: table.len() }.into())
            }
            ScanMode::FastSinglePoint { dwell, .. } => {
                DriveConfig { duration: *dwell, ..self.drive }.validate()?;
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// Lock-in configuration used for every reading of this scan.
    pub fn point_drive(&self) -> DriveConfig {
        match &self.mode {
            ScanMode::FullSweep { .. } => self.drive,
            ScanMode::FastSinglePoint { dwell, .. } => DriveConfig { duration: *dwell, ..self.drive },
        }
    }

    /// Measurement time per pixel, s.
    pub fn measure_time(&self) -> f64 {
        match &self.mode {
            ScanMode::FullSweep { n_points } => *n_points as f64 * self.drive.duration,
            ScanMode::FastSinglePoint { dwell, .. } => *dwell,
        }
    }

    pub fn prepare(&self) -> Result<PreparedScan<'_>, Error> {
        self.validate()?;
        let plan = plan_raster(&self.grid, &self.aods[0], &self.aods[1], &self.lens)?;
        let mut meshes = Vec::with_capacity(self.targets.len());
        for t in &self.targets {
            let mesh = mesh_plate_with(t, self.eddy_pitch, self.coil.drive_omega, self.eddy_model)?;
            meshes.push(induce(&mesh, &self.coil)?);
        }
        let drive = self.point_drive();
        Ok(PreparedScan {
            scenario: self,
            plan,
            meshes,
            drive,
            response: FilterResponse::for_drive(&drive),
        })
    }
}

fn averaged<I>(fields: I) -> Result<Complex64, Error>
where
    I: Iterator<Item = Result<Complex64, crate::fields::FieldsError>>,
{
    let mut sum = Complex64::new(0.0, 0.0);
    let mut n = 0.0;
    for f in fields {
        sum += f?;
        n += 1.0;
    }
    Ok(sum / n)
}

/// Everything about a scan that is shared by its pixels.
#[derive(Debug, Clone)]
pub struct PreparedScan<'a> {
    pub scenario: &'a ScanScenario,
    pub plan: RasterPlan,
    /// Target meshes with induced moments.
    pub meshes: Vec<EddyMesh>,
    pub drive: DriveConfig,
    pub response: FilterResponse,
}

/// One pixel's measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelResult {
    pub r: f64,
    pub phi: f64,
    pub omega0: f64,
    pub gamma: f64,
    pub x_offset: f64,
    pub y_offset: f64,
    pub converged: bool,
    pub valid: bool,
    pub steer: f64,
    pub control: f64,
    pub measure: f64,
}

impl PreparedScan<'_> {
    pub fn len(&self) -> usize {
        self.plan.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plan.entries.is_empty()
    }

    /// Stencil-averaged co-rotating drive at a voxel, and the resonance it
    /// sees, for pixel `index`.
    pub fn pixel_physics(&self, index: usize) -> Result<(Complex64, ResonanceParams), Error> {
        let s = self.scenario;
        let cell = &s.magnetometer.cell;
        let [x, z] = self.plan.entries[index].position;
        let voxel = cell.voxel_at(Vec3::new(x, s.sensor_y, z));
        let stencil = voxel.stencil();
        let b = averaged(
            stencil.iter().map(|p| total_rf_field(&s.coil, &self.meshes, *p).map(|f| f.transverse())),
        )?;
        // The no-target drive at the same voxel is the amplitude and phase
        // reference, so a background pixel reads `pixel_amplitude` times
        // the spatial profile.
        let reference = averaged(stencil.iter().map(|p| coil_field(&s.coil, *p).map(|f| f.transverse())))?;
        if !(reference.norm() > 0.0) {
            return Err(ImagingError::InvalidScenario("coil produces no transverse drive at a pixel").into());
        }
        let mut params = s.magnetometer.resonance_at(&voxel, s.pixel_amplitude)?;
        params.drive_reference = reference.norm();
        params.phase0 -= reference.arg();
        Ok((b, params))
    }

    fn seed(&self, index: usize) -> u64 {
        derive_seed(derive_seed(self.scenario.noise.seed, index as u64), self.scenario.mode.tag())
    }

    pub fn acquire_pixel(&self, index: usize) -> Result<PixelResult, Error> {
        let s = self.scenario;
        let (b, params) = self.pixel_physics(index)?;
        let noise = NoiseSpec { rms_voltage: s.noise.rms_voltage, seed: self.seed(index) };
        let gain = 1.0 / self.response.settle;
        let mut out = PixelResult {
            r: 0.0,
            phi: f64::NAN,
            omega0: f64::NAN,
            gamma: f64::NAN,
            x_offset: f64::NAN,
            y_offset: f64::NAN,
            converged: false,
            valid: false,
            steer: self.plan.steering_time_per_move,
            control: s.control_latency,
            measure: s.measure_time(),
        };
        match &s.mode {
            ScanMode::FullSweep { n_points } => {
                let mag = &s.magnetometer;
                let span = SweepSpan::around(mag.bias.nominal_omega0(), mag.gamma_fwhm);
                let mut rec = lockin::run_sweep(&params, &self.drive, span, *n_points, &noise, b)?;
                rec.x.iter_mut().chain(rec.y.iter_mut()).for_each(|v| *v *= gain);
                if let Ok(fit) = fit_resonance_with(&rec, &s.fit) {
                    out.r = fit.r_peak;
                    out.phi = fit.phi_peak;
                    out.omega0 = fit.params.omega0;
                    out.gamma = fit.params.gamma_fwhm;
                    out.x_offset = fit.params.x_offset;
                    out.y_offset = fit.params.y_offset;
                    out.converged = fit.converged;
                    out.valid = fit.converged && fit.r_peak.is_finite();
                    if !out.r.is_finite() {
                        out.r = 0.0;
                    }
                }
            }
            ScanMode::FastSinglePoint { table, .. } => {
                let point = table[index];
                let drive = self.drive.with_omega(point.omega);
                drive.validate()?;
                let (xs, ys) = lineshape(&params, point.omega, b);
                let (x, y) = match drive.acquisition {
                    Acquisition::Analytic => self.response.acquire(xs, ys, &drive, &noise),
                    Acquisition::TimeDomain => lockin::acquire(&params, &drive, b, &noise)?,
                };
                let (dx, dy) = (gain * x - point.x_offset, gain * y - point.y_offset);
                out.r = hypot(dx, dy);
                out.phi = s.fit.phase.phase(dx, dy);
                out.omega0 = point.omega;
                out.gamma = point.gamma;
                out.x_offset = point.x_offset;
                out.y_offset = point.y_offset;
                out.converged = true;
                out.valid = out.r.is_finite();
                if !out.valid {
                    out.r = 0.0;
                }
            }
        }
        Ok(out)
    }

    /// Collect per-pixel results, given in pixel-index order.
    pub fn assemble(&self, pixels: &[PixelResult]) -> EmiImage {
        let mut img = EmiImage::empty(self.scenario.grid);
        for p in pixels {
            img.push(p);
        }
        img
    }
}

/// Serial scan.
pub fn run_scan(scenario: &ScanScenario) -> Result<EmiImage, Error> {
    let prepared = scenario.prepare()?;
    let pixels = (0..prepared.len()).map(|i| prepared.acquire_pixel(i)).collect::<Result<Vec<_>, _>>()?;
    Ok(prepared.assemble(&pixels))
}

/// Per-pixel results in struct-of-arrays form, row-major over the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EmiImage {
    pub grid: PixelGrid,
    pub r: Vec<f64>,
    pub phi: Vec<f64>,
    pub omega0: Vec<f64>,
    pub gamma: Vec<f64>,
    pub x_offset: Vec<f64>,
    pub y_offset: Vec<f64>,
    pub converged: Vec<bool>,
    pub valid: Vec<bool>,
    pub steer: Vec<f64>,
    pub control: Vec<f64>,
    pub measure: Vec<f64>,
}

impl EmiImage {
    pub fn empty(grid: PixelGrid) -> Self {
        let n = grid.len();
        let f = || Vec::with_capacity(n);
        Self {
            grid,
            r: f(),
            phi: f(),
            omega0: f(),
            gamma: f(),
            x_offset: f(),
            y_offset: f(),
            converged: Vec::with_capacity(n),
            valid: Vec::with_capacity(n),
            steer: f(),
            control: f(),
            measure: f(),
        }
    }

    /// Image filled with `r` everywhere, zero timing, everything valid.
    pub fn uniform(grid: PixelGrid, r: f64) -> Self {
        let mut img = Self::empty(grid);
        let p = PixelResult {
            r,
            phi: 0.0,
            omega0: 0.0,
            gamma: 0.0,
            x_offset: 0.0,
            y_offset: 0.0,
            converged: true,
            valid: true,
            steer: 0.0,
            control: 0.0,
            measure: 0.0,
        };
        for _ in 0..grid.len() {
            img.push(&p);
        }
        img
    }

    pub fn push(&mut self, p: &PixelResult) {
        self.r.push(p.r);
        self.phi.push(p.phi);
        self.omega0.push(p.omega0);
        self.gamma.push(p.gamma);
        self.x_offset.push(p.x_offset);
        self.y_offset.push(p.y_offset);
        self.converged.push(p.converged);
        self.valid.push(p.valid);
        self.steer.push(p.steer);
        self.control.push(p.control);
        self.measure.push(p.measure);
    }

    pub fn pixel(&self, i: usize) -> PixelResult {
        PixelResult {
            r: self.r[i],
            phi: self.phi[i],
            omega0: self.omega0[i],
            gamma: self.gamma[i],
            x_offset: self.x_offset[i],
            y_offset: self.y_offset[i],
            converged: self.converged[i],
            valid: self.valid[i],
            steer: self.steer[i],
            control: self.control[i],
            measure: self.measure[i],
        }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    /// All channel lengths agree with the grid and every radius is ≥ 0.
    pub fn is_consistent(&self) -> bool {
        let n = self.grid.len();
        [
            self.r.len(),
            self.phi.len(),
            self.omega0.len(),
            self.gamma.len(),
            self.x_offset.len(),
            self.y_offset.len(),
            self.converged.len(),
            self.valid.len(),
            self.steer.len(),
            self.control.len(),
            self.measure.len(),
        ]
        .iter()
        .all(|l| *l == n)
            && self.r.iter().all(|r| *r >= 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(targets: bool) -> ScanScenario {
        let base = ScanScenario {
            grid: PixelGrid::centered(7, 7, 5e-3),
            mode: ScanMode::FullSweep { n_points: 21 },
            drive: DriveConfig { acquisition: Acquisition::Analytic, ..DriveConfig::default() },
            ..ScanScenario::default()
        };
        if targets {
            base
        } else {
            base.without_targets()
        }
    }

    #[test]
    fn background_peaks_at_centre() {
        let img = run_scan(&small(false)).unwrap();
        assert!(img.is_consistent());
        assert!(img.converged.iter().all(|c| *c));
        let centre = img.grid.index(3, 3);
        let max = (0..img.len()).max_by(|a, b| img.r[*a].total_cmp(&img.r[*b])).unwrap();
        assert_eq!(max, centre);
        assert!((img.r[centre] - 1.0).abs() < 0.02, "{}", img.r[centre]);
    }

    #[test]
    fn plate_lowers_the_signal_under_it() {
        let bg = run_scan(&small(false)).unwrap();
        let tg = run_scan(&small(true)).unwrap();
        let c = bg.grid.index(3, 3);
        assert!(tg.r[c] < bg.r[c]);
        let n = normalize(&bg, &tg).unwrap();
        assert!(n.r[c] > 1.0);
    }

    #[test]
    fn serial_scan_is_deterministic() {
        let s = ScanScenario { noise: NoiseSpec { rms_voltage: 0.5, seed: 3 }, ..small(true) };
        assert_eq!(run_scan(&s).unwrap(), run_scan(&s).unwrap());
        let p = s.prepare().unwrap();
        let reversed: Vec<_> = (0..p.len()).rev().map(|i| p.acquire_pixel(i).unwrap()).collect();
        let forward: Vec<_> = reversed.into_iter().rev().collect();
        assert_eq!(p.assemble(&forward), run_scan(&s).unwrap());
    }

    #[test]
    fn fast_mode_uses_the_dwell() {
        let bg_s = ScanScenario { noise: NoiseSpec::silent(), ..small(false) };
        let bg = run_scan(&bg_s).unwrap();
        let fast = ScanScenario {
            mode: ScanMode::fast_from_background(&bg, 40e-3, bg_s.magnetometer.bias.nominal_omega0()),
            ..bg_s.clone()
        };
        let img = run_scan(&fast).unwrap();
        assert!(img.measure.iter().all(|m| *m == 40e-3));
        for i in 0..img.len() {
            assert!((img.r[i] / bg.r[i] - 1.0).abs() < 0.01);
        }
    }

    #[test]
    fn scenario_checks() {
        let mut s = small(true);
        s.mode = ScanMode::FastSinglePoint { dwell: 40e-3, table: Vec::new() };
        assert_eq!(s.validate().unwrap_err().kind(), "MissingOmegaTable");
        let mut s = small(true);
        s.targets[0].height_y = 40e-3;
        assert_eq!(s.validate().unwrap_err().kind(), "InvalidScenario");
        let mut s = small(true);
        s.grid = PixelGrid::centered(3, 3, 40e-3);
        assert!(s.validate().is_err());
    }
}
