//! TOML scenario files.
//!
//! Every physical quantity carries its unit in the key name (`_mm`, `_khz`,
//! `_mg`, ...). Unknown keys are rejected, missing keys take the defaults of
//! [`ScanScenario::default`]. [`ScenarioFile::canonical`] renders the fully
//! populated form; its SHA-256 identifies a run.

use emiscan_core::beamsteer::{AodSpec, LensSpec, PixelGrid};
use emiscan_core::fields::{CoilSpec, EddyModel, Material, TargetPlate};
use emiscan_core::fitting::{FitMode, FitOptions, PhaseConvention};
use emiscan_core::imaging::{FastPoint, ScanMode, ScanScenario};
use emiscan_core::lockin::{Acquisition, DriveConfig, NoiseSpec};
use emiscan_core::magnetometer::Magnetometer;
use emiscan_core::{hz_to_rad, Vec3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Tesla per milligauss.
const TESLA_PER_MG: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {reason}")]
    Invalid { key: &'static str, reason: String },
}

impl ScenarioError {
    pub fn kind(&self) -> &'static str {
        match self {
            ScenarioError::Parse(_) => "ScenarioParse",
            ScenarioError::Invalid { .. } => "ScenarioInvalid",
        }
    }
}

fn invalid(key: &'static str, reason: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid { key, reason: reason.into() }
}

fn positive(key: &'static str, v: f64) -> Result<f64, ScenarioError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(invalid(key, format!("must be a finite number > 0, got {v}")))
    }
}

fn non_negative(key: &'static str, v: f64) -> Result<f64, ScenarioError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(invalid(key, format!("must be a finite number >= 0, got {v}")))
    }
}

fn finite(key: &'static str, v: f64) -> Result<f64, ScenarioError> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(key, "must be finite"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioFile {
    pub target: Vec<TargetSection>,
    pub cell: CellSection,
    pub magnetometer: MagnetometerSection,
    pub coil: CoilSection,
    pub grid: GridSection,
    pub aod: AodSection,
    pub lens: LensSection,
    pub lockin: LockinSection,
    pub noise: NoiseSection,
    pub scan: ScanSection,
    pub eddy: EddySection,
    pub fit: FitSection,
}

impl Default for ScenarioFile {
    fn default() -> Self {
        Self {
            target: vec![TargetSection::default()],
            cell: CellSection::default(),
            magnetometer: MagnetometerSection::default(),
            coil: CoilSection::default(),
            grid: GridSection::default(),
            aod: AodSection::default(),
            lens: LensSection::default(),
            lockin: LockinSection::default(),
            noise: NoiseSection::default(),
            scan: ScanSection::default(),
            eddy: EddySection::default(),
            fit: FitSection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeKind {
    Square,
    RightTriangle,
    Polygon,
}

/// One conductive plate. `square` needs `side_mm` and `center_mm`,
/// `right_triangle` needs `leg_mm` and `corner_mm` (legs along +x and +z),
/// `polygon` needs `outline_mm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSection {
    pub shape: ShapeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub side_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub center_mm: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub leg_mm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corner_mm: Option<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outline_mm: Option<Vec<[f64; 2]>>,
    #[serde(default = "default_thickness")]
    pub thickness_mm: f64,
    /// y of the plate mid-plane.
    #[serde(default = "default_plate_y")]
    pub y_mm: f64,
    #[serde(default = "default_conductivity")]
    pub conductivity_s_per_m: f64,
    #[serde(default = "default_permeability")]
    pub relative_permeability: f64,
}

fn default_plate() -> TargetPlate {
    ScanScenario::default().targets[0].clone()
}

fn default_thickness() -> f64 {
    default_plate().thickness * 1e3
}

fn default_plate_y() -> f64 {
    default_plate().height_y * 1e3
}

fn default_conductivity() -> f64 {
    Material::COPPER_CONDUCTIVITY
}

fn default_permeability() -> f64 {
    1.0
}

impl Default for TargetSection {
    fn default() -> Self {
        Self {
            shape: ShapeKind::Square,
            side_mm: Some(25.0),
            center_mm: Some([0.0, 0.0]),
            leg_mm: None,
            corner_mm: None,
            outline_mm: None,
            thickness_mm: default_thickness(),
            y_mm: default_plate_y(),
            conductivity_s_per_m: default_conductivity(),
            relative_permeability: default_permeability(),
        }
    }
}

impl TargetSection {
    fn plate(&self) -> Result<TargetPlate, ScenarioError> {
        let t = positive("target.thickness_mm", self.thickness_mm)? * 1e-3;
        let y = finite("target.y_mm", self.y_mm)? * 1e-3;
        let reject = |key: &'static str, present: bool| {
            if present {
                Err(invalid(key, format!("not used by shape {:?}", self.shape)))
            } else {
                Ok(())
            }
        };
        let mut plate = match self.shape {
            ShapeKind::Square => {
                reject("target.leg_mm", self.leg_mm.is_some())?;
                reject("target.corner_mm", self.corner_mm.is_some())?;
                reject("target.outline_mm", self.outline_mm.is_some())?;
                let side = self.side_mm.ok_or_else(|| invalid("target.side_mm", "required for a square"))?;
                let [cx, cz] = self.center_mm.unwrap_or([0.0, 0.0]);
                let side = positive("target.side_mm", side)?;
                TargetPlate::square(side * 1e-3, finite("target.center_mm", cx)? * 1e-3, finite("target.center_mm", cz)? * 1e-3, t, y)
            }
            ShapeKind::RightTriangle => {
                reject("target.side_mm", self.side_mm.is_some())?;
                reject("target.center_mm", self.center_mm.is_some())?;
                reject("target.outline_mm", self.outline_mm.is_some())?;
                let leg = self.leg_mm.ok_or_else(|| invalid("target.leg_mm", "required for a right triangle"))?;
                let c = self.corner_mm.ok_or_else(|| invalid("target.corner_mm", "required for a right triangle"))?;
                let leg = positive("target.leg_mm", leg)?;
                TargetPlate::right_triangle(
                    leg * 1e-3,
                    [finite("target.corner_mm", c[0])? * 1e-3, finite("target.corner_mm", c[1])? * 1e-3],
                    t,
                    y,
                )
            }
            ShapeKind::Polygon => {
                reject("target.side_mm", self.side_mm.is_some())?;
                reject("target.center_mm", self.center_mm.is_some())?;
                reject("target.leg_mm", self.leg_mm.is_some())?;
                reject("target.corner_mm", self.corner_mm.is_some())?;
                let outline = self
                    .outline_mm
                    .as_ref()
                    .ok_or_else(|| invalid("target.outline_mm", "required for a polygon"))?;
                let mut plate = TargetPlate::square(1.0, 0.0, 0.0, t, y);
                plate.outline = outline.iter().map(|v| [v[0] * 1e-3, v[1] * 1e-3]).collect();
                plate
            }
        };
        plate.material = Material {
            conductivity: non_negative("target.conductivity_s_per_m", self.conductivity_s_per_m)?,
            relative_permeability: positive("target.relative_permeability", self.relative_permeability)?,
        };
        plate.validate().map_err(|e| invalid("target", e.to_string()))?;
        Ok(plate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellSection {
    /// Full extents along x, y, z.
    pub size_mm: [f64; 3],
    pub center_mm: [f64; 3],
    pub diffusion_length_mm: f64,
    pub pump_diameter_mm: f64,
    pub probe_diameter_mm: f64,
    /// y of the plane where pump and probe cross.
    pub sensor_y_mm: f64,
}

impl Default for CellSection {
    fn default() -> Self {
        let s = ScanScenario::default();
        let c = s.magnetometer.cell;
        Self {
            size_mm: [c.dimensions.x * 1e3, c.dimensions.y * 1e3, c.dimensions.z * 1e3],
            center_mm: [c.center.x * 1e3, c.center.y * 1e3, c.center.z * 1e3],
            diffusion_length_mm: c.diffusion_length * 1e3,
            pump_diameter_mm: c.pump_diameter * 1e3,
            probe_diameter_mm: c.probe_diameter * 1e3,
            sensor_y_mm: s.sensor_y * 1e3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MagnetometerSection {
    pub bias_mg: f64,
    /// Resonance shift at the imaging-area corners.
    pub corner_shift_khz: f64,
    /// Half side of the square area the shift and amplitude profiles refer to.
    pub area_half_width_mm: f64,
    /// Scale (and sign) of the quadratic shift.
    pub shift_kappa: f64,
    pub linewidth_khz: f64,
    /// Corner amplitude over centre amplitude.
    pub corner_amplitude_ratio: f64,
    /// On-resonance X at the cell centre without a target.
    pub amplitude_v: f64,
    pub x_offset_v: f64,
    pub y_offset_v: f64,
    pub phase_deg: f64,
}

impl Default for MagnetometerSection {
    fn default() -> Self {
        let s = ScanScenario::default();
        let m = s.magnetometer;
        Self {
            bias_mg: 150.0,
            corner_shift_khz: 2.0,
            area_half_width_mm: m.bias.area_half_width * 1e3,
            shift_kappa: m.bias.kappa,
            linewidth_khz: 2.4,
            corner_amplitude_ratio: m.profile.corner_ratio,
            amplitude_v: s.pixel_amplitude,
            x_offset_v: m.x_offset,
            y_offset_v: m.y_offset,
            phase_deg: m.phase0.to_degrees(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoilSection {
    pub side_mm: f64,
    pub center_mm: [f64; 3],
    pub normal: [f64; 3],
    pub current_a: f64,
    pub drive_khz: f64,
}

impl Default for CoilSection {
    fn default() -> Self {
        let c = CoilSpec::default();
        Self {
            side_mm: c.side_length * 1e3,
            center_mm: [c.center.x * 1e3, c.center.y * 1e3, c.center.z * 1e3],
            normal: [c.normal.x, c.normal.y, c.normal.z],
            current_a: c.current_amplitude,
            drive_khz: 105.0,
        }
    }
}

/// Pixel lattice; rows run along z, columns along x. Without `origin_mm`
/// the grid is centred on the cell axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub rows: usize,
    pub cols: usize,
    pub step_mm: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub origin_mm: Option<[f64; 2]>,
}

impl Default for GridSection {
    fn default() -> Self {
        let g = PixelGrid::default();
        Self { rows: g.n_rows, cols: g.n_cols, step_mm: g.step * 1e3, origin_mm: None }
    }
}

/// Both deflectors share these settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AodSection {
    pub acoustic_speed_m_s: f64,
    pub refractive_index: f64,
    pub wavelength_nm: f64,
    pub center_mhz: f64,
    pub span_mhz: f64,
    pub rise_time_us: f64,
}

impl Default for AodSection {
    fn default() -> Self {
        let a = AodSpec::default();
        Self {
            acoustic_speed_m_s: a.acoustic_speed,
            refractive_index: a.refractive_index,
            wavelength_nm: a.wavelength * 1e9,
            center_mhz: a.center_freq * 1e-6,
            span_mhz: a.freq_span * 1e-6,
            rise_time_us: a.rise_time * 1e6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LensSection {
    pub focal_length_mm: f64,
}

impl Default for LensSection {
    fn default() -> Self {
        Self { focal_length_mm: LensSpec::default().focal_length * 1e3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcquisitionKind {
    TimeDomain,
    Analytic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LockinSection {
    pub sample_rate_mhz: f64,
    pub time_constant_ms: f64,
    pub filter_order: u32,
    /// Record length of one sweep point.
    pub point_duration_ms: f64,
    pub reference_phase_deg: f64,
    pub acquisition: AcquisitionKind,
}

impl Default for LockinSection {
    fn default() -> Self {
        let d = DriveConfig::default();
        Self {
            sample_rate_mhz: d.sample_rate * 1e-6,
            time_constant_ms: d.lp_time_constant * 1e3,
            filter_order: d.lp_order,
            point_duration_ms: d.duration * 1e3,
            reference_phase_deg: d.reference_phase.to_degrees(),
            acquisition: match d.acquisition {
                Acquisition::TimeDomain => AcquisitionKind::TimeDomain,
                Acquisition::Analytic => AcquisitionKind::Analytic,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub rms_v: f64,
    pub seed: u64,
}

impl Default for NoiseSection {
    fn default() -> Self {
        let n = ScanScenario::default().noise;
        Self { rms_v: n.rms_voltage, seed: n.seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ModeKind {
    /// Sweep and fit every pixel.
    Full,
    /// One reading per pixel at the background's fitted resonance.
    Fast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub mode: ModeKind,
    pub sweep_points: usize,
    pub dwell_ms: f64,
    pub control_latency_ms: f64,
}

impl Default for ScanSection {
    fn default() -> Self {
        let s = ScanScenario::default();
        let n = match s.mode {
            ScanMode::FullSweep { n_points } => n_points,
            ScanMode::FastSinglePoint { .. } => 50,
        };
        Self { mode: ModeKind::Full, sweep_points: n, dwell_ms: 40.0, control_latency_ms: s.control_latency * 1e3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EddyModelKind {
    Coupled,
    IndependentLoops,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EddySection {
    pub pitch_mm: f64,
    pub model: EddyModelKind,
}

impl Default for EddySection {
    fn default() -> Self {
        let s = ScanScenario::default();
        Self {
            pitch_mm: s.eddy_pitch * 1e3,
            model: match s.eddy_model {
                EddyModel::Coupled => EddyModelKind::Coupled,
                EddyModel::IndependentLoops => EddyModelKind::IndependentLoops,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitModeKind {
    Joint,
    Separate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    /// atan2(X, Y)
    XOverY,
    /// atan2(Y, X)
    YOverX,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub mode: FitModeKind,
    pub phase: PhaseKind,
}

impl Default for FitSection {
    fn default() -> Self {
        Self { mode: FitModeKind::Joint, phase: PhaseKind::XOverY }
    }
}

impl ScenarioFile {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string().replace('\n', " ").trim().to_string()))
    }

    /// Fully populated TOML; parsing it gives back an equal value.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Hex SHA-256 of the canonical form.
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }

    /// Hash of everything but the targets: scenarios that share it can share
    /// one background image.
    pub fn geometry_sha256(&self) -> String {
        let mut bg = self.clone();
        bg.target.clear();
        bg.scan.mode = ModeKind::Full;
        bg.sha256()
    }

    /// Physical scenario. Fast mode needs the per-pixel drive table from a
    /// background image.
    pub fn to_scenario(&self, fast_table: Option<Vec<FastPoint>>) -> Result<ScanScenario, ScenarioError> {
        let mut s = ScanScenario::default();
        let mut mag = Magnetometer::default();

        let c = &self.cell;
        for v in c.size_mm {
            positive("cell.size_mm", v)?;
        }
        for v in c.center_mm {
            finite("cell.center_mm", v)?;
        }
        mag.cell.dimensions = Vec3::new(c.size_mm[0], c.size_mm[1], c.size_mm[2]) * 1e-3;
        mag.cell.center = Vec3::new(c.center_mm[0], c.center_mm[1], c.center_mm[2]) * 1e-3;
        mag.cell.diffusion_length = positive("cell.diffusion_length_mm", c.diffusion_length_mm)? * 1e-3;
        mag.cell.pump_diameter = positive("cell.pump_diameter_mm", c.pump_diameter_mm)? * 1e-3;
        mag.cell.probe_diameter = positive("cell.probe_diameter_mm", c.probe_diameter_mm)? * 1e-3;
        s.sensor_y = finite("cell.sensor_y_mm", c.sensor_y_mm)? * 1e-3;

        let m = &self.magnetometer;
        mag.bias.nominal_bias = positive("magnetometer.bias_mg", m.bias_mg)? * TESLA_PER_MG;
        mag.bias.max_shift = non_negative("magnetometer.corner_shift_khz", m.corner_shift_khz)? * hz_to_rad(1e3);
        let half = positive("magnetometer.area_half_width_mm", m.area_half_width_mm)? * 1e-3;
        mag.bias.area_half_width = half;
        mag.bias.kappa = finite("magnetometer.shift_kappa", m.shift_kappa)?;
        mag.bias.origin = [mag.cell.center.x, mag.cell.center.z];
        mag.gamma_fwhm = positive("magnetometer.linewidth_khz", m.linewidth_khz)? * hz_to_rad(1e3);
        let ratio = positive("magnetometer.corner_amplitude_ratio", m.corner_amplitude_ratio)?;
        if ratio > 1.0 {
            return Err(invalid("magnetometer.corner_amplitude_ratio", "must be <= 1"));
        }
        mag.profile.corner_ratio = ratio;
        mag.profile.area_half_width = half;
        mag.profile.origin = mag.bias.origin;
        mag.x_offset = finite("magnetometer.x_offset_v", m.x_offset_v)?;
        mag.y_offset = finite("magnetometer.y_offset_v", m.y_offset_v)?;
        mag.phase0 = finite("magnetometer.phase_deg", m.phase_deg)?.to_radians();
        s.pixel_amplitude = non_negative("magnetometer.amplitude_v", m.amplitude_v)?;
        s.magnetometer = mag;

        let k = &self.coil;
        for v in k.center_mm.iter().chain(k.normal.iter()) {
            finite("coil", *v)?;
        }
        s.coil = CoilSpec {
            side_length: positive("coil.side_mm", k.side_mm)? * 1e-3,
            center: Vec3::new(k.center_mm[0], k.center_mm[1], k.center_mm[2]) * 1e-3,
            normal: Vec3::new(k.normal[0], k.normal[1], k.normal[2]).normalized(),
            current_amplitude: finite("coil.current_a", k.current_a)?,
            drive_omega: hz_to_rad(positive("coil.drive_khz", k.drive_khz)? * 1e3),
        };

        s.targets = self.target.iter().map(TargetSection::plate).collect::<Result<_, _>>()?;

        let g = &self.grid;
        if g.rows == 0 || g.cols == 0 {
            return Err(invalid("grid", "rows and cols must be >= 1"));
        }
        let step = positive("grid.step_mm", g.step_mm)? * 1e-3;
        s.grid = PixelGrid::centered(g.rows, g.cols, step);
        s.grid.origin[0] += s.magnetometer.cell.center.x;
        s.grid.origin[1] += s.magnetometer.cell.center.z;
        if let Some([x, z]) = g.origin_mm {
            s.grid.origin = [finite("grid.origin_mm", x)? * 1e-3, finite("grid.origin_mm", z)? * 1e-3];
        }

        let a = &self.aod;
        let aod = AodSpec {
            acoustic_speed: positive("aod.acoustic_speed_m_s", a.acoustic_speed_m_s)?,
            refractive_index: positive("aod.refractive_index", a.refractive_index)?,
            wavelength: positive("aod.wavelength_nm", a.wavelength_nm)? * 1e-9,
            center_freq: positive("aod.center_mhz", a.center_mhz)? * 1e6,
            freq_span: positive("aod.span_mhz", a.span_mhz)? * 1e6,
            rise_time: positive("aod.rise_time_us", a.rise_time_us)? * 1e-6,
        };
        aod.validate().map_err(|e| invalid("aod", e.to_string()))?;
        s.aods = [aod, aod];
        s.lens = LensSpec { focal_length: positive("lens.focal_length_mm", self.lens.focal_length_mm)? * 1e-3 };

        let l = &self.lockin;
        if !(1..=8).contains(&l.filter_order) {
            return Err(invalid("lockin.filter_order", "must be between 1 and 8"));
        }
        s.drive = DriveConfig {
            omega_rf: s.magnetometer.bias.nominal_omega0(),
            duration: positive("lockin.point_duration_ms", l.point_duration_ms)? * 1e-3,
            sample_rate: positive("lockin.sample_rate_mhz", l.sample_rate_mhz)? * 1e6,
            lp_time_constant: positive("lockin.time_constant_ms", l.time_constant_ms)? * 1e-3,
            lp_order: l.filter_order,
            reference_phase: finite("lockin.reference_phase_deg", l.reference_phase_deg)?.to_radians(),
            acquisition: match l.acquisition {
                AcquisitionKind::TimeDomain => Acquisition::TimeDomain,
                AcquisitionKind::Analytic => Acquisition::Analytic,
            },
        };
        s.drive.validate().map_err(|e| invalid("lockin", e.to_string()))?;

        s.noise = NoiseSpec { rms_voltage: non_negative("noise.rms_v", self.noise.rms_v)?, seed: self.noise.seed };

        let sc = &self.scan;
        s.control_latency = non_negative("scan.control_latency_ms", sc.control_latency_ms)? * 1e-3;
        s.mode = match sc.mode {
            ModeKind::Full => {
                if sc.sweep_points < 5 {
                    return Err(invalid("scan.sweep_points", "must be >= 5"));
                }
                ScanMode::FullSweep { n_points: sc.sweep_points }
            }
            ModeKind::Fast => {
                let dwell = positive("scan.dwell_ms", sc.dwell_ms)? * 1e-3;
                let table = fast_table.ok_or_else(|| {
                    invalid("scan.mode", "fast mode needs a background image to supply the per-pixel drive frequencies")
                })?;
                ScanMode::FastSinglePoint { dwell, table }
            }
        };

        s.eddy_pitch = positive("eddy.pitch_mm", self.eddy.pitch_mm)? * 1e-3;
        s.eddy_model = match self.eddy.model {
            EddyModelKind::Coupled => EddyModel::Coupled,
            EddyModelKind::IndependentLoops => EddyModel::IndependentLoops,
        };
        s.fit = FitOptions {
            mode: match self.fit.mode {
                FitModeKind::Joint => FitMode::Joint,
                FitModeKind::Separate => FitMode::Separate,
            },
            phase: match self.fit.phase {
                PhaseKind::XOverY => PhaseConvention::XOverY,
                PhaseKind::YOverX => PhaseConvention::YOverX,
            },
            ..FitOptions::default()
        };
        s.validate().map_err(|e| invalid("scenario", e.to_string()))?;
        Ok(s)
    }
}
