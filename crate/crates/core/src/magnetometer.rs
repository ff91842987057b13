//! RF atomic magnetometer response.
//!
//! The bias field fixes the Larmor resonance, a static quadratic map shifts it
//! across the imaging area, and the local co-rotating RF amplitude scales the
//! in-phase (absorptive) and quadrature (dispersive) lineshapes.

use thiserror::Error;

use crate::math::{exp, ln, Complex64, Vec3};
use crate::hz_to_rad;

/// Effective gyromagnetic slope, rad/(s·T): 2π × 0.70 MHz/G.
pub const GAMMA_EFF: f64 = 2.0 * core::f64::consts::PI * 7.0e9;

/// Resonance linewidth (FWHM), rad/s.
pub const DEFAULT_LINEWIDTH: f64 = 2.0 * core::f64::consts::PI * 2.4e3;

/// Default stabilized bias, tesla (150 mG).
pub const DEFAULT_BIAS: f64 = 1.5e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MagnetometerError {
    #[error("sensor voxel centre lies outside the vapour cell")]
    VoxelOutsideCell,
    #[error("invalid magnetometer parameter: {0}")]
    Invalid(&'static str),
}

impl MagnetometerError {
    pub fn kind(&self) -> &'static str {
        match self {
            MagnetometerError::VoxelOutsideCell => "VoxelOutsideCell",
            MagnetometerError::Invalid(_) => "InvalidMagnetometer",
        }
    }
}

/// Cuboid vapour cell. `dimensions` are the full extents along x, y and z;
/// the default cell is 60 mm wide (x), 60 mm long (z) and 20 mm tall (y).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellSpec {
    pub dimensions: Vec3,
    pub center: Vec3,
    /// Atomic diffusion length during one measurement, m.
    pub diffusion_length: f64,
    /// Beam 1/e² diameters, m.
    pub pump_diameter: f64,
    pub probe_diameter: f64,
}

impl Default for CellSpec {
    fn default() -> Self {
        Self {
            dimensions: Vec3::new(60e-3, 20e-3, 60e-3),
            center: Vec3::ZERO,
            diffusion_length: 1.95e-3,
            pump_diameter: 3.4e-3,
            probe_diameter: 2.5e-3,
        }
    }
}

impl CellSpec {
    pub fn validate(&self) -> Result<(), MagnetometerError> {
        let d = self.dimensions;
        if !(d.x > 0.0 && d.y > 0.0 && d.z > 0.0) {
            return Err(MagnetometerError::Invalid("cell dimensions must be > 0"));
        }
        if !(self.diffusion_length > 0.0) {
            return Err(MagnetometerError::Invalid("diffusion length must be > 0"));
        }
        if !(self.pump_diameter > 0.0 && self.probe_diameter > 0.0) {
            return Err(MagnetometerError::Invalid("beam diameters must be > 0"));
        }
        Ok(())
    }

    pub fn contains(&self, p: Vec3) -> bool {
        let r = p - self.center;
        let h = self.dimensions * 0.5;
        r.x.abs() <= h.x && r.y.abs() <= h.y && r.z.abs() <= h.z
    }

    /// y-coordinate of the top face (towards the coil).
    pub fn top(&self) -> f64 {
        self.center.y + 0.5 * self.dimensions.y
    }

    /// Voxel of the pump–probe intersection at `center`.
    pub fn voxel_at(&self, center: Vec3) -> SensorVoxel {
        let r = 0.5 * self.pump_diameter.max(self.probe_diameter);
        SensorVoxel {
            center,
            pump_diameter: self.pump_diameter,
            probe_diameter: self.probe_diameter,
            effective_radius: r + self.diffusion_length,
        }
    }
}

/// Pump–probe intersection, blurred by diffusion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorVoxel {
    pub center: Vec3,
    pub pump_diameter: f64,
    pub probe_diameter: f64,
    /// max(beam radii) + diffusion length, m.
    pub effective_radius: f64,
}

impl SensorVoxel {
    /// Centre plus ± `effective_radius` along each axis.
    pub fn stencil(&self) -> [Vec3; 7] {
        let c = self.center;
        let r = self.effective_radius;
        [
            c,
            c + Vec3::X * r,
            c - Vec3::X * r,
            c + Vec3::Y * r,
            c - Vec3::Y * r,
            c + Vec3::Z * r,
            c - Vec3::Z * r,
        ]
    }
}

/// Stabilized bias with a static quadratic resonance shift
/// `Δω₀(x, z) = κ·((x² + z²)/r_max²)·max_shift`, measured from the cell
/// centre, where `r_max` is the corner distance of the imaging area.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BiasFieldMap {
    /// Tesla.
    pub nominal_bias: f64,
    /// Shift at the imaging-area corners, rad/s.
    pub max_shift: f64,
    /// Half side of the square imaging area the bound applies to, m.
    pub area_half_width: f64,
    /// Sign (or scale) of the bowl.
    pub kappa: f64,
    /// Cell centre in the x–z plane, m.
    pub origin: [f64; 2],
}

impl Default for BiasFieldMap {
    /// 150 mG with ±2π×2 kHz over a 40 × 40 mm² area.
    fn default() -> Self {
        Self {
            nominal_bias: DEFAULT_BIAS,
            max_shift: hz_to_rad(2e3),
            area_half_width: 20e-3,
            kappa: 1.0,
            origin: [0.0, 0.0],
        }
    }
}

impl BiasFieldMap {
    pub fn delta_omega(&self, x: f64, z: f64) -> f64 {
        let (dx, dz) = (x - self.origin[0], z - self.origin[1]);
        let r_max2 = 2.0 * self.area_half_width * self.area_half_width;
        self.kappa * (dx * dx + dz * dz) / r_max2 * self.max_shift
    }

    pub fn nominal_omega0(&self) -> f64 {
        larmor_frequency(self.nominal_bias)
    }
}

/// Gaussian fall-off of the pixel amplitude from the cell centre, scaled so
/// the imaging-area corners sit at `corner_ratio` of the centre value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmplitudeProfile {
    pub corner_ratio: f64,
    pub area_half_width: f64,
    pub origin: [f64; 2],
}

impl Default for AmplitudeProfile {
    fn default() -> Self {
        Self { corner_ratio: 0.55, area_half_width: 20e-3, origin: [0.0, 0.0] }
    }
}

impl AmplitudeProfile {
    pub fn factor(&self, x: f64, z: f64) -> f64 {
        if self.corner_ratio >= 1.0 {
            return 1.0;
        }
        let (dx, dz) = (x - self.origin[0], z - self.origin[1]);
        let r_corner2 = 2.0 * self.area_half_width * self.area_half_width;
        // exp(−r²/(2s²)) = ratio at r = r_corner
        let two_s2 = r_corner2 / -ln(self.corner_ratio);
        exp(-(dx * dx + dz * dz) / two_s2)
    }
}

/// Per-pixel resonance description.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResonanceParams {
    /// rad/s.
    pub omega0: f64,
    /// Full width at half maximum, rad/s.
    pub gamma_fwhm: f64,
    /// On-resonance X amplitude at the reference drive, V.
    pub amplitude: f64,
    pub x_offset: f64,
    pub y_offset: f64,
    /// Lineshape rotation, rad.
    pub phase0: f64,
    /// Transverse drive magnitude that yields `amplitude`, tesla.
    pub drive_reference: f64,
}

impl ResonanceParams {
    pub fn new(omega0: f64, gamma_fwhm: f64, amplitude: f64) -> Self {
        Self {
            omega0,
            gamma_fwhm,
            amplitude,
            x_offset: 0.0,
            y_offset: 0.0,
            phase0: 0.0,
            drive_reference: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), MagnetometerError> {
        if !(self.gamma_fwhm > 0.0) {
            return Err(MagnetometerError::Invalid("linewidth must be > 0"));
        }
        if !(self.amplitude >= 0.0) {
            return Err(MagnetometerError::Invalid("amplitude must be >= 0"));
        }
        if !(self.drive_reference > 0.0) {
            return Err(MagnetometerError::Invalid("drive reference must be > 0"));
        }
        Ok(())
    }

    pub fn half_width(&self) -> f64 {
        0.5 * self.gamma_fwhm
    }
}

/// Spatially varying magnetometer response over a cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Magnetometer {
    pub cell: CellSpec,
    pub bias: BiasFieldMap,
    pub profile: AmplitudeProfile,
    pub gamma_fwhm: f64,
    pub x_offset: f64,
    pub y_offset: f64,
    pub phase0: f64,
}

impl Default for Magnetometer {
    fn default() -> Self {
        Self {
            cell: CellSpec::default(),
            bias: BiasFieldMap::default(),
            profile: AmplitudeProfile::default(),
            gamma_fwhm: DEFAULT_LINEWIDTH,
            x_offset: 0.0,
            y_offset: 0.0,
            phase0: 0.0,
        }
    }
}

impl Magnetometer {
    /// Resonance seen by the voxel: Larmor frequency of the nominal bias plus
    /// the local shift, amplitude scaled by the spatial profile.
    pub fn resonance_at(
        &self,
        voxel: &SensorVoxel,
        pixel_amplitude: f64,
    ) -> Result<ResonanceParams, MagnetometerError> {
        if !self.cell.contains(voxel.center) {
            return Err(MagnetometerError::VoxelOutsideCell);
        }
        let (x, z) = (voxel.center.x, voxel.center.z);
        Ok(ResonanceParams {
            omega0: larmor_frequency(self.bias.nominal_bias) + self.bias.delta_omega(x, z),
            gamma_fwhm: self.gamma_fwhm,
            amplitude: pixel_amplitude * self.profile.factor(x, z),
            x_offset: self.x_offset,
            y_offset: self.y_offset,
            phase0: self.phase0,
            drive_reference: 1.0,
        })
    }
}

/// Larmor angular frequency `γ_eff·B` for a bias in tesla.
pub fn larmor_frequency(bias: f64) -> f64 {
    GAMMA_EFF * bias
}

/// Unit-amplitude complex lineshape `h/(h − iδ)`: real part Lorentzian
/// `h²/(δ²+h²)`, imaginary part dispersive `hδ/(δ²+h²)`.
#[inline]
pub fn complex_lorentzian(delta: f64, half_width: f64) -> Complex64 {
    let d = delta * delta + half_width * half_width;
    Complex64::new(half_width * half_width / d, half_width * delta / d)
}

/// In-phase and quadrature response at `omega_rf` for a local co-rotating
/// transverse field `b_transverse`.
///
/// `A_eff = amplitude·|b|/drive_reference`; the lineshape is rotated by
/// `phase0 + arg(b)` and the offsets are added afterwards.
pub fn lineshape(params: &ResonanceParams, omega_rf: f64, b_transverse: Complex64) -> (f64, f64) {
    let z = response(params, omega_rf, b_transverse);
    (z.re + params.x_offset, z.im + params.y_offset)
}

/// Offset-free complex response `X + iY`.
pub fn response(params: &ResonanceParams, omega_rf: f64, b_transverse: Complex64) -> Complex64 {
    let a_eff = params.amplitude * b_transverse.norm() / params.drive_reference;
    let phase = params.phase0 + if b_transverse.norm() > 0.0 { b_transverse.arg() } else { 0.0 };
    let rot = Complex64::from_polar(a_eff, phase);
    rot * complex_lorentzian(omega_rf - params.omega0, params.half_width())
}
