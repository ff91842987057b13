//! Electromagnetic forward model.
//!
//! A square RF coil produces the primary phasor field B₁. Conductive target
//! plates are meshed into square current loops whose induced currents
//! produce the secondary field B₂. Everything is linear in the coil current
//! and evaluated at a single drive frequency.

mod coil;
mod eddy;

pub use coil::{coil_field, CoilSpec};
pub use eddy::{
    induce, mesh_plate, mesh_plate_with, point_in_polygon, polygon_area, polygon_centroid,
    secondary_field, EddyMesh, EddyModel, LoopCell, TargetPlate,
};

use thiserror::Error;

use crate::math::{sqrt, Complex64, Vec3};
use crate::MU0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FieldsError {
    #[error("query point lies on a coil conductor")]
    PointOnConductor,
    #[error("material has zero conductivity; skin depth is undefined")]
    NonConductive,
    #[error("plate outline is degenerate or yields no mesh cells")]
    DegenerateOutline,
    #[error("query point is within half a mesh pitch of an eddy cell")]
    TooCloseToSource,
    #[error("invalid coil: {0}")]
    InvalidCoil(&'static str),
    #[error("invalid plate: {0}")]
    InvalidPlate(&'static str),
    #[error("eddy-current system is singular")]
    SingularSystem,
}

impl FieldsError {
    pub fn kind(&self) -> &'static str {
        match self {
            FieldsError::PointOnConductor => "PointOnConductor",
            FieldsError::NonConductive => "NonConductive",
            FieldsError::DegenerateOutline => "DegenerateOutline",
            FieldsError::TooCloseToSource => "TooCloseToSource",
            FieldsError::InvalidCoil(_) => "InvalidCoil",
            FieldsError::InvalidPlate(_) => "InvalidPlate",
            FieldsError::SingularSystem => "SingularSystem",
        }
    }
}

/// Complex magnetic field amplitude at the drive frequency. The physical
/// field is `Re[(re + i·im)·e^{iωt}]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasorField {
    pub re: Vec3,
    pub im: Vec3,
    pub omega: f64,
}

impl PhasorField {
    pub fn zero(omega: f64) -> Self {
        Self { re: Vec3::ZERO, im: Vec3::ZERO, omega }
    }

    pub fn real(field: Vec3, omega: f64) -> Self {
        Self { re: field, im: Vec3::ZERO, omega }
    }

    /// `|re + i·im|`.
    pub fn magnitude(&self) -> f64 {
        sqrt(self.re.dot(self.re) + self.im.dot(self.im))
    }

    pub fn x(&self) -> Complex64 {
        Complex64::new(self.re.x, self.im.x)
    }

    pub fn y(&self) -> Complex64 {
        Complex64::new(self.re.y, self.im.y)
    }

    pub fn z(&self) -> Complex64 {
        Complex64::new(self.re.z, self.im.z)
    }

    /// Component along a real unit direction.
    pub fn along(&self, dir: Vec3) -> Complex64 {
        Complex64::new(self.re.dot(dir), self.im.dot(dir))
    }

    /// Co-rotating transverse component for a bias along ẑ,
    /// `(B_y + i·B_x)/2`. A linearly polarized drive along ŷ with real
    /// amplitude `b` maps to `b/2` with zero phase.
    pub fn transverse(&self) -> Complex64 {
        (self.y() + Complex64::i() * self.x()) * 0.5
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { re: self.re * s, im: self.im * s, omega: self.omega }
    }
}

impl core::ops::Add for PhasorField {
    type Output = PhasorField;
    fn add(self, o: PhasorField) -> PhasorField {
        PhasorField { re: self.re + o.re, im: self.im + o.im, omega: self.omega }
    }
}

/// Conductor properties.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Material {
    /// S/m.
    pub conductivity: f64,
    pub relative_permeability: f64,
}

impl Material {
    /// Default copper conductivity, S/m.
    pub const COPPER_CONDUCTIVITY: f64 = 5.96e7;

    pub const fn copper() -> Self {
        Self { conductivity: Self::COPPER_CONDUCTIVITY, relative_permeability: 1.0 }
    }

    pub fn validate(&self) -> Result<(), FieldsError> {
        if !(self.conductivity >= 0.0) || !self.conductivity.is_finite() {
            return Err(FieldsError::InvalidPlate("conductivity must be >= 0"));
        }
        if !(self.relative_permeability > 0.0) {
            return Err(FieldsError::InvalidPlate("relative permeability must be > 0"));
        }
        Ok(())
    }
}

/// Electromagnetic skin depth `√(2 / (μ₀·μ_r·σ·ω))`, meters.
pub fn skin_depth(material: &Material, omega: f64) -> Result<f64, FieldsError> {
    if material.conductivity == 0.0 {
        return Err(FieldsError::NonConductive);
    }
    material.validate()?;
    if !(omega > 0.0) {
        return Err(FieldsError::InvalidCoil("drive frequency must be > 0"));
    }
    Ok(sqrt(2.0 / (MU0 * material.relative_permeability * material.conductivity * omega)))
}

/// Primary coil field plus the secondary field of every induced mesh.
pub fn total_rf_field(
    coil: &CoilSpec,
    meshes: &[EddyMesh],
    point: Vec3,
) -> Result<PhasorField, FieldsError> {
    let mut total = coil_field(coil, point)?;
    for mesh in meshes {
        total = total + secondary_field(mesh, point)?;
    }
    Ok(total)
}
