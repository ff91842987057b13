use thiserror::Error;

use crate::beamsteer::BeamError;
use crate::fields::FieldsError;
use crate::fitting::FitError;
use crate::imaging::ImagingError;
use crate::lockin::LockinError;
use crate::magnetometer::MagnetometerError;

/// Any failure raised by the simulation core.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Fields(#[from] FieldsError),
    #[error(transparent)]
    Magnetometer(#[from] MagnetometerError),
    #[error(transparent)]
    Lockin(#[from] LockinError),
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Imaging(#[from] ImagingError),
}

impl Error {
    /// Stable machine-readable name of the failure kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Fields(e) => e.kind(),
            Error::Magnetometer(e) => e.kind(),
            Error::Lockin(e) => e.kind(),
            Error::Beam(e) => e.kind(),
            Error::Fit(e) => e.kind(),
            Error::Imaging(e) => e.kind(),
        }
    }
}
