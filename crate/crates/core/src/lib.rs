//! Simulation core for electromagnetic induction imaging with an optically
//! raster-scanned radio-frequency atomic magnetometer.
//!
//! The measurement chain runs, per pixel:
//!
//! 1. [`beamsteer`]: AOD drive frequencies place the pump/probe intersection.
//! 2. [`fields`]: the square RF coil drives eddy currents in conductive plates;
//!    the local RF phasor is primary plus secondary field.
//! 3. [`magnetometer`]: the local bias sets the Larmor resonance; the
//!    transverse RF amplitude sets the quadrature lineshapes.
//! 4. [`lockin`]: the polarimeter signal is synthesized and demodulated.
//! 5. [`fitting`]: Lorentzian/dispersive fits give per-pixel R and φ.
//! 6. [`imaging`]: scans, background normalization, smoothing and timing.
//!
//! The crate is `no_std` and only needs `alloc`. File formats, the CLI and
//! parallel execution live in the `emiscan` crate.
#![no_std]

extern crate alloc;

pub mod beamsteer;
pub mod fields;
pub mod fitting;
pub mod imaging;
pub mod lockin;
pub mod magnetometer;
pub mod math;

mod error;

pub use error::Error;
pub use math::{Complex64, Vec3};

/// Vacuum permeability (CODATA 2018), H/m.
pub const MU0: f64 = 1.256_637_062_12e-6;

/// μ₀/4π, H/m.
pub const MU0_OVER_4PI: f64 = MU0 / (4.0 * core::f64::consts::PI);

/// Angular frequency for a frequency in Hz.
#[inline]
pub fn hz_to_rad(f: f64) -> f64 {
    2.0 * core::f64::consts::PI * f
}
