use super::{FieldsError, PhasorField};
use crate::math::{abs, Vec3};
use crate::{hz_to_rad, MU0_OVER_4PI};

/// Square RF drive coil carrying `current_amplitude` at `drive_omega`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoilSpec {
    /// Side length, m.
    pub side_length: f64,
    pub center: Vec3,
    /// Unit normal; current circulates right-handed about it.
    pub normal: Vec3,
    /// Peak current, A.
    pub current_amplitude: f64,
    /// rad/s.
    pub drive_omega: f64,
}

impl Default for CoilSpec {
    /// 55 mm square coil 25 mm above the top face of a 20 mm tall cell
    /// centred on the origin, driving along ŷ at 105 kHz.
    fn default() -> Self {
        Self {
            side_length: 55e-3,
            center: Vec3::new(0.0, 35e-3, 0.0),
            normal: Vec3::Y,
            current_amplitude: 1.0,
            drive_omega: hz_to_rad(105e3),
        }
    }
}

impl CoilSpec {
    pub fn validate(&self) -> Result<(), FieldsError> {
        if !(self.side_length > 0.0) || !self.side_length.is_finite() {
            return Err(FieldsError::InvalidCoil("side length must be > 0"));
        }
        if abs(self.normal.norm() - 1.0) > 1e-12 {
            return Err(FieldsError::InvalidCoil("normal must be a unit vector"));
        }
        if !(self.drive_omega > 0.0) {
            return Err(FieldsError::InvalidCoil("drive frequency must be > 0"));
        }
        if !self.current_amplitude.is_finite() || !self.center.is_finite() {
            return Err(FieldsError::InvalidCoil("non-finite coil parameter"));
        }
        Ok(())
    }

    /// Corner points in circulation order.
    pub fn corners(&self) -> [Vec3; 4] {
        let (u, v) = in_plane_axes(self.normal);
        let h = 0.5 * self.side_length;
        let c = self.center;
        [
            c + (u + v) * h,
            c + (v - u) * h,
            c - (u + v) * h,
            c + (u - v) * h,
        ]
    }
}

/// Orthonormal in-plane axes `(u, v)` with `u × v = normal`. For a normal
/// along ±ŷ the square sides line up with x̂ and ẑ.
pub(crate) fn in_plane_axes(normal: Vec3) -> (Vec3, Vec3) {
    let u = normal.any_perpendicular();
    let v = normal.cross(u);
    (u, v)
}

/// Biot–Savart field of a straight filament from `start` to `end` carrying
/// unit current, at `point`, without the μ₀/4π prefactor.
///
/// With `a = start − p`, `b = end − p`:
/// `B ∝ (|a| + |b|) (a × b) / (|a||b| (|a||b| + a·b))`.
fn segment_kernel(start: Vec3, end: Vec3, point: Vec3) -> Result<Vec3, FieldsError> {
    let a = start - point;
    let b = end - point;
    let la = a.norm();
    let lb = b.norm();
    if distance_to_segment(start, end, point) <= 1e-9 {
        return Err(FieldsError::PointOnConductor);
    }
    let denom = la * lb * (la * lb + a.dot(b));
    Ok(a.cross(b) * ((la + lb) / denom))
}

fn distance_to_segment(start: Vec3, end: Vec3, point: Vec3) -> f64 {
    let d = end - start;
    let len2 = d.dot(d);
    let t = if len2 > 0.0 { ((point - start).dot(d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (start + d * t - point).norm()
}

/// Primary field of the coil at `point`: four finite straight segments,
/// closed-form. Purely real phasor (reference phase zero).
pub fn coil_field(coil: &CoilSpec, point: Vec3) -> Result<PhasorField, FieldsError> {
    let corners = coil.corners();
    let mut b = Vec3::ZERO;
    for k in 0..4 {
        b += segment_kernel(corners[k], corners[(k + 1) % 4], point)?;
    }
    Ok(PhasorField::real(b * (MU0_OVER_4PI * coil.current_amplitude), coil.drive_omega))
}
