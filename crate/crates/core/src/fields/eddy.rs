use alloc::vec::Vec;

use super::{coil_field, skin_depth, CoilSpec, FieldsError, Material, PhasorField};
use crate::math::{abs, asinh, ln, solve_complex, sqrt, Complex64, Vec3};
use crate::{MU0, MU0_OVER_4PI};

/// Flat conductive plate lying parallel to the x–z plane.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetPlate {
    /// Outline vertices `[x, z]`, meters.
    pub outline: Vec<[f64; 2]>,
    /// m.
    pub thickness: f64,
    /// y-coordinate of the plate mid-plane, m.
    pub height_y: f64,
    pub material: Material,
}

impl TargetPlate {
    /// Axis-aligned square plate centred on `(cx, cz)`.
    pub fn square(side: f64, cx: f64, cz: f64, thickness: f64, height_y: f64) -> Self {
        let h = 0.5 * side;
        Self {
            outline: alloc::vec![
                [cx - h, cz - h],
                [cx + h, cz - h],
                [cx + h, cz + h],
                [cx - h, cz + h]
            ],
            thickness,
            height_y,
            material: Material::copper(),
        }
    }

    /// Right triangle with the right angle at `corner` and legs along +x and +z.
    pub fn right_triangle(leg: f64, corner: [f64; 2], thickness: f64, height_y: f64) -> Self {
        let [x0, z0] = corner;
        Self {
            outline: alloc::vec![[x0, z0], [x0 + leg, z0], [x0, z0 + leg]],
            thickness,
            height_y,
            material: Material::copper(),
        }
    }

    pub fn validate(&self) -> Result<(), FieldsError> {
        if self.outline.len() < 3 {
            return Err(FieldsError::InvalidPlate("outline needs at least 3 vertices"));
        }
        if !(self.thickness > 0.0) {
            return Err(FieldsError::InvalidPlate("thickness must be > 0"));
        }
        if self.outline.iter().any(|v| !v[0].is_finite() || !v[1].is_finite())
            || !self.height_y.is_finite()
        {
            return Err(FieldsError::InvalidPlate("non-finite geometry"));
        }
        self.material.validate()?;
        if !is_simple(&self.outline) {
            return Err(FieldsError::InvalidPlate("outline self-intersects"));
        }
        Ok(())
    }

    pub fn area(&self) -> f64 {
        polygon_area(&self.outline)
    }
}

/// Unsigned shoelace area.
pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    abs(signed_area(poly))
}

fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    let mut s = 0.0;
    for i in 0..n {
        let [x0, z0] = poly[i];
        let [x1, z1] = poly[(i + 1) % n];
        s += x0 * z1 - x1 * z0;
    }
    0.5 * s
}

/// Area centroid of a simple polygon.
pub fn polygon_centroid(poly: &[[f64; 2]]) -> [f64; 2] {
    let n = poly.len();
    let a = signed_area(poly);
    let (mut cx, mut cz) = (0.0, 0.0);
    for i in 0..n {
        let [x0, z0] = poly[i];
        let [x1, z1] = poly[(i + 1) % n];
        let w = x0 * z1 - x1 * z0;
        cx += (x0 + x1) * w;
        cz += (z0 + z1) * w;
    }
    [cx / (6.0 * a), cz / (6.0 * a)]
}

fn segments_cross(p1: [f64; 2], p2: [f64; 2], q1: [f64; 2], q2: [f64; 2]) -> bool {
    let orient = |a: [f64; 2], b: [f64; 2], c: [f64; 2]| {
        (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
    };
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    ((d1 > 0.0) != (d2 > 0.0)) && ((d3 > 0.0) != (d4 > 0.0)) && d1 != 0.0 && d2 != 0.0
}

fn is_simple(poly: &[[f64; 2]]) -> bool {
    let n = poly.len();
    for i in 0..n {
        for j in i + 1..n {
            // adjacent edges share a vertex
            if j == i + 1 || (i == 0 && j == n - 1) {
                continue;
            }
            if segments_cross(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]) {
                return false;
            }
        }
    }
    true
}

/// Closed point-in-polygon test: points within `1e-12` (relative to the
/// outline size) of an edge count as inside; otherwise even–odd crossing.
pub fn point_in_polygon(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = poly.len();
    let scale = poly.iter().fold(0.0f64, |m, v| m.max(abs(v[0])).max(abs(v[1]))).max(1e-300);
    let tol = 1e-12 * scale;
    for i in 0..n {
        let a = poly[i];
        let b = poly[(i + 1) % n];
        let (dx, dz) = (b[0] - a[0], b[1] - a[1]);
        let len2 = dx * dx + dz * dz;
        let t = (((p[0] - a[0]) * dx + (p[1] - a[1]) * dz) / len2).clamp(0.0, 1.0);
        let (ex, ez) = (a[0] + t * dx - p[0], a[1] + t * dz - p[1]);
        if sqrt(ex * ex + ez * ez) <= tol {
            return true;
        }
    }
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, zi) = (poly[i][0], poly[i][1]);
        let (xj, zj) = (poly[j][0], poly[j][1]);
        if (zi > p[1]) != (zj > p[1]) && p[0] < (xj - xi) * (p[1] - zi) / (zj - zi) + xi {
            inside = !inside;
        }
        j = i;
    }
    inside
}

/// How cell currents are solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EddyModel {
    /// Mesh-current (stream-function) solve: adjacent cells share edges, so
    /// resistance couples neighbours, and every pair of cells is coupled by
    /// mutual inductance. Converges under mesh refinement.
    #[default]
    Coupled,
    /// Each cell is an isolated loop with its own `R` and `L`; no coupling.
    IndependentLoops,
}

/// One square current loop of the plate mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopCell {
    pub center: Vec3,
    /// Lattice position `(column along x, row along z)` in the mesh.
    pub lattice: (i64, i64),
    /// m².
    pub area: f64,
    /// Isolated-loop resistance, ohm. Infinite for an insulator.
    pub resistance: f64,
    /// Isolated-loop self-inductance, henry.
    pub self_inductance: f64,
    /// Complex dipole moment along the plate normal, A·m².
    pub induced_moment: Complex64,
}

/// Discretized plate.
#[derive(Debug, Clone, PartialEq)]
pub struct EddyMesh {
    pub cells: Vec<LoopCell>,
    pub cell_pitch: f64,
    /// Plate normal (ŷ).
    pub normal: Vec3,
    pub model: EddyModel,
    pub material: Material,
    /// Conducting thickness `min(thickness, skin depth)`, m.
    pub effective_thickness: f64,
    /// Frequency the resistances were evaluated at, rad/s.
    pub omega: f64,
}

impl EddyMesh {
    /// Net dipole moment of the plate.
    pub fn total_moment(&self) -> Complex64 {
        self.cells.iter().map(|c| c.induced_moment).sum()
    }
}

/// Mesh a plate with the default [`EddyModel::Coupled`] solver.
pub fn mesh_plate(plate: &TargetPlate, pitch: f64, omega: f64) -> Result<EddyMesh, FieldsError> {
    mesh_plate_with(plate, pitch, omega, EddyModel::default())
}

/// Square cells of side `pitch` on a lattice anchored at the outline's
/// bounding-box corner; cells whose centres fall inside the outline are kept.
///
/// Each cell gets the isolated-loop values
/// `R = ρ·4p / (t_eff·p/4)` and `L = μ₀·p·(ln(8p/w) − 2)` with `w = p/4`,
/// where `t_eff = min(thickness, skin depth at omega)`.
pub fn mesh_plate_with(
    plate: &TargetPlate,
    pitch: f64,
    omega: f64,
    model: EddyModel,
) -> Result<EddyMesh, FieldsError> {
    plate.validate()?;
    if plate.area() <= 0.0 {
        return Err(FieldsError::DegenerateOutline);
    }
    let (mut xmin, mut xmax, mut zmin, mut zmax) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &[x, z] in &plate.outline {
        xmin = xmin.min(x);
        xmax = xmax.max(x);
        zmin = zmin.min(z);
        zmax = zmax.max(z);
    }
    if !(pitch > 0.0) || pitch > (xmax - xmin).min(zmax - zmin) * (1.0 + 1e-12) {
        return Err(FieldsError::DegenerateOutline);
    }

    let effective_thickness = match skin_depth(&plate.material, omega) {
        Ok(delta) => plate.thickness.min(delta),
        Err(FieldsError::NonConductive) => plate.thickness,
        Err(e) => return Err(e),
    };
    let wire = 0.25 * pitch;
    let resistance = if plate.material.conductivity > 0.0 {
        (4.0 * pitch) / (plate.material.conductivity * effective_thickness * wire)
    } else {
        f64::INFINITY
    };
    let self_inductance = MU0 * pitch * (ln(8.0 * pitch / wire) - 2.0);

    let nx = libm::ceil((xmax - xmin) / pitch - 1e-9) as i64;
    let nz = libm::ceil((zmax - zmin) / pitch - 1e-9) as i64;
    let mut cells = Vec::new();
    for iz in 0..nz {
        for ix in 0..nx {
            let x = xmin + (ix as f64 + 0.5) * pitch;
            let z = zmin + (iz as f64 + 0.5) * pitch;
            if point_in_polygon(&plate.outline, [x, z]) {
                cells.push(LoopCell {
                    center: Vec3::new(x, plate.height_y, z),
                    lattice: (ix, iz),
                    area: pitch * pitch,
                    resistance,
                    self_inductance,
                    induced_moment: Complex64::new(0.0, 0.0),
                });
            }
        }
    }
    if cells.is_empty() {
        return Err(FieldsError::DegenerateOutline);
    }
    Ok(EddyMesh {
        cells,
        cell_pitch: pitch,
        normal: Vec3::Y,
        model,
        material: plate.material,
        effective_thickness,
        omega,
    })
}

/// Solve the cell currents driven by the coil and store the induced moments.
///
/// The drive is the flux `Φ = B₁·n̂·area` of the primary field through each
/// cell centre. For isolated loops `I = −iωΦ / (R + iωL)`. For the coupled
/// model the same relation holds with `R` and `L` replaced by the mesh
/// resistance and inductance matrices.
pub fn induce(mesh: &EddyMesh, coil: &CoilSpec) -> Result<EddyMesh, FieldsError> {
    if mesh.cells.is_empty() {
        return Err(FieldsError::DegenerateOutline);
    }
    coil.validate()?;
    let omega = coil.drive_omega;
    let mut flux = Vec::with_capacity(mesh.cells.len());
    for cell in &mesh.cells {
        let b = coil_field(coil, cell.center)?;
        flux.push(b.re.dot(mesh.normal) * cell.area);
    }

    let mut out = mesh.clone();
    let iw = Complex64::new(0.0, omega);
    if mesh.material.conductivity == 0.0 {
        for cell in &mut out.cells {
            cell.induced_moment = Complex64::new(0.0, 0.0);
        }
        return Ok(out);
    }
    match mesh.model {
        EddyModel::IndependentLoops => {
            for (cell, phi) in out.cells.iter_mut().zip(&flux) {
                let z = Complex64::new(cell.resistance, 0.0) + iw * cell.self_inductance;
                let current = -iw * *phi / z;
                cell.induced_moment = current * cell.area;
            }
        }
        EddyModel::Coupled => {
            let n = mesh.cells.len();
            let loops = mesh_loops(mesh);
            let (r, l) = coupled_matrices(mesh, &loops);
            let mut a = Vec::with_capacity(n * n);
            for k in 0..n * n {
                a.push(Complex64::new(r[k], 0.0) + iw * l[k]);
            }
            let mut rhs = Vec::with_capacity(n);
            for (cell, lp) in mesh.cells.iter().zip(&loops) {
                let c = Vec3::new(0.5 * (lp.x[0] + lp.x[1]), cell.center.y, 0.5 * (lp.z[0] + lp.z[1]));
                let b = coil_field(coil, c)?;
                rhs.push(-iw * b.re.dot(mesh.normal) * lp.area());
            }
            let currents = solve_complex(a, rhs).ok_or(FieldsError::SingularSystem)?;
            for ((cell, i), lp) in out.cells.iter_mut().zip(currents).zip(&loops) {
                cell.induced_moment = i * lp.area();
            }
        }
    }
    Ok(out)
}

/// Outline of one mesh loop: side positions and the regularization radius
/// of each side, ordered `[low, high]`.
struct MeshLoop {
    x: [f64; 2],
    z: [f64; 2],
    reg_x: [f64; 2],
    reg_z: [f64; 2],
}

impl MeshLoop {
    fn area(&self) -> f64 {
        (self.x[1] - self.x[0]) * (self.z[1] - self.z[0])
    }
}

/// Loop outlines for the coupled solve.
///
/// The stream function takes the loop current at a cell centre and vanishes
/// on the plate edge, so a side shared with another cell carries its current
/// over a strip of width `p` centred on the side, while a side on the plate
/// boundary carries it over the half-strip between the centre and the edge.
/// That side is drawn at the middle of the half-strip, `p/4` inside the cell.
/// Each side is regularized with the geometric mean distance `0.2235·w` of
/// its strip width `w`.
fn mesh_loops(mesh: &EddyMesh) -> Vec<MeshLoop> {
    let p = mesh.cell_pitch;
    let has = |lat: (i64, i64)| mesh.cells.iter().any(|c| c.lattice == lat);
    let side = |present: bool| if present { (0.5 * p, 0.2235 * p) } else { (0.25 * p, 0.2235 * 0.5 * p) };
    mesh.cells
        .iter()
        .map(|c| {
            let (ix, iz) = c.lattice;
            let (xl, rxl) = side(has((ix - 1, iz)));
            let (xh, rxh) = side(has((ix + 1, iz)));
            let (zl, rzl) = side(has((ix, iz - 1)));
            let (zh, rzh) = side(has((ix, iz + 1)));
            MeshLoop {
                x: [c.center.x - xl, c.center.x + xh],
                z: [c.center.z - zl, c.center.z + zh],
                reg_x: [rxl, rxh],
                reg_z: [rzl, rzh],
            }
        })
        .collect()
}

/// Mesh resistance and inductance matrices (row-major) for the coupled solve.
///
/// Cell loop currents superpose into edge currents: an edge shared by two
/// cells carries the difference of their loop currents, a boundary edge the
/// loop current alone over half the width. The inductance is the Neumann
/// double line integral over the loop outlines.
fn coupled_matrices(mesh: &EddyMesh, loops: &[MeshLoop]) -> (Vec<f64>, Vec<f64>) {
    let n = mesh.cells.len();
    let edge_r = 1.0 / (mesh.material.conductivity * mesh.effective_thickness);

    let mut r = alloc::vec![0.0; n * n];
    let index_of = |lat: (i64, i64)| mesh.cells.iter().position(|c| c.lattice == lat);
    for (i, cell) in mesh.cells.iter().enumerate() {
        let (ix, iz) = cell.lattice;
        for nb in [(ix + 1, iz), (ix - 1, iz), (ix, iz + 1), (ix, iz - 1)] {
            match index_of(nb) {
                Some(j) => {
                    r[i * n + i] += edge_r;
                    r[i * n + j] -= edge_r;
                }
                None => r[i * n + i] += 2.0 * edge_r,
            }
        }
    }

    let mut l = alloc::vec![0.0; n * n];
    for i in 0..n {
        let a = &loops[i];
        for j in i..n {
            let b = &loops[j];
            let mut m = 0.0;
            // Sides along x sit at the low and high z and run in opposite
            // directions; same for sides along z.
            for (ki, si) in [(0, 1.0), (1, -1.0)] {
                for (kj, sj) in [(0, 1.0), (1, -1.0)] {
                    let reg = 0.5 * (a.reg_x[ki] + b.reg_x[kj]);
                    m += si * sj * parallel_filaments(a.x[0], a.x[1], b.x[0], b.x[1], b.z[kj] - a.z[ki], reg);
                    let reg = 0.5 * (a.reg_z[ki] + b.reg_z[kj]);
                    m += si * sj * parallel_filaments(a.z[0], a.z[1], b.z[0], b.z[1], b.x[kj] - a.x[ki], reg);
                }
            }
            l[i * n + j] = m;
            l[j * n + i] = m;
        }
    }
    (r, l)
}

/// Mutual inductance of two parallel, equally directed filaments spanning
/// `[a1, b1]` and `[a2, b2]` along a common axis at perpendicular separation
/// `sep`, with the kernel regularized by `reg`:
/// `μ₀/4π·[G(b2−a1) − G(a2−a1) − G(b2−b1) + G(a2−b1)]`,
/// `G(u) = u·asinh(u/d) − √(u² + d²)`, `d² = sep² + reg²`.
fn parallel_filaments(a1: f64, b1: f64, a2: f64, b2: f64, sep: f64, reg: f64) -> f64 {
    let d = sqrt(sep * sep + reg * reg);
    let g = |u: f64| u * asinh(u / d) - sqrt(u * u + d * d);
    MU0_OVER_4PI * (g(b2 - a1) - g(a2 - a1) - g(b2 - b1) + g(a2 - b1))
}

/// Sum of the complex magnetic-dipole fields of every induced moment.
pub fn secondary_field(mesh: &EddyMesh, point: Vec3) -> Result<PhasorField, FieldsError> {
    let mut re = Vec3::ZERO;
    let mut im = Vec3::ZERO;
    let min_dist = 0.5 * mesh.cell_pitch;
    for cell in &mesh.cells {
        let r = point - cell.center;
        let d = r.norm();
        if d <= min_dist {
            return Err(FieldsError::TooCloseToSource);
        }
        let rhat = r / d;
        let shape = (rhat * (3.0 * rhat.dot(mesh.normal)) - mesh.normal) * (MU0_OVER_4PI / (d * d * d));
        re += shape * cell.induced_moment.re;
        im += shape * cell.induced_moment.im;
    }
    Ok(PhasorField { re, im, omega: mesh.omega })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hz_to_rad;
    use core::f64::consts::PI;

    fn w0() -> f64 {
        hz_to_rad(105e3)
    }

    fn default_square() -> TargetPlate {
        TargetPlate::square(25e-3, 0.0, 0.0, 1e-3, 12e-3)
    }

    #[test]
    fn square_at_5mm_pitch_has_25_cells() {
        let mesh = mesh_plate(&default_square(), 5e-3, w0()).unwrap();
        assert_eq!(mesh.cells.len(), 25);
        assert!(mesh.cells.iter().all(|c| c.induced_moment == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn triangle_cell_count_matches_half_plane_scan() {
        let plate = TargetPlate::right_triangle(25e-3, [-12.5e-3, -12.5e-3], 1e-3, 12e-3);
        let mesh = mesh_plate(&plate, 5e-3, w0()).unwrap();
        // Independent count: the triangle is x ≥ x0, z ≥ z0, (x−x0)+(z−z0) ≤ leg.
        let mut expected = 0;
        for iz in 0..5 {
            for ix in 0..5 {
                let x = -12.5e-3 + (ix as f64 + 0.5) * 5e-3;
                let z = -12.5e-3 + (iz as f64 + 0.5) * 5e-3;
                if (x + 12.5e-3) + (z + 12.5e-3) <= 25e-3 + 1e-14 {
                    expected += 1;
                }
            }
        }
        assert_eq!(expected, 15);
        assert_eq!(mesh.cells.len(), expected);
    }

    #[test]
    fn pitch_larger_than_plate_is_rejected() {
        assert_eq!(
            mesh_plate(&default_square(), 30e-3, w0()),
            Err(FieldsError::DegenerateOutline)
        );
    }

    #[test]
    fn collinear_outline_is_degenerate() {
        let mut plate = default_square();
        plate.outline = alloc::vec![[0.0, 0.0], [0.01, 0.0], [0.02, 0.0]];
        assert_eq!(mesh_plate(&plate, 1e-3, w0()), Err(FieldsError::DegenerateOutline));
    }

    #[test]
    fn bowtie_outline_is_rejected() {
        let mut plate = default_square();
        plate.outline = alloc::vec![[0.0, 0.0], [0.01, 0.01], [0.01, 0.0], [0.0, 0.01]];
        assert!(matches!(mesh_plate(&plate, 1e-3, w0()), Err(FieldsError::InvalidPlate(_))));
    }

    #[test]
    fn design_formulas_for_isolated_loops() {
        let mesh = mesh_plate(&default_square(), 2.5e-3, w0()).unwrap();
        let delta = skin_depth(&Material::copper(), w0()).unwrap();
        let c = mesh.cells[0];
        let expected_r = 4.0 * 2.5e-3 / (5.96e7 * delta * 2.5e-3 / 4.0);
        assert!((c.resistance - expected_r).abs() < 1e-12 * expected_r);
        let expected_l = MU0 * 2.5e-3 * (ln(32.0) - 2.0);
        assert!((c.self_inductance - expected_l).abs() < 1e-15);
        assert_eq!(mesh.effective_thickness, delta);
    }

    #[test]
    fn single_cell_moment_matches_hand_evaluation() {
        let plate = TargetPlate::square(2e-3, 0.0, 0.0, 1e-3, 12e-3);
        let mesh = mesh_plate_with(&plate, 2e-3, w0(), EddyModel::IndependentLoops).unwrap();
        assert_eq!(mesh.cells.len(), 1);
        let coil = CoilSpec::default();
        let induced = induce(&mesh, &coil).unwrap();
        let cell = mesh.cells[0];
        let b = coil_field(&coil, cell.center).unwrap().re.y;
        let phi = b * cell.area;
        let w = coil.drive_omega;
        // −iωΦ/(R + iωL), expanded by hand into real and imaginary parts.
        let (r, l) = (cell.resistance, cell.self_inductance);
        let den = r * r + w * w * l * l;
        let i_re = -w * w * l * phi / den;
        let i_im = -w * r * phi / den;
        let m = induced.cells[0].induced_moment;
        assert!((m.re - i_re * cell.area).abs() < 1e-12 * (i_re * cell.area).abs());
        assert!((m.im - i_im * cell.area).abs() < 1e-12 * (i_im * cell.area).abs());
    }

    #[test]
    fn insulator_induces_nothing() {
        let mut plate = default_square();
        plate.material.conductivity = 0.0;
        for model in [EddyModel::Coupled, EddyModel::IndependentLoops] {
            let mesh = mesh_plate_with(&plate, 2.5e-3, w0(), model).unwrap();
            let m = induce(&mesh, &CoilSpec::default()).unwrap();
            assert_eq!(m.total_moment(), Complex64::new(0.0, 0.0));
        }
        plate.material.conductivity = 1e-6;
        let mesh = mesh_plate(&plate, 2.5e-3, w0()).unwrap();
        let m = induce(&mesh, &CoilSpec::default()).unwrap();
        assert!(m.total_moment().norm() < 1e-15);
    }

    #[test]
    fn perfect_conductor_limit_opposes_the_drive() {
        let mut plate = default_square();
        plate.material.conductivity = 1e18;
        plate.thickness = 1.0;
        for model in [EddyModel::Coupled, EddyModel::IndependentLoops] {
            let mesh = mesh_plate_with(&plate, 2.5e-3, 1e3, model).unwrap();
            let mut coil = CoilSpec::default();
            coil.drive_omega = 1e3;
            let m = induce(&mesh, &coil).unwrap().total_moment();
            // Drive flux is along +ŷ; the moment must point along −ŷ.
            let phase = m.arg();
            assert!((phase.abs() - PI).abs() < 1e-3, "{model:?}: {phase}");
        }
    }

    #[test]
    fn induce_is_linear_in_coil_current() {
        let mesh = mesh_plate(&default_square(), 2.5e-3, w0()).unwrap();
        let mut coil = CoilSpec::default();
        let m1 = induce(&mesh, &coil).unwrap().total_moment();
        coil.current_amplitude = 3.0;
        let m3 = induce(&mesh, &coil).unwrap().total_moment();
        assert!((m3 - m1 * 3.0).norm() < 1e-12 * m3.norm());
    }

    #[test]
    fn inductance_matrix_is_positive_definite() {
        let mesh = mesh_plate(&default_square(), 5e-3, w0()).unwrap();
        let (_, l) = coupled_matrices(&mesh, &mesh_loops(&mesh));
        let n = mesh.cells.len();
        assert!(crate::math::solve_spd(&l, &alloc::vec![1.0; n]).is_some());
    }

    #[test]
    fn parallel_filament_closed_form() {
        // Two equal parallel filaments: μ₀l/2π·[asinh(l/d) − √(1 + d²/l²) + d/l].
        let (len, d) = (0.01, 0.003);
        let got = parallel_filaments(0.0, len, 0.0, len, d, 0.0);
        let expected =
            MU0 * len / (2.0 * PI) * (asinh(len / d) - sqrt(1.0 + d * d / (len * len)) + d / len);
        assert!((got - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn empty_field_for_unexcited_mesh() {
        let mesh = mesh_plate(&default_square(), 5e-3, w0()).unwrap();
        let b = secondary_field(&mesh, Vec3::ZERO).unwrap();
        assert_eq!(b.magnitude(), 0.0);
    }

    fn single_dipole(moment: Complex64, center: Vec3, pitch: f64) -> EddyMesh {
        EddyMesh {
            cells: alloc::vec![LoopCell {
                center,
                lattice: (0, 0),
                area: pitch * pitch,
                resistance: 1.0,
                self_inductance: 1.0,
                induced_moment: moment,
            }],
            cell_pitch: pitch,
            normal: Vec3::Y,
            model: EddyModel::IndependentLoops,
            material: Material::copper(),
            effective_thickness: 1e-4,
            omega: 1.0,
        }
    }

    #[test]
    fn on_axis_dipole_field() {
        let m = 2.5e-6;
        let mesh = single_dipole(Complex64::new(m, 0.0), Vec3::ZERO, 1e-3);
        let d = 0.02;
        let b = secondary_field(&mesh, Vec3::new(0.0, -d, 0.0)).unwrap();
        let expected = MU0 * m / (2.0 * PI * d * d * d);
        assert!((b.re.y - expected).abs() < 1e-12 * expected);
        assert!(b.re.x.abs() < 1e-25 && b.re.z.abs() < 1e-25);
    }

    #[test]
    fn dipole_falls_off_as_inverse_cube() {
        let pitch = 1e-3;
        let mesh = single_dipole(Complex64::new(1e-6, 0.0), Vec3::ZERO, pitch);
        let near = 5.0 * pitch;
        let far = 50.0 * pitch;
        let bn = secondary_field(&mesh, Vec3::new(0.0, near, 0.0)).unwrap().magnitude();
        let bf = secondary_field(&mesh, Vec3::new(0.0, far, 0.0)).unwrap().magnitude();
        let slope = ln(bf / bn) / ln(far / near);
        assert!((slope + 3.0).abs() < 0.01, "{slope}");
    }

    #[test]
    fn symmetric_pair_cancels_transverse_components() {
        let moment = Complex64::new(1e-6, 2e-7);
        let mut mesh = single_dipole(moment, Vec3::new(-0.005, 0.012, 0.0), 1e-3);
        let mut other = mesh.cells[0];
        other.center = Vec3::new(0.005, 0.012, 0.0);
        mesh.cells.push(other);
        let b = secondary_field(&mesh, Vec3::ZERO).unwrap();
        assert!(b.re.x.abs() < 1e-24 && b.im.x.abs() < 1e-24);
        assert!(b.re.z.abs() < 1e-24 && b.im.z.abs() < 1e-24);
        assert!(b.re.y.abs() > 0.0);
    }

    #[test]
    fn too_close_to_a_cell_is_rejected() {
        let mesh = single_dipole(Complex64::new(1.0, 0.0), Vec3::ZERO, 1e-3);
        assert_eq!(
            secondary_field(&mesh, Vec3::new(0.0, 4e-4, 0.0)),
            Err(FieldsError::TooCloseToSource)
        );
    }

    #[test]
    fn centroid_of_square_and_triangle() {
        let sq = default_square();
        let c = polygon_centroid(&sq.outline);
        assert!(c[0].abs() < 1e-15 && c[1].abs() < 1e-15);
        let tri = TargetPlate::right_triangle(0.03, [0.0, 0.0], 1e-3, 0.0);
        let c = polygon_centroid(&tri.outline);
        assert!((c[0] - 0.01).abs() < 1e-15 && (c[1] - 0.01).abs() < 1e-15);
        assert!((tri.area() - 4.5e-4).abs() < 1e-18);
    }
}
