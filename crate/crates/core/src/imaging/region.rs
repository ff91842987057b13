//! Footprint bookkeeping and thresholded-region shape analysis.

use alloc::vec;
use alloc::vec::Vec;

use super::EmiImage;
use crate::beamsteer::PixelGrid;
use crate::fields::{point_in_polygon, polygon_area};
use crate::math::{abs, acos, hypot, sqrt};

/// Where a pixel's square lies relative to a plate outline.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FootprintClass {
    Inside,
    Outside,
    Boundary,
}

/// Classify every pixel by a 5 × 5 sample of its square. Samples stop just
/// short of the pixel edge so a plate edge on a pixel boundary does not make
/// both neighbours straddle it.
pub fn classify_footprint(grid: &PixelGrid, outline: &[[f64; 2]]) -> Vec<FootprintClass> {
    let offsets = [-0.45, -0.225, 0.0, 0.225, 0.45];
    (0..grid.len())
        .map(|i| {
            let (row, col) = grid.row_col(i);
            let [x, z] = grid.position(row, col);
            let mut inside = 0;
            for dz in offsets {
                for dx in offsets {
                    if point_in_polygon(outline, [x + dx * grid.step, z + dz * grid.step]) {
                        inside += 1;
                    }
                }
            }
            match inside {
                25 => FootprintClass::Inside,
                0 => FootprintClass::Outside,
                _ => FootprintClass::Boundary,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contrast {
    pub mean_inside: f64,
    pub std_inside: f64,
    pub n_inside: usize,
    pub mean_outside: f64,
    pub std_outside: f64,
    pub n_outside: usize,
}

impl Contrast {
    /// Midpoint between the two class means.
    pub fn threshold(&self) -> f64 {
        0.5 * (self.mean_inside + self.mean_outside)
    }

    /// Mean separation in units of the outside scatter.
    pub fn separation(&self) -> f64 {
        (self.mean_inside - self.mean_outside) / self.std_outside
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0).max(1.0);
    (m, sqrt(var))
}

/// Radius statistics of valid pixels fully inside and fully outside.
pub fn contrast(image: &EmiImage, classes: &[FootprintClass]) -> Contrast {
    let pick = |c: FootprintClass| -> Vec<f64> {
        (0..image.len()).filter(|&i| classes[i] == c && image.valid[i]).map(|i| image.r[i]).collect()
    };
    let inside = pick(FootprintClass::Inside);
    let outside = pick(FootprintClass::Outside);
    let (mi, si) = mean_std(&inside);
    let (mo, so) = mean_std(&outside);
    Contrast {
        mean_inside: mi,
        std_inside: si,
        n_inside: inside.len(),
        mean_outside: mo,
        std_outside: so,
        n_outside: outside.len(),
    }
}

/// Connected set of pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    /// Pixel indices, ascending.
    pub pixels: Vec<usize>,
    /// Mean (x, z) of the pixel centres, m.
    pub centroid: [f64; 2],
}

impl Region {
    pub fn area_pixels(&self) -> usize {
        self.pixels.len()
    }
}

/// Largest 4-connected component of valid pixels with `r > threshold`.
/// Equal-sized components resolve to the one containing the lowest index.
pub fn threshold_region(image: &EmiImage, threshold: f64) -> Region {
    let g = image.grid;
    let above: Vec<bool> = (0..image.len()).map(|i| image.valid[i] && image.r[i] > threshold).collect();
    let mut label = vec![usize::MAX; image.len()];
    let mut best: Vec<usize> = Vec::new();
    let mut stack = Vec::new();
    for seed in 0..image.len() {
        if !above[seed] || label[seed] != usize::MAX {
            continue;
        }
        let mut comp = Vec::new();
        label[seed] = seed;
        stack.push(seed);
        while let Some(i) = stack.pop() {
            comp.push(i);
            let (row, col) = g.row_col(i);
            let mut visit = |r: usize, c: usize| {
                let j = g.index(r, c);
                if above[j] && label[j] == usize::MAX {
                    label[j] = seed;
                    stack.push(j);
                }
            };
            if row > 0 {
                visit(row - 1, col);
            }
            if row + 1 < g.n_rows {
                visit(row + 1, col);
            }
            if col > 0 {
                visit(row, col - 1);
            }
            if col + 1 < g.n_cols {
                visit(row, col + 1);
            }
        }
        if comp.len() > best.len() {
            best = comp;
        }
    }
    best.sort_unstable();
    let n = best.len().max(1) as f64;
    let mut c = [0.0, 0.0];
    for &i in &best {
        let (row, col) = g.row_col(i);
        let p = g.position(row, col);
        c[0] += p[0] / n;
        c[1] += p[1] / n;
    }
    if best.is_empty() {
        c = [f64::NAN, f64::NAN];
    }
    Region { pixels: best, centroid: c }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (monotone chain), no collinear points.
fn convex_hull(mut pts: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Vec<[f64; 2]> = if pass == 0 { pts.clone() } else { pts.iter().rev().cloned().collect() };
        for p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Corner structure of a region.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSummary {
    /// Convex hull of the pixel squares, counter-clockwise, m.
    pub hull: Vec<[f64; 2]>,
    /// Fewest-vertex reduction of the hull that still covers
    /// [`ShapeSummary::COVERAGE`] of its area.
    pub corners: Vec<[f64; 2]>,
    /// Interior angle at each corner, rad.
    pub angles: Vec<f64>,
    /// Area of the best 3-, 4-, … vertex reduction over the hull area.
    pub coverage: Vec<f64>,
    /// Region area over its hull area.
    pub fill_ratio: f64,
    /// Correlation coefficient of the pixel-centre x and z coordinates:
    /// 0 for shapes symmetric about an axis-parallel line, −1/2 for a filled
    /// right isosceles triangle whose legs run along +x and +z.
    pub xz_correlation: f64,
    /// Skewness of the pixel centres projected on the diagonal `(1, s)/√2`,
    /// `s = −sign(xz_correlation)`: about −0.57 for a right triangle whose
    /// right angle sits at the low end of that diagonal.
    pub diagonal_skewness: f64,
}

/// Outcome of the orientation test on a [`ShapeSummary`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    /// No preferred diagonal: squares, discs, axis-aligned rectangles.
    Symmetric,
    /// Mass concentrated towards one corner of the bounding box, as for a
    /// right triangle with axis-parallel legs. `corner` holds the signs of
    /// the right-angle corner's offset along x and z.
    RightTriangle { corner: [i8; 2] },
}

impl ShapeSummary {
    pub const COVERAGE: f64 = 0.85;
    pub const MAX_VERTICES: usize = 8;

    /// |x–z correlation| below which a shape counts as symmetric.
    pub const ORIENTATION_MIN: f64 = 0.05;

    pub fn classify(&self) -> ShapeClass {
        if !(abs(self.xz_correlation) >= Self::ORIENTATION_MIN) {
            return ShapeClass::Symmetric;
        }
        // The long tail of the projection points at the right angle.
        let s: i8 = if self.xz_correlation < 0.0 { 1 } else { -1 };
        let t: i8 = if self.diagonal_skewness < 0.0 { -1 } else { 1 };
        ShapeClass::RightTriangle { corner: [t, t * s] }
    }

    pub fn vertex_count(&self) -> usize {
        self.corners.len()
    }

    /// Corner whose interior angle is closest to a right angle.
    pub fn most_square_corner(&self) -> Option<[f64; 2]> {
        let half_pi = core::f64::consts::FRAC_PI_2;
        (0..self.corners.len())
            .min_by(|&a, &b| abs(self.angles[a] - half_pi).total_cmp(&abs(self.angles[b] - half_pi)))
            .map(|i| self.corners[i])
    }
}

/// Largest-area polygon with `k` vertices taken from a convex hull, for
/// each `k` in `3..=max`. Exhaustive over start vertices with a fan
/// recurrence anchored at the start, `O(k·n³)`.
fn reductions(hull: &[[f64; 2]], max: usize) -> Vec<Vec<[f64; 2]>> {
    let n = hull.len();
    if n < 3 {
        return Vec::new();
    }
    let kmax = max.min(n);
    let tri = |a: usize, b: usize, c: usize| 0.5 * abs(cross(hull[a], hull[b], hull[c]));
    // best[k] = (area, vertex indices)
    let mut best: Vec<(f64, Vec<usize>)> = alloc::vec![(-1.0, Vec::new()); kmax + 1];
    for s in 0..n {
        // Vertices after `s` in counter-clockwise order, as offsets 1..n.
        let at = |off: usize| (s + off) % n;
        // area[m][j]: best fan s → … → at(j) using m vertices including s.
        let mut area = alloc::vec![alloc::vec![f64::NEG_INFINITY; n]; kmax + 1];
        let mut prev = alloc::vec![alloc::vec![0usize; n]; kmax + 1];
        for j in 1..n {
            area[2][j] = 0.0;
        }
        for m in 3..=kmax {
            for j in m - 1..n {
                for i in m - 2..j {
                    let cand = area[m - 1][i] + tri(s, at(i), at(j));
                    if area[m - 1][i].is_finite() && cand > area[m][j] {
                        area[m][j] = cand;
                        prev[m][j] = i;
                    }
                }
            }
        }
        for m in 3..=kmax {
            for j in m - 1..n {
                if area[m][j] > best[m].0 {
                    let mut idx = alloc::vec![at(j)];
                    let (mut mm, mut jj) = (m, j);
                    while mm > 2 {
                        jj = prev[mm][jj];
                        mm -= 1;
                        idx.push(at(jj));
                    }
                    idx.push(s);
                    idx.reverse();
                    best[m] = (area[m][j], idx);
                }
            }
        }
    }
    best.into_iter()
        .skip(3)
        .map(|(_, idx)| idx.into_iter().map(|i| hull[i]).collect())
        .collect()
}

pub fn shape_summary(region: &Region, grid: &PixelGrid) -> ShapeSummary {
    let h = 0.5 * grid.step;
    let mut pts = Vec::with_capacity(4 * region.pixels.len());
    let (mut sxx, mut szz, mut sxz) = (0.0, 0.0, 0.0);
    for &i in &region.pixels {
        let (row, col) = grid.row_col(i);
        let [x, z] = grid.position(row, col);
        pts.extend_from_slice(&[[x - h, z - h], [x + h, z - h], [x + h, z + h], [x - h, z + h]]);
        let (dx, dz) = (x - region.centroid[0], z - region.centroid[1]);
        sxx += dx * dx;
        szz += dz * dz;
        sxz += dx * dz;
    }
    let hull = convex_hull(pts);
    let xz_correlation = sxz / sqrt(sxx * szz);
    let s = if xz_correlation < 0.0 { 1.0 } else { -1.0 };
    let (mut m2, mut m3) = (0.0, 0.0);
    for &i in &region.pixels {
        let (row, col) = grid.row_col(i);
        let [x, z] = grid.position(row, col);
        let u = ((x - region.centroid[0]) + s * (z - region.centroid[1])) * core::f64::consts::FRAC_1_SQRT_2;
        m2 += u * u;
        m3 += u * u * u;
    }
    let npx = region.pixels.len() as f64;
    let diagonal_skewness = (m3 / npx) / libm::pow(m2 / npx, 1.5);
    let area = region.area_pixels() as f64 * grid.step * grid.step;
    let hull_area = if hull.len() >= 3 { polygon_area(&hull) } else { 0.0 };
    let reduced = reductions(&hull, ShapeSummary::MAX_VERTICES);
    let coverage: Vec<f64> = reduced.iter().map(|p| polygon_area(p) / hull_area).collect();
    let corners = reduced
        .into_iter()
        .find(|p| polygon_area(p) >= ShapeSummary::COVERAGE * hull_area)
        .unwrap_or_else(|| hull.clone());
    let n = corners.len();
    let angles = (0..n)
        .map(|k| {
            let p = corners[k];
            let a = corners[(k + n - 1) % n];
            let b = corners[(k + 1) % n];
            let (u, v) = ([a[0] - p[0], a[1] - p[1]], [b[0] - p[0], b[1] - p[1]]);
            let c = (u[0] * v[0] + u[1] * v[1]) / (hypot(u[0], u[1]) * hypot(v[0], v[1]));
            acos(c.clamp(-1.0, 1.0))
        })
        .collect();
    ShapeSummary {
        hull,
        corners,
        angles,
        coverage,
        fill_ratio: if hull_area > 0.0 { area / hull_area } else { f64::NAN },
        xz_correlation,
        diagonal_skewness,
    }
}
