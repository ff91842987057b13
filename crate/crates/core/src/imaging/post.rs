use alloc::vec::Vec;

use super::{EmiImage, ImagingError};
use crate::math::exp;

/// Background divided by target, pixel by pixel. A pixel is invalid (r = 0)
/// when either input is invalid or the target radius is zero or non-finite.
pub fn normalize(background: &EmiImage, target: &EmiImage) -> Result<EmiImage, ImagingError> {
    if background.grid != target.grid || background.len() != target.len() {
        return Err(ImagingError::GridMismatch);
    }
    let mut out = target.clone();
    for i in 0..out.len() {
        let t = target.r[i];
        let q = background.r[i] / t;
        let ok = background.valid[i] && target.valid[i] && t > 0.0 && q.is_finite();
        out.r[i] = if ok { q } else { 0.0 };
        out.valid[i] = ok;
    }
    Ok(out)
}

/// Gaussian smoothing of the radius channel with σ = `radius` pixels over a
/// (2·radius + 1)² window. Near edges and invalid pixels the kernel is
/// renormalized over the taps that remain.
pub fn smooth(image: &EmiImage, radius: usize) -> EmiImage {
    if radius == 0 {
        return image.clone();
    }
    let g = image.grid;
    let r = radius as isize;
    let sigma = radius as f64;
    let w = 2 * radius + 1;
    let mut kernel = Vec::with_capacity(w * w);
    for dy in -r..=r {
        for dx in -r..=r {
            kernel.push(exp(-((dx * dx + dy * dy) as f64) / (2.0 * sigma * sigma)));
        }
    }
    let mut out = image.clone();
    for row in 0..g.n_rows {
        for col in 0..g.n_cols {
            let i = g.index(row, col);
            if !image.valid[i] {
                continue;
            }
            let (mut acc, mut wsum) = (0.0, 0.0);
            for dy in -r..=r {
                let rr = row as isize + dy;
                if rr < 0 || rr >= g.n_rows as isize {
                    continue;
                }
                for dx in -r..=r {
                    let cc = col as isize + dx;
                    if cc < 0 || cc >= g.n_cols as isize {
                        continue;
                    }
                    let j = g.index(rr as usize, cc as usize);
                    if !image.valid[j] {
                        continue;
                    }
                    let k = kernel[((dy + r) as usize) * w + (dx + r) as usize];
                    acc += k * image.r[j];
                    wsum += k;
                }
            }
            out.r[i] = acc / wsum;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamsteer::PixelGrid;

    fn grid(n: usize) -> PixelGrid {
        PixelGrid::centered(n, n, 1e-3)
    }

    #[test]
    fn self_normalization_is_one() {
        let mut img = EmiImage::uniform(grid(4), 1.0);
        for (k, r) in img.r.iter_mut().enumerate() {
            *r = 0.5 + 0.1 * k as f64;
        }
        let n = normalize(&img, &img).unwrap();
        assert!(n.r.iter().all(|v| *v == 1.0));
    }

    #[test]
    fn weaker_target_reads_above_one_and_zero_is_flagged() {
        let bg = EmiImage::uniform(grid(3), 1.0);
        let mut tg = bg.clone();
        tg.r[4] = 0.8;
        tg.r[0] = 0.0;
        let n = normalize(&bg, &tg).unwrap();
        assert!(n.r[4] > 1.0);
        assert!(!n.valid[0] && n.r[0] == 0.0);
        assert!(n.valid[1]);
    }

    #[test]
    fn mismatched_grids() {
        let a = EmiImage::uniform(grid(3), 1.0);
        let b = EmiImage::uniform(grid(4), 1.0);
        assert_eq!(normalize(&a, &b), Err(ImagingError::GridMismatch));
    }

    #[test]
    fn smoothing_examples() {
        let uni = EmiImage::uniform(grid(9), 2.5);
        let s = smooth(&uni, 1);
        assert!(s.r.iter().all(|v| (v - 2.5).abs() < 1e-12));

        let mut delta = EmiImage::uniform(grid(11), 0.0);
        delta.r[delta.grid.index(5, 5)] = 1.0;
        let s = smooth(&delta, 1);
        let e1 = exp(-0.5);
        let e2 = exp(-1.0);
        let total = 1.0 + 4.0 * e1 + 4.0 * e2;
        let g = delta.grid;
        assert!((s.r[g.index(5, 5)] - 1.0 / total).abs() < 1e-15);
        assert!((s.r[g.index(4, 5)] - e1 / total).abs() < 1e-15);
        assert!((s.r[g.index(6, 6)] - e2 / total).abs() < 1e-15);
        assert_eq!(s.r[g.index(3, 5)], 0.0);

        assert_eq!(smooth(&delta, 0), delta);
    }
}
