//! Image files: a CSV table with every channel at full precision, an 8-bit
//! binary graymap of `r` for viewing, and a JSON sidecar.
//!
//! CSV layout (see `docs/formats.md`):
//!
//! ```text
//! # emiscan image v1 kind=raw rows=35 cols=35 step_mm=1 origin_x_mm=-17 origin_z_mm=-17 seed=1 scenario_sha256=…
//! row,col,x_mm,z_mm,r,phi,omega0,gamma,x_offset,y_offset,converged,valid,steer_s,control_s,measure_s
//! 0,0,-17,-17,…
//! ```
//!
//! Rows are in pixel-index order (row-major, row along z). Floats use the
//! shortest representation that parses back to the same `f64`.

use std::fmt::Write as _;
use std::io::Cursor;

use emiscan_core::beamsteer::PixelGrid;
use emiscan_core::imaging::{timing_report, EmiImage, PixelResult, TimingReport};
use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{ExtendedColorType, ImageEncoder};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &str = "# emiscan image v1";
pub const HEADER: &str =
    "row,col,x_mm,z_mm,r,phi,omega0,gamma,x_offset,y_offset,converged,valid,steer_s,control_s,measure_s";

#[derive(Debug, Error)]
pub enum ImageFileError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("graymap encoding failed: {0}")]
    Encode(String),
}

impl ImageFileError {
    pub fn kind(&self) -> &'static str {
        match self {
            ImageFileError::Malformed { .. } => "ImageParse",
            ImageFileError::Encode(_) => "ImageEncode",
        }
    }
}

fn malformed(line: usize, reason: impl Into<String>) -> ImageFileError {
    ImageFileError::Malformed { line, reason: reason.into() }
}

/// Provenance carried by every image file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageMeta {
    /// `raw`, `background` or `normalized`.
    pub kind: String,
    pub seed: u64,
    pub scenario_sha256: String,
}

pub fn write_csv(image: &EmiImage, meta: &ImageMeta) -> String {
    let g = &image.grid;
    let mut out = String::with_capacity(160 * image.len() + 256);
    let _ = writeln!(
        out,
        "{MAGIC} kind={} rows={} cols={} step_mm={} origin_x_mm={} origin_z_mm={} seed={} scenario_sha256={}",
        meta.kind,
        g.n_rows,
        g.n_cols,
        g.step * 1e3,
        g.origin[0] * 1e3,
        g.origin[1] * 1e3,
        meta.seed,
        meta.scenario_sha256
    );
    out.push_str(HEADER);
    out.push('\n');
    for i in 0..image.len() {
        let (row, col) = g.row_col(i);
        let [x, z] = g.position(row, col);
        let p = image.pixel(i);
        let _ = writeln!(
            out,
            "{row},{col},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            x * 1e3,
            z * 1e3,
            p.r,
            p.phi,
            p.omega0,
            p.gamma,
            p.x_offset,
            p.y_offset,
            u8::from(p.converged),
            u8::from(p.valid),
            p.steer,
            p.control,
            p.measure
        );
    }
    out
}

fn parse_f64(line: usize, field: &str, s: &str) -> Result<f64, ImageFileError> {
    s.trim().parse::<f64>().map_err(|_| malformed(line, format!("{field}: `{s}` is not a number")))
}

fn parse_flag(line: usize, field: &str, s: &str) -> Result<bool, ImageFileError> {
    match s.trim() {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(malformed(line, format!("{field}: expected 0 or 1, got `{s}`"))),
    }
}

pub fn read_csv(text: &str) -> Result<(EmiImage, ImageMeta), ImageFileError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let (n, first) = lines.next().ok_or_else(|| malformed(1, "empty file"))?;
    let rest = first.strip_prefix(MAGIC).ok_or_else(|| malformed(n, format!("expected `{MAGIC}`")))?;
    let mut kv = std::collections::BTreeMap::new();
    for tok in rest.split_whitespace() {
        let (k, v) = tok.split_once('=').ok_or_else(|| malformed(n, format!("bad metadata token `{tok}`")))?;
        kv.insert(k, v);
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| malformed(n, format!("missing metadata `{k}`")));
    let int = |k: &str| -> Result<usize, ImageFileError> {
        get(k)?.parse().map_err(|_| malformed(n, format!("metadata `{k}` is not an integer")))
    };
    let rows = int("rows")?;
    let cols = int("cols")?;
    let grid = PixelGrid {
        n_rows: rows,
        n_cols: cols,
        step: parse_f64(n, "step_mm", get("step_mm")?)? * 1e-3,
        origin: [
            parse_f64(n, "origin_x_mm", get("origin_x_mm")?)? * 1e-3,
            parse_f64(n, "origin_z_mm", get("origin_z_mm")?)? * 1e-3,
        ],
    };
    let meta = ImageMeta {
        kind: get("kind")?.to_string(),
        seed: get("seed")?.parse().map_err(|_| malformed(n, "metadata `seed` is not an integer"))?,
        scenario_sha256: get("scenario_sha256")?.to_string(),
    };
    let (n, header) = lines.next().ok_or_else(|| malformed(2, "missing header row"))?;
    if header.trim() != HEADER {
        return Err(malformed(n, "unexpected header row"));
    }

    let mut image = EmiImage::empty(grid);
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 15 {
            return Err(malformed(n, format!("expected 15 fields, got {}", f.len())));
        }
        let (row, col) = grid.row_col(image.len());
        if f[0].trim() != row.to_string() || f[1].trim() != col.to_string() {
            return Err(malformed(n, format!("expected pixel ({row}, {col})")));
        }
        let p = PixelResult {
            r: parse_f64(n, "r", f[4])?,
            phi: parse_f64(n, "phi", f[5])?,
            omega0: parse_f64(n, "omega0", f[6])?,
            gamma: parse_f64(n, "gamma", f[7])?,
            x_offset: parse_f64(n, "x_offset", f[8])?,
            y_offset: parse_f64(n, "y_offset", f[9])?,
            converged: parse_flag(n, "converged", f[10])?,
            valid: parse_flag(n, "valid", f[11])?,
            steer: parse_f64(n, "steer_s", f[12])?,
            control: parse_f64(n, "control_s", f[13])?,
            measure: parse_f64(n, "measure_s", f[14])?,
        };
        if image.len() == grid.len() {
            return Err(malformed(n, "more pixels than the grid holds"));
        }
        image.push(&p);
    }
    if image.len() != grid.len() {
        return Err(malformed(text.lines().count(), format!("expected {} pixels, got {}", grid.len(), image.len())));
    }
    Ok((image, meta))
}

/// Min and max of the finite values of `r` over valid pixels.
pub fn r_range(image: &EmiImage) -> Option<(f64, f64)> {
    let mut it = image.r.iter().zip(&image.valid).filter(|(r, v)| **v && r.is_finite()).map(|(r, _)| *r);
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), r| (lo.min(r), hi.max(r))))
}

/// Gray levels of `r` scaled so `lo → 0` and `hi → 255`. The first row is
/// the grid row with the largest z, so +z points up and +x right. Invalid
/// pixels are black.
pub fn graymap_levels(image: &EmiImage, lo: f64, hi: f64) -> Vec<u8> {
    let g = &image.grid;
    let span = hi - lo;
    let mut out = Vec::with_capacity(g.len());
    for row in (0..g.n_rows).rev() {
        for col in 0..g.n_cols {
            let i = g.index(row, col);
            let r = image.r[i];
            let v = if image.valid[i] && r.is_finite() && span > 0.0 {
                (255.0 * (r - lo) / span).round().clamp(0.0, 255.0) as u8
            } else {
                0
            };
            out.push(v);
        }
    }
    out
}

/// Binary (P5) graymap of `r`, min–max scaled over valid pixels.
pub fn write_pgm(image: &EmiImage) -> Result<Vec<u8>, ImageFileError> {
    let (lo, hi) = r_range(image).unwrap_or((0.0, 0.0));
    let levels = graymap_levels(image, lo, hi);
    let mut buf = Cursor::new(Vec::new());
    PnmEncoder::new(&mut buf)
        .with_subtype(PnmSubtype::Graymap(SampleEncoding::Binary))
        .write_image(&levels, image.grid.n_cols as u32, image.grid.n_rows as u32, ExtendedColorType::L8)
        .map_err(|e| ImageFileError::Encode(e.to_string()))?;
    Ok(buf.into_inner())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: Option<f64>,
    pub max: Option<f64>,
}

fn range_of(values: &[f64], valid: &[bool]) -> Range {
    let mut it = values.iter().zip(valid).filter(|(v, ok)| **ok && v.is_finite()).map(|(v, _)| *v);
    match it.next() {
        None => Range { min: None, max: None },
        Some(f) => {
            let (lo, hi) = it.fold((f, f), |(lo, hi), v| (lo.min(v), hi.max(v)));
            Range { min: Some(lo), max: Some(hi) }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridInfo {
    pub rows: usize,
    pub cols: usize,
    pub step_mm: f64,
    pub origin_x_mm: f64,
    pub origin_z_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Channels {
    pub r: Range,
    pub phi: Range,
    pub omega0: Range,
    pub gamma: Range,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graymap {
    pub channel: String,
    /// Value mapped to gray level 0.
    pub min: Option<f64>,
    /// Value mapped to gray level 255.
    pub max: Option<f64>,
    pub first_row: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingSummary {
    pub n_pixels: usize,
    pub steer_s: f64,
    pub control_s: f64,
    pub measure_s: f64,
    pub total_s: f64,
    pub mean_steer_s: f64,
    pub mean_control_s: f64,
    pub mean_measure_s: f64,
    pub dominant: String,
}

impl From<&TimingReport> for TimingSummary {
    fn from(t: &TimingReport) -> Self {
        Self {
            n_pixels: t.n_pixels,
            steer_s: t.total_steer,
            control_s: t.total_control,
            measure_s: t.total_measure,
            total_s: t.total(),
            mean_steer_s: t.mean_steer,
            mean_control_s: t.mean_control,
            mean_measure_s: t.mean_measure,
            dominant: t.dominant.name().to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub format: String,
    #[serde(flatten)]
    pub meta: ImageMeta,
    pub grid: GridInfo,
    pub valid_pixels: usize,
    pub converged_pixels: usize,
    pub channels: Channels,
    pub graymap: Graymap,
    pub timing: TimingSummary,
}

pub fn sidecar(image: &EmiImage, meta: &ImageMeta) -> Sidecar {
    let g = &image.grid;
    let r = range_of(&image.r, &image.valid);
    Sidecar {
        format: "emiscan-image-v1".into(),
        meta: meta.clone(),
        grid: GridInfo {
            rows: g.n_rows,
            cols: g.n_cols,
            step_mm: g.step * 1e3,
            origin_x_mm: g.origin[0] * 1e3,
            origin_z_mm: g.origin[1] * 1e3,
        },
        valid_pixels: image.valid.iter().filter(|v| **v).count(),
        converged_pixels: image.converged.iter().filter(|v| **v).count(),
        channels: Channels {
            r: r.clone(),
            phi: range_of(&image.phi, &image.valid),
            omega0: range_of(&image.omega0, &image.valid),
            gamma: range_of(&image.gamma, &image.valid),
        },
        graymap: Graymap { channel: "r".into(), min: r.min, max: r.max, first_row: "max_z".into() },
        timing: TimingSummary::from(&timing_report(image)),
    }
}

pub fn write_sidecar(image: &EmiImage, meta: &ImageMeta) -> String {
    let mut s = serde_json::to_string_pretty(&sidecar(image, meta)).expect("sidecar serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> EmiImage {
        let grid = PixelGrid::centered(3, 4, 1e-3);
        let mut img = EmiImage::empty(grid);
        for i in 0..grid.len() {
            img.push(&PixelResult {
                r: 0.1 * i as f64 + 1.0 / 3.0,
                phi: -0.25 * i as f64,
                omega0: 659_734.457_253_856_6 + i as f64,
                gamma: if i == 5 { f64::NAN } else { 15_079.6 },
                x_offset: 1e-7,
                y_offset: -2.5e-17,
                converged: i != 5,
                valid: i != 5,
                steer: 8e-6,
                control: 0.1,
                measure: 0.75,
            });
        }
        img
    }

    fn meta() -> ImageMeta {
        ImageMeta { kind: "raw".into(), seed: 42, scenario_sha256: "ab".repeat(32) }
    }

    #[test]
    fn csv_round_trips_bit_for_bit() {
        let img = sample();
        let text = write_csv(&img, &meta());
        let (back, m) = read_csv(&text).unwrap();
        assert_eq!(m, meta());
        assert_eq!(back.grid, img.grid);
        for i in 0..img.len() {
            let (a, b) = (img.pixel(i), back.pixel(i));
            assert_eq!(a.r.to_bits(), b.r.to_bits());
            assert_eq!(a.omega0.to_bits(), b.omega0.to_bits());
            assert_eq!(a.y_offset.to_bits(), b.y_offset.to_bits());
            assert_eq!(a.gamma.is_nan(), b.gamma.is_nan());
            assert_eq!((a.converged, a.valid), (b.converged, b.valid));
        }
        assert_eq!(write_csv(&back, &m), text);
    }

    #[test]
    fn malformed_csv_is_rejected_with_a_line() {
        let text = write_csv(&sample(), &meta());
        let broken = text.replacen("0,1,", "0,2,", 1);
        assert!(matches!(read_csv(&broken), Err(ImageFileError::Malformed { line: 4, .. })));
        let short: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        assert!(read_csv(&short).is_err());
        assert!(read_csv("hello\n").is_err());
    }

    #[test]
    fn graymap_is_min_max_scaled_with_z_up() {
        let img = sample();
        let pgm = write_pgm(&img).unwrap();
        let header = b"P5\n4 3 255\n";
        assert!(pgm.starts_with(header), "{:?}", &pgm[..16]);
        let body = &pgm[header.len()..];
        // Top row of the file is grid row 2; its first pixel is index 8.
        assert_eq!(body.len(), 12);
        assert_eq!(body[8], 0);
        assert_eq!(body[3], 255);
        let (lo, hi) = r_range(&img).unwrap();
        for (k, &level) in body.iter().enumerate() {
            let (row, col) = (2 - k / 4, k % 4);
            let i = img.grid.index(row, col);
            if img.valid[i] {
                let back = lo + f64::from(level) / 255.0 * (hi - lo);
                assert!((back - img.r[i]).abs() <= 0.5 / 255.0 * (hi - lo) + 1e-15);
            }
        }
    }

    #[test]
    fn sidecar_records_ranges_and_timing() {
        let img = sample();
        let s = sidecar(&img, &meta());
        assert_eq!(s.valid_pixels, 11);
        assert_eq!(s.graymap.min, r_range(&img).map(|r| r.0));
        assert_eq!(s.timing.dominant, "measure");
        let json = write_sidecar(&img, &meta());
        let back: Sidecar = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
    }
}
