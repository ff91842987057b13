//! Multi-threaded scans and the on-disk background cache.

use std::path::{Path, PathBuf};

use emiscan_core::imaging::{EmiImage, ScanMode, ScanScenario};
use rayon::prelude::*;

use crate::image_io::{read_csv, write_csv, ImageMeta};
use crate::scenario::{ModeKind, ScenarioFile};
use crate::AppError;

/// Scan on `threads` workers (0 picks rayon's default). Pixels are
/// independent and seeded by index, so the image does not depend on the
/// thread count.
pub fn run_scan_parallel(scenario: &ScanScenario, threads: usize) -> Result<EmiImage, AppError> {
    let prepared = scenario.prepare()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| AppError::Io(format!("thread pool: {e}")))?;
    let pixels = pool.install(|| {
        (0..prepared.len()).into_par_iter().map(|i| prepared.acquire_pixel(i)).collect::<Result<Vec<_>, _>>()
    })?;
    Ok(prepared.assemble(&pixels))
}

/// Fast-mode scenario whose drive table comes from a fitted background.
pub fn fast_scenario(file: &ScenarioFile, background: &EmiImage) -> Result<ScanScenario, AppError> {
    let mut full = file.clone();
    full.scan.mode = ModeKind::Full;
    let nominal = full.to_scenario(None)?.magnetometer.bias.nominal_omega0();
    let dwell = file.scan.dwell_ms * 1e-3;
    let table = match ScanMode::fast_from_background(background, dwell, nominal) {
        ScanMode::FastSinglePoint { table, .. } => table,
        ScanMode::FullSweep { .. } => unreachable!(),
    };
    Ok(file.to_scenario(Some(table))?)
}

/// Background scans stored as `<dir>/<geometry hash>.csv`.
#[derive(Debug, Clone)]
pub struct BackgroundCache {
    pub dir: PathBuf,
}

impl BackgroundCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn path_for(&self, file: &ScenarioFile) -> PathBuf {
        self.dir.join(format!("{}.csv", file.geometry_sha256()))
    }

    /// Cached background for `file`, scanning and storing it on a miss.
    /// Returns the image and whether it was a hit.
    pub fn get_or_scan(&self, file: &ScenarioFile, threads: usize) -> Result<(EmiImage, bool), AppError> {
        let path = self.path_for(file);
        let hash = file.geometry_sha256();
        if path.exists() {
            let (img, meta) = load_image(&path)?;
            if meta.scenario_sha256 == hash && img.grid == background_file(file).to_scenario(None)?.grid {
                return Ok((img, true));
            }
        }
        let (img, meta) = scan_background(file, threads)?;
        std::fs::create_dir_all(&self.dir).map_err(|e| AppError::io(&self.dir, e))?;
        write_atomic(&path, write_csv(&img, &meta).as_bytes())?;
        Ok((img, false))
    }
}

/// The scenario with its targets removed and a full sweep at every pixel.
pub fn background_file(file: &ScenarioFile) -> ScenarioFile {
    let mut bg = file.clone();
    bg.target.clear();
    bg.scan.mode = ModeKind::Full;
    bg
}

pub fn scan_background(file: &ScenarioFile, threads: usize) -> Result<(EmiImage, ImageMeta), AppError> {
    let bg = background_file(file);
    let img = run_scan_parallel(&bg.to_scenario(None)?, threads)?;
    let meta = ImageMeta { kind: "background".into(), seed: bg.noise.seed, scenario_sha256: file.geometry_sha256() };
    Ok((img, meta))
}

pub fn load_image(path: &Path) -> Result<(EmiImage, ImageMeta), AppError> {
    let text = std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))?;
    read_csv(&text).map_err(|e| AppError::ImageFile { path: path.display().to_string(), source: e })
}

/// Write through a sibling temporary file so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), AppError> {
    let tmp = path.with_extension(format!("tmp{}", std::process::id()));
    std::fs::write(&tmp, bytes).map_err(|e| AppError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}
