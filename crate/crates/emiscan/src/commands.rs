//! The work behind each subcommand, independent of argument parsing.

use std::path::{Path, PathBuf};

use emiscan_core::fitting::{fit_resonance_with, FitMode, FitOptions};
use emiscan_core::imaging::{normalize, timing_report, EmiImage};
use serde::Serialize;

use crate::image_io::{write_csv, write_pgm, write_sidecar, ImageMeta, TimingSummary};
use crate::parallel::{fast_scenario, load_image, run_scan_parallel, write_atomic, BackgroundCache};
use crate::scenario::{ModeKind, ScenarioFile};
use crate::sweep_io::{read_sweep, FitReport};
use crate::verify::{VerifyConfig, ACOUSTIC_SPEED_ENV};
use crate::AppError;

/// Where the background image of a scan comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BackgroundSource {
    None,
    File(PathBuf),
    /// Scan once per geometry and keep it under `<out_dir>/backgrounds/`.
    Auto,
}

#[derive(Debug, Clone)]
pub struct ScanRequest {
    pub scenario_path: PathBuf,
    pub out_dir: PathBuf,
    pub mode: Option<ModeKind>,
    pub seed: Option<u64>,
    pub background: BackgroundSource,
    pub threads: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanOutcome {
    pub scenario_sha256: String,
    pub seed: u64,
    pub mode: ModeKind,
    pub files: Vec<String>,
    /// Set when the background came from a file made for another geometry.
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
struct TimingFile {
    format: &'static str,
    scenario_sha256: String,
    seed: u64,
    mode: ModeKind,
    #[serde(flatten)]
    timing: TimingSummary,
}

/// The scenario after command-line overrides. Its hash is what the outputs
/// record.
pub fn effective_scenario(text: &str, mode: Option<ModeKind>, seed: Option<u64>) -> Result<ScenarioFile, AppError> {
    let mut file = ScenarioFile::parse(text)?;
    if let Some(m) = mode {
        file.scan.mode = m;
    }
    if let Some(s) = seed {
        file.noise.seed = s;
    }
    Ok(file)
}

fn read_text(path: &Path) -> Result<String, AppError> {
    std::fs::read_to_string(path).map_err(|e| AppError::io(path, e))
}

fn write_image(dir: &Path, stem: &str, img: &EmiImage, meta: &ImageMeta, files: &mut Vec<String>) -> Result<(), AppError> {
    let csv = dir.join(format!("{stem}.csv"));
    write_atomic(&csv, write_csv(img, meta).as_bytes())?;
    let pgm = dir.join(format!("{stem}.pgm"));
    let bytes = write_pgm(img).map_err(|e| AppError::ImageFile { path: pgm.display().to_string(), source: e })?;
    write_atomic(&pgm, &bytes)?;
    let json = dir.join(format!("{stem}.json"));
    write_atomic(&json, write_sidecar(img, meta).as_bytes())?;
    files.extend([csv, pgm, json].iter().map(|p| p.display().to_string()));
    Ok(())
}

pub fn scan(req: &ScanRequest) -> Result<ScanOutcome, AppError> {
    let file = effective_scenario(&read_text(&req.scenario_path)?, req.mode, req.seed)?;
    let hash = file.sha256();
    let seed = file.noise.seed;
    let mode = file.scan.mode;
    let mut warnings = Vec::new();

    // Validate everything but the drive table before any long computation.
    let mut probe = file.clone();
    probe.scan.mode = ModeKind::Full;
    let grid = probe.to_scenario(None)?.grid;

    let background = match &req.background {
        BackgroundSource::None => None,
        BackgroundSource::File(path) => {
            let (img, meta) = load_image(path)?;
            if img.grid != grid {
                return Err(AppError::GridMismatch {
                    expected: format!("{}x{} step {} m", grid.n_rows, grid.n_cols, grid.step),
                    found: format!("{}x{} step {} m", img.grid.n_rows, img.grid.n_cols, img.grid.step),
                });
            }
            if meta.scenario_sha256 != file.geometry_sha256() {
                warnings.push(format!("{} was recorded for a different geometry", path.display()));
            }
            Some(img)
        }
        BackgroundSource::Auto => {
            let cache = BackgroundCache::new(req.out_dir.join("backgrounds"));
            Some(cache.get_or_scan(&file, req.threads)?.0)
        }
    };

    let scenario = match (mode, &background) {
        (ModeKind::Full, _) => file.to_scenario(None)?,
        (ModeKind::Fast, Some(bg)) => fast_scenario(&file, bg)?,
        (ModeKind::Fast, None) => {
            return Err(AppError::Usage(
                "fast mode needs --background: its fitted resonances supply the per-pixel drive frequencies".into(),
            ))
        }
    };

    std::fs::create_dir_all(&req.out_dir).map_err(|e| AppError::io(&req.out_dir, e))?;
    let raw = run_scan_parallel(&scenario, req.threads)?;
    let mut files = Vec::new();
    let meta = |kind: &str| ImageMeta { kind: kind.into(), seed, scenario_sha256: hash.clone() };
    write_image(&req.out_dir, "raw", &raw, &meta("raw"), &mut files)?;
    if let Some(bg) = &background {
        let norm = normalize(bg, &raw).map_err(emiscan_core::Error::from)?;
        write_image(&req.out_dir, "normalized", &norm, &meta("normalized"), &mut files)?;
    }

    let timing = TimingFile {
        format: "emiscan-timing-v1",
        scenario_sha256: hash.clone(),
        seed,
        mode,
        timing: TimingSummary::from(&timing_report(&raw)),
    };
    let path = req.out_dir.join("timing.json");
    let mut text = serde_json::to_string_pretty(&timing).expect("timing serializes");
    text.push('\n');
    write_atomic(&path, text.as_bytes())?;
    files.push(path.display().to_string());

    Ok(ScanOutcome { scenario_sha256: hash, seed, mode, files, warnings })
}

pub fn fit(sweep_path: &Path, mode: FitMode) -> Result<FitReport, AppError> {
    let text = read_text(sweep_path)?;
    let rec = read_sweep(&text).map_err(|e| AppError::SweepFile { path: sweep_path.display().to_string(), source: e })?;
    let fit = fit_resonance_with(&rec, &FitOptions { mode, ..FitOptions::default() }).map_err(emiscan_core::Error::from)?;
    Ok(FitReport::from(&fit))
}

/// Default configuration with the acoustic speed taken from the environment
/// when set.
pub fn verify_config_from_env() -> Result<VerifyConfig, AppError> {
    let mut cfg = VerifyConfig::default();
    if let Ok(v) = std::env::var(ACOUSTIC_SPEED_ENV) {
        let speed: f64 = v
            .trim()
            .parse()
            .ok()
            .filter(|s: &f64| s.is_finite() && *s > 0.0)
            .ok_or_else(|| AppError::Usage(format!("{ACOUSTIC_SPEED_ENV} must be a positive number, got `{v}`")))?;
        cfg.aod.acoustic_speed = speed;
    }
    Ok(cfg)
}
