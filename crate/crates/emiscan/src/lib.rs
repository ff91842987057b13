//! Scenario files, image formats, parallel scans and the self-checks behind
//! the `emiscan` command line tool.

use std::path::Path;

use thiserror::Error;

pub mod commands;
pub mod image_io;
pub mod parallel;
pub mod scenario;
pub mod sweep_io;
pub mod verify;

pub use emiscan_core as core;

/// Every failure the tool reports. `kind` is stable for scripts.
#[derive(Debug, Error)]
pub enum AppError {
    #[error(transparent)]
    Scenario(#[from] scenario::ScenarioError),
    #[error(transparent)]
    Core(#[from] emiscan_core::Error),
    #[error("{path}: {source}")]
    ImageFile { path: String, source: image_io::ImageFileError },
    #[error("{path}: {source}")]
    SweepFile { path: String, source: sweep_io::SweepFileError },
    #[error("background grid {found} does not match scenario grid {expected}")]
    GridMismatch { expected: String, found: String },
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error("{failed} of {total} checks failed")]
    VerifyFailed { failed: usize, total: usize },
}

impl AppError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        AppError::Io(format!("{}: {e}", path.display()))
    }

    pub fn kind(&self) -> &'static str {
        match self {
            AppError::Scenario(e) => e.kind(),
            AppError::Core(e) => e.kind(),
            AppError::ImageFile { source, .. } => source.kind(),
            AppError::SweepFile { source, .. } => source.kind(),
            AppError::GridMismatch { .. } => "GridMismatch",
            AppError::Usage(_) => "Usage",
            AppError::Io(_) => "Io",
            AppError::VerifyFailed { .. } => "VerifyFailed",
        }
    }

    /// One-line JSON object `{"error": kind, "message": text}`.
    pub fn to_json_line(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}
