//! Sweep files and fit reports.
//!
//! A sweep file is CSV with the header `omega_rad_s,x_v,y_v` and one row per
//! drive frequency, strictly increasing. Lines starting with `#` and blank
//! lines are ignored anywhere.

use std::fmt::Write as _;

use emiscan_core::fitting::FitResult;
use emiscan_core::lockin::SweepRecord;
use serde::Serialize;
use thiserror::Error;

pub const SWEEP_HEADER: &str = "omega_rad_s,x_v,y_v";

#[derive(Debug, Error)]
pub enum SweepFileError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("sweep rejected: {0}")]
    Invalid(String),
}

impl SweepFileError {
    pub fn kind(&self) -> &'static str {
        match self {
            SweepFileError::Malformed { .. } => "SweepParse",
            SweepFileError::Invalid(_) => "SweepInvalid",
        }
    }
}

pub fn read_sweep(text: &str) -> Result<SweepRecord, SweepFileError> {
    let mut rec = SweepRecord::default();
    let mut seen_header = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let n = i + 1;
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !seen_header {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.join(",") != SWEEP_HEADER {
                return Err(SweepFileError::Malformed { line: n, reason: format!("expected header `{SWEEP_HEADER}`") });
            }
            seen_header = true;
            continue;
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 3 {
            return Err(SweepFileError::Malformed { line: n, reason: format!("expected 3 fields, got {}", f.len()) });
        }
        let mut v = [0.0; 3];
        for (slot, s) in v.iter_mut().zip(&f) {
            *slot = s
                .parse()
                .map_err(|_| SweepFileError::Malformed { line: n, reason: format!("`{s}` is not a number") })?;
        }
        rec.omegas.push(v[0]);
        rec.x.push(v[1]);
        rec.y.push(v[2]);
    }
    if !seen_header {
        return Err(SweepFileError::Malformed { line: 1, reason: "missing header".into() });
    }
    rec.validate().map_err(|e| SweepFileError::Invalid(e.to_string()))?;
    Ok(rec)
}

pub fn write_sweep(rec: &SweepRecord) -> String {
    let mut out = String::with_capacity(64 * rec.len() + 32);
    out.push_str(SWEEP_HEADER);
    out.push('\n');
    for i in 0..rec.len() {
        let _ = writeln!(out, "{},{},{}", rec.omegas[i], rec.x[i], rec.y[i]);
    }
    out
}

/// JSON shape of a fit. Non-finite numbers serialize as `null`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub converged: bool,
    pub iterations: usize,
    pub omega0_rad_s: f64,
    pub gamma_fwhm_rad_s: f64,
    pub amplitude_v: f64,
    pub phase0_rad: f64,
    pub x_offset_v: f64,
    pub y_offset_v: f64,
    pub r_peak_v: f64,
    pub phi_peak_rad: f64,
    pub residual_rms_v: f64,
    pub omega0_stderr_rad_s: Option<f64>,
    pub gamma_stderr_rad_s: Option<f64>,
    pub amplitude_stderr_v: Option<f64>,
}

fn finite(v: f64) -> Option<f64> {
    v.is_finite().then_some(v)
}

impl From<&FitResult> for FitReport {
    fn from(f: &FitResult) -> Self {
        let p = &f.params;
        Self {
            converged: f.converged,
            iterations: f.iterations,
            omega0_rad_s: p.omega0,
            gamma_fwhm_rad_s: p.gamma_fwhm,
            amplitude_v: p.amplitude,
            phase0_rad: p.phase0,
            x_offset_v: p.x_offset,
            y_offset_v: p.y_offset,
            r_peak_v: f.r_peak,
            phi_peak_rad: f.phi_peak,
            residual_rms_v: f.residual_rms,
            omega0_stderr_rad_s: finite(f.omega0_stderr),
            gamma_stderr_rad_s: finite(f.gamma_stderr),
            amplitude_stderr_v: finite(f.amplitude_stderr),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_exact() {
        let rec = SweepRecord {
            omegas: vec![1.0, 2.0 + 1e-12, 3.5],
            x: vec![0.1, -1.0 / 3.0, 7e-300],
            y: vec![0.0, 2.0, -0.5],
        };
        assert_eq!(read_sweep(&write_sweep(&rec)).unwrap(), rec);
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = "# from bench\n\nomega_rad_s, x_v, y_v\n1,0,0\n# mid\n2,1,0\n\n3,0,1\n";
        let rec = read_sweep(text).unwrap();
        assert_eq!(rec.omegas, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(matches!(read_sweep(""), Err(SweepFileError::Malformed { .. })));
        assert!(matches!(read_sweep("a,b,c\n1,2,3\n"), Err(SweepFileError::Malformed { line: 1, .. })));
        assert!(matches!(read_sweep("omega_rad_s,x_v,y_v\n1,2\n"), Err(SweepFileError::Malformed { line: 2, .. })));
        assert!(matches!(read_sweep("omega_rad_s,x_v,y_v\n1,x,3\n"), Err(SweepFileError::Malformed { line: 2, .. })));
        assert!(matches!(read_sweep("omega_rad_s,x_v,y_v\n2,0,0\n1,0,0\n"), Err(SweepFileError::Invalid(_))));
        assert!(matches!(read_sweep("omega_rad_s,x_v,y_v\n1,NaN,0\n"), Err(SweepFileError::Invalid(_))));
        assert!(matches!(read_sweep("omega_rad_s,x_v,y_v\n"), Err(SweepFileError::Invalid(_))));
    }
}
