//! Self-checks that need no scenario file: beam mapping, skin depth, Larmor
//! placement, lineshape identities and timing-phase dominance.

use emiscan_core::beamsteer::{beam_position, position_per_hz, AodSpec, LensSpec, PixelGrid};
use emiscan_core::fields::{skin_depth, Material};
use emiscan_core::imaging::{timing_report, FastPoint, Phase, ScanMode, ScanScenario};
use emiscan_core::lockin::Acquisition;
use emiscan_core::magnetometer::{larmor_frequency, lineshape, response, ResonanceParams, DEFAULT_LINEWIDTH};
use emiscan_core::{hz_to_rad, Complex64};
use serde::Serialize;

/// Environment variable that replaces the deflector's acoustic speed, m/s.
pub const ACOUSTIC_SPEED_ENV: &str = "EMISCAN_AOD_ACOUSTIC_SPEED_M_S";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check { name, passed, detail }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerifyConfig {
    pub aod: AodSpec,
    pub lens: LensSpec,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self { aod: AodSpec::default(), lens: LensSpec { focal_length: 1.0 } }
    }
}

pub fn run_checks(cfg: &VerifyConfig) -> Vec<Check> {
    let mut out = Vec::new();
    beam_checks(cfg, &mut out);
    skin_checks(&mut out);
    larmor_checks(&mut out);
    lineshape_checks(&mut out);
    timing_checks(&mut out);
    out
}

fn beam_checks(cfg: &VerifyConfig, out: &mut Vec<Check>) {
    let mm_per_mhz = position_per_hz(&cfg.lens, &cfg.aod) * 1e3 * 1e6;
    out.push(check(
        "beam_mm_per_mhz",
        (mm_per_mhz / 1.2 - 1.0).abs() <= 1e-3,
        format!("{mm_per_mhz:.6} mm/MHz, expected 1.2 within 0.1%"),
    ));
    // Half the span either side of the centre frequency, each within half
    // the cell width.
    let half = 0.5 * cfg.aod.freq_span;
    let travel = match (
        beam_position(&cfg.lens, &cfg.aod, half, 30e-3),
        beam_position(&cfg.lens, &cfg.aod, -half, 30e-3),
    ) {
        (Ok(hi), Ok(lo)) => Some((hi - lo) * 1e3),
        _ => None,
    };
    out.push(match travel {
        Some(t) => check(
            "beam_span_travel",
            (t - 60.0).abs() <= 0.1,
            format!("{:.1} MHz span moves the beam {t:.4} mm, expected 60.0 ± 0.1", cfg.aod.freq_span * 1e-6),
        ),
        None => check("beam_span_travel", false, "span drives the beam outside the cell".into()),
    });
}

fn skin_checks(out: &mut Vec<Check>) {
    let cu = Material::copper();
    let d = |khz: f64| skin_depth(&cu, hz_to_rad(khz * 1e3)).unwrap_or(f64::NAN) * 1e6;
    let nominal = d(105.0);
    out.push(check(
        "skin_depth_copper_105khz",
        (200.0..=202.0).contains(&nominal),
        format!("{nominal:.3} µm, expected 200 to 202"),
    ));
    let spread = (d(103.0) - d(107.0)).abs() / nominal;
    out.push(check(
        "skin_depth_bias_spread",
        spread < 0.02,
        format!("{:.3}% change over 103 to 107 kHz, expected < 2%", 100.0 * spread),
    ));
}

fn larmor_checks(out: &mut Vec<Check>) {
    let w = larmor_frequency(1.5e-5);
    let want = hz_to_rad(105e3);
    out.push(check(
        "larmor_150mg",
        ((w - want) / want).abs() <= 4.0 * f64::EPSILON,
        format!("{:.9} kHz, expected 105", w / hz_to_rad(1e3)),
    ));
    let s = ScanScenario::default();
    let bias = &s.magnetometer.bias;
    let [x0, z0, x1, z1] = s.grid.extent();
    let worst = [[x0, z0], [x0, z1], [x1, z0], [x1, z1]]
        .iter()
        .map(|&[x, z]| bias.delta_omega(x, z).abs())
        .fold(0.0, f64::max);
    out.push(check(
        "corner_shift_bound",
        worst <= hz_to_rad(2e3) * (1.0 + 1e-12),
        format!("largest grid-corner shift {:.4} kHz, bound 2", worst / hz_to_rad(1e3)),
    ));
}

/// Width of the absorptive line between its half-maximum points, found by
/// bisection on each side.
fn x_half_max_width(p: &ResonanceParams) -> f64 {
    let b = Complex64::new(p.drive_reference, 0.0);
    let x = |w: f64| lineshape(p, w, b).0 - p.x_offset;
    let peak = x(p.omega0);
    let crossing = |outward: f64| {
        let (mut inner, mut outer) = (p.omega0, p.omega0 + outward * 10.0 * p.gamma_fwhm);
        for _ in 0..200 {
            let mid = 0.5 * (inner + outer);
            if x(mid) > 0.5 * peak {
                inner = mid;
            } else {
                outer = mid;
            }
        }
        0.5 * (inner + outer)
    };
    crossing(1.0) - crossing(-1.0)
}

fn lineshape_checks(out: &mut Vec<Check>) {
    let mut p = ResonanceParams::new(hz_to_rad(105e3), DEFAULT_LINEWIDTH, 1.0);
    p.x_offset = 0.05;
    p.y_offset = -0.02;
    let width = x_half_max_width(&p);
    let rel = (width - p.gamma_fwhm).abs() / p.gamma_fwhm;
    out.push(check("fwhm_identity", rel <= 1e-9, format!("relative error {rel:.2e}, expected <= 1e-9")));

    let b = Complex64::new(1.0, 0.0);
    let y0 = lineshape(&p, p.omega0, b).1;
    out.push(check(
        "on_resonance_y",
        (y0 - p.y_offset).abs() <= 1e-12,
        format!("Y(ω₀) = {y0:e}, y_offset = {:e}", p.y_offset),
    ));

    p.phase0 = 0.7;
    let worst = (1..=50)
        .map(|k| {
            let d = 0.2 * k as f64 * p.gamma_fwhm;
            let (a, c) = (response(&p, p.omega0 + d, b).norm(), response(&p, p.omega0 - d, b).norm());
            (a - c).abs() / a
        })
        .fold(0.0, f64::max);
    out.push(check("r_symmetry", worst <= 1e-12, format!("largest |R(δ) − R(−δ)|/R = {worst:.2e}")));
}

/// Fast scan of a small grid with the given control latency; returns the
/// dominant phase and the per-pixel means.
fn timing_of(control_latency: f64) -> Option<(Phase, [f64; 3])> {
    let mut s = ScanScenario::default();
    s.targets.clear();
    s.grid = PixelGrid::centered(3, 3, 1e-3);
    s.drive.acquisition = Acquisition::Analytic;
    s.control_latency = control_latency;
    let omega = s.magnetometer.bias.nominal_omega0();
    let table = vec![FastPoint { omega, gamma: s.magnetometer.gamma_fwhm, x_offset: 0.0, y_offset: 0.0 }; 9];
    s.mode = ScanMode::FastSinglePoint { dwell: 40e-3, table };
    let img = emiscan_core::imaging::run_scan(&s).ok()?;
    let t = timing_report(&img);
    Some((t.dominant, [t.mean_steer, t.mean_control, t.mean_measure]))
}

fn timing_checks(out: &mut Vec<Check>) {
    let fmt = |m: [f64; 3]| format!("steer {:.3e} s, control {:.3e} s, measure {:.3e} s", m[0], m[1], m[2]);
    out.push(match timing_of(1e-6) {
        Some((phase, m)) => check(
            "timing_hardware_sequenced",
            phase == Phase::Measure && m[0] < 10e-6 && m[1] <= 1e-6,
            format!("{}; dominant {}", fmt(m), phase.name()),
        ),
        None => check("timing_hardware_sequenced", false, "scan failed".into()),
    });
    out.push(match timing_of(100e-3) {
        Some((phase, m)) => check(
            "timing_software_latency",
            phase == Phase::Control,
            format!("{}; dominant {}", fmt(m), phase.name()),
        ),
        None => check("timing_software_latency", false, "scan failed".into()),
    });
}
