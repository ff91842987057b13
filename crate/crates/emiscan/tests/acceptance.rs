//! End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
//! when any fails. Runs without the libtest harness so the summary lines are
//! printed as they complete.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use emiscan::image_io::{write_csv, ImageMeta};
use emiscan::parallel::run_scan_parallel;
use emiscan_core::beamsteer::{beam_position, position_per_hz, AodSpec, LensSpec, PixelGrid};
use emiscan_core::fields::{skin_depth, Material, TargetPlate};
use emiscan_core::fitting::{fit_resonance, fit_resonance_with, FitMode, FitOptions};
use emiscan_core::imaging::{
    classify_footprint, contrast, normalize, run_scan, shape_summary, threshold_region, timing_report, EmiImage,
    FastPoint, Phase, ScanMode, ScanScenario, ShapeClass,
};
use emiscan_core::lockin::{derive_seed, run_sweep, Acquisition, DriveConfig, FilterResponse, NoiseSpec, SweepSpan};
use emiscan_core::magnetometer::{larmor_frequency, lineshape, response, ResonanceParams};
use emiscan_core::{hz_to_rad, Complex64};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn uniform(seed: u64, k: u64) -> f64 {
    (derive_seed(seed, k) >> 11) as f64 / (1u64 << 53) as f64
}

fn gamma() -> f64 {
    hz_to_rad(2.4e3)
}

fn c1_beam_mapping() -> Outcome {
    let lens = LensSpec { focal_length: 1.0 };
    let aod = AodSpec { acoustic_speed: 650.0, wavelength: 780e-9, ..AodSpec::default() };
    let mm_per_mhz = position_per_hz(&lens, &aod) * 1e9;
    let hi = beam_position(&lens, &aod, 25e6, 30e-3).map_err(|e| e.to_string())?;
    let lo = beam_position(&lens, &aod, -25e6, 30e-3).map_err(|e| e.to_string())?;
    let travel = (hi - lo) * 1e3;
    ensure(
        (mm_per_mhz / 1.2 - 1.0).abs() <= 1e-3 && (travel - 60.0).abs() <= 0.1,
        format!("{mm_per_mhz:.6} mm/MHz; 50 MHz span -> {travel:.4} mm"),
    )
}

fn c2_skin_depth() -> Outcome {
    let cu = Material { conductivity: 5.96e7, relative_permeability: 1.0 };
    let d = |khz: f64| skin_depth(&cu, hz_to_rad(khz * 1e3)).map(|d| d * 1e6).map_err(|e| e.to_string());
    let nominal = d(105.0)?;
    let spread = (d(103.0)? - d(107.0)?).abs() / nominal;
    ensure(
        (200.0..=202.0).contains(&nominal) && spread < 0.02,
        format!("{nominal:.3} um at 105 kHz; {:.2}% across 103 to 107 kHz", 100.0 * spread),
    )
}

fn c3_resonance_placement() -> Outcome {
    let w = larmor_frequency(1.5e-5);
    let want = hz_to_rad(105e3);
    let s = ScanScenario::default();
    let prepared = s.prepare().map_err(|e| e.to_string())?;
    let nominal = s.magnetometer.bias.nominal_omega0();
    let mut worst: f64 = 0.0;
    for i in 0..prepared.len() {
        let (_, p) = prepared.pixel_physics(i).map_err(|e| e.to_string())?;
        worst = worst.max((p.omega0 - nominal).abs());
    }
    let rel = ((w - want) / want).abs();
    ensure(
        rel <= 4.0 * f64::EPSILON && worst <= hz_to_rad(2e3) * (1.0 + 1e-12),
        format!("Larmor(150 mG) relative error {rel:.1e}; largest pixel shift {:.4} kHz", worst / hz_to_rad(1e3)),
    )
}

fn c4_lineshape_identities() -> Outcome {
    let mut worst = [0.0f64; 3];
    for k in 0..20u64 {
        let mut p = ResonanceParams::new(
            hz_to_rad(100e3 + 10e3 * uniform(4, k)),
            gamma(),
            0.1 + uniform(5, k),
        );
        p.x_offset = 0.2 * (uniform(6, k) - 0.5);
        p.y_offset = 0.2 * (uniform(7, k) - 0.5);
        let b = Complex64::new(1.0, 0.0);
        let x = |w: f64| lineshape(&p, w, b).0 - p.x_offset;
        let half = 0.5 * x(p.omega0);
        let cross = |dir: f64| {
            let (mut a, mut c) = (p.omega0, p.omega0 + dir * 10.0 * p.gamma_fwhm);
            for _ in 0..200 {
                let m = 0.5 * (a + c);
                if x(m) > half {
                    a = m
                } else {
                    c = m
                }
            }
            0.5 * (a + c)
        };
        worst[0] = worst[0].max(((cross(1.0) - cross(-1.0)) / p.gamma_fwhm - 1.0).abs());
        worst[1] = worst[1].max((lineshape(&p, p.omega0, b).1 - p.y_offset).abs());
        let mut rot = p;
        rot.phase0 = 6.0 * uniform(8, k);
        for j in 1..=40 {
            let d = 0.25 * j as f64 * p.gamma_fwhm;
            let (u, v) = (response(&rot, rot.omega0 + d, b).norm(), response(&rot, rot.omega0 - d, b).norm());
            worst[2] = worst[2].max((u - v).abs() / u);
        }
    }
    ensure(
        worst[0] <= 1e-9 && worst[1] <= 1e-12 && worst[2] <= 1e-12,
        format!("FWHM rel {:.1e}; |Y(w0) - y_offset| {:.1e}; R asymmetry {:.1e}", worst[0], worst[1], worst[2]),
    )
}

fn c5_fit_recovery() -> Outcome {
    let drive = DriveConfig::default();
    let span = SweepSpan::around(hz_to_rad(105e3), gamma());
    let b = Complex64::new(1.0, 0.0);
    let mut errors = Vec::with_capacity(100);
    for trial in 0..100u64 {
        let mut p = ResonanceParams::new(hz_to_rad(105e3) + (uniform(7, trial) - 0.5) * gamma(), gamma(), 1.0);
        p.x_offset = 0.01;
        p.y_offset = -0.01;
        p.phase0 = 0.3;
        // Peak signal over the rms noise of each quadrature: 50.
        let noise = NoiseSpec { rms_voltage: p.amplitude / 50.0, seed: derive_seed(2024, trial) };
        let rec = run_sweep(&p, &drive, span, 50, &noise, b).map_err(|e| e.to_string())?;
        let fit = fit_resonance(&rec).map_err(|e| format!("trial {trial}: {e}"))?;
        if !fit.converged {
            return Err(format!("trial {trial} did not converge"));
        }
        errors.push((fit.params.omega0 - p.omega0) / gamma());
    }
    let bias = errors.iter().sum::<f64>() / errors.len() as f64;
    let worst = errors.iter().fold(0.0f64, |m, e| m.max(e.abs()));

    let mut clean = drive;
    clean.acquisition = Acquisition::Analytic;
    let settle = FilterResponse::for_drive(&clean).settle;
    let mut worst_clean: f64 = 0.0;
    for (mode, phase0) in [(FitMode::Joint, -0.4), (FitMode::Separate, 0.0)] {
        let mut p = ResonanceParams::new(hz_to_rad(105e3) + 0.2 * gamma(), gamma(), 0.7);
        p.phase0 = phase0;
        let rec = run_sweep(&p, &clean, span, 50, &NoiseSpec::silent(), b).map_err(|e| e.to_string())?;
        let q = fit_resonance_with(&rec, &FitOptions { mode, ..FitOptions::default() }).map_err(|e| e.to_string())?.params;
        for rel in [
            (q.omega0 - p.omega0) / p.omega0,
            (q.gamma_fwhm - p.gamma_fwhm) / p.gamma_fwhm,
            q.amplitude / (settle * p.amplitude) - 1.0,
        ] {
            worst_clean = worst_clean.max(rel.abs());
        }
    }
    ensure(
        bias.abs() < 0.003 && worst < 0.01 && worst_clean < 1e-6,
        format!("100 trials, input noise A/50: bias {bias:+.5} Γ, worst {worst:.5} Γ; noiseless worst rel {worst_clean:.1e}"),
    )
}

fn scan(s: &ScanScenario) -> Result<EmiImage, String> {
    run_scan_parallel(s, 0).map_err(|e| e.to_string())
}

fn c6_imaging() -> Outcome {
    let square = ScanScenario::default();
    let mut triangle = square.clone();
    let plate = &square.targets[0];
    triangle.targets =
        vec![TargetPlate::right_triangle(25e-3, [-12.5e-3, -12.5e-3], plate.thickness, plate.height_y)];
    let bg = scan(&square.without_targets())?;

    let norm_sq = normalize(&bg, &scan(&square)?).map_err(|e| e.to_string())?;
    let c = contrast(&norm_sq, &classify_footprint(&square.grid, &plate.outline));
    let region = threshold_region(&norm_sq, c.threshold());
    let true_area = plate.area() / (square.grid.step * square.grid.step);
    let area_err = (region.area_pixels() as f64 - true_area).abs() / true_area;
    let centroid_err = region.centroid[0].hypot(region.centroid[1]) / square.grid.step;
    let sq_class = shape_summary(&region, &square.grid).classify();

    let norm_tri = normalize(&bg, &scan(&triangle)?).map_err(|e| e.to_string())?;
    let ct = contrast(&norm_tri, &classify_footprint(&triangle.grid, &triangle.targets[0].outline));
    let tri_region = threshold_region(&norm_tri, ct.threshold());
    let tri = shape_summary(&tri_region, &triangle.grid);
    let tri_class = tri.classify();

    ensure(
        area_err <= 0.15
            && centroid_err <= 1.0
            && sq_class == ShapeClass::Symmetric
            && tri_class == ShapeClass::RightTriangle { corner: [-1, -1] },
        format!(
            "square: area {} px ({:+.1}%), centroid off {:.2} px, {:?}; triangle: {:?} (x-z correlation {:+.3}); \
             square contrast {:.1} sigma",
            region.area_pixels(),
            100.0 * (region.area_pixels() as f64 / true_area - 1.0),
            centroid_err,
            sq_class,
            tri_class,
            tri.xz_correlation,
            c.separation(),
        ),
    )
}

fn c7_fast_mode() -> Outcome {
    let mut full = ScanScenario::default();
    full.noise = NoiseSpec::silent();
    full.drive.acquisition = Acquisition::Analytic;
    let bg = run_scan_parallel(&full.without_targets(), 0).map_err(|e| e.to_string())?;
    let target_full = run_scan_parallel(&full, 0).map_err(|e| e.to_string())?;

    let mut fast = full.clone();
    fast.drive.acquisition = Acquisition::TimeDomain;
    fast.mode = ScanMode::fast_from_background(&bg, 40e-3, full.magnetometer.bias.nominal_omega0());
    let target_fast = run_scan_parallel(&fast, 0).map_err(|e| e.to_string())?;

    let mut worst: f64 = 0.0;
    for i in 0..target_full.len() {
        if !target_full.valid[i] {
            return Err(format!("full-sweep pixel {i} failed"));
        }
        worst = worst.max((target_fast.r[i] / target_full.r[i] - 1.0).abs());
    }
    let t = timing_report(&target_fast);
    ensure(
        worst < 0.01 && (t.mean_measure - 0.040).abs() < 1e-12 && (t.total_measure - 49.0).abs() < 1e-9,
        format!(
            "worst |r_fast/r_full - 1| = {:.2e}; {:.1} ms/pixel, {:.3} s over {} pixels",
            worst,
            t.mean_measure * 1e3,
            t.total_measure,
            t.n_pixels
        ),
    )
}

fn c8_timing() -> Outcome {
    let timing = |latency: f64| -> Result<_, String> {
        let mut s = ScanScenario::default();
        s.targets.clear();
        s.grid = PixelGrid::centered(5, 5, 1e-3);
        s.drive.acquisition = Acquisition::Analytic;
        s.control_latency = latency;
        let omega = s.magnetometer.bias.nominal_omega0();
        let point = FastPoint { omega, gamma: gamma(), x_offset: 0.0, y_offset: 0.0 };
        s.mode = ScanMode::FastSinglePoint { dwell: 40e-3, table: vec![point; 25] };
        Ok(timing_report(&run_scan(&s).map_err(|e| e.to_string())?))
    };
    let hw = timing(0.5e-6)?;
    let sw = timing(100e-3)?;
    ensure(
        hw.mean_steer < 10e-6 && hw.mean_control < 1e-6 && hw.dominant == Phase::Measure && sw.dominant == Phase::Control,
        format!(
            "hardware: steer {:.1} us, control {:.1} us -> {}; software 100 ms -> {}",
            hw.mean_steer * 1e6,
            hw.mean_control * 1e6,
            hw.dominant.name(),
            sw.dominant.name()
        ),
    )
}

fn c9_determinism() -> Outcome {
    let meta = ImageMeta { kind: "raw".into(), seed: 11, scenario_sha256: "determinism".into() };
    let csv = |img: &EmiImage| write_csv(img, &meta);
    let mut checked = 0;
    let mut full = ScanScenario::default();
    full.noise.seed = 11;
    full.drive.acquisition = Acquisition::Analytic;
    let bg = run_scan(&full.without_targets()).map_err(|e| e.to_string())?;
    let mut fast = ScanScenario::default();
    fast.noise.seed = 11;
    fast.mode = ScanMode::fast_from_background(&bg, 40e-3, fast.magnetometer.bias.nominal_omega0());
    for s in [&full, &fast] {
        let serial = csv(&run_scan(s).map_err(|e| e.to_string())?);
        let again = csv(&run_scan(s).map_err(|e| e.to_string())?);
        let one = csv(&run_scan_parallel(s, 1).map_err(|e| e.to_string())?);
        let four = csv(&run_scan_parallel(s, 4).map_err(|e| e.to_string())?);
        if serial != again || serial != one || serial != four {
            return Err(format!("scan {checked} differs between runs"));
        }
        checked += 1;
    }
    let mut other = fast.clone();
    other.noise.seed = 12;
    let differs = csv(&run_scan(&other).map_err(|e| e.to_string())?) != csv(&run_scan(&fast).map_err(|e| e.to_string())?);
    ensure(differs, format!("{checked} scenarios byte-identical over serial, repeated, 1 and 4 threads; a new seed changes the image"))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        ("beam-steering mapping", c1_beam_mapping),
        ("skin depth", c2_skin_depth),
        ("resonance placement", c3_resonance_placement),
        ("lineshape identities", c4_lineshape_identities),
        ("closed-loop fit recovery", c5_fit_recovery),
        ("imaging reproduction", c6_imaging),
        ("fast-mode consistency", c7_fast_mode),
        ("timing-phase dominance", c8_timing),
        ("determinism", c9_determinism),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {} {name} ({secs:.1} s): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name} ({secs:.1} s): {detail}", k + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
