use std::path::{Path, PathBuf};

use emiscan::image_io::{read_csv, write_csv, ImageMeta};
use emiscan::scenario::ScenarioFile;
use emiscan::sweep_io::{read_sweep, write_sweep};
use emiscan_core::beamsteer::PixelGrid;
use emiscan_core::imaging::{run_scan, EmiImage, PixelResult};
use emiscan_core::lockin::SweepRecord;
use proptest::prelude::*;

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

/// Compare to a stored file; `EMISCAN_BLESS=1` rewrites it instead.
fn check_golden(name: &str, actual: &str, same: impl Fn(&str, &str) -> bool) {
    let path = golden(name);
    if std::env::var_os("EMISCAN_BLESS").is_some() {
        std::fs::write(&path, actual).unwrap();
        return;
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(same(&expected, actual), "{name} differs from the golden copy");
}

fn any_f64() -> impl Strategy<Value = f64> {
    prop_oneof![
        4 => any::<f64>().prop_filter("finite", |v| v.is_finite()),
        1 => Just(f64::NAN),
        1 => Just(0.0),
        1 => Just(-0.0),
    ]
}

fn pixel() -> impl Strategy<Value = PixelResult> {
    (prop::array::uniform6(any_f64()), any::<bool>(), any::<bool>(), prop::array::uniform3(0.0..1.0f64)).prop_map(
        |(v, converged, valid, t)| PixelResult {
            r: v[0],
            phi: v[1],
            omega0: v[2],
            gamma: v[3],
            x_offset: v[4],
            y_offset: v[5],
            converged,
            valid,
            steer: t[0],
            control: t[1],
            measure: t[2],
        },
    )
}

fn same_bits(a: f64, b: f64) -> bool {
    a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan())
}

proptest! {
    #[test]
    fn image_csv_round_trips_every_bit(
        rows in 1usize..5,
        cols in 1usize..5,
        step in 1e-4..5e-3f64,
        seed: u64,
        pixels in prop::collection::vec(pixel(), 16),
    ) {
        let grid = PixelGrid::centered(rows, cols, step);
        let mut img = EmiImage::empty(grid);
        for p in pixels.iter().take(grid.len()) {
            img.push(p);
        }
        let meta = ImageMeta { kind: "raw".into(), seed, scenario_sha256: "0".repeat(64) };
        let text = write_csv(&img, &meta);
        let (back, m) = read_csv(&text).unwrap();
        prop_assert_eq!(m, meta);
        prop_assert_eq!(back.grid.n_rows, rows);
        prop_assert!(same_bits(back.grid.step, grid.step) || (back.grid.step / grid.step - 1.0).abs() < 1e-15);
        for i in 0..img.len() {
            let (a, b) = (img.pixel(i), back.pixel(i));
            for (u, v) in [(a.r, b.r), (a.phi, b.phi), (a.omega0, b.omega0), (a.gamma, b.gamma),
                           (a.x_offset, b.x_offset), (a.y_offset, b.y_offset), (a.steer, b.steer),
                           (a.control, b.control), (a.measure, b.measure)] {
                prop_assert!(same_bits(u, v), "{} vs {}", u, v);
            }
            prop_assert_eq!((a.converged, a.valid), (b.converged, b.valid));
        }
    }

    #[test]
    fn sweep_csv_round_trips(points in prop::collection::vec((-1e3..1e3f64, -10.0..10.0f64, -10.0..10.0f64), 1..60)) {
        let mut omega = 6.0e5;
        let mut rec = SweepRecord::default();
        for (dw, x, y) in points {
            omega += dw.abs() + 1e-3;
            rec.omegas.push(omega);
            rec.x.push(x);
            rec.y.push(y);
        }
        prop_assert_eq!(read_sweep(&write_sweep(&rec)).unwrap(), rec);
    }

    #[test]
    fn scenario_canonical_form_is_a_fixed_point(
        rows in 1usize..80,
        step in 0.1..3.0f64,
        bias in 50.0..300.0f64,
        side in 1.0..40.0f64,
        seed: u64,
        fast: bool,
    ) {
        let text = format!(
            "[[target]]\nshape = \"square\"\nside_mm = {side}\n\n[grid]\nrows = {rows}\nstep_mm = {step}\n\n\
             [magnetometer]\nbias_mg = {bias}\n\n[noise]\nseed = {seed}\n\n[scan]\nmode = \"{}\"\n",
            if fast { "fast" } else { "full" },
        );
        let first = ScenarioFile::parse(&text).unwrap();
        let canonical = first.canonical();
        let second = ScenarioFile::parse(&canonical).unwrap();
        prop_assert_eq!(&second, &first);
        prop_assert_eq!(second.canonical(), canonical);
        prop_assert_eq!(second.sha256(), first.sha256());
    }
}

#[test]
fn default_scenario_canonical_form() {
    let text = ScenarioFile::default().canonical();
    check_golden("default_scenario.toml", &text, |a, b| a == b);
    // Every shipped scenario parses and validates.
    for entry in std::fs::read_dir(scenario("")).unwrap() {
        let path = entry.unwrap().path();
        let file = ScenarioFile::parse(&std::fs::read_to_string(&path).unwrap()).unwrap();
        if file.scan.mode == emiscan::scenario::ModeKind::Full {
            file.to_scenario(None).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        }
    }
}

/// Same layout and metadata; numbers equal to 1e-9 relative so the golden
/// copy survives libm differences between platforms.
fn same_image(expected: &str, actual: &str) -> bool {
    let (a, ma) = read_csv(expected).unwrap();
    let (b, mb) = read_csv(actual).unwrap();
    let close = |u: &[f64], v: &[f64]| {
        u.iter().zip(v).all(|(x, y)| (x.is_nan() && y.is_nan()) || (x - y).abs() <= 1e-9 * x.abs().max(1e-12))
    };
    ma == mb
        && a.grid == b.grid
        && a.valid == b.valid
        && a.converged == b.converged
        && close(&a.r, &b.r)
        && close(&a.phi, &b.phi)
        && close(&a.omega0, &b.omega0)
        && close(&a.gamma, &b.gamma)
        && close(&a.measure, &b.measure)
}

#[test]
fn quick_scan_matches_golden_image() {
    let file = ScenarioFile::parse(&std::fs::read_to_string(scenario("quick.toml")).unwrap()).unwrap();
    let img = run_scan(&file.to_scenario(None).unwrap()).unwrap();
    let meta = ImageMeta { kind: "raw".into(), seed: file.noise.seed, scenario_sha256: file.sha256() };
    check_golden("quick_raw.csv", &write_csv(&img, &meta), same_image);
}

#[test]
fn golden_sweep_fits() {
    use emiscan_core::lockin::{run_sweep, Acquisition, DriveConfig, NoiseSpec, SweepSpan};
    use emiscan_core::magnetometer::ResonanceParams;
    use emiscan_core::{hz_to_rad, Complex64};

    let mut drive = DriveConfig::default();
    drive.acquisition = Acquisition::Analytic;
    let mut p = ResonanceParams::new(hz_to_rad(105.2e3), hz_to_rad(2.4e3), 0.5);
    p.phase0 = -0.3;
    p.y_offset = 0.002;
    let span = SweepSpan::around(hz_to_rad(105e3), p.gamma_fwhm);
    let rec = run_sweep(&p, &drive, span, 21, &NoiseSpec::silent(), Complex64::new(1.0, 0.0)).unwrap();
    let text = format!("# noiseless, omega0 = 2pi x 105.2 kHz, FWHM = 2pi x 2.4 kHz\n{}", write_sweep(&rec));
    check_golden("sweep.csv", &text, |a, b| {
        let (a, b) = (read_sweep(a).unwrap(), read_sweep(b).unwrap());
        a.omegas == b.omegas
            && a.x.iter().chain(&a.y).zip(b.x.iter().chain(&b.y)).all(|(u, v)| (u - v).abs() <= 1e-12)
    });

    let stored = read_sweep(&std::fs::read_to_string(golden("sweep.csv")).unwrap()).unwrap();
    let fit = emiscan_core::fitting::fit_resonance(&stored).unwrap();
    assert!(fit.converged);
    assert!(((fit.params.omega0 - p.omega0) / p.omega0).abs() < 1e-6);
}
