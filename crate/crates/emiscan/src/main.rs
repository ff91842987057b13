use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use emiscan::commands::{self, BackgroundSource, ScanRequest};
use emiscan::scenario::ModeKind;
use emiscan::verify::run_checks;
use emiscan::AppError;
use emiscan_core::fitting::FitMode;

/// Simulated electromagnetic induction imaging with an RF atomic magnetometer.
#[derive(Debug, Parser)]
#[command(name = "emiscan", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Scan a scenario and write raw (and normalized) images plus a timing report.
    Scan {
        scenario: PathBuf,
        out_dir: PathBuf,
        /// Override the scenario's scan mode.
        #[arg(long, value_enum)]
        mode: Option<ModeKind>,
        /// Override the noise seed. EMISCAN_SEED takes precedence when set.
        #[arg(long)]
        seed: Option<u64>,
        /// Background image CSV, or `auto` to scan and cache one.
        #[arg(long)]
        background: Option<String>,
        /// Worker threads; 0 uses every core.
        #[arg(long, default_value_t = 0)]
        threads: usize,
        #[arg(long)]
        quiet: bool,
    },
    /// Fit a sweep CSV and print the result as JSON.
    Fit {
        sweep: PathBuf,
        #[arg(long, value_enum, default_value_t = FitArg::Joint)]
        mode: FitArg,
    },
    /// Run the built-in self-checks.
    Verify {
        #[arg(long)]
        json: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FitArg {
    Joint,
    Separate,
}

const SEED_ENV: &str = "EMISCAN_SEED";

/// Print to stdout; a reader that went away (`| head`) is not an error.
fn emit(text: &str) {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    let _ = writeln!(out, "{text}").and_then(|()| out.flush());
}

fn seed_override(flag: Option<u64>) -> Result<Option<u64>, AppError> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| AppError::Usage(format!("{SEED_ENV} must be an unsigned integer, got `{v}`"))),
        Err(_) => Ok(flag),
    }
}

fn run(cli: Cli) -> Result<(), AppError> {
    match cli.command {
        Command::Scan { scenario, out_dir, mode, seed, background, threads, quiet } => {
            let background = match background.as_deref() {
                None => BackgroundSource::None,
                Some("auto") => BackgroundSource::Auto,
                Some(p) => BackgroundSource::File(p.into()),
            };
            let req = ScanRequest { scenario_path: scenario, out_dir, mode, seed: seed_override(seed)?, background, threads };
            let out = commands::scan(&req)?;
            if !quiet {
                for w in &out.warnings {
                    eprintln!("warning: {w}");
                }
                emit(&serde_json::to_string(&out).expect("outcome serializes"));
            }
            Ok(())
        }
        Command::Fit { sweep, mode } => {
            let mode = match mode {
                FitArg::Joint => FitMode::Joint,
                FitArg::Separate => FitMode::Separate,
            };
            let report = commands::fit(&sweep, mode)?;
            emit(&serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
        Command::Verify { json } => {
            let checks = run_checks(&commands::verify_config_from_env()?);
            let failed = checks.iter().filter(|c| !c.passed).count();
            if json {
                let doc = serde_json::json!({ "passed": failed == 0, "checks": checks });
                emit(&serde_json::to_string_pretty(&doc).expect("report serializes"));
            } else {
                for c in &checks {
                    emit(&format!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
                }
            }
            if failed > 0 {
                return Err(AppError::VerifyFailed { failed, total: checks.len() });
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                let _ = e.print();
                return ExitCode::from(2);
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", AppError::Usage(first.to_string()).to_json_line());
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::FAILURE
        }
    }
}
