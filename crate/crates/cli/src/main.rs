//! Batch runner for the reproducible cross-checks.
//!
//! Exit codes: 0 success, 1 numerical failure, 2 invalid input or missing outputs,
//! 3 tolerance failure.

mod config;
mod manifest;

use clap::{Parser, Subcommand};
use config::{Experiment, Overrides};
use std::path::PathBuf;
use std::process::ExitCode;

const THREADS_VAR: &str = "SCALAR_CLOSURE_THREADS";

#[derive(Parser)]
#[command(name = "scalar-closure", version, about = "Run and report moment-closure cross-checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write its CSV tables and manifest.
    Run {
        experiment: Experiment,
        /// TOML file with a parameter table named after the experiment.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: out/<experiment>).
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Print the checks recorded in a manifest after verifying its outputs.
    Report { manifest: PathBuf },
}

fn main() -> ExitCode {
    // `scalar-closure <experiment> ...` is shorthand for `scalar-closure run <experiment> ...`.
    let mut args: Vec<String> = std::env::args().collect();
    if args.len() > 1 && args[1].parse::<Experiment>().is_ok() {
        args.insert(1, "run".into());
    }
    let cli = match Cli::try_parse_from(&args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match cli.command {
        Command::Run { experiment, config, seed, out, overrides } => {
            run(experiment, config, seed, out, &overrides)
        }
        Command::Report { manifest } => match manifest::report(&manifest) {
            Ok((text, passed)) => {
                print!("{text}");
                ExitCode::from(if passed { 0 } else { 3 })
            }
            Err(msg) => {
                eprintln!("error: {msg}");
                ExitCode::from(2)
            }
        },
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| format!("{THREADS_VAR} must be a positive integer, got `{raw}`"))?;
    if n == 0 {
        return Err(format!("{THREADS_VAR} must be positive"));
    }
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| e.to_string())
}

fn run(
    experiment: Experiment,
    config: Option<PathBuf>,
    seed: Option<u64>,
    out: Option<PathBuf>,
    overrides: &Overrides,
) -> ExitCode {
    let resolved = match config::resolve(experiment, config.as_deref(), seed, out, overrides) {
        Ok(r) => r,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(2);
        }
    };
    let start = std::time::Instant::now();
    let outcome = match resolved.parameters.run(resolved.seed) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(if config::is_validation(&e) { 2 } else { 1 });
        }
    };
    let wall = start.elapsed().as_secs_f64();
    let written = match manifest::write(&resolved, &outcome, wall) {
        Ok(path) => path,
        Err(msg) => {
            eprintln!("error: {msg}");
            return ExitCode::from(1);
        }
    };
    println!("wrote {}", written.display());
    let failed: Vec<_> = outcome.checks.iter().filter(|c| !c.passed).collect();
    if failed.is_empty() {
        return ExitCode::SUCCESS;
    }
    let criterion = experiment.criterion();
    for c in failed {
        eprintln!(
            "tolerance failure (criterion {criterion}, {}): {}: measured {:e}, expected {:e} ± {:e}",
            experiment.name(),
            c.name,
            c.measured,
            c.expected,
            c.tolerance
        );
    }
    ExitCode::from(3)
}
