//! Command-line entry point. Exit codes: 0 success, 1 check failure,
//! 2 configuration error (including argument parse errors), 3 I/O error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use betaplane_cli::commands;
use betaplane_cli::config::{RunConfig, SweepConfig};
use betaplane_cli::{CliError, CliResult};

#[derive(Parser)]
#[command(
    name = "betaplane",
    about = "Pseudospectral simulator and attractor-analysis toolkit for the \
             rotating two-dimensional flow on the beta-plane",
    version
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Burn in, run a measurement horizon, and record observables,
    /// checkpoints, and the stationary sanity checks.
    Simulate {
        /// Run configuration file (key = value lines).
        #[arg(long)]
        config: PathBuf,
        /// Output directory (overrides `output_dir` from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Joint base/tangent run: trace breakdown stream, Lyapunov exponents,
    /// and the smallest contracting dimension.
    Tangent {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full pipeline over an (epsilon, grashof) ladder grid with per-point
    /// result files and scaling fits.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Concurrent worker threads (overrides `workers` from the config).
        #[arg(long)]
        workers: Option<usize>,
        /// Reuse completed per-point result files from a previous run.
        #[arg(long)]
        resume: bool,
    },
    /// Zonal-limit decomposition experiment against the synchronized
    /// one-dimensional heat profile.
    Limit {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Self-contained invariant suite at 32x32 scale; needs no config.
    Verify {
        /// Directory for the report file.
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn load_run_config(path: &PathBuf) -> CliResult<RunConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    RunConfig::parse(&text)
}

fn load_sweep_config(path: &PathBuf) -> CliResult<SweepConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("cannot read config {}: {e}", path.display())))?;
    SweepConfig::parse(&text)
}

fn dispatch(cmd: Cmd) -> CliResult<()> {
    match cmd {
        Cmd::Simulate { config, out } => {
            commands::simulate::run(&load_run_config(&config)?, out.as_ref())
        }
        Cmd::Tangent { config, out } => {
            commands::tangent::run(&load_run_config(&config)?, out.as_ref())
        }
        Cmd::Sweep { config, out, workers, resume } => {
            commands::sweep::run(&load_sweep_config(&config)?, out.as_ref(), workers, resume)
        }
        Cmd::Limit { config, out } => {
            commands::limit::run(&load_run_config(&config)?, out.as_ref())
        }
        Cmd::Verify { out } => commands::verify::run(&out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
