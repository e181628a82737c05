//! Command-line entry point for the ergodic HJB solver.
//!
//! Subcommands: `solve`, `verify`, `sweep`, `oracle`, each taking
//! `--config <path> [--out <dir>] [--seed <n>]`. Exit codes: 0 success,
//! 1 verification failure, 2 usage/config error, 3 numerical failure.

mod config;
mod runner;

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::runner::{fail, resolve_out_dir, run_oracle, run_solve, run_sweep, run_verify, CliError};

#[derive(Parser)]
#[command(
    name = "ergodic-hjb",
    version,
    about = "Ergodic Hamilton-Jacobi-Bellman solver on invariant measures"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides [output] dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed; overrides the config's top-level seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the configured instance and write solution.csv + summary.json.
    Solve(CommonArgs),
    /// Run the configured verification studies; exit 0 only if all pass.
    Verify(CommonArgs),
    /// Refinement sweep along h, R or n_ctrl; writes sweep.csv.
    Sweep(CommonArgs),
    /// Cross-check enumeration, the dual LP and policy iteration on one
    /// small instance.
    Oracle(CommonArgs),
}

fn dispatch(command: &Command) -> Result<(), CliError> {
    let (args, run): (
        &CommonArgs,
        fn(&config::RunConfig, &str, &std::path::Path) -> Result<(), CliError>,
    ) = match command {
        Command::Solve(args) => (args, run_solve),
        Command::Verify(args) => (args, run_verify),
        Command::Sweep(args) => (args, run_sweep),
        Command::Oracle(args) => (args, run_oracle),
    };
    let text = fs::read_to_string(&args.config).map_err(|e| {
        CliError::Config(format!("cannot read {}: {e}", args.config.display()))
    })?;
    let mut cfg = config::parse_config(&text).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out_dir = resolve_out_dir(&cfg, args.out.as_deref());
    run(&cfg, &text, &out_dir)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => ExitCode::from(fail(&err) as u8),
    }
}
