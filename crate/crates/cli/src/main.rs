//! banditune: run bandit width-tuning experiments from a TOML config.
//!
//! Each subcommand matches one config section; the pairing is checked so a
//! config cannot silently run under the wrong mode. All randomness derives
//! from the single `seed`, so reruns (at any thread count) reproduce output
//! files byte for byte.

mod config;
mod output;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Mode;
use crate::runner::Overrides;

#[derive(Parser)]
#[command(name = "banditune", version, about = "Bandit policy sweeps and width tuning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// TOML experiment config.
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Override the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Override the config's output CSV path.
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate mean regret over a gamma grid.
    Sweep(CommonArgs),
    /// Ternary-search the width, then re-evaluate the pick.
    TuneTernary(CommonArgs),
    /// Grid-search the width on a fixed per-point budget.
    TuneUniform(CommonArgs),
    /// Sweep tabular policies against the Gittins baseline.
    GittinsCompare(CommonArgs),
    /// Scatter regret gaps against the width-sensitivity bound.
    Validate(CommonArgs),
}

impl Command {
    fn split(self) -> (Mode, CommonArgs) {
        match self {
            Command::Sweep(a) => (Mode::Sweep, a),
            Command::TuneTernary(a) => (Mode::TuneTernary, a),
            Command::TuneUniform(a) => (Mode::TuneUniform, a),
            Command::GittinsCompare(a) => (Mode::GittinsCompare, a),
            Command::Validate(a) => (Mode::Validate, a),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (mode, args) = cli.command.split();
    let result = config::ExperimentConfig::load(&args.config).and_then(|cfg| {
        runner::run(
            &cfg,
            mode,
            &Overrides { seed: args.seed, threads: args.threads, out: args.out },
        )
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
