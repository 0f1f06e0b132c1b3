//! Batch front end: imputation, synthesis, pooled inference, simulation and
//! trace diagnostics, each driven by a TOML config file.

mod commands;
mod config;
mod error;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Flags, Run};
use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "nested-impute",
    version,
    about = "Multiple imputation and synthesis of household survey data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, clap::Args)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Seed; overrides the `seed` key of the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 1 forces the deterministic reference path.
    #[arg(long)]
    threads: Option<usize>,
    /// Time S1 and S9 in every iteration and report the totals.
    #[arg(long)]
    bench: bool,
    /// Write a chain checkpoint every N iterations.
    #[arg(long, value_name = "N")]
    checkpoint_every: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the sampler and write L completed datasets.
    Impute(Common),
    /// Run the sampler and write L synthetic datasets.
    Synthesize(Common),
    /// Pool estimands over completed or synthetic datasets.
    Evaluate(Common),
    /// Simulate a population or sample, optionally with missing values.
    Simulate(Common),
    /// Summarise a chain trace and check datasets against the rules.
    Diagnose(Common),
}

fn run(cli: Cli) -> Result<(), CliError> {
    let (name, common) = match &cli.command {
        Command::Impute(c) => ("impute", c),
        Command::Synthesize(c) => ("synthesize", c),
        Command::Evaluate(c) => ("evaluate", c),
        Command::Simulate(c) => ("simulate", c),
        Command::Diagnose(c) => ("diagnose", c),
    };
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(CliError::Usage("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let flags = Flags {
        seed: common.seed,
        threads: common.threads,
        bench: common.bench,
        checkpoint_every: common.checkpoint_every,
    };
    let run = Run::new(name, &common.config, flags)?;
    match cli.command {
        Command::Impute(_) => commands::cmd_impute(run),
        Command::Synthesize(_) => commands::cmd_synthesize(run),
        Command::Evaluate(_) => commands::cmd_evaluate(run),
        Command::Simulate(_) => commands::cmd_simulate(run),
        Command::Diagnose(_) => commands::cmd_diagnose(run),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("NESTED_IMPUTE_LOG", "warn"))
        .init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
