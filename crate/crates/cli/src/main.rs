//! `fundrank` — fundamentals-driven stock and ETF ranking.
//!
//! The pipeline runs in stages, each a subcommand reading the same config
//! file: `ingest` validates the inputs, `train` fits the classifier, `score`
//! ranks a date, `backtest` simulates the portfolios, and `report` re-renders
//! the result tables. `selftest` runs the whole pipeline on a generated
//! market with a known answer.
//!
//! Exit codes: 0 success, 1 configuration or usage, 2 unreadable or malformed
//! input data, 3 numeric failure (diverged training, degenerate metrics, or a
//! failed self-test gate).

use std::path::PathBuf;
use std::process::ExitCode;

use chrono::NaiveDate;
use clap::{Parser, Subcommand};
use fundrank_cli::commands::{self, selftest::SelftestOptions};
use fundrank_cli::config::RunConfig;
use fundrank_cli::CliError;

#[derive(Parser)]
#[command(name = "fundrank", version, about = "Fundamentals-driven stock and ETF ranking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate every input file, then print an inventory.
    Ingest {
        /// Run configuration (TOML).
        config: PathBuf,
    },
    /// Fit the classifier and write the checkpoint and training log.
    Train {
        config: PathBuf,
    },
    /// Rank the stock and ETF universes at a date.
    Score {
        config: PathBuf,
        /// Scoring date (YYYY-MM-DD); defaults to the last rebalance date.
        /// Non-business days roll back to the preceding business day.
        #[arg(long)]
        asof: Option<NaiveDate>,
    },
    /// Simulate the configured portfolios over the backtest range.
    Backtest {
        config: PathBuf,
    },
    /// Re-render the comparison tables from an existing backtest.
    Report {
        config: PathBuf,
    },
    /// Run the pipeline end to end on a synthetic market with a known answer.
    Selftest {
        /// Keep artifacts in this directory instead of a temporary one.
        #[arg(long)]
        dir: Option<PathBuf>,
        /// Seed for the synthetic market.
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Ingest { config } => commands::ingest::run(&RunConfig::load(&config)?),
        Command::Train { config } => commands::train::run(&RunConfig::load(&config)?),
        Command::Score { config, asof } => commands::score::run(&RunConfig::load(&config)?, asof),
        Command::Backtest { config } => commands::backtest::run(&RunConfig::load(&config)?),
        Command::Report { config } => commands::report::run(&RunConfig::load(&config)?),
        Command::Selftest { dir, seed } => commands::selftest::run(&SelftestOptions { dir, seed }),
    }
}

fn main() -> ExitCode {
    // Die quietly when the reader of a pipe goes away (`fundrank score … |
    // head`); Rust's default of ignoring SIGPIPE would turn that into a
    // panic inside `println!`.
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
