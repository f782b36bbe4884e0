//! Command implementations behind the `fundrank` binary.
//!
//! Every subcommand is an ordinary function over a loaded [`config::RunConfig`],
//! so integration tests can drive the exact production paths in-process while
//! `main` stays a thin argument-parsing shim. Failures carry one of three
//! exit classes: configuration and usage problems (1), input-data problems
//! (2), and numeric or model failures including self-test gates (3).

pub mod commands;
pub mod config;
pub mod lock;

use fundrank_core::backtest::BacktestError;
use fundrank_core::features::FeatureError;
use fundrank_core::net::NetError;
use fundrank_core::scoring::ScoringError;
use fundrank_core::store::StoreError;
use thiserror::Error;

/// Process exit code for configuration and usage errors.
pub const EXIT_CONFIG: u8 = 1;
/// Process exit code for input-data errors.
pub const EXIT_DATA: u8 = 2;
/// Process exit code for numeric failures, aborted training, and failed
/// self-test gates.
pub const EXIT_NUMERIC: u8 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("output directory is locked: {0}")]
    Locked(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Scoring(#[from] ScoringError),
    #[error(transparent)]
    Backtest(#[from] BacktestError),
    #[error("self-test gate failed: {0}")]
    GateFailed(String),
}

impl CliError {
    /// Maps each failure to its exit class.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Locked(_) => EXIT_CONFIG,
            CliError::Io { .. } | CliError::Store(_) => EXIT_DATA,
            CliError::Feature(e) => match e {
                FeatureError::BadBoundaries => EXIT_CONFIG,
                _ => EXIT_DATA,
            },
            CliError::Net(e) => match e {
                NetError::Config(_) => EXIT_CONFIG,
                NetError::Checkpoint(_) => EXIT_DATA,
                _ => EXIT_NUMERIC,
            },
            CliError::Scoring(_) => EXIT_CONFIG,
            CliError::Backtest(e) => match e {
                BacktestError::BadRule(_) => EXIT_CONFIG,
                BacktestError::NoRebalances | BacktestError::BadSchedule { .. } => EXIT_DATA,
                _ => EXIT_NUMERIC,
            },
            CliError::GateFailed(_) => EXIT_NUMERIC,
        }
    }
}

/// Shorthand for IO errors tagged with the offending path.
pub(crate) fn io_err(path: &std::path::Path, source: std::io::Error) -> CliError {
    CliError::Io { path: path.display().to_string(), source }
}
