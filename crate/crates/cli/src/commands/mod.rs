//! Command implementations. Each command is a function of a loaded
//! [`RunConfig`] so the self-test can drive the same code paths in-process
//! that the binary exposes on the command line.

pub mod backtest;
pub mod ingest;
pub mod report;
pub mod score;
pub mod selftest;
pub mod train;

use std::path::Path;

use chrono::NaiveDate;
use fundrank_core::calendar::{BusinessCalendar, RebalanceCalendar};
use fundrank_core::store::{
    load_etf_universe, load_holiday_file, load_index_series, load_stock_universe, EtfMeta, Store,
};

use crate::config::RunConfig;
use crate::CliError;

/// Everything the pipeline stages share: the loaded store, the universes, the
/// trading calendar, and the quarter-end schedule spanning the configured
/// date range.
pub struct World {
    pub cal: BusinessCalendar,
    pub store: Store,
    pub stocks: Vec<String>,
    pub etfs: Vec<EtfMeta>,
    pub index: Option<Vec<(NaiveDate, f64)>>,
    pub schedule: RebalanceCalendar,
}

impl World {
    /// Reads every input file named by the config and indexes it. The store
    /// is rebuilt from the canonical CSVs on each invocation, so a run never
    /// depends on hidden mutable state.
    pub fn load(config: &RunConfig) -> Result<Self, CliError> {
        let cal = match &config.paths.holidays {
            Some(path) => BusinessCalendar::us_market_with(load_holiday_file(path)?),
            None => BusinessCalendar::us_market(),
        };
        let mut store = Store::new();
        store.ingest_statements(&config.paths.statements, &cal)?;
        store.ingest_prices(&config.paths.prices)?;
        store.ingest_pdfs(&config.paths.pdfs)?;
        let stocks = load_stock_universe(&config.paths.stocks)?;
        let etfs = load_etf_universe(&config.paths.etfs)?;
        let index = match &config.paths.index {
            Some(path) => Some(load_index_series(path)?),
            None => None,
        };
        let schedule =
            RebalanceCalendar::from_range(&cal, config.splits.start, config.splits.test_end)
                .map_err(|e| CliError::Config(format!("rebalance schedule: {e}")))?;
        Ok(Self { cal, store, stocks, etfs, index, schedule })
    }
}

/// Writes a whole file, mapping failures onto the command error type.
pub(crate) fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| crate::io_err(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| crate::io_err(path, e))
}
