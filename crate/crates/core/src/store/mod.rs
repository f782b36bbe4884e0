//! Point-in-time store for quarterly statements, daily prices, and ETF
//! portfolio-deposit-file (PDF) snapshots.
//!
//! Every statement row carries an `available_from` date and every query takes
//! an `asof` date; a record is visible only when `available_from <= asof`.
//! That guard is what keeps downstream features, labels, and scores free of
//! lookahead. When a file does not say when a statement became public, the
//! conservative default is the last business day of the quarter after the
//! period end (see [`crate::calendar::BusinessCalendar::derive_available_from`]).

mod csv_io;

use std::collections::BTreeMap;

use chrono::NaiveDate;
use thiserror::Error;

use crate::calendar::BusinessCalendar;

pub use csv_io::{load_etf_universe, load_holiday_file, load_index_series, load_stock_universe};

/// Number of statement features per quarterly record.
pub const FEATURE_COUNT: usize = 11;

/// Statement feature columns, in file order.
pub const FEATURE_COLUMNS: [&str; FEATURE_COUNT] = [
    "total_revenue",
    "operating_income",
    "net_income",
    "total_asset",
    "current_asset",
    "total_equity",
    "current_liabilities",
    "invested_capital",
    "free_cashflow",
    "operating_cashflow",
    "market_capital",
];

/// A stock may miss (no bar) or not trade (zero volume) on at most this many
/// business days of a rebalance window and still count as investable.
pub const MAX_ILLIQUID_DAYS: usize = 5;

/// Price lookups at period boundaries accept the last close up to this many
/// business days back before reporting the price as missing.
pub const PRICE_LOOKBACK_DAYS: u32 = 5;

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}:{line}: {msg}")]
    Parse { path: String, line: u64, msg: String },
    #[error("{path}: {msg}")]
    Schema { path: String, msg: String },
    #[error("{path}: duplicate {what} at lines {lines:?}")]
    Duplicates { path: String, what: String, lines: Vec<u64> },
    #[error("no holdings snapshot for {etf} dated at or before {asof}")]
    NoPdf { etf: String, asof: NaiveDate },
    #[error("no close for {ticker} within {lookback} business days at or before {date}")]
    NoPrice { ticker: String, date: NaiveDate, lookback: u32 },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// One quarterly statement. Missing feature cells stay `None`; the feature
/// pipeline decides how to impute them.
#[derive(Debug, Clone, PartialEq)]
pub struct StatementRecord {
    pub ticker: String,
    pub period_end: NaiveDate,
    /// First date on which the record may be consulted; never before `period_end`.
    pub available_from: NaiveDate,
    pub features: [Option<f64>; FEATURE_COUNT],
}

/// One daily price bar.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceBar {
    pub ticker: String,
    pub date: NaiveDate,
    pub close: f64,
    pub volume: f64,
}

/// One component row of a PDF snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct PdfHolding {
    pub ticker: String,
    pub weight: f64,
}

/// ETF holdings as published on one date. Weights are stored as given in the
/// file; at ingest they must sum to 1 within ±0.02 (cash residue tolerance).
#[derive(Debug, Clone, PartialEq)]
pub struct PdfSnapshot {
    pub etf: String,
    pub date: NaiveDate,
    pub holdings: Vec<PdfHolding>,
}

/// ETF universe entry: ticker plus listing date.
#[derive(Debug, Clone, PartialEq)]
pub struct EtfMeta {
    pub ticker: String,
    pub inception: NaiveDate,
}

#[derive(Debug, Clone, Default)]
struct PriceSeries {
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
    volumes: Vec<f64>,
}

impl PriceSeries {
    /// Index of the last bar dated `<= date`, if any.
    fn idx_at_or_before(&self, date: NaiveDate) -> Option<usize> {
        let n = self.dates.partition_point(|&d| d <= date);
        n.checked_sub(1)
    }
}

/// In-memory point-in-time store. Keyed maps are ordered so that every
/// iteration (exports, dataset builds) is deterministic.
#[derive(Debug, Clone, Default)]
pub struct Store {
    statements: BTreeMap<String, Vec<StatementRecord>>,
    prices: BTreeMap<String, PriceSeries>,
    pdfs: BTreeMap<String, Vec<PdfSnapshot>>,
}

impl Store {
    pub fn new() -> Self {
        Self::default()
    }

    // -----------------------------------------------------------------------
    // Insertion (programmatic; file ingest lives in csv_io)
    // -----------------------------------------------------------------------

    /// Inserts a statement, keeping the per-ticker list sorted by period end.
    /// A record with the same `(ticker, period_end)` is replaced.
    pub fn insert_statement(&mut self, rec: StatementRecord) {
        let list = self.statements.entry(rec.ticker.clone()).or_default();
        match list.binary_search_by_key(&rec.period_end, |r| r.period_end) {
            Ok(i) => list[i] = rec,
            Err(i) => list.insert(i, rec),
        }
    }

    /// Inserts a price bar, keeping the per-ticker series sorted by date.
    /// A bar with the same `(ticker, date)` is replaced.
    pub fn insert_price(&mut self, bar: PriceBar) {
        let series = self.prices.entry(bar.ticker).or_default();
        match series.dates.binary_search(&bar.date) {
            Ok(i) => {
                series.closes[i] = bar.close;
                series.volumes[i] = bar.volume;
            }
            Err(i) => {
                series.dates.insert(i, bar.date);
                series.closes.insert(i, bar.close);
                series.volumes.insert(i, bar.volume);
            }
        }
    }

    /// Inserts a holdings snapshot, keeping the per-ETF list sorted by date.
    /// A snapshot with the same `(etf, date)` is replaced.
    pub fn insert_pdf(&mut self, snap: PdfSnapshot) {
        let list = self.pdfs.entry(snap.etf.clone()).or_default();
        match list.binary_search_by_key(&snap.date, |s| s.date) {
            Ok(i) => list[i] = snap,
            Err(i) => list.insert(i, snap),
        }
    }

    // -----------------------------------------------------------------------
    // Point-in-time queries
    // -----------------------------------------------------------------------

    /// The `n` most recent statements visible at `asof` (`available_from <=
    /// asof`), returned in ascending period-end order. Returns fewer than `n`
    /// when history is short and an empty slice for unknown tickers.
    pub fn statements_asof(&self, ticker: &str, asof: NaiveDate, n: usize) -> Vec<&StatementRecord> {
        let Some(list) = self.statements.get(ticker) else {
            return Vec::new();
        };
        let mut visible: Vec<&StatementRecord> =
            list.iter().filter(|r| r.available_from <= asof).collect();
        if visible.len() > n {
            visible.drain(..visible.len() - n);
        }
        visible
    }

    /// Close at `date`, falling back to the most recent close up to
    /// [`PRICE_LOOKBACK_DAYS`] business days earlier.
    pub fn close_within_lookback(
        &self,
        ticker: &str,
        date: NaiveDate,
        cal: &BusinessCalendar,
    ) -> Result<f64, StoreError> {
        let miss = || StoreError::NoPrice {
            ticker: ticker.to_string(),
            date,
            lookback: PRICE_LOOKBACK_DAYS,
        };
        let series = self.prices.get(ticker).ok_or_else(miss)?;
        let i = series.idx_at_or_before(date).ok_or_else(miss)?;
        let floor = cal.business_days_back(date, PRICE_LOOKBACK_DAYS);
        if series.dates[i] < floor {
            return Err(miss());
        }
        Ok(series.closes[i])
    }

    /// Most recent bar dated `<= date` with no lookback limit. Used for
    /// marking positions within a holding period, where a vanished series
    /// freezes at its last close.
    pub fn last_close_at_or_before(&self, ticker: &str, date: NaiveDate) -> Option<(NaiveDate, f64)> {
        let series = self.prices.get(ticker)?;
        let i = series.idx_at_or_before(date)?;
        Some((series.dates[i], series.closes[i]))
    }

    /// Simple return of `ticker` from `t` to `t_next`, both closes resolved
    /// through [`Self::close_within_lookback`].
    pub fn forward_return(
        &self,
        ticker: &str,
        t: NaiveDate,
        t_next: NaiveDate,
        cal: &BusinessCalendar,
    ) -> Result<f64, StoreError> {
        let c0 = self.close_within_lookback(ticker, t, cal)?;
        let c1 = self.close_within_lookback(ticker, t_next, cal)?;
        Ok((c1 - c0) / c0)
    }

    /// Whether `ticker` traded on enough business days of `[window_start,
    /// window_end]`: at most [`MAX_ILLIQUID_DAYS`] days may have a missing bar
    /// or zero volume. Unknown tickers and mid-window delistings fail.
    pub fn is_valid_stock(
        &self,
        ticker: &str,
        window_start: NaiveDate,
        window_end: NaiveDate,
        cal: &BusinessCalendar,
    ) -> bool {
        let series = self.prices.get(ticker);
        let mut missing = 0usize;
        for day in cal.business_days(window_start, window_end) {
            let traded = series
                .map(|s| match s.dates.binary_search(&day) {
                    Ok(i) => s.volumes[i] > 0.0,
                    Err(_) => false,
                })
                .unwrap_or(false);
            if !traded {
                missing += 1;
                if missing > MAX_ILLIQUID_DAYS {
                    return false;
                }
            }
        }
        true
    }

    /// The holdings snapshot with the greatest date `<= asof`.
    pub fn pdf_asof(&self, etf: &str, asof: NaiveDate) -> Result<&PdfSnapshot, StoreError> {
        let miss = || StoreError::NoPdf { etf: etf.to_string(), asof };
        let list = self.pdfs.get(etf).ok_or_else(miss)?;
        let n = list.partition_point(|s| s.date <= asof);
        n.checked_sub(1).map(|i| &list[i]).ok_or_else(miss)
    }

    // -----------------------------------------------------------------------
    // Introspection and controlled mutation (fixtures, perturbation tests)
    // -----------------------------------------------------------------------

    pub fn statement_tickers(&self) -> impl Iterator<Item = &str> {
        self.statements.keys().map(String::as_str)
    }

    pub fn statement_count(&self) -> usize {
        self.statements.values().map(Vec::len).sum()
    }

    pub fn price_count(&self) -> usize {
        self.prices.values().map(|s| s.dates.len()).sum()
    }

    pub fn pdf_snapshot_count(&self) -> usize {
        self.pdfs.values().map(Vec::len).sum()
    }

    pub fn statements_of(&self, ticker: &str) -> &[StatementRecord] {
        self.statements.get(ticker).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn statement_mut(&mut self, ticker: &str, period_end: NaiveDate) -> Option<&mut StatementRecord> {
        let list = self.statements.get_mut(ticker)?;
        let i = list.binary_search_by_key(&period_end, |r| r.period_end).ok()?;
        Some(&mut list[i])
    }

    /// Overwrites the close of an existing bar; returns false if absent.
    pub fn set_close(&mut self, ticker: &str, date: NaiveDate, close: f64) -> bool {
        let Some(series) = self.prices.get_mut(ticker) else {
            return false;
        };
        match series.dates.binary_search(&date) {
            Ok(i) => {
                series.closes[i] = close;
                true
            }
            Err(_) => false,
        }
    }

    pub fn price_dates(&self, ticker: &str) -> Vec<NaiveDate> {
        self.prices.get(ticker).map(|s| s.dates.clone()).unwrap_or_default()
    }
}
