//! Run configuration: one TOML file names the input files, the split
//! boundaries, the training hyperparameters, and the portfolios to simulate.
//! Relative paths resolve against the directory containing the config file,
//! so a run directory can be moved or copied wholesale. Dates are quoted
//! strings in `YYYY-MM-DD` form.
//!
//! ```toml
//! seed = 42
//!
//! [paths]
//! statements = "statements.csv"
//! prices = "prices.csv"
//! pdfs = "pdfs.csv"
//! stocks = "stocks.csv"
//! etfs = "etfs.csv"
//! index = "index.csv"          # optional benchmark series
//! output_dir = "out"
//!
//! [splits]
//! start = "2002-03-01"
//! train_end = "2009-03-01"
//! validation_end = "2012-03-01"
//! test_end = "2022-04-30"
//!
//! [[portfolios]]
//! universe = "etfs"
//! mode = "count"
//! k = 5
//! ```

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use fundrank_core::backtest::SelectionRule;
use fundrank_core::features::{
    PipelineConfig, SplitBoundaries, DEFAULT_CLIP_BOUND, DEFAULT_MAX_IMPUTED_FRAC,
};
use fundrank_core::net::TrainConfig;
use fundrank_core::scoring::{ScoringConfig, DEFAULT_MAX_PDF_AGE_DAYS, DEFAULT_MIN_COVERAGE};
use serde::Deserialize;

use crate::CliError;

/// Input, intermediate, and output locations.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Paths {
    pub statements: PathBuf,
    pub prices: PathBuf,
    pub pdfs: PathBuf,
    /// Stock universe file (`ticker` per row).
    pub stocks: PathBuf,
    /// ETF universe file (`etf,inception` per row).
    pub etfs: PathBuf,
    /// Optional benchmark index series (`date,close`).
    #[serde(default)]
    pub index: Option<PathBuf>,
    /// Optional extra holiday file (`date` per row).
    #[serde(default)]
    pub holidays: Option<PathBuf>,
    pub output_dir: PathBuf,
}

/// Date boundaries of the three sample splits plus the simulation start.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Splits {
    pub start: NaiveDate,
    pub train_end: NaiveDate,
    pub validation_end: NaiveDate,
    pub test_end: NaiveDate,
    /// First rebalance of the backtest; defaults to `validation_end` (the
    /// out-of-sample stretch).
    #[serde(default)]
    pub backtest_start: Option<NaiveDate>,
}

impl Splits {
    pub fn boundaries(&self) -> SplitBoundaries {
        SplitBoundaries {
            start: self.start,
            train_end: self.train_end,
            validation_end: self.validation_end,
            test_end: self.test_end,
        }
    }

    pub fn backtest_start(&self) -> NaiveDate {
        self.backtest_start.unwrap_or(self.validation_end)
    }
}

/// Feature-pipeline and coverage thresholds.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineSection {
    pub clip_bound: f64,
    pub max_imputed_frac: f64,
    pub min_coverage: f64,
    pub max_pdf_age_days: i64,
}

impl Default for PipelineSection {
    fn default() -> Self {
        Self {
            clip_bound: DEFAULT_CLIP_BOUND,
            max_imputed_frac: DEFAULT_MAX_IMPUTED_FRAC,
            min_coverage: DEFAULT_MIN_COVERAGE,
            max_pdf_age_days: DEFAULT_MAX_PDF_AGE_DAYS,
        }
    }
}

impl PipelineSection {
    pub fn pipeline(&self) -> PipelineConfig {
        PipelineConfig { clip_bound: self.clip_bound, max_imputed_frac: self.max_imputed_frac }
    }

    pub fn scoring(&self) -> ScoringConfig {
        ScoringConfig {
            min_coverage: self.min_coverage,
            max_pdf_age_days: self.max_pdf_age_days,
        }
    }
}

/// Which ranking a portfolio draws from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortfolioUniverse {
    Stocks,
    Etfs,
}

impl PortfolioUniverse {
    pub fn as_str(self) -> &'static str {
        match self {
            PortfolioUniverse::Stocks => "stocks",
            PortfolioUniverse::Etfs => "etfs",
        }
    }
}

/// One simulated portfolio: the top `k` names or top `k` percent of a
/// ranking. The equal-weighted everything portfolio and the benchmark index
/// are always included and need no entry here.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioSpec {
    pub universe: PortfolioUniverse,
    pub mode: PortfolioMode,
    pub k: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PortfolioMode {
    Count,
    Percent,
}

impl PortfolioSpec {
    pub fn rule(&self) -> Result<SelectionRule, CliError> {
        match self.mode {
            PortfolioMode::Count => {
                if self.k.fract() != 0.0 || self.k < 1.0 || self.k > 1e6 {
                    return Err(CliError::Config(format!(
                        "portfolio count must be a positive integer, got {}",
                        self.k
                    )));
                }
                Ok(SelectionRule::Count(self.k as usize))
            }
            PortfolioMode::Percent => {
                if !(self.k > 0.0 && self.k <= 100.0) {
                    return Err(CliError::Config(format!(
                        "portfolio percent must be in (0, 100], got {}",
                        self.k
                    )));
                }
                Ok(SelectionRule::Percent(self.k))
            }
        }
    }
}

fn default_index_label() -> String {
    "S&P 500".to_string()
}

fn default_export_datasets() -> bool {
    true
}

/// The whole parsed and path-resolved run configuration.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Root seed for weight initialization and batch sampling.
    pub seed: u64,
    /// Row label of the benchmark index in reports.
    #[serde(default = "default_index_label")]
    pub index_label: String,
    /// Whether `train` writes the assembled datasets next to the checkpoint.
    #[serde(default = "default_export_datasets")]
    pub export_datasets: bool,
    pub paths: Paths,
    pub splits: Splits,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub pipeline: PipelineSection,
    #[serde(default)]
    pub portfolios: Vec<PortfolioSpec>,
}

impl RunConfig {
    /// Reads, parses, resolves, and validates a config file.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| crate::io_err(path, e))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        config.resolve_paths(base);
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&p);
            }
        };
        resolve(&mut self.paths.statements);
        resolve(&mut self.paths.prices);
        resolve(&mut self.paths.pdfs);
        resolve(&mut self.paths.stocks);
        resolve(&mut self.paths.etfs);
        if let Some(p) = self.paths.index.as_mut() {
            resolve(p);
        }
        if let Some(p) = self.paths.holidays.as_mut() {
            resolve(p);
        }
        resolve(&mut self.paths.output_dir);
    }

    fn validate(&self) -> Result<(), CliError> {
        self.splits.boundaries().validate().map_err(CliError::Feature)?;
        let bt = self.splits.backtest_start();
        if bt < self.splits.start || bt >= self.splits.test_end {
            return Err(CliError::Config(format!(
                "backtest_start {bt} must lie inside [start, test_end)"
            )));
        }
        self.train.validate().map_err(CliError::Net)?;
        let p = &self.pipeline;
        if !(p.clip_bound > 0.0 && p.clip_bound.is_finite()) {
            return Err(CliError::Config(format!("clip_bound must be positive, got {}", p.clip_bound)));
        }
        if !(0.0..=1.0).contains(&p.max_imputed_frac) {
            return Err(CliError::Config(format!(
                "max_imputed_frac must be in [0, 1], got {}",
                p.max_imputed_frac
            )));
        }
        if !(0.0..=1.0).contains(&p.min_coverage) {
            return Err(CliError::Config(format!(
                "min_coverage must be in [0, 1], got {}",
                p.min_coverage
            )));
        }
        if p.max_pdf_age_days < 1 {
            return Err(CliError::Config(format!(
                "max_pdf_age_days must be at least 1, got {}",
                p.max_pdf_age_days
            )));
        }
        if self.index_label.is_empty() || self.index_label.contains([',', '"', '\n']) {
            return Err(CliError::Config(format!(
                "index_label {:?} must be non-empty and free of commas, quotes, and newlines",
                self.index_label
            )));
        }
        let mut labels = std::collections::BTreeSet::new();
        for spec in &self.portfolios {
            let rule = spec.rule()?;
            if !labels.insert((spec.universe.as_str(), rule.label())) {
                return Err(CliError::Config(format!(
                    "duplicate portfolio: {} / {}",
                    spec.universe.as_str(),
                    rule.label()
                )));
            }
        }
        Ok(())
    }

    /// Output subdirectory helpers, all under `paths.output_dir`.
    pub fn out(&self, leaf: &str) -> PathBuf {
        self.paths.output_dir.join(leaf)
    }
}
