//! Turning a trained classifier into ranked stock and ETF scores.
//!
//! A stock's score at a date is the model's up-probability for its feature
//! window, provided the stock has enough filed history and traded liquidly
//! over the trailing quarter; otherwise it is uncovered. An ETF's score is
//! the weight-average of its components' scores over the covered weight of
//! its most recent portfolio deposit file, with the coverage fraction
//! reported alongside. ETFs are excluded (not errors) when they are not yet
//! listed, their deposit file is stale, or too little of their weight is
//! covered. Rankings sort by score descending with ties broken by ticker.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use thiserror::Error;

use crate::calendar::BusinessCalendar;
use crate::features::{DenominatorFloors, PipelineConfig, WindowBuilder, WindowRejection};
use crate::net::{predict, ModelParams};
use crate::store::{EtfMeta, Store};

/// Maximum age, in calendar days, of a deposit file at scoring time.
pub const DEFAULT_MAX_PDF_AGE_DAYS: i64 = 95;
/// Minimum covered weight fraction for an ETF score to count.
pub const DEFAULT_MIN_COVERAGE: f64 = 0.8;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("denominator floors cover {floors} features but the model expects {model}")]
    FeatureMismatch { floors: usize, model: usize },
    #[error("min_coverage must be in [0, 1], got {0}")]
    BadCoverage(f64),
}

/// Why a stock has no score at a date.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StockSkip {
    /// Fewer than the required visible statements.
    InsufficientHistory { got: usize },
    /// Too many window cells had to be imputed.
    TooSparse { imputed: usize, cells: usize },
    /// Missing or zero-volume prices on too many trailing business days.
    IlliquidPrices,
    /// The forward pass produced non-finite values.
    NumericFailure,
}

impl std::fmt::Display for StockSkip {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StockSkip::InsufficientHistory { got } => {
                write!(f, "insufficient history ({got} visible statements)")
            }
            StockSkip::TooSparse { imputed, cells } => {
                write!(f, "too sparse ({imputed} of {cells} cells imputed)")
            }
            StockSkip::IlliquidPrices => write!(f, "missing or illiquid prices"),
            StockSkip::NumericFailure => write!(f, "non-finite model output"),
        }
    }
}

/// One stock's scoring outcome at a date.
#[derive(Debug, Clone, PartialEq)]
pub struct StockScore {
    pub ticker: String,
    pub asof: NaiveDate,
    /// Up-probability; `None` when uncovered.
    pub score: Option<f64>,
    pub skip: Option<StockSkip>,
}

impl StockScore {
    pub fn covered(&self) -> bool {
        self.score.is_some()
    }
}

/// Why an ETF is excluded from a date's ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EtfExclusion {
    /// Inception is after the scoring date.
    NotYetListed { inception: NaiveDate },
    /// No deposit file within the staleness horizon.
    StalePdf { latest: Option<NaiveDate> },
    /// Covered weight fraction below the minimum (score withheld).
    LowCoverage,
}

impl std::fmt::Display for EtfExclusion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EtfExclusion::NotYetListed { inception } => write!(f, "not yet listed (inception {inception})"),
            EtfExclusion::StalePdf { latest: Some(d) } => write!(f, "deposit file too old (latest {d})"),
            EtfExclusion::StalePdf { latest: None } => write!(f, "no deposit file"),
            EtfExclusion::LowCoverage => write!(f, "coverage below minimum"),
        }
    }
}

/// A scored ETF.
#[derive(Debug, Clone, PartialEq)]
pub struct EtfScore {
    pub ticker: String,
    pub asof: NaiveDate,
    pub score: f64,
    /// Covered fraction of the deposit-file weight.
    pub coverage: f64,
    /// Date of the deposit file used.
    pub pdf_date: NaiveDate,
}

/// One excluded ETF with its coverage when known.
#[derive(Debug, Clone, PartialEq)]
pub struct EtfExclusionRecord {
    pub ticker: String,
    pub reason: EtfExclusion,
    /// Coverage computed before the gate, when a deposit file existed.
    pub coverage: Option<f64>,
}

/// Scored and excluded ETFs at one date; `scores` is ranked.
#[derive(Debug, Clone, Default)]
pub struct EtfScoreBoard {
    pub scores: Vec<EtfScore>,
    pub exclusions: Vec<EtfExclusionRecord>,
}

/// Coverage and staleness thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringConfig {
    pub min_coverage: f64,
    pub max_pdf_age_days: i64,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self { min_coverage: DEFAULT_MIN_COVERAGE, max_pdf_age_days: DEFAULT_MAX_PDF_AGE_DAYS }
    }
}

/// Weight-average of the covered components' scores, renormalized over the
/// covered weight. Input is `(weight, score-if-covered)` per component.
/// Returns `(aggregate, coverage)`, or `None` when no weight is covered (the
/// aggregate would be undefined).
pub fn aggregate_weighted_scores(components: &[(f64, Option<f64>)]) -> Option<(f64, f64)> {
    let mut total = 0.0;
    let mut covered = 0.0;
    let mut weighted = 0.0;
    for &(weight, score) in components {
        total += weight;
        if let Some(s) = score {
            covered += weight;
            weighted += weight * s;
        }
    }
    if covered <= 0.0 || total <= 0.0 {
        return None;
    }
    Some((weighted / covered, covered / total))
}

/// Ranks stock scores: covered first by score descending, ticker ascending on
/// ties; uncovered after, by ticker.
pub fn rank_stock_scores(scores: &mut [StockScore]) {
    scores.sort_by(|a, b| match (a.score, b.score) {
        (Some(x), Some(y)) => y
            .partial_cmp(&x)
            .expect("scores are finite")
            .then_with(|| a.ticker.cmp(&b.ticker)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.ticker.cmp(&b.ticker),
    });
}

/// Scores stocks and ETFs against one trained model.
pub struct Scorer<'a> {
    store: &'a Store,
    cal: &'a BusinessCalendar,
    params: &'a ModelParams,
    floors: &'a DenominatorFloors,
    pipeline: PipelineConfig,
    config: ScoringConfig,
}

impl<'a> Scorer<'a> {
    pub fn new(
        store: &'a Store,
        cal: &'a BusinessCalendar,
        params: &'a ModelParams,
        floors: &'a DenominatorFloors,
        pipeline: PipelineConfig,
        config: ScoringConfig,
    ) -> Result<Self, ScoringError> {
        if floors.as_slice().len() != params.f {
            return Err(ScoringError::FeatureMismatch {
                floors: floors.as_slice().len(),
                model: params.f,
            });
        }
        if !(0.0..=1.0).contains(&config.min_coverage) {
            return Err(ScoringError::BadCoverage(config.min_coverage));
        }
        Ok(Self { store, cal, params, floors, pipeline, config })
    }

    /// Scores one stock at a date. Uncovered outcomes carry the reason.
    pub fn score_stock(&self, ticker: &str, asof: NaiveDate) -> StockScore {
        let skip = |reason| StockScore {
            ticker: ticker.to_string(),
            asof,
            score: None,
            skip: Some(reason),
        };

        let window_start = self.cal.previous_quarter_last_business_day(asof);
        if !self.store.is_valid_stock(ticker, window_start, asof, self.cal) {
            return skip(StockSkip::IlliquidPrices);
        }
        let builder = WindowBuilder::new(self.store, self.floors, self.pipeline.clone());
        let window = match builder.build(ticker, asof) {
            Ok(w) => w,
            Err(WindowRejection::InsufficientHistory { got }) => {
                return skip(StockSkip::InsufficientHistory { got })
            }
            Err(WindowRejection::TooSparse { imputed, cells }) => {
                return skip(StockSkip::TooSparse { imputed, cells })
            }
        };
        match predict(self.params, &window) {
            Ok([up, _down]) => {
                StockScore { ticker: ticker.to_string(), asof, score: Some(up), skip: None }
            }
            Err(_) => skip(StockSkip::NumericFailure),
        }
    }

    /// Scores a universe of stocks at a date and ranks the result.
    pub fn score_stocks(&self, universe: &[String], asof: NaiveDate) -> Vec<StockScore> {
        let mut scores: Vec<StockScore> =
            universe.iter().map(|t| self.score_stock(t, asof)).collect();
        rank_stock_scores(&mut scores);
        scores
    }

    /// Scores ETFs at a date. `component_scores` caches per-stock outcomes
    /// across calls (pre-populate it from `score_stocks` to avoid rescoring
    /// universe members); components absent from the cache are scored and
    /// inserted. Returns ranked scores plus per-ETF exclusions.
    pub fn score_etfs(
        &self,
        etfs: &[EtfMeta],
        asof: NaiveDate,
        component_scores: &mut BTreeMap<String, StockScore>,
    ) -> EtfScoreBoard {
        let mut board = EtfScoreBoard::default();
        for meta in etfs {
            let ticker = meta.ticker.clone();
            if meta.inception > asof {
                board.exclusions.push(EtfExclusionRecord {
                    ticker,
                    reason: EtfExclusion::NotYetListed { inception: meta.inception },
                    coverage: None,
                });
                continue;
            }
            let latest = self.store.pdf_asof(&meta.ticker, asof).ok();
            let pdf = match latest {
                Some(pdf) if (asof - pdf.date).num_days() <= self.config.max_pdf_age_days => pdf,
                _ => {
                    board.exclusions.push(EtfExclusionRecord {
                        ticker,
                        reason: EtfExclusion::StalePdf { latest: latest.map(|p| p.date) },
                        coverage: None,
                    });
                    continue;
                }
            };

            let components: Vec<(f64, Option<f64>)> = pdf
                .holdings
                .iter()
                .map(|h| {
                    let entry = component_scores
                        .entry(h.ticker.clone())
                        .or_insert_with(|| self.score_stock(&h.ticker, asof));
                    (h.weight, entry.score)
                })
                .collect();

            match aggregate_weighted_scores(&components) {
                Some((score, coverage)) if coverage >= self.config.min_coverage => {
                    board.scores.push(EtfScore {
                        ticker,
                        asof,
                        score,
                        coverage,
                        pdf_date: pdf.date,
                    });
                }
                Some((_, coverage)) => {
                    board.exclusions.push(EtfExclusionRecord {
                        ticker,
                        reason: EtfExclusion::LowCoverage,
                        coverage: Some(coverage),
                    });
                }
                None => {
                    board.exclusions.push(EtfExclusionRecord {
                        ticker,
                        reason: EtfExclusion::LowCoverage,
                        coverage: Some(0.0),
                    });
                }
            }
        }
        board.scores.sort_by(|a, b| {
            b.score
                .partial_cmp(&a.score)
                .expect("scores are finite")
                .then_with(|| a.ticker.cmp(&b.ticker))
        });
        board.exclusions.sort_by(|a, b| a.ticker.cmp(&b.ticker));
        board
    }
}
