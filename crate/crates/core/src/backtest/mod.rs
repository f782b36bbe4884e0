//! Quarterly-rebalanced portfolio simulation.
//!
//! At each rebalance date the engine picks the top names from that date's
//! score ranking, buys them equal-weighted at their most recent close (up to
//! five business days back), and holds — weights drift with prices — until
//! the next rebalance date, where the portfolio re-forms at the marked value.
//! Portfolio value starts at 1.0 and chains multiplicatively. Names without a
//! recent entry price are dropped with a warning and their weight spread over
//! the survivors. Between bars, and after a delisting, positions are marked
//! at their last close, which freezes their contribution like cash.

mod metrics;
mod report;

use chrono::NaiveDate;
use thiserror::Error;

use crate::calendar::BusinessCalendar;
use crate::store::Store;

pub use metrics::{
    annual_returns, annualized_return_pct, annualized_volatility_pct, performance,
    AnnualReturn, PerformanceSummary, Welford,
};
pub use report::{AnnualTable, ComparisonRow, ComparisonTable};

#[derive(Debug, Error)]
pub enum BacktestError {
    #[error("selection rule: {0}")]
    BadRule(String),
    #[error("no rebalance dates to trade")]
    NoRebalances,
    #[error("rebalance dates must be strictly increasing business days; {date} is not")]
    BadSchedule { date: NaiveDate },
    #[error("score for {ticker} at {date} is not finite")]
    BadScore { ticker: String, date: NaiveDate },
    #[error("value series has {got} points; need at least {need}")]
    TooShort { got: usize, need: usize },
    #[error("volatility is zero; the return/volatility ratio is undefined")]
    ZeroVolatility,
    #[error("value series must stay positive; got {value} at point {index}")]
    NonPositive { index: usize, value: f64 },
}

/// How many names a portfolio takes from the top of the ranking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SelectionRule {
    /// Every scored name, equal-weighted.
    All,
    /// The top `k` names (all of them, with a warning, when fewer are scored).
    Count(usize),
    /// The top `ceil(n * pct / 100)` of `n` scored names.
    Percent(f64),
}

impl SelectionRule {
    pub fn validate(&self) -> Result<(), BacktestError> {
        match *self {
            SelectionRule::All => Ok(()),
            SelectionRule::Count(k) if k >= 1 => Ok(()),
            SelectionRule::Count(k) => {
                Err(BacktestError::BadRule(format!("count must be at least 1, got {k}")))
            }
            SelectionRule::Percent(p) if p > 0.0 && p <= 100.0 => Ok(()),
            SelectionRule::Percent(p) => {
                Err(BacktestError::BadRule(format!("percent must be in (0, 100], got {p}")))
            }
        }
    }

    /// Row label for reports.
    pub fn label(&self) -> String {
        match *self {
            SelectionRule::All => "Equal weight".to_string(),
            SelectionRule::Count(k) => format!("Top {k}"),
            SelectionRule::Percent(p) => {
                if p.fract() == 0.0 {
                    format!("Top {:.0}%", p)
                } else {
                    format!("Top {p}%")
                }
            }
        }
    }
}

/// Scored names at one rebalance date. Order does not matter; selection
/// re-ranks by score descending, ticker ascending.
#[derive(Debug, Clone)]
pub struct RebalanceScores {
    pub date: NaiveDate,
    pub scores: Vec<(String, f64)>,
}

/// Ranks and takes the top of one date's scores. Returns the selected tickers
/// in rank order plus a warning when the request exceeded the supply.
pub fn select_top(
    scores: &[(String, f64)],
    rule: &SelectionRule,
) -> Result<(Vec<String>, Option<String>), BacktestError> {
    rule.validate()?;
    let mut ranked: Vec<&(String, f64)> = scores.iter().collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).expect("scores are finite").then_with(|| a.0.cmp(&b.0))
    });
    let n = ranked.len();
    let mut warning = None;
    let take = match *rule {
        SelectionRule::All => n,
        SelectionRule::Count(k) => {
            if k > n {
                warning = Some(format!("requested top {k} but only {n} names are scored"));
            }
            k.min(n)
        }
        SelectionRule::Percent(p) => (n as f64 * p / 100.0).ceil() as usize,
    };
    if take == 0 {
        warning = Some("no names scored; holding cash".to_string());
    }
    Ok((ranked.into_iter().take(take).map(|(t, _)| t.clone()).collect(), warning))
}

/// One position held over a rebalance period.
#[derive(Debug, Clone, PartialEq)]
pub struct HoldingRecord {
    pub ticker: String,
    /// Weight at entry (equal across the period's survivors).
    pub weight: f64,
    pub entry_price: f64,
}

/// One rebalance period: what was held from `start` until `end`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodRecord {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub holdings: Vec<HoldingRecord>,
}

/// A completed simulation: the business-day value series, the holdings
/// ledger, and any warnings raised along the way.
#[derive(Debug, Clone)]
pub struct BacktestResult {
    pub daily: Vec<(NaiveDate, f64)>,
    pub periods: Vec<PeriodRecord>,
    pub warnings: Vec<String>,
}

impl BacktestResult {
    pub fn final_value(&self) -> f64 {
        self.daily.last().map(|&(_, v)| v).unwrap_or(1.0)
    }
}

/// Simulates one portfolio over the whole schedule, ending at `end` (the last
/// period is the partial stretch from the final rebalance to `end`).
pub fn run_backtest(
    store: &Store,
    cal: &BusinessCalendar,
    schedule: &[RebalanceScores],
    end: NaiveDate,
    rule: &SelectionRule,
) -> Result<BacktestResult, BacktestError> {
    rule.validate()?;
    if schedule.is_empty() {
        return Err(BacktestError::NoRebalances);
    }
    for (i, reb) in schedule.iter().enumerate() {
        if !cal.is_business_day(reb.date)
            || (i > 0 && reb.date <= schedule[i - 1].date)
        {
            return Err(BacktestError::BadSchedule { date: reb.date });
        }
        for (ticker, score) in &reb.scores {
            if !score.is_finite() {
                return Err(BacktestError::BadScore { ticker: ticker.clone(), date: reb.date });
            }
        }
    }

    let start = schedule[0].date;
    let mut daily = vec![(start, 1.0)];
    let mut periods = Vec::new();
    let mut warnings = Vec::new();
    let mut value = 1.0;

    for (i, reb) in schedule.iter().enumerate() {
        let period_end =
            if i + 1 < schedule.len() { schedule[i + 1].date.min(end) } else { end };
        if period_end <= reb.date {
            break;
        }

        let (selected, warning) = select_top(&reb.scores, rule)?;
        if let Some(w) = warning {
            warnings.push(format!("{}: {w}", reb.date));
        }

        // Enter at the latest close within the lookback; drop names without
        // one and spread their weight over the survivors.
        let mut entries: Vec<(String, f64)> = Vec::with_capacity(selected.len());
        for ticker in selected {
            match store.close_within_lookback(&ticker, reb.date, cal) {
                Ok(close) => entries.push((ticker, close)),
                Err(_) => warnings.push(format!(
                    "{}: no entry price for {ticker} within {} business days; dropped",
                    reb.date,
                    crate::store::PRICE_LOOKBACK_DAYS
                )),
            }
        }

        let mut holdings = Vec::with_capacity(entries.len());
        let mut positions: Vec<(String, f64)> = Vec::with_capacity(entries.len());
        if entries.is_empty() {
            warnings.push(format!("{}: nothing to hold; carrying cash", reb.date));
        } else {
            let weight = 1.0 / entries.len() as f64;
            for (ticker, entry_price) in entries {
                let units = value * weight / entry_price;
                holdings.push(HoldingRecord { ticker: ticker.clone(), weight, entry_price });
                positions.push((ticker, units));
            }
        }

        for day in cal.business_days(reb.date, period_end).into_iter().skip(1) {
            if !positions.is_empty() {
                value = positions
                    .iter()
                    .map(|(ticker, units)| {
                        let (_, close) = store
                            .last_close_at_or_before(ticker, day)
                            .expect("entry bar exists at or before any marking day");
                        units * close
                    })
                    .sum();
            }
            daily.push((day, value));
        }
        periods.push(PeriodRecord { start: reb.date, end: period_end, holdings });
    }

    Ok(BacktestResult { daily, periods, warnings })
}

/// Normalizes an externally supplied close series (an index, say) to a value
/// series starting at 1.0 over `[start, end]`.
pub fn series_from_closes(
    closes: &[(NaiveDate, f64)],
    start: NaiveDate,
    end: NaiveDate,
) -> Result<Vec<(NaiveDate, f64)>, BacktestError> {
    let window: Vec<(NaiveDate, f64)> =
        closes.iter().copied().filter(|&(d, _)| d >= start && d <= end).collect();
    if window.len() < 2 {
        return Err(BacktestError::TooShort { got: window.len(), need: 2 });
    }
    let base = window[0].1;
    if !(base > 0.0) {
        return Err(BacktestError::NonPositive { index: 0, value: base });
    }
    Ok(window.into_iter().map(|(d, c)| (d, c / base)).collect())
}
