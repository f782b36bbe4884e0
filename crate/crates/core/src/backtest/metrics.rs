//! Performance statistics over daily value series.
//!
//! Returns are annualized geometrically at 252 trading days per year;
//! volatility is the sample standard deviation (n−1) of daily simple returns
//! scaled by √252; the reported ratio is annualized return over annualized
//! volatility with the risk-free rate taken as zero. The annual breakdown
//! chains each calendar year's last value against the previous year's, so the
//! yearly factors link geometrically to the total.

use chrono::{Datelike, NaiveDate};

use super::BacktestError;

/// Headline statistics of one value series, in percent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerformanceSummary {
    pub ann_return_pct: f64,
    pub ann_vol_pct: f64,
    pub sharpe: f64,
}

/// One calendar year's simple return, in percent; partial years as-is.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnnualReturn {
    pub year: i32,
    pub return_pct: f64,
}

/// Streaming mean/variance accumulator (Welford's algorithm), numerically
/// stable for long return series.
#[derive(Debug, Clone, Copy, Default)]
pub struct Welford {
    count: u64,
    mean: f64,
    m2: f64,
}

impl Welford {
    pub fn push(&mut self, x: f64) {
        self.count += 1;
        let delta = x - self.mean;
        self.mean += delta / self.count as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Sample variance (n−1 denominator); needs at least two observations.
    pub fn sample_variance(&self) -> Option<f64> {
        (self.count >= 2).then(|| self.m2 / (self.count - 1) as f64)
    }

    pub fn sample_std(&self) -> Option<f64> {
        self.sample_variance().map(f64::sqrt)
    }
}

fn check_positive(series: &[(NaiveDate, f64)]) -> Result<(), BacktestError> {
    for (index, &(_, value)) in series.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(BacktestError::NonPositive { index, value });
        }
    }
    Ok(())
}

/// Geometric annualization of the whole series' growth:
/// `((V_end / V_start)^(252 / (len - 1)) - 1) * 100`.
pub fn annualized_return_pct(series: &[(NaiveDate, f64)]) -> Result<f64, BacktestError> {
    if series.len() < 2 {
        return Err(BacktestError::TooShort { got: series.len(), need: 2 });
    }
    check_positive(series)?;
    let growth = series[series.len() - 1].1 / series[0].1;
    let periods = (series.len() - 1) as f64;
    Ok((growth.powf(252.0 / periods) - 1.0) * 100.0)
}

/// Sample standard deviation of daily simple returns, scaled to annual:
/// `std * sqrt(252) * 100`. Needs at least three points (two returns).
pub fn annualized_volatility_pct(series: &[(NaiveDate, f64)]) -> Result<f64, BacktestError> {
    if series.len() < 3 {
        return Err(BacktestError::TooShort { got: series.len(), need: 3 });
    }
    check_positive(series)?;
    let mut acc = Welford::default();
    for pair in series.windows(2) {
        acc.push(pair[1].1 / pair[0].1 - 1.0);
    }
    let std = acc.sample_std().expect("at least two returns");
    Ok(std * 252.0_f64.sqrt() * 100.0)
}

/// All three headline statistics. Zero volatility makes the ratio undefined
/// and is an error.
pub fn performance(series: &[(NaiveDate, f64)]) -> Result<PerformanceSummary, BacktestError> {
    let ann_return_pct = annualized_return_pct(series)?;
    let ann_vol_pct = annualized_volatility_pct(series)?;
    if ann_vol_pct == 0.0 {
        return Err(BacktestError::ZeroVolatility);
    }
    Ok(PerformanceSummary { ann_return_pct, ann_vol_pct, sharpe: ann_return_pct / ann_vol_pct })
}

/// Per-calendar-year simple returns: each year's last value over the previous
/// anchor (the series start for the first year). Years the series merely
/// touches on one point still get a row, so the yearly factors always link
/// back to the series' total growth.
pub fn annual_returns(series: &[(NaiveDate, f64)]) -> Result<Vec<AnnualReturn>, BacktestError> {
    if series.len() < 2 {
        return Err(BacktestError::TooShort { got: series.len(), need: 2 });
    }
    check_positive(series)?;
    let mut out = Vec::new();
    let mut anchor = series[0].1;
    let mut idx = 0;
    while idx < series.len() {
        let year = series[idx].0.year();
        let mut last = series[idx].1;
        while idx < series.len() && series[idx].0.year() == year {
            last = series[idx].1;
            idx += 1;
        }
        // The first year starts at the series start, not a year boundary; any
        // single-point first year would divide the anchor by itself, which is
        // a 0% row — that is the honest reading of a partial year.
        out.push(AnnualReturn { year, return_pct: (last / anchor - 1.0) * 100.0 });
        anchor = last;
    }
    Ok(out)
}
