//! Properties of the simulator and its metrics: portfolio value is exactly
//! the marked value of the shares bought at entry (no value leaks between
//! rebalances), selection by true forward return is monotone in portfolio
//! size, runs replay bit for bit, and the summary metrics satisfy their
//! defining identities on arbitrary series.

use chrono::NaiveDate;
use fundrank_core::backtest::{
    annual_returns, performance, run_backtest, select_top, BacktestResult, RebalanceScores,
    SelectionRule,
};
use fundrank_core::calendar::{BusinessCalendar, RebalanceCalendar};
use fundrank_core::store::{PriceBar, Store};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TICKERS: [&str; 6] = ["ALP", "BRV", "CHA", "DEL", "ECH", "FOX"];

/// Six random geometric walks on the business-day grid, one bar per day.
fn random_market(seed: u64) -> (Store, BusinessCalendar, Vec<NaiveDate>) {
    let cal = BusinessCalendar::us_market();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = NaiveDate::from_ymd_opt(2015, 1, 2).unwrap();
    let end = NaiveDate::from_ymd_opt(2016, 12, 30).unwrap();
    let grid = cal.business_days(start, end);
    let mut store = Store::new();
    for (t, ticker) in TICKERS.iter().enumerate() {
        let mut log_price = (30.0 + 10.0 * t as f64).ln();
        for &day in &grid {
            log_price += 0.02 * (2.0 * rng.random::<f64>() - 1.0);
            store.insert_price(PriceBar {
                ticker: ticker.to_string(),
                date: day,
                close: log_price.exp(),
                volume: 1000.0,
            });
        }
    }
    let schedule = RebalanceCalendar::from_range(&cal, start, end).unwrap();
    (store, cal, schedule.dates().to_vec())
}

/// Recomputes the whole value series from the holdings ledger and raw closes:
/// within a period the value must equal entry value times the marked growth
/// of the equal-weighted basket bought at entry.
fn assert_value_is_marked_shares(store: &Store, result: &BacktestResult) {
    let value_at = |day: NaiveDate| -> f64 {
        result
            .daily
            .iter()
            .find(|(d, _)| *d == day)
            .unwrap_or_else(|| panic!("no value recorded on {day}"))
            .1
    };
    for period in &result.periods {
        let entry_value = value_at(period.start);
        for &(day, recorded) in
            result.daily.iter().filter(|(d, _)| *d > period.start && *d <= period.end)
        {
            let oracle = if period.holdings.is_empty() {
                entry_value // all cash
            } else {
                entry_value
                    * period
                        .holdings
                        .iter()
                        .map(|h| {
                            let (_, close) = store
                                .last_close_at_or_before(&h.ticker, day)
                                .expect("held names have an entry bar");
                            h.weight * close / h.entry_price
                        })
                        .sum::<f64>()
            };
            assert!(
                (recorded - oracle).abs() <= 1e-9 * oracle.abs().max(1.0),
                "{day}: recorded {recorded}, marked shares give {oracle}"
            );
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Whatever the scores and the portfolio size, the simulated value series
    /// is exactly the marked value of the shares bought at each rebalance,
    /// the run replays bit for bit, and the metrics satisfy their identities.
    #[test]
    fn value_series_is_conserved_and_deterministic(
        seed in 0u64..5000,
        k in 1usize..7,
        score_seed in 0u64..5000,
    ) {
        let (store, cal, dates) = random_market(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(score_seed);
        let schedule: Vec<RebalanceScores> = dates[..dates.len() - 1]
            .iter()
            .map(|&date| RebalanceScores {
                date,
                scores: TICKERS
                    .iter()
                    .map(|t| (t.to_string(), rng.random::<f64>()))
                    .collect(),
            })
            .collect();
        let end = *dates.last().unwrap();
        let rule = SelectionRule::Count(k);

        let result = run_backtest(&store, &cal, &schedule, end, &rule).unwrap();
        prop_assert!(result.daily.first().unwrap().0 == schedule[0].date);
        prop_assert!(result.daily.last().unwrap().0 == end);
        prop_assert!((result.daily.first().unwrap().1 - 1.0).abs() < 1e-15);
        assert_value_is_marked_shares(&store, &result);

        // Bitwise replay.
        let again = run_backtest(&store, &cal, &schedule, end, &rule).unwrap();
        prop_assert_eq!(result.daily.len(), again.daily.len());
        for (a, b) in result.daily.iter().zip(&again.daily) {
            prop_assert_eq!(a.0, b.0);
            prop_assert_eq!(a.1.to_bits(), b.1.to_bits());
        }

        // Metric identities on the produced series.
        let summary = performance(&result.daily).unwrap();
        prop_assert!(
            (summary.sharpe - summary.ann_return_pct / summary.ann_vol_pct).abs() < 1e-12
        );
        let years = annual_returns(&result.daily).unwrap();
        let linked: f64 = years.iter().map(|y| 1.0 + y.return_pct / 100.0).product();
        let total = result.final_value() / result.daily[0].1;
        prop_assert!(
            (linked - total).abs() < 1e-9 * total,
            "annual factors {linked} do not link to total growth {total}"
        );
    }

    /// Percent selection takes an exact ceiling and ranks like count
    /// selection does.
    #[test]
    fn percent_selection_takes_the_ceiling(
        n in 1usize..40,
        pct in 1.0f64..100.0,
    ) {
        let scores: Vec<(String, f64)> =
            (0..n).map(|i| (format!("T{i:02}"), (i as f64 * 0.37).sin())).collect();
        let (picked, _) = select_top(&scores, &SelectionRule::Percent(pct)).unwrap();
        let want = ((n as f64) * pct / 100.0).ceil() as usize;
        prop_assert_eq!(picked.len(), want.min(n));
        let (by_count, _) = select_top(&scores, &SelectionRule::Count(want)).unwrap();
        prop_assert_eq!(picked, by_count);
    }
}

/// With scores equal to realized forward returns, a more concentrated
/// portfolio can never finish behind a less concentrated one: every period's
/// top-k mean return dominates the top-(k+1) mean.
#[test]
fn perfect_foresight_is_monotone_in_concentration() {
    let (store, cal, dates) = random_market(99);
    let scored = &dates[..dates.len() - 1];
    let end = *dates.last().unwrap();
    let schedule: Vec<RebalanceScores> = scored
        .iter()
        .enumerate()
        .map(|(i, &date)| RebalanceScores {
            date,
            scores: TICKERS
                .iter()
                .map(|t| {
                    let next = if i + 1 < scored.len() { scored[i + 1] } else { end };
                    (t.to_string(), store.forward_return(t, date, next, &cal).unwrap())
                })
                .collect(),
        })
        .collect();

    let mut finals = Vec::new();
    for k in 1..=TICKERS.len() {
        let result = run_backtest(&store, &cal, &schedule, end, &SelectionRule::Count(k)).unwrap();
        assert!(result.warnings.is_empty(), "unexpected warnings: {:?}", result.warnings);
        finals.push(result.final_value());
    }
    let all = run_backtest(&store, &cal, &schedule, end, &SelectionRule::All).unwrap();
    assert!((all.final_value() - finals[TICKERS.len() - 1]).abs() < 1e-12);
    for pair in finals.windows(2) {
        assert!(
            pair[0] >= pair[1] - 1e-9,
            "concentration inversion: {} then {}",
            pair[0],
            pair[1]
        );
    }
}

/// The value series never skips a business day between the first rebalance
/// and the end date.
#[test]
fn daily_series_covers_every_business_day() {
    let (store, cal, dates) = random_market(7);
    let schedule: Vec<RebalanceScores> = dates[..3]
        .iter()
        .map(|&date| RebalanceScores {
            date,
            scores: vec![("ALP".to_string(), 1.0), ("BRV".to_string(), 0.5)],
        })
        .collect();
    let end = dates[4];
    let result = run_backtest(&store, &cal, &schedule, end, &SelectionRule::All).unwrap();
    let grid = cal.business_days(dates[0], end);
    assert_eq!(result.daily.len(), grid.len());
    for (got, want) in result.daily.iter().zip(&grid) {
        assert_eq!(got.0, *want);
    }
}
