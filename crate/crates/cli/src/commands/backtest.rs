//! `backtest`: score every quarter-end rebalance date in the configured
//! range, simulate the configured portfolios (plus an equal-weighted
//! baseline) on stocks and on ETFs, and write comparison tables, calendar
//! year breakdowns, the holdings ledger, and the daily value series for each
//! group. The benchmark index, when configured, appears as a column sampled
//! on the portfolios' trading days.

use std::collections::BTreeMap;
use std::path::PathBuf;

use chrono::NaiveDate;
use fundrank_core::backtest::{
    annual_returns, performance, run_backtest, AnnualTable, BacktestResult, ComparisonRow,
    ComparisonTable, RebalanceScores, SelectionRule,
};
use fundrank_core::net::{config_hash, load_checkpoint};
use fundrank_core::scoring::Scorer;

use crate::config::{PortfolioUniverse, RunConfig};
use crate::lock::OutputLock;
use crate::CliError;

use super::{write_text, World};

/// One simulated portfolio with its label, in presentation order.
struct GroupResult {
    label: String,
    result: BacktestResult,
}

pub fn run(config: &RunConfig) -> Result<(), CliError> {
    let world = World::load(config)?;
    let _lock = OutputLock::acquire(&config.paths.output_dir)?;

    let envelope = load_checkpoint(&config.out(super::train::CHECKPOINT_FILE))?;
    if envelope.config_hash != config_hash(&config.train) {
        return Err(CliError::Config(
            "checkpoint was trained under a different [train] section; \
             retrain or restore the original configuration"
                .into(),
        ));
    }
    let scorer = Scorer::new(
        &world.store,
        &world.cal,
        &envelope.checkpoint.params,
        &envelope.floors,
        config.pipeline.pipeline(),
        config.pipeline.scoring(),
    )
    .map_err(CliError::Scoring)?;

    // Positions are entered at each quarter-end strictly before the backtest
    // end, so the final period always has at least one day of market moves.
    let end = world.cal.business_day_at_or_before(config.splits.test_end);
    let rebalance_dates: Vec<NaiveDate> = world
        .schedule
        .dates()
        .iter()
        .copied()
        .filter(|&d| d >= config.splits.backtest_start() && d < end)
        .collect();
    if rebalance_dates.is_empty() {
        return Err(CliError::Config(format!(
            "no rebalance dates between {} and {end}",
            config.splits.backtest_start()
        )));
    }
    println!(
        "backtest: {} rebalances from {} to {end}",
        rebalance_dates.len(),
        rebalance_dates[0]
    );

    // Score both universes once per rebalance date; only covered names carry
    // into selection.
    let mut stock_schedule: Vec<RebalanceScores> = Vec::new();
    let mut etf_schedule: Vec<RebalanceScores> = Vec::new();
    for &date in &rebalance_dates {
        let stock_scores = scorer.score_stocks(&world.stocks, date);
        let mut cache: BTreeMap<String, _> =
            stock_scores.iter().map(|s| (s.ticker.clone(), s.clone())).collect();
        let board = scorer.score_etfs(&world.etfs, date, &mut cache);
        stock_schedule.push(RebalanceScores {
            date,
            scores: stock_scores
                .iter()
                .filter_map(|s| s.score.map(|v| (s.ticker.clone(), v)))
                .collect(),
        });
        etf_schedule.push(RebalanceScores {
            date,
            scores: board.scores.iter().map(|s| (s.ticker.clone(), s.score)).collect(),
        });
    }

    let groups: [(PortfolioUniverse, &[RebalanceScores], bool); 2] = [
        (PortfolioUniverse::Stocks, &stock_schedule, world.stocks.is_empty()),
        (PortfolioUniverse::Etfs, &etf_schedule, world.etfs.is_empty()),
    ];
    for (universe, schedule, empty) in groups {
        if empty {
            println!("{}: universe empty, skipped", universe.as_str());
            continue;
        }
        let mut rules = vec![SelectionRule::All];
        for spec in &config.portfolios {
            if spec.universe == universe {
                rules.push(spec.rule()?);
            }
        }
        let mut results = Vec::new();
        for rule in &rules {
            let result = run_backtest(&world.store, &world.cal, schedule, end, rule)?;
            for warning in &result.warnings {
                log::warn!("{}/{}: {warning}", universe.as_str(), rule.label());
            }
            results.push(GroupResult { label: rule.label(), result });
        }
        let dir = config.out(&format!("backtest/{}", universe.as_str()));
        write_group(config, &world, &dir, &results)?;
        println!("{} results written to {}", universe.as_str(), dir.display());
    }
    Ok(())
}

/// Samples the benchmark at-or-before each portfolio trading day, normalized
/// to 1 at the first sampled day so all columns start at the same level.
fn align_index(index: &[(NaiveDate, f64)], days: &[NaiveDate]) -> Vec<(NaiveDate, f64)> {
    let mut aligned = Vec::new();
    let mut base: Option<f64> = None;
    for &day in days {
        let at = index.partition_point(|&(d, _)| d <= day);
        if at == 0 {
            continue; // benchmark starts later than the portfolio
        }
        let value = index[at - 1].1;
        let anchor = *base.get_or_insert(value);
        aligned.push((day, value / anchor));
    }
    aligned
}

fn write_group(
    config: &RunConfig,
    world: &World,
    dir: &PathBuf,
    results: &[GroupResult],
) -> Result<(), CliError> {
    let days: Vec<NaiveDate> = results[0].result.daily.iter().map(|&(d, _)| d).collect();
    for r in results {
        debug_assert!(r.result.daily.iter().map(|&(d, _)| d).eq(days.iter().copied()));
    }
    let index_column = world
        .index
        .as_deref()
        .map(|series| (config.index_label.clone(), align_index(series, &days)))
        .filter(|(_, aligned)| aligned.len() >= 3);

    // Daily value series: one column per portfolio, benchmark first. A blank
    // cell means the benchmark had no value yet that day.
    let mut columns: Vec<(&str, &[(NaiveDate, f64)])> = Vec::new();
    if let Some((label, aligned)) = &index_column {
        columns.push((label, aligned));
    }
    for r in results {
        columns.push((&r.label, &r.result.daily));
    }
    let mut daily_csv = String::from("date");
    for (label, _) in &columns {
        daily_csv.push(',');
        daily_csv.push_str(label);
    }
    daily_csv.push('\n');
    for &day in &days {
        daily_csv.push_str(&day.to_string());
        for (_, series) in &columns {
            daily_csv.push(',');
            if let Ok(at) = series.binary_search_by_key(&day, |&(d, _)| d) {
                daily_csv.push_str(&series[at].1.to_string());
            }
        }
        daily_csv.push('\n');
    }
    write_text(&dir.join("daily_value.csv"), &daily_csv)?;

    // Headline and calendar-year tables over the same columns.
    let mut comparison = ComparisonTable::default();
    let mut annual_columns = Vec::new();
    for (label, series) in &columns {
        comparison.rows.push(ComparisonRow {
            label: label.to_string(),
            summary: performance(series)?,
        });
        annual_columns.push((label.to_string(), annual_returns(series)?));
    }
    let annual = AnnualTable::build(&annual_columns);
    write_text(&dir.join("summary.csv"), &comparison.to_csv())?;
    write_text(&dir.join("summary.md"), &comparison.to_markdown())?;
    write_text(&dir.join("annual.csv"), &annual.to_csv())?;
    write_text(&dir.join("annual.md"), &annual.to_markdown())?;
    print!("{}", comparison.to_markdown());

    let mut holdings_csv = String::from("portfolio,period_start,period_end,ticker,weight,entry_price\n");
    for r in results {
        for period in &r.result.periods {
            for h in &period.holdings {
                holdings_csv.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    r.label, period.start, period.end, h.ticker, h.weight, h.entry_price
                ));
            }
        }
    }
    write_text(&dir.join("holdings.csv"), &holdings_csv)?;
    Ok(())
}
