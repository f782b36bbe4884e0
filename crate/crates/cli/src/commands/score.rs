//! `score`: load the trained checkpoint and rank the stock and ETF universes
//! at one date. Covered names, with their up-probabilities, go to the score
//! files; everything skipped or excluded goes to a third file with the
//! reason, so the coverage of a ranking is always auditable.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use fundrank_core::net::{config_hash, load_checkpoint};
use fundrank_core::scoring::Scorer;

use crate::config::RunConfig;
use crate::lock::OutputLock;
use crate::CliError;

use super::{write_text, World};

pub const STOCK_SCORES_FILE: &str = "scores/stock_scores.csv";
pub const ETF_SCORES_FILE: &str = "scores/etf_scores.csv";
pub const EXCLUSIONS_FILE: &str = "scores/exclusions.csv";

pub fn run(config: &RunConfig, asof: Option<NaiveDate>) -> Result<(), CliError> {
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

    let asof = world.cal.business_day_at_or_before(asof.unwrap_or_else(|| world.schedule.last()));
    println!("asof {asof}");

    let scorer = Scorer::new(
        &world.store,
        &world.cal,
        &envelope.checkpoint.params,
        &envelope.floors,
        config.pipeline.pipeline(),
        config.pipeline.scoring(),
    )
    .map_err(CliError::Scoring)?;

    let stock_scores = scorer.score_stocks(&world.stocks, asof);
    let mut cache: BTreeMap<String, _> =
        stock_scores.iter().map(|s| (s.ticker.clone(), s.clone())).collect();
    let board = scorer.score_etfs(&world.etfs, asof, &mut cache);

    let mut stock_csv = String::from("rank,ticker,asof,score\n");
    let mut exclusions_csv = String::from("asof,universe,ticker,reason\n");
    let mut covered_stocks = 0usize;
    for score in &stock_scores {
        match (score.score, score.skip) {
            (Some(value), _) => {
                covered_stocks += 1;
                stock_csv.push_str(&format!(
                    "{covered_stocks},{},{},{}\n",
                    score.ticker, score.asof, value
                ));
            }
            (None, Some(skip)) => {
                exclusions_csv.push_str(&format!("{asof},stocks,{},{skip}\n", score.ticker));
            }
            (None, None) => unreachable!("uncovered scores always carry a skip reason"),
        }
    }

    let mut etf_csv = String::from("rank,ticker,asof,score,coverage,pdf_date\n");
    for (rank, score) in board.scores.iter().enumerate() {
        etf_csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            rank + 1,
            score.ticker,
            score.asof,
            score.score,
            score.coverage,
            score.pdf_date
        ));
    }
    for record in &board.exclusions {
        exclusions_csv.push_str(&format!("{asof},etfs,{},{}\n", record.ticker, record.reason));
    }

    write_text(&config.out(STOCK_SCORES_FILE), &stock_csv)?;
    write_text(&config.out(ETF_SCORES_FILE), &etf_csv)?;
    write_text(&config.out(EXCLUSIONS_FILE), &exclusions_csv)?;

    println!("stocks covered: {covered_stocks} of {}", world.stocks.len());
    println!("etfs covered: {} of {}", board.scores.len(), world.etfs.len());
    for score in board.scores.iter().take(5) {
        println!(
            "  {} score {:.4} (coverage {:.1}%)",
            score.ticker,
            score.score,
            score.coverage * 100.0
        );
    }
    println!("scores written to {}", config.out("scores").display());
    Ok(())
}
