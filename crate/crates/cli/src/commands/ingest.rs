//! `ingest`: load and validate every input file, then print what was found.
//! Writes nothing; its job is to fail fast (exit 2) on malformed data and to
//! give the operator a quick inventory before a long run.

use std::collections::BTreeSet;

use crate::config::RunConfig;
use crate::CliError;

use super::World;

pub fn run(config: &RunConfig) -> Result<(), CliError> {
    let world = World::load(config)?;

    let statement_tickers: BTreeSet<&str> = world.store.statement_tickers().collect();
    println!(
        "statements: {} rows across {} tickers",
        world.store.statement_count(),
        statement_tickers.len()
    );
    println!("prices: {} bars", world.store.price_count());
    println!("deposit files: {} snapshots", world.store.pdf_snapshot_count());
    println!("stock universe: {} tickers", world.stocks.len());
    println!("etf universe: {} funds", world.etfs.len());
    match &world.index {
        Some(series) => println!("index: {} points", series.len()),
        None => println!("index: none"),
    }
    println!(
        "schedule: {} rebalance dates from {} to {}",
        world.schedule.dates().len(),
        world.schedule.first(),
        world.schedule.last()
    );

    // Universe members with no filings are legal (they are skipped at scoring
    // time) but usually indicate a data-delivery gap worth flagging.
    let unfiled: Vec<&String> = world
        .stocks
        .iter()
        .filter(|t| !statement_tickers.contains(t.as_str()))
        .collect();
    if !unfiled.is_empty() {
        log::warn!("{} universe stocks have no statements (first: {})", unfiled.len(), unfiled[0]);
    }

    println!("ingest ok");
    Ok(())
}
