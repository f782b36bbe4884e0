//! `selftest`: generate a deterministic synthetic market with a planted
//! fundamental signal, run the full pipeline on it in-process (the same code
//! paths the other commands expose), and check seven gates that only hold if
//! ingestion, visibility, features, training, scoring, and the backtest all
//! work together. Exit code 3 with the failing gate's message otherwise.
//!
//! The market plants one quarter-ahead signal: a stock's return over quarter
//! `j` moves with its revenue change reported for quarter `j-1`, which is
//! visible at the start of `j`. A model with any skill therefore ranks the
//! next quarter's winners above its losers; a model that leaks future data
//! would score suspiciously above the structural ceiling, and a broken one
//! decays to coin-flipping. The gates bound both failure modes from below;
//! leak detection from above is the job of the point-in-time store (its
//! rewrite-immunity is asserted in the test suite).

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use fundrank_core::features::{build_dataset, DenominatorFloors, Split};
use fundrank_core::net::{load_checkpoint, TrainingSet};
use fundrank_core::synthetic::{generate, logistic_baseline, SyntheticSpec};

use crate::config::RunConfig;
use crate::CliError;

use super::World;

const GATE_COUNT: usize = 7;
/// Minimum validation accuracy for the independent linear probe.
const LINEAR_GATE: f64 = 0.70;
/// Minimum validation accuracy for the trained network.
const NETWORK_GATE: f64 = 0.65;
/// Scoring date used for the exclusion and determinism gates: late enough
/// that the pipeline is warm, early enough that the late-inception funds are
/// still unlisted.
fn probe_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2009, 12, 31).expect("valid probe date")
}

pub struct SelftestOptions {
    /// Keep artifacts here instead of a temporary directory.
    pub dir: Option<PathBuf>,
    pub seed: u64,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        Self { dir: None, seed: 7 }
    }
}

fn gate(idx: usize, ok: bool, detail: String) -> Result<(), CliError> {
    if ok {
        println!("[{idx}/{GATE_COUNT}] {detail}");
        Ok(())
    } else {
        Err(CliError::GateFailed(format!("[{idx}/{GATE_COUNT}] {detail}")))
    }
}

pub fn run(options: &SelftestOptions) -> Result<(), CliError> {
    let keep = options.dir.is_some();
    let tempdir;
    let root: PathBuf = match &options.dir {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| crate::io_err(dir, e))?;
            dir.clone()
        }
        None => {
            tempdir = tempfile::tempdir()
                .map_err(|e| crate::io_err(Path::new("(tempdir)"), e))?;
            tempdir.path().to_path_buf()
        }
    };
    println!("selftest workspace: {}{}", root.display(), if keep { "" } else { " (temporary)" });

    // Stage the synthetic market and a config that points at it, then reload
    // both through the same front door every real run uses.
    let spec = SyntheticSpec { seed: options.seed, ..SyntheticSpec::default() };
    let data = generate(&spec);
    data.write_csv_files(&root.join("data")).map_err(|e| crate::io_err(&root.join("data"), e))?;
    let config_path = root.join("run.toml");
    super::write_text(&config_path, &selftest_config(&spec))?;
    let config = RunConfig::load(&config_path)?;
    let world = World::load(&config)?;

    gate(
        1,
        world.store.statement_count() == data.statements.len()
            && world.store.price_count() == data.prices.len()
            && world.store.pdf_snapshot_count() == data.pdfs.len()
            && world.stocks == data.stock_universe
            && world.etfs == data.etf_universe,
        format!(
            "ingest reproduces the generated market ({} statements, {} bars, {} deposit files)",
            world.store.statement_count(),
            world.store.price_count(),
            world.store.pdf_snapshot_count()
        ),
    )?;

    // Visibility: nothing an as-of query returns may postdate the query, and
    // part of the record must still be in the future at mid-sample.
    let asof = config.splits.train_end;
    let mut visible = 0usize;
    let mut future_safe = true;
    for ticker in &world.stocks {
        for record in world.store.statements_asof(ticker, asof, usize::MAX) {
            visible += 1;
            if record.available_from > asof {
                future_safe = false;
            }
        }
    }
    gate(
        2,
        future_safe && visible < world.store.statement_count(),
        format!(
            "visibility guard holds at {asof} ({visible} of {} statements visible)",
            world.store.statement_count()
        ),
    )?;

    // An independent linear probe must decode the planted signal from the
    // assembled datasets; if it cannot, the features (not the network) broke.
    let floors = DenominatorFloors::fit(&world.store, &world.stocks, config.splits.train_end);
    let bounds = config.splits.boundaries();
    let pipeline = config.pipeline.pipeline();
    let train_samples = build_dataset(
        &world.store, &world.cal, &world.schedule, &world.stocks,
        &floors, pipeline, &bounds, Split::Train,
    )?;
    let val_samples = build_dataset(
        &world.store, &world.cal, &world.schedule, &world.stocks,
        &floors, pipeline, &bounds, Split::Validation,
    )?;
    let train_set = TrainingSet::from_samples(&train_samples)?;
    let val_set = TrainingSet::from_samples(&val_samples)?;
    let linear_acc = logistic_baseline(&train_set, &val_set);
    gate(
        3,
        linear_acc >= LINEAR_GATE,
        format!("linear probe decodes the planted signal (accuracy {linear_acc:.3} >= {LINEAR_GATE})"),
    )?;

    super::train::run(&config)?;
    let envelope = load_checkpoint(&config.out(super::train::CHECKPOINT_FILE))?;
    let net_acc = envelope.checkpoint.metric_value;
    gate(
        4,
        net_acc >= NETWORK_GATE,
        format!("trained network beats the accuracy gate ({net_acc:.3} >= {NETWORK_GATE})"),
    )?;

    super::score::run(&config, Some(probe_date()))?;
    super::backtest::run(&config)?;

    // The ranked top of the stock universe must beat holding everything.
    let stock_daily = super::report::parse_daily(&config.out("backtest/stocks/daily_value.csv"))?;
    let final_of = |label: &str| -> Result<f64, CliError> {
        stock_daily
            .iter()
            .find(|(l, _)| l == label)
            .and_then(|(_, series)| series.last().map(|&(_, v)| v))
            .ok_or_else(|| CliError::GateFailed(format!("missing backtest column {label:?}")))
    };
    let top = final_of("Top 20%")?;
    let market = final_of("Equal weight")?;
    gate(
        5,
        top > market,
        format!("top-ranked stocks beat the market (final {top:.4} vs {market:.4})"),
    )?;

    // ETF scores must aggregate through deposit files: funds listed at the
    // probe date are ranked, unlisted ones are excluded by reason, and the
    // ETF backtest produces a live value series.
    let exclusions = std::fs::read_to_string(config.out(super::score::EXCLUSIONS_FILE))
        .map_err(|e| crate::io_err(&config.out(super::score::EXCLUSIONS_FILE), e))?;
    let unlisted = exclusions
        .lines()
        .filter(|l| l.contains(",etfs,") && l.contains("not yet listed"))
        .count();
    let etf_scores = std::fs::read_to_string(config.out(super::score::ETF_SCORES_FILE))
        .map_err(|e| crate::io_err(&config.out(super::score::ETF_SCORES_FILE), e))?;
    let scored = etf_scores.lines().count().saturating_sub(1);
    let etf_daily = super::report::parse_daily(&config.out("backtest/etfs/daily_value.csv"))?;
    let etf_live = etf_daily
        .iter()
        .find(|(l, _)| l == "Top 3")
        .map(|(_, s)| s.iter().all(|&(_, v)| v.is_finite() && v > 0.0) && s.len() > 100)
        .unwrap_or(false);
    gate(
        6,
        scored + unlisted == world.etfs.len() && unlisted == 2 && etf_live,
        format!("etf aggregation covers the universe ({scored} ranked, {unlisted} awaiting listing)"),
    )?;

    // Re-scoring the same date must reproduce the files byte for byte.
    let score_files =
        [super::score::STOCK_SCORES_FILE, super::score::ETF_SCORES_FILE, super::score::EXCLUSIONS_FILE];
    let before: Vec<String> = score_files
        .iter()
        .map(|f| std::fs::read_to_string(config.out(f)).map_err(|e| crate::io_err(&config.out(f), e)))
        .collect::<Result<_, _>>()?;
    super::score::run(&config, Some(probe_date()))?;
    let after: Vec<String> = score_files
        .iter()
        .map(|f| std::fs::read_to_string(config.out(f)).map_err(|e| crate::io_err(&config.out(f), e)))
        .collect::<Result<_, _>>()?;
    gate(
        7,
        before == after,
        "same-date rescoring reproduces every score file byte for byte".to_string(),
    )?;

    println!("selftest ok ({GATE_COUNT}/{GATE_COUNT} gates)");
    Ok(())
}

/// The config written next to the synthetic data. Paths are relative so the
/// directory is relocatable; the training schedule is sized for a market two
/// orders of magnitude smaller than a real one.
fn selftest_config(spec: &SyntheticSpec) -> String {
    let bounds = spec.boundaries();
    format!(
        r#"seed = {seed}
index_label = "Index"

[paths]
statements = "data/statements.csv"
prices = "data/prices.csv"
pdfs = "data/pdfs.csv"
stocks = "data/stocks.csv"
etfs = "data/etfs.csv"
index = "data/index.csv"
output_dir = "out"

[splits]
start = "{start}"
train_end = "{train_end}"
validation_end = "{validation_end}"
test_end = "{test_end}"

[train]
maxiter = 1500
miniter = 300
eval_interval = 150
batch_size = 64
learning_rate = 3e-3

[[portfolios]]
universe = "stocks"
mode = "percent"
k = 20.0

[[portfolios]]
universe = "etfs"
mode = "count"
k = 3.0
"#,
        seed = spec.seed,
        start = bounds.start,
        train_end = bounds.train_end,
        validation_end = bounds.validation_end,
        test_end = bounds.test_end,
    )
}
