//! Deterministic synthetic market for the end-to-end self-test.
//!
//! The generator plants a known signal: each stock's revenue follows a
//! multiplicative random walk, and the price return over a quarter equals a
//! shared market term plus `0.5` times the revenue change that became
//! visible at the quarter's start, plus small noise. A correctly wired
//! pipeline (point-in-time visibility, window construction, labeling,
//! training, scoring, portfolio selection) can therefore demonstrably learn
//! and monetize the signal, while a leak or an off-by-one-quarter bug
//! decorrelates features from labels and shows up as chance-level accuracy.
//!
//! Realism hazards are layered on top: most filings use the default
//! availability rule but a few percent arrive late, some feature cells are
//! missing, a couple of tickers have zero-volume days, one is suspended for
//! two weeks, two ETFs list late, and one ETF component has prices but no
//! filings. The module also carries an intentionally independent baseline
//! classifier (logistic regression under plain gradient descent) used to
//! certify that the generated data is learnable at all.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write as _;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calendar::BusinessCalendar;
use crate::features::{Label, SplitBoundaries};
use crate::net::TrainingSet;
use crate::store::{
    EtfMeta, PdfHolding, PdfSnapshot, PriceBar, StatementRecord, FEATURE_COLUMNS, FEATURE_COUNT,
};

/// Quarterly periods: index 0 ends 1999-12-31, index 42 ends 2010-06-30.
/// Statements cover indices 1..=40 (2000Q1 through 2009Q4).
const QUARTER_SLOTS: usize = 43;
const STATEMENT_FIRST: usize = 1;
const STATEMENT_LAST: usize = 40;

/// Strength of the planted signal in quarterly returns.
const SIGNAL_COEF: f64 = 0.5;
/// Revenue changes are uniform in ±this.
const DELTA_BOUND: f64 = 0.3;
/// Idiosyncratic return noise, uniform in ±this.
const NOISE_BOUND: f64 = 0.02;
/// Market-wide quarterly term, uniform in ±this plus a small drift.
const MARKET_BOUND: f64 = 0.04;
const MARKET_DRIFT: f64 = 0.01;
/// Amplitude of the intra-quarter price wiggle (zero at quarter anchors).
const WIGGLE: f64 = 0.008;
/// Probability that a non-revenue feature cell is missing.
const MISSING_CELL_PROB: f64 = 0.01;
/// Probability that a filing becomes available 15 business days late.
const LATE_FILER_PROB: f64 = 0.02;

/// Size and seed of a synthetic market.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub stock_count: usize,
    pub etf_count: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self { stock_count: 200, etf_count: 12, seed: 7 }
    }
}

impl SyntheticSpec {
    /// Split boundaries matched to the generated history: 23 labeled training
    /// dates, 6 validation dates, 3 labeled test dates plus one score-only
    /// date at the very end.
    pub fn boundaries(&self) -> SplitBoundaries {
        SplitBoundaries {
            start: NaiveDate::from_ymd_opt(2002, 6, 1).unwrap(),
            train_end: NaiveDate::from_ymd_opt(2008, 1, 1).unwrap(),
            validation_end: NaiveDate::from_ymd_opt(2009, 7, 1).unwrap(),
            test_end: NaiveDate::from_ymd_opt(2010, 6, 30).unwrap(),
        }
    }
}

/// Everything one generation run produces, ready to serialize or ingest.
#[derive(Debug, Clone)]
pub struct SyntheticData {
    pub statements: Vec<StatementRecord>,
    pub prices: Vec<PriceBar>,
    pub pdfs: Vec<PdfSnapshot>,
    pub stock_universe: Vec<String>,
    pub etf_universe: Vec<EtfMeta>,
    pub index: Vec<(NaiveDate, f64)>,
}

fn quarter_end(idx: usize) -> NaiveDate {
    let total = 3 + idx; // quarters since 1999Q1
    let year = 1999 + (total / 4) as i32;
    let (month, day) = [(3, 31), (6, 30), (9, 30), (12, 31)][total % 4];
    NaiveDate::from_ymd_opt(year, month, day).unwrap()
}

fn next_business_days(cal: &BusinessCalendar, mut day: NaiveDate, n: usize) -> NaiveDate {
    let mut left = n;
    while left > 0 {
        day = day.succ_opt().expect("date range is bounded");
        if cal.is_business_day(day) {
            left -= 1;
        }
    }
    day
}

fn close_at_or_before(series: &BTreeMap<NaiveDate, f64>, day: NaiveDate) -> f64 {
    *series.range(..=day).next_back().expect("series starts at or before the lookup").1
}

/// Generates a full synthetic market, deterministically in `spec.seed`.
pub fn generate(spec: &SyntheticSpec) -> SyntheticData {
    assert!(spec.stock_count >= 10, "need a usable cross-section");
    assert!(spec.etf_count >= 1 && spec.etf_count <= 40, "etf count out of range");
    let cal = BusinessCalendar::us_market();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let anchors: Vec<NaiveDate> =
        (0..QUARTER_SLOTS).map(|j| cal.business_day_at_or_before(quarter_end(j))).collect();
    let grid = cal.business_days(anchors[0], anchors[QUARTER_SLOTS - 1]);

    // Market-wide quarterly term, shared by every stock (and removed by the
    // per-date label neutralization).
    let market: Vec<f64> = (0..QUARTER_SLOTS)
        .map(|_| MARKET_DRIFT + rng.random_range(-MARKET_BOUND..MARKET_BOUND))
        .collect();

    let suspension_start = NaiveDate::from_ymd_opt(2005, 5, 2).unwrap();
    let suspension_end = NaiveDate::from_ymd_opt(2005, 5, 13).unwrap();

    let mut statements = Vec::new();
    let mut prices = Vec::new();
    let mut stock_universe = Vec::with_capacity(spec.stock_count);
    // Per-ticker daily closes, kept for ETF and index synthesis.
    let mut close_series: BTreeMap<String, BTreeMap<NaiveDate, f64>> = BTreeMap::new();

    // One extra price-only series: an ETF component with no filings, so some
    // deposit files are slightly under-covered.
    let price_only = "X999".to_string();

    for s in 0..=spec.stock_count {
        let is_price_only = s == spec.stock_count;
        let ticker =
            if is_price_only { price_only.clone() } else { format!("S{s:03}") };
        if !is_price_only {
            stock_universe.push(ticker.clone());
        }

        // Revenue walk (the signal carrier) and independent noise walks for
        // the other fundamentals.
        let mut feature_values = [[0.0f64; QUARTER_SLOTS]; FEATURE_COUNT];
        let mut delta = [0.0f64; QUARTER_SLOTS];
        for i in 0..FEATURE_COUNT {
            feature_values[i][STATEMENT_FIRST] = rng.random_range(20.0..200.0);
        }
        for q in STATEMENT_FIRST + 1..=STATEMENT_LAST {
            delta[q] = rng.random_range(-DELTA_BOUND..DELTA_BOUND);
            feature_values[0][q] = feature_values[0][q - 1] * (1.0 + delta[q]);
            for i in 1..FEATURE_COUNT {
                feature_values[i][q] =
                    feature_values[i][q - 1] * (1.0 + rng.random_range(-0.2..0.2));
            }
        }

        // Quarterly price returns: the revenue change that became visible at
        // the segment's start, plus market and noise. The change of quarter
        // q is first visible at the anchor of quarter q+1, so segment j
        // (anchor j to anchor j+1) pays off delta[j - 1].
        let base_price = if is_price_only { 75.0 } else { 20.0 + s as f64 * 0.5 };
        let mut anchor_price = [0.0f64; QUARTER_SLOTS];
        anchor_price[0] = base_price;
        for j in 0..QUARTER_SLOTS - 1 {
            let signal = if !is_price_only && j >= 1 && (STATEMENT_FIRST + 1..=STATEMENT_LAST).contains(&(j - 1))
            {
                delta[j - 1]
            } else {
                0.0
            };
            let ret =
                market[j + 1] + SIGNAL_COEF * signal + rng.random_range(-NOISE_BOUND..NOISE_BOUND);
            anchor_price[j + 1] = anchor_price[j] * (1.0 + ret);
        }

        // Daily bars: geometric interpolation between anchors plus a wiggle
        // that vanishes at the anchors, so quarter-over-quarter returns are
        // exactly the planted ones.
        let phase = s as f64 * 0.7;
        let suspended = !is_price_only && s == 13;
        let zero_volume_prone = !is_price_only && s % 17 == 5;
        let mut series = BTreeMap::new();
        for j in 0..QUARTER_SLOTS - 1 {
            let days = cal.business_days(anchors[j], anchors[j + 1]);
            let n = (days.len() - 1) as f64;
            let growth = anchor_price[j + 1] / anchor_price[j];
            for (k, &day) in days.iter().enumerate() {
                if j > 0 && k == 0 {
                    continue; // anchor bar already written by the previous segment
                }
                if suspended && (suspension_start..=suspension_end).contains(&day) {
                    continue;
                }
                let frac = k as f64 / n;
                let wiggle = 1.0
                    + WIGGLE
                        * (std::f64::consts::PI * frac).sin()
                        * (2.399 * k as f64 + phase).sin();
                let close = anchor_price[j] * growth.powf(frac) * wiggle;
                let volume = if zero_volume_prone && day.ordinal() % 97 < 2 {
                    0.0
                } else {
                    1.0e5 * (1.5 + (0.1 * k as f64 + s as f64).sin())
                };
                series.insert(day, close);
                prices.push(PriceBar { ticker: ticker.clone(), date: day, close, volume });
            }
        }
        close_series.insert(ticker.clone(), series);

        if is_price_only {
            continue;
        }
        for q in STATEMENT_FIRST..=STATEMENT_LAST {
            let period_end = quarter_end(q);
            let derived = cal.derive_available_from(period_end);
            let available_from = if rng.random_range(0.0..1.0) < LATE_FILER_PROB {
                next_business_days(&cal, derived, 15)
            } else {
                derived
            };
            let mut features = [None; FEATURE_COUNT];
            for (i, feature) in features.iter_mut().enumerate() {
                // Revenue is always present; other cells go missing rarely.
                if i > 0 && rng.random_range(0.0..1.0) < MISSING_CELL_PROB {
                    continue;
                }
                *feature = Some(feature_values[i][q]);
            }
            statements.push(StatementRecord {
                ticker: ticker.clone(),
                period_end,
                available_from,
                features,
            });
        }
    }

    // ETFs: buy-and-hold baskets over a deterministic component pick. Deposit
    // files publish the drifted (current) weights each quarter, and the ETF's
    // own bars are its basket NAV, so files, prices, and components agree.
    let mut pdfs = Vec::new();
    let mut etf_universe = Vec::with_capacity(spec.etf_count);
    for e in 0..spec.etf_count {
        let ticker = format!("E{e:02}");
        let late = e + 2 >= spec.etf_count; // the last two list late
        let inception = if late {
            NaiveDate::from_ymd_opt(2010, 1, 15).unwrap()
        } else {
            anchors[0]
        };
        etf_universe.push(EtfMeta { ticker: ticker.clone(), inception });

        let target = 15 + (e % 11);
        let mut picked = BTreeSet::new();
        let mut probe = 0usize;
        while picked.len() < target.min(spec.stock_count) {
            picked.insert(format!("S{:03}", (7 * e + 13 * probe + 1) % spec.stock_count));
            probe += 1;
        }
        let mut basket: Vec<(String, f64)> = picked
            .into_iter()
            .enumerate()
            .map(|(k, t)| (t, 1.0 + ((k * 17 + e * 3) % 10) as f64 / 5.0))
            .collect();
        if e < 2 {
            basket.push((price_only.clone(), 0.6));
        }
        let raw_total: f64 = basket.iter().map(|(_, w)| w).sum();
        let basket: Vec<(String, f64)> =
            basket.into_iter().map(|(t, w)| (t, w / raw_total)).collect();

        let start_day = *grid.iter().find(|&&d| d >= inception).expect("inception inside grid");
        let reference: Vec<(String, f64, f64)> = basket
            .iter()
            .map(|(t, w)| (t.clone(), *w, close_at_or_before(&close_series[t], start_day)))
            .collect();
        let nav_at = |day: NaiveDate| -> f64 {
            100.0
                * reference
                    .iter()
                    .map(|(t, w, p0)| w * close_at_or_before(&close_series[t], day) / p0)
                    .sum::<f64>()
        };

        for &day in grid.iter().filter(|&&d| d >= start_day) {
            prices.push(PriceBar {
                ticker: ticker.clone(),
                date: day,
                close: nav_at(day),
                volume: 5.0e5,
            });
        }
        for &anchor in anchors.iter().filter(|&&a| a >= start_day) {
            let drifted: Vec<(String, f64)> = reference
                .iter()
                .map(|(t, w, p0)| (t.clone(), w * close_at_or_before(&close_series[t], anchor) / p0))
                .collect();
            let total: f64 = drifted.iter().map(|(_, w)| w).sum();
            pdfs.push(PdfSnapshot {
                etf: ticker.clone(),
                date: anchor,
                holdings: drifted
                    .into_iter()
                    .map(|(t, w)| PdfHolding { ticker: t, weight: w / total })
                    .collect(),
            });
        }
    }

    // Broad-market index: mean normalized stock price, scaled to 100.
    let index: Vec<(NaiveDate, f64)> = grid
        .iter()
        .map(|&day| {
            let mean = stock_universe
                .iter()
                .map(|t| {
                    let series = &close_series[t];
                    close_at_or_before(series, day) / series.values().next().unwrap()
                })
                .sum::<f64>()
                / stock_universe.len() as f64;
            (day, 100.0 * mean)
        })
        .collect();

    SyntheticData { statements, prices, pdfs, stock_universe, etf_universe, index }
}

impl SyntheticData {
    /// Writes the six canonical input files into `dir` (created if needed):
    /// `statements.csv`, `prices.csv`, `pdfs.csv`, `stocks.csv`, `etfs.csv`,
    /// `index.csv`. Statements whose availability equals the default rule
    /// leave the cell blank, exercising the derivation path at ingest.
    pub fn write_csv_files(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        let cal = BusinessCalendar::us_market();

        let mut out = String::from("ticker,period_end,available_from");
        for name in FEATURE_COLUMNS {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for rec in &self.statements {
            let available = if rec.available_from == cal.derive_available_from(rec.period_end) {
                String::new()
            } else {
                rec.available_from.to_string()
            };
            out.push_str(&format!("{},{},{}", rec.ticker, rec.period_end, available));
            for cell in &rec.features {
                out.push(',');
                if let Some(v) = cell {
                    out.push_str(&v.to_string());
                }
            }
            out.push('\n');
        }
        write_file(&dir.join("statements.csv"), &out)?;

        let mut out = String::from("ticker,date,close,volume\n");
        for bar in &self.prices {
            out.push_str(&format!("{},{},{},{}\n", bar.ticker, bar.date, bar.close, bar.volume));
        }
        write_file(&dir.join("prices.csv"), &out)?;

        let mut out = String::from("etf,date,ticker,weight\n");
        for snap in &self.pdfs {
            for h in &snap.holdings {
                out.push_str(&format!("{},{},{},{}\n", snap.etf, snap.date, h.ticker, h.weight));
            }
        }
        write_file(&dir.join("pdfs.csv"), &out)?;

        let mut out = String::from("ticker\n");
        for t in &self.stock_universe {
            out.push_str(t);
            out.push('\n');
        }
        write_file(&dir.join("stocks.csv"), &out)?;

        let mut out = String::from("etf,inception\n");
        for meta in &self.etf_universe {
            out.push_str(&format!("{},{}\n", meta.ticker, meta.inception));
        }
        write_file(&dir.join("etfs.csv"), &out)?;

        let mut out = String::from("date,close\n");
        for (day, close) in &self.index {
            out.push_str(&format!("{day},{close}\n"));
        }
        write_file(&dir.join("index.csv"), &out)
    }
}

fn write_file(path: &Path, content: &str) -> std::io::Result<()> {
    let mut file = std::fs::File::create(path)?;
    file.write_all(content.as_bytes())
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Independent baseline: logistic regression trained by full-batch gradient
/// descent on column-standardized inputs. Shares nothing with the neural
/// classifier beyond the data types, so it certifies that a dataset is
/// learnable (or exposes one that is not) without trusting the main model.
/// Returns validation accuracy.
pub fn logistic_baseline(train: &TrainingSet, val: &TrainingSet) -> f64 {
    assert!(!train.is_empty() && !val.is_empty(), "baseline needs data on both sides");
    assert_eq!(train.input_dim(), val.input_dim(), "dimension mismatch");
    let d = train.input_dim();
    let n = train.len() as f64;

    let mean = train.inputs.mean_axis(Axis(0)).expect("nonempty");
    let mut std = Array1::zeros(d);
    for c in 0..d {
        let col = train.inputs.column(c);
        let var = col.iter().map(|v| (v - mean[c]) * (v - mean[c])).sum::<f64>() / n;
        std[c] = var.sqrt().max(1e-9);
    }
    let standardize = |inputs: &Array2<f64>| {
        let mut z = inputs.clone();
        for mut row in z.rows_mut() {
            for c in 0..d {
                row[c] = (row[c] - mean[c]) / std[c];
            }
        }
        z
    };
    let xt = standardize(&train.inputs);
    let xv = standardize(&val.inputs);
    let y: Array1<f64> = train
        .labels
        .iter()
        .map(|l| if *l == Label::Up { 1.0 } else { 0.0 })
        .collect();

    let mut w: Array1<f64> = Array1::zeros(d);
    let mut b = 0.0f64;
    let lr = 0.5;
    for _ in 0..400 {
        let p = (xt.dot(&w) + b).mapv(sigmoid);
        let err = &p - &y;
        let gw = xt.t().dot(&err) / n;
        let gb = err.sum() / n;
        w -= &(lr * &gw);
        b -= lr * gb;
    }

    let pv = (xv.dot(&w) + b).mapv(sigmoid);
    let hits = pv
        .iter()
        .zip(&val.labels)
        .filter(|(p, l)| (**p >= 0.5) == (**l == Label::Up))
        .count();
    hits as f64 / val.labels.len() as f64
}
