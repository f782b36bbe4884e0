//! Percent-change feature windows and cross-sectionally neutralized labels.
//!
//! A sample at rebalance date `t` is built from the nine most recent
//! statements visible at `t`: eight consecutive percent changes per feature,
//! giving an 8×f window (rows oldest→newest). Degenerate denominators,
//! missing cells, and clipped outliers are imputed to 0.0 and flagged in a
//! parallel mask; the mask is bookkeeping only and is never fed to the model.
//! Windows with too many imputed cells are rejected.
//!
//! Labels are relative: at each date the cross-section is split at the median
//! forward return, the top half `Up`, the bottom half `Down`, ties broken by
//! ticker so the split is deterministic.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calendar::{BusinessCalendar, RebalanceCalendar};
use crate::store::{Store, StoreError, FEATURE_COUNT};

/// Statements per window; one more than the number of percent-change rows.
pub const WINDOW_STATEMENTS: usize = 9;
/// Percent-change rows per window.
pub const WINDOW_ROWS: usize = WINDOW_STATEMENTS - 1;

/// Percent changes are clamped to ±this bound (clamped cells are masked).
pub const DEFAULT_CLIP_BOUND: f64 = 10.0;
/// Windows with more than this fraction of imputed cells are rejected.
pub const DEFAULT_MAX_IMPUTED_FRAC: f64 = 0.25;
/// Denominator floors are this multiple of the per-feature median magnitude.
const FLOOR_SCALE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("cross-section of {0} samples is too small to split at the median")]
    DegenerateCrossSection(usize),
    #[error("forward return for {ticker} at {asof} is not finite")]
    NonFiniteReturn { ticker: String, asof: NaiveDate },
    #[error("no samples in the {split} range; check split boundaries, schedule, and universe")]
    EmptyDataset { split: &'static str },
    #[error("split boundaries out of order: need start < train_end < validation_end <= test_end")]
    BadBoundaries,
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("{path}: {msg}")]
    Export { path: String, msg: String },
}

/// Why a window could not be built for a (ticker, asof) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum WindowRejection {
    #[error("insufficient history: {got} of {WINDOW_STATEMENTS} statements visible")]
    InsufficientHistory { got: usize },
    #[error("too sparse: {imputed} of {cells} cells imputed")]
    TooSparse { imputed: usize, cells: usize },
}

/// Classification target. `Up` is index 0 of the network's output pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    Up,
    Down,
}

impl Label {
    pub fn index(self) -> usize {
        match self {
            Label::Up => 0,
            Label::Down => 1,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Up => "up",
            Label::Down => "down",
        }
    }
}

/// Percent change `(curr - prev) / prev` with the degenerate-denominator and
/// outlier rules applied. Returns the value and whether it was imputed or
/// clamped (masked).
pub fn pct_change(curr: f64, prev: f64, floor: f64, clip: f64) -> (f64, bool) {
    if prev == 0.0 || prev.abs() < floor {
        return (0.0, true);
    }
    let v = (curr - prev) / prev;
    if !v.is_finite() {
        return (0.0, true);
    }
    if v > clip {
        (clip, true)
    } else if v < -clip {
        (-clip, true)
    } else {
        (v, false)
    }
}

/// Per-feature denominator floors: [`FLOOR_SCALE`] times the median magnitude
/// of each feature over the records visible during training. Fitted once on
/// training-visible data and reused unchanged for validation, test, and
/// scoring, so no later data leaks into preprocessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenominatorFloors {
    floors: Vec<f64>,
}

impl DenominatorFloors {
    /// Fits floors on all statement feature values of `universe` tickers with
    /// `available_from` strictly before `available_before`.
    pub fn fit(store: &Store, universe: &[String], available_before: NaiveDate) -> Self {
        let mut magnitudes: Vec<Vec<f64>> = vec![Vec::new(); FEATURE_COUNT];
        for ticker in universe {
            for rec in store.statements_of(ticker) {
                if rec.available_from >= available_before {
                    continue;
                }
                for (i, feature) in rec.features.iter().enumerate() {
                    if let Some(v) = feature {
                        magnitudes[i].push(v.abs());
                    }
                }
            }
        }
        let floors = magnitudes.into_iter().map(|m| FLOOR_SCALE * median(m)).collect();
        Self { floors }
    }

    /// Identical floor for `count` features (fixtures and small tests).
    pub fn uniform(count: usize, floor: f64) -> Self {
        Self { floors: vec![floor; count] }
    }

    pub fn get(&self, feature: usize) -> f64 {
        self.floors[feature]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.floors
    }

    pub fn from_vec(floors: Vec<f64>) -> Self {
        Self { floors }
    }
}

/// Median of an unordered sample; 0.0 for an empty one (a floor of zero only
/// disables the threshold — exact-zero denominators are still masked).
fn median(mut values: Vec<f64>) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable_by(|a, b| a.partial_cmp(b).expect("finite magnitudes"));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Clip bound and sparsity limit for window construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub clip_bound: f64,
    pub max_imputed_frac: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self { clip_bound: DEFAULT_CLIP_BOUND, max_imputed_frac: DEFAULT_MAX_IMPUTED_FRAC }
    }
}

/// One 8×f percent-change window. `mask[[q, i]]` is true where the value was
/// imputed or clamped.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureWindow {
    pub ticker: String,
    pub asof: NaiveDate,
    pub values: Array2<f64>,
    pub mask: Array2<bool>,
}

impl FeatureWindow {
    pub fn f(&self) -> usize {
        self.values.ncols()
    }

    pub fn imputed_cells(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// Row-major flattening (row 0 first); the network's input layout.
    pub fn flat(&self) -> Array1<f64> {
        Array1::from_iter(self.values.iter().copied())
    }
}

/// Builds windows against one store/calendar/floors context.
#[derive(Debug, Clone, Copy)]
pub struct WindowBuilder<'a> {
    store: &'a Store,
    floors: &'a DenominatorFloors,
    config: PipelineConfig,
}

impl<'a> WindowBuilder<'a> {
    pub fn new(store: &'a Store, floors: &'a DenominatorFloors, config: PipelineConfig) -> Self {
        Self { store, floors, config }
    }

    /// Builds the window for `ticker` as of `asof`, using only statements
    /// visible at `asof`.
    pub fn build(&self, ticker: &str, asof: NaiveDate) -> Result<FeatureWindow, WindowRejection> {
        let recs = self.store.statements_asof(ticker, asof, WINDOW_STATEMENTS);
        if recs.len() < WINDOW_STATEMENTS {
            return Err(WindowRejection::InsufficientHistory { got: recs.len() });
        }
        let mut values = Array2::zeros((WINDOW_ROWS, FEATURE_COUNT));
        let mut mask = Array2::from_elem((WINDOW_ROWS, FEATURE_COUNT), false);
        for q in 0..WINDOW_ROWS {
            for i in 0..FEATURE_COUNT {
                let (v, m) = match (recs[q].features[i], recs[q + 1].features[i]) {
                    (Some(prev), Some(curr)) => {
                        pct_change(curr, prev, self.floors.get(i), self.config.clip_bound)
                    }
                    // A missing cell voids both changes that touch it.
                    _ => (0.0, true),
                };
                values[[q, i]] = v;
                mask[[q, i]] = m;
            }
        }
        let imputed = mask.iter().filter(|&&m| m).count();
        let cells = WINDOW_ROWS * FEATURE_COUNT;
        if imputed as f64 > self.config.max_imputed_frac * cells as f64 {
            return Err(WindowRejection::TooSparse { imputed, cells });
        }
        Ok(FeatureWindow { ticker: ticker.to_string(), asof, values, mask })
    }
}

/// Splits a cross-section of `(ticker, forward_return)` pairs at the median:
/// the top `ceil(n/2)` are `Up`, the rest `Down`. Sorting is by return
/// descending with ties broken by ticker ascending, so equal returns around
/// the median resolve deterministically. Returns pairs in rank order.
pub fn neutralize_labels(
    cross_section: &[(String, f64)],
) -> Result<Vec<(String, Label)>, FeatureError> {
    let n = cross_section.len();
    if n < 2 {
        return Err(FeatureError::DegenerateCrossSection(n));
    }
    let mut ranked: Vec<&(String, f64)> = cross_section.iter().collect();
    ranked.sort_by(|a, b| {
        b.1.partial_cmp(&a.1).expect("finite forward returns").then_with(|| a.0.cmp(&b.0))
    });
    let ups = n.div_ceil(2);
    Ok(ranked
        .into_iter()
        .enumerate()
        .map(|(rank, (ticker, _))| {
            (ticker.clone(), if rank < ups { Label::Up } else { Label::Down })
        })
        .collect())
}

/// A labeled training/evaluation sample.
#[derive(Debug, Clone)]
pub struct LabeledSample {
    pub window: FeatureWindow,
    pub label: Label,
    pub fwd_return: f64,
}

/// Which split a rebalance date belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Test => "test",
        }
    }
}

/// Half-open date boundaries: a rebalance date `t` is in train when
/// `start <= t < train_end`, in validation when `train_end <= t <
/// validation_end`, and in test when `validation_end <= t <= test_end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitBoundaries {
    pub start: NaiveDate,
    pub train_end: NaiveDate,
    pub validation_end: NaiveDate,
    pub test_end: NaiveDate,
}

impl SplitBoundaries {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.start < self.train_end
            && self.train_end < self.validation_end
            && self.validation_end <= self.test_end
        {
            Ok(())
        } else {
            Err(FeatureError::BadBoundaries)
        }
    }

    pub fn split_of(&self, t: NaiveDate) -> Option<Split> {
        if t < self.start || t > self.test_end {
            None
        } else if t < self.train_end {
            Some(Split::Train)
        } else if t < self.validation_end {
            Some(Split::Validation)
        } else {
            Some(Split::Test)
        }
    }
}

/// Builds the labeled dataset for one split: at every schedule date in the
/// split range (that has a successor for the forward return), one sample per
/// universe stock that traded through the trailing quarter and has a
/// buildable window. Labels are neutralized per date. Samples come out in
/// (date ascending, rank) order; the whole construction is deterministic.
pub fn build_dataset(
    store: &Store,
    cal: &BusinessCalendar,
    schedule: &RebalanceCalendar,
    universe: &[String],
    floors: &DenominatorFloors,
    config: PipelineConfig,
    bounds: &SplitBoundaries,
    split: Split,
) -> Result<Vec<LabeledSample>, FeatureError> {
    bounds.validate()?;
    let builder = WindowBuilder::new(store, floors, config);
    let mut samples = Vec::new();
    for &t in schedule.dates() {
        if bounds.split_of(t) != Some(split) {
            continue;
        }
        let Some(t_next) = schedule.next_after(t) else {
            continue; // final schedule date has no forward-return horizon
        };
        let window_start = cal.previous_quarter_last_business_day(t);
        let mut windows: BTreeMap<String, FeatureWindow> = BTreeMap::new();
        let mut returns: Vec<(String, f64)> = Vec::new();
        for ticker in universe {
            if !store.is_valid_stock(ticker, window_start, t, cal) {
                continue;
            }
            let Ok(window) = builder.build(ticker, t) else {
                continue;
            };
            let fwd = match store.forward_return(ticker, t, t_next, cal) {
                Ok(r) => r,
                Err(e) => {
                    // Traded through t but no usable close near t_next (e.g.
                    // delisted immediately after): no label, so no sample.
                    log::warn!("dropping {ticker} at {t}: {e}");
                    continue;
                }
            };
            if !fwd.is_finite() {
                return Err(FeatureError::NonFiniteReturn { ticker: ticker.clone(), asof: t });
            }
            windows.insert(ticker.clone(), window);
            returns.push((ticker.clone(), fwd));
        }
        if returns.is_empty() {
            continue;
        }
        let labeled = neutralize_labels(&returns)?;
        let by_ticker: BTreeMap<&str, f64> =
            returns.iter().map(|(t, r)| (t.as_str(), *r)).collect();
        for (ticker, label) in labeled {
            let fwd_return = by_ticker[ticker.as_str()];
            let window = windows.remove(&ticker).expect("window built for labeled ticker");
            samples.push(LabeledSample { window, label, fwd_return });
        }
    }
    if samples.is_empty() {
        return Err(FeatureError::EmptyDataset { split: split.name() });
    }
    Ok(samples)
}

/// Writes a dataset to `values_path` (`ticker,asof,label,fwd_return,v_0_0..`)
/// with the imputation mask in a parallel file (`ticker,asof,m_0_0..`, cells
/// 0/1). Full float precision; byte-stable across runs.
pub fn export_dataset(
    samples: &[LabeledSample],
    values_path: &Path,
    mask_path: &Path,
) -> Result<(), FeatureError> {
    let export_err = |path: &Path, e: csv::Error| FeatureError::Export {
        path: path.display().to_string(),
        msg: e.to_string(),
    };
    let f = samples.first().map(|s| s.window.f()).unwrap_or(FEATURE_COUNT);

    let mut header = vec!["ticker".to_string(), "asof".to_string(), "label".to_string(), "fwd_return".to_string()];
    for q in 0..WINDOW_ROWS {
        for i in 0..f {
            header.push(format!("v_{q}_{i}"));
        }
    }
    let mut wtr = csv::Writer::from_path(values_path).map_err(|e| export_err(values_path, e))?;
    wtr.write_record(&header).map_err(|e| export_err(values_path, e))?;

    let mut mask_header = vec!["ticker".to_string(), "asof".to_string()];
    for q in 0..WINDOW_ROWS {
        for i in 0..f {
            mask_header.push(format!("m_{q}_{i}"));
        }
    }
    let mut mask_wtr = csv::Writer::from_path(mask_path).map_err(|e| export_err(mask_path, e))?;
    mask_wtr.write_record(&mask_header).map_err(|e| export_err(mask_path, e))?;

    for s in samples {
        let mut row = vec![
            s.window.ticker.clone(),
            s.window.asof.to_string(),
            s.label.as_str().to_string(),
            s.fwd_return.to_string(),
        ];
        row.extend(s.window.values.iter().map(|v| v.to_string()));
        wtr.write_record(&row).map_err(|e| export_err(values_path, e))?;

        let mut mask_row = vec![s.window.ticker.clone(), s.window.asof.to_string()];
        mask_row.extend(s.window.mask.iter().map(|&m| if m { "1" } else { "0" }.to_string()));
        mask_wtr.write_record(&mask_row).map_err(|e| export_err(mask_path, e))?;
    }
    wtr.flush().map_err(|e| FeatureError::Export {
        path: values_path.display().to_string(),
        msg: e.to_string(),
    })?;
    mask_wtr.flush().map_err(|e| FeatureError::Export {
        path: mask_path.display().to_string(),
        msg: e.to_string(),
    })?;
    Ok(())
}
