//! Mini-batch training loop with periodic validation and best-checkpoint
//! selection.
//!
//! Iterations run from 1 through `maxiter`. Each iteration samples a batch
//! uniformly with replacement, takes one optimizer step, and folds the batch
//! statistics into the running statistics. Once past `miniter`, every
//! `eval_interval`-th iteration scores the full validation set in inference
//! mode; the checkpoint with the best validation metric wins, earlier
//! iteration on ties. Config validation requires both `miniter` and `maxiter`
//! to be multiples of `eval_interval`, so a run performs exactly
//! `(maxiter - miniter) / eval_interval` evaluations.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::features::{Label, LabeledSample};

use super::{
    adam_step, backward, forward, nll_loss, update_running_stats, AdamConfig, AdamState,
    Mode, ModelParams, NetError,
};

/// Validation metric that picks the checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    ValidationAccuracy,
    ValidationLoss,
}

impl SelectionMetric {
    /// Strict improvement: ties keep the incumbent (earlier) checkpoint.
    pub fn is_improvement(self, candidate: f64, incumbent: f64) -> bool {
        match self {
            SelectionMetric::ValidationAccuracy => candidate > incumbent,
            SelectionMetric::ValidationLoss => candidate < incumbent,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SelectionMetric::ValidationAccuracy => "validation_accuracy",
            SelectionMetric::ValidationLoss => "validation_loss",
        }
    }
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub maxiter: u64,
    pub miniter: u64,
    pub batch_size: usize,
    pub eval_interval: u64,
    pub learning_rate: f64,
    pub bn_momentum: f64,
    pub adam: AdamConfig,
    pub selection_metric: SelectionMetric,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            maxiter: 100_000,
            miniter: 50_000,
            batch_size: 128,
            eval_interval: 1_000,
            learning_rate: 2.5e-4,
            bn_momentum: 0.1,
            adam: AdamConfig::default(),
            selection_metric: SelectionMetric::ValidationAccuracy,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        if self.batch_size < 2 {
            return Err(NetError::Config(format!(
                "batch_size must be at least 2 (batch statistics need 2 rows), got {}",
                self.batch_size
            )));
        }
        if self.eval_interval == 0 {
            return Err(NetError::Config("eval_interval must be positive".into()));
        }
        if self.miniter >= self.maxiter {
            return Err(NetError::Config(format!(
                "miniter ({}) must be less than maxiter ({})",
                self.miniter, self.maxiter
            )));
        }
        for (name, value) in [("miniter", self.miniter), ("maxiter", self.maxiter)] {
            if value % self.eval_interval != 0 {
                return Err(NetError::Config(format!(
                    "{name} ({value}) must be a multiple of eval_interval ({})",
                    self.eval_interval
                )));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(NetError::Config(format!(
                "learning_rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum <= 1.0) {
            return Err(NetError::Config(format!(
                "bn_momentum must be in (0, 1], got {}",
                self.bn_momentum
            )));
        }
        self.adam.validate()
    }

    /// Validation passes a run will perform.
    pub fn evaluation_count(&self) -> u64 {
        (self.maxiter - self.miniter) / self.eval_interval
    }
}

/// Dense design matrix plus labels; rows are samples.
#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub inputs: Array2<f64>,
    pub labels: Vec<Label>,
}

impl TrainingSet {
    pub fn new(inputs: Array2<f64>, labels: Vec<Label>) -> Result<Self, NetError> {
        if inputs.nrows() != labels.len() {
            return Err(NetError::Config(format!(
                "{} input rows but {} labels",
                inputs.nrows(),
                labels.len()
            )));
        }
        Ok(Self { inputs, labels })
    }

    /// Flattens labeled windows into a design matrix. All windows must share
    /// one feature count.
    pub fn from_samples(samples: &[LabeledSample]) -> Result<Self, NetError> {
        if samples.is_empty() {
            return Ok(Self { inputs: Array2::zeros((0, 0)), labels: Vec::new() });
        }
        let f = samples[0].window.f();
        let cols = samples[0].window.flat().len();
        let mut inputs = Array2::zeros((samples.len(), cols));
        let mut labels = Vec::with_capacity(samples.len());
        for (r, sample) in samples.iter().enumerate() {
            if sample.window.f() != f {
                return Err(NetError::Config(format!(
                    "window for {} has {} features, expected {f}",
                    sample.window.ticker,
                    sample.window.f()
                )));
            }
            inputs.row_mut(r).assign(&sample.window.flat());
            labels.push(sample.label);
        }
        Ok(Self { inputs, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.inputs.ncols()
    }
}

/// One row of the training log: the batch loss at that iteration and the
/// validation metric measured right after it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRow {
    pub iteration: u64,
    pub train_loss: f64,
    pub val_metric: f64,
}

/// The selected model and where it came from.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub iteration: u64,
    pub metric: SelectionMetric,
    pub metric_value: f64,
}

/// Everything a completed run produces.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub best: Checkpoint,
    pub log: Vec<EvalRow>,
    /// Rows whose true-class probability hit the loss clamp, summed over all
    /// training batches.
    pub clamp_events: u64,
}

fn abort(iteration: u64, source: NetError) -> NetError {
    NetError::Aborted { iteration, detail: source.to_string() }
}

/// Mean fraction of rows whose highest-probability class matches the label.
/// Equal probabilities count as class 0 (up).
pub fn accuracy(probs: &Array2<f64>, labels: &[Label]) -> f64 {
    assert_eq!(probs.nrows(), labels.len(), "one label per row");
    let hits = probs
        .rows()
        .into_iter()
        .zip(labels)
        .filter(|(row, label)| {
            let predicted = if row[0] >= row[1] { 0 } else { 1 };
            predicted == label.index()
        })
        .count();
    hits as f64 / labels.len() as f64
}

/// Scores a whole set in inference mode under the given metric.
pub fn evaluate(
    params: &ModelParams,
    set: &TrainingSet,
    metric: SelectionMetric,
) -> Result<f64, NetError> {
    let (probs, _) = forward(params, &set.inputs, Mode::Inference)?;
    Ok(match metric {
        SelectionMetric::ValidationAccuracy => accuracy(&probs, &set.labels),
        SelectionMetric::ValidationLoss => nll_loss(&probs, &set.labels).loss,
    })
}

/// Runs the full training loop. Deterministic in `seed`: initialization uses
/// the seed's default stream, batch sampling a separate stream of the same
/// seed. Numeric failure (non-finite activations, loss, or parameters) aborts
/// with the failing iteration.
pub fn train(
    train_set: &TrainingSet,
    val_set: &TrainingSet,
    config: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, NetError> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(NetError::Config("training set is empty".into()));
    }
    if val_set.is_empty() {
        return Err(NetError::Config("validation set is empty".into()));
    }
    if train_set.input_dim() != val_set.input_dim() {
        return Err(NetError::Config(format!(
            "training inputs have {} columns but validation has {}",
            train_set.input_dim(),
            val_set.input_dim()
        )));
    }
    let d = train_set.input_dim();
    if d % crate::features::WINDOW_ROWS != 0 || d == 0 {
        return Err(NetError::Config(format!(
            "input dimension {d} is not a multiple of {} rows",
            crate::features::WINDOW_ROWS
        )));
    }
    let f = d / crate::features::WINDOW_ROWS;

    let mut params = ModelParams::init(f, seed);
    let mut adam = AdamState::new(&params);
    let mut sampler = ChaCha8Rng::seed_from_u64(seed);
    sampler.set_stream(1); // initialization consumed stream 0

    let n = train_set.len();
    let bsize = config.batch_size;
    let mut batch = Array2::zeros((bsize, d));
    let mut batch_labels = vec![Label::Up; bsize];
    let mut log = Vec::with_capacity(config.evaluation_count() as usize);
    let mut best: Option<Checkpoint> = None;
    let mut clamp_events = 0u64;

    for i in 1..=config.maxiter {
        for r in 0..bsize {
            let idx = sampler.random_range(0..n);
            batch.row_mut(r).assign(&train_set.inputs.row(idx));
            batch_labels[r] = train_set.labels[idx];
        }

        let (probs, cache) = forward(&params, &batch, Mode::Train).map_err(|e| abort(i, e))?;
        update_running_stats(&mut params, &cache, config.bn_momentum);
        let loss = nll_loss(&probs, &batch_labels);
        if !loss.loss.is_finite() {
            return Err(NetError::Aborted {
                iteration: i,
                detail: format!("training loss is not finite ({})", loss.loss),
            });
        }
        clamp_events += loss.clamped as u64;
        let grads = backward(&params, &cache, &batch_labels);
        adam_step(&mut params, &grads, &mut adam, config.learning_rate, &config.adam)
            .map_err(|e| abort(i, e))?;

        if i % config.eval_interval == 0 && i > config.miniter {
            let val_metric =
                evaluate(&params, val_set, config.selection_metric).map_err(|e| abort(i, e))?;
            log.push(EvalRow { iteration: i, train_loss: loss.loss, val_metric });
            log::info!(
                "iteration {i}: train loss {:.6}, {} {:.6}",
                loss.loss,
                config.selection_metric.as_str(),
                val_metric
            );
            let improved = match &best {
                None => true,
                Some(b) => config.selection_metric.is_improvement(val_metric, b.metric_value),
            };
            if improved {
                best = Some(Checkpoint {
                    params: params.clone(),
                    iteration: i,
                    metric: config.selection_metric,
                    metric_value: val_metric,
                });
            }
        }
    }

    let best = best.expect("config validation guarantees at least one evaluation");
    Ok(TrainOutcome { best, log, clamp_events })
}
