//! Five-layer feed-forward classifier with hand-derived backpropagation.
//!
//! Architecture, for `f` features per quarter (input dimension `8f`):
//! four hidden blocks of affine → batch norm → ReLU with widths 64, 32, 16,
//! 8, then an affine head of width 2 under softmax. Output index 0 is the
//! up-probability. Everything is `f64`.
//!
//! Batch norm uses batch statistics in train mode and running statistics in
//! inference mode; the backward pass differentiates through the batch mean
//! and variance, so analytic gradients agree with finite differences of the
//! train-mode loss to first order. The gradient-check suite in the tests is
//! the ground truth for every formula in this module.

mod adam;
mod checkpoint;
mod train;

use ndarray::{Array1, Array2, Axis, Zip};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::features::{FeatureWindow, Label, WINDOW_ROWS};

pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{config_hash, load_checkpoint, save_checkpoint, CheckpointEnvelope};
pub use train::{
    accuracy, evaluate, train, Checkpoint, EvalRow, SelectionMetric, TrainConfig, TrainOutcome,
    TrainingSet,
};

/// Hidden-layer output widths; the head adds a width-2 output.
pub const HIDDEN_WIDTHS: [usize; 4] = [64, 32, 16, 8];
/// Output classes (up, down).
pub const OUTPUT_WIDTH: usize = 2;
/// Epsilon inside the batch-norm denominator `sqrt(var + eps)`.
pub const BN_EPSILON: f64 = 1e-5;
/// Probabilities are clamped here before the log in the loss.
pub const PROB_FLOOR: f64 = 1e-30;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("non-finite values in layer {layer} during forward pass")]
    NonFinite { layer: usize },
    #[error("input has {got} columns, expected {expected}")]
    ShapeMismatch { got: usize, expected: usize },
    #[error("train-mode forward needs a batch of at least 2 rows, got {got}")]
    BatchTooSmall { got: usize },
    #[error("non-finite parameter after optimizer update")]
    NonFiniteParams,
    #[error("training aborted at iteration {iteration}: {detail}")]
    Aborted { iteration: u64, detail: String },
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

/// Forward-pass mode: batch statistics vs running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Inference,
}

/// Weights and bias of one affine layer; rows index inputs, columns outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

/// Batch-norm parameters and running statistics for one hidden layer.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

/// Full parameter set of the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub f: usize,
    pub seed: u64,
    /// Five affine layers, input to head.
    pub layers: Vec<Affine>,
    /// Batch norm for the four hidden layers.
    pub norms: Vec<BatchNorm>,
}

/// `(n_in, n_out)` pairs of the five affine layers for `f` features.
pub fn layer_shapes(f: usize) -> [(usize, usize); 5] {
    let d = WINDOW_ROWS * f;
    [
        (d, HIDDEN_WIDTHS[0]),
        (HIDDEN_WIDTHS[0], HIDDEN_WIDTHS[1]),
        (HIDDEN_WIDTHS[1], HIDDEN_WIDTHS[2]),
        (HIDDEN_WIDTHS[2], HIDDEN_WIDTHS[3]),
        (HIDDEN_WIDTHS[3], OUTPUT_WIDTH),
    ]
}

impl ModelParams {
    /// Xavier-uniform initialization: weights drawn from
    /// ±sqrt(6 / (n_in + n_out)), biases and batch-norm shifts zero, scales
    /// one, running statistics at (0, 1). Deterministic in `seed`.
    pub fn init(f: usize, seed: u64) -> Self {
        assert!(f >= 1, "need at least one feature");
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(5);
        for (n_in, n_out) in layer_shapes(f) {
            let bound = (6.0 / (n_in + n_out) as f64).sqrt();
            let w = Array2::from_shape_fn((n_in, n_out), |_| {
                (2.0 * rng.random::<f64>() - 1.0) * bound
            });
            layers.push(Affine { w, b: Array1::zeros(n_out) });
        }
        let norms = HIDDEN_WIDTHS
            .iter()
            .map(|&n| BatchNorm {
                gamma: Array1::ones(n),
                beta: Array1::zeros(n),
                running_mean: Array1::zeros(n),
                running_var: Array1::ones(n),
            })
            .collect();
        Self { f, seed, layers, norms }
    }

    pub fn input_dim(&self) -> usize {
        WINDOW_ROWS * self.f
    }

    pub fn all_finite(&self) -> bool {
        self.param_tensors().into_iter().flatten().all(|v| v.is_finite())
    }

    /// Trainable tensors as flat slices in the canonical order: each layer's
    /// weights then bias, followed by each norm's gamma then beta. Gradient
    /// and optimizer-state containers use the same order.
    pub fn param_tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(18);
        for layer in &self.layers {
            out.push(layer.w.as_slice().expect("contiguous weights"));
            out.push(layer.b.as_slice().expect("contiguous bias"));
        }
        for norm in &self.norms {
            out.push(norm.gamma.as_slice().expect("contiguous gamma"));
            out.push(norm.beta.as_slice().expect("contiguous beta"));
        }
        out
    }

    pub fn param_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(18);
        for layer in &mut self.layers {
            out.push(layer.w.as_slice_mut().expect("contiguous weights"));
            out.push(layer.b.as_slice_mut().expect("contiguous bias"));
        }
        for norm in &mut self.norms {
            out.push(norm.gamma.as_slice_mut().expect("contiguous gamma"));
            out.push(norm.beta.as_slice_mut().expect("contiguous beta"));
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.param_tensors().into_iter().map(<[f64]>::len).sum()
    }

    /// Linear read of the `k`-th trainable parameter (canonical order).
    pub fn get_param(&self, mut k: usize) -> f64 {
        for t in self.param_tensors() {
            if k < t.len() {
                return t[k];
            }
            k -= t.len();
        }
        panic!("parameter index out of range");
    }

    /// Linear write of the `k`-th trainable parameter (canonical order).
    pub fn set_param(&mut self, mut k: usize, value: f64) {
        for t in self.param_tensors_mut() {
            if k < t.len() {
                t[k] = value;
                return;
            }
            k -= t.len();
        }
        panic!("parameter index out of range");
    }
}

/// Gradients of the loss w.r.t. every trainable tensor, in the same layout as
/// [`ModelParams`]; running statistics have no gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub d_w: Vec<Array2<f64>>,
    pub d_b: Vec<Array1<f64>>,
    pub d_gamma: Vec<Array1<f64>>,
    pub d_beta: Vec<Array1<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParams) -> Self {
        Self {
            d_w: params.layers.iter().map(|l| Array2::zeros(l.w.raw_dim())).collect(),
            d_b: params.layers.iter().map(|l| Array1::zeros(l.b.raw_dim())).collect(),
            d_gamma: params.norms.iter().map(|n| Array1::zeros(n.gamma.raw_dim())).collect(),
            d_beta: params.norms.iter().map(|n| Array1::zeros(n.beta.raw_dim())).collect(),
        }
    }

    /// Flat slices in the canonical parameter order.
    pub fn tensors(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(18);
        for (w, b) in self.d_w.iter().zip(&self.d_b) {
            out.push(w.as_slice().expect("contiguous"));
            out.push(b.as_slice().expect("contiguous"));
        }
        for (g, bta) in self.d_gamma.iter().zip(&self.d_beta) {
            out.push(g.as_slice().expect("contiguous"));
            out.push(bta.as_slice().expect("contiguous"));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(18);
        for (w, b) in self.d_w.iter_mut().zip(&mut self.d_b) {
            out.push(w.as_slice_mut().expect("contiguous"));
            out.push(b.as_slice_mut().expect("contiguous"));
        }
        for (g, bta) in self.d_gamma.iter_mut().zip(&mut self.d_beta) {
            out.push(g.as_slice_mut().expect("contiguous"));
            out.push(bta.as_slice_mut().expect("contiguous"));
        }
        out
    }

    /// Linear read in the canonical parameter order (for gradient checks).
    pub fn get(&self, mut k: usize) -> f64 {
        for t in self.tensors() {
            if k < t.len() {
                return t[k];
            }
            k -= t.len();
        }
        panic!("gradient index out of range");
    }
}

/// Intermediate activations needed by the backward pass and the running-stat
/// update. Valid for exactly the forward call that produced it.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    mode: Mode,
    /// Inputs to layers 1..=5 (index 0 is the batch itself).
    inputs: Vec<Array2<f64>>,
    /// Per hidden layer: normalized activations, inverse std, pre-ReLU output.
    xhats: Vec<Array2<f64>>,
    istds: Vec<Array1<f64>>,
    ys: Vec<Array2<f64>>,
    /// Batch statistics (biased variance), train mode only.
    batch_means: Vec<Array1<f64>>,
    batch_vars: Vec<Array1<f64>>,
    probs: Array2<f64>,
}

fn finite2(a: &Array2<f64>) -> bool {
    a.iter().all(|v| v.is_finite())
}

/// Runs the network on a batch (rows are samples). Returns per-row class
/// probabilities and the cache for [`backward`] / [`update_running_stats`].
/// Pure: running statistics are *not* mutated here.
pub fn forward(
    params: &ModelParams,
    batch: &Array2<f64>,
    mode: Mode,
) -> Result<(Array2<f64>, ForwardCache), NetError> {
    let d = params.input_dim();
    if batch.ncols() != d {
        return Err(NetError::ShapeMismatch { got: batch.ncols(), expected: d });
    }
    if mode == Mode::Train && batch.nrows() < 2 {
        return Err(NetError::BatchTooSmall { got: batch.nrows() });
    }
    if !finite2(batch) {
        return Err(NetError::NonFinite { layer: 0 });
    }

    let b = batch.nrows() as f64;
    let mut cache = ForwardCache {
        mode,
        inputs: Vec::with_capacity(5),
        xhats: Vec::with_capacity(4),
        istds: Vec::with_capacity(4),
        ys: Vec::with_capacity(4),
        batch_means: Vec::with_capacity(4),
        batch_vars: Vec::with_capacity(4),
        probs: Array2::zeros((0, 0)),
    };

    let mut a = batch.clone();
    for l in 0..4 {
        cache.inputs.push(a.clone());
        let z = a.dot(&params.layers[l].w) + &params.layers[l].b;
        let norm = &params.norms[l];
        let (mean, var) = match mode {
            Mode::Train => {
                let mean = z.sum_axis(Axis(0)) / b;
                let centered = &z - &mean;
                let var = centered.mapv(|v| v * v).sum_axis(Axis(0)) / b;
                (mean, var)
            }
            Mode::Inference => (norm.running_mean.clone(), norm.running_var.clone()),
        };
        let istd = var.mapv(|v| 1.0 / (v + BN_EPSILON).sqrt());
        let xhat = (&z - &mean) * &istd;
        let y = &xhat * &norm.gamma + &norm.beta;
        if !finite2(&y) {
            return Err(NetError::NonFinite { layer: l + 1 });
        }
        a = y.mapv(|v| v.max(0.0));
        cache.xhats.push(xhat);
        cache.istds.push(istd);
        cache.ys.push(y);
        if mode == Mode::Train {
            cache.batch_means.push(mean);
            cache.batch_vars.push(var);
        }
    }

    cache.inputs.push(a.clone());
    let logits = a.dot(&params.layers[4].w) + &params.layers[4].b;
    if !finite2(&logits) {
        return Err(NetError::NonFinite { layer: 5 });
    }
    let probs = softmax_rows(&logits);
    cache.probs = probs.clone();
    Ok((probs, cache))
}

/// Row-wise softmax, stabilized by subtracting the row maximum.
fn softmax_rows(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = logits.clone();
    for mut row in out.rows_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        row.mapv_inplace(|v| (v - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|v| v / sum);
    }
    out
}

/// Folds a train-mode forward's batch statistics into the running statistics:
/// `running <- (1 - momentum) * running + momentum * batch`. The running
/// variance uses the unbiased batch variance, matching common framework
/// behavior; normalization itself uses the biased one. The optimizer never
/// touches these.
pub fn update_running_stats(params: &mut ModelParams, cache: &ForwardCache, momentum: f64) {
    assert_eq!(cache.mode, Mode::Train, "running stats update requires a train-mode cache");
    let b = cache.inputs[0].nrows() as f64;
    let unbias = b / (b - 1.0);
    for l in 0..4 {
        let norm = &mut params.norms[l];
        Zip::from(&mut norm.running_mean)
            .and(&cache.batch_means[l])
            .for_each(|r, &m| *r = (1.0 - momentum) * *r + momentum * m);
        Zip::from(&mut norm.running_var)
            .and(&cache.batch_vars[l])
            .for_each(|r, &v| *r = (1.0 - momentum) * *r + momentum * v * unbias);
    }
}

/// Mean negative log-likelihood of the true classes, with probabilities
/// clamped at [`PROB_FLOOR`] before the log.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossInfo {
    pub loss: f64,
    /// Rows whose true-class probability hit the clamp.
    pub clamped: usize,
}

pub fn nll_loss(probs: &Array2<f64>, labels: &[Label]) -> LossInfo {
    assert_eq!(probs.nrows(), labels.len(), "one label per row");
    let mut total = 0.0;
    let mut clamped = 0;
    for (row, label) in probs.rows().into_iter().zip(labels) {
        let mut p = row[label.index()];
        if p < PROB_FLOOR {
            p = PROB_FLOOR;
            clamped += 1;
        }
        total -= p.ln();
    }
    LossInfo { loss: total / labels.len() as f64, clamped }
}

/// Analytic gradients of the mean NLL w.r.t. every trainable parameter,
/// differentiating through the batch-norm batch statistics. Requires the
/// cache of a train-mode [`forward`] call on the same parameters.
pub fn backward(params: &ModelParams, cache: &ForwardCache, labels: &[Label]) -> Gradients {
    assert_eq!(cache.mode, Mode::Train, "backward requires a train-mode cache");
    assert_eq!(cache.probs.nrows(), labels.len(), "one label per row");
    let b = labels.len() as f64;
    let mut grads = Gradients::zeros_like(params);

    // Softmax + NLL head: d(logits) = (P - onehot) / B.
    let mut dz = cache.probs.clone();
    for (r, label) in labels.iter().enumerate() {
        dz[[r, label.index()]] -= 1.0;
    }
    dz /= b;

    grads.d_w[4] = cache.inputs[4].t().dot(&dz);
    grads.d_b[4] = dz.sum_axis(Axis(0));
    let mut da = dz.dot(&params.layers[4].w.t());

    for l in (0..4).rev() {
        // ReLU gate (derivative 0 at exactly 0).
        let dy = &da * &cache.ys[l].mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        grads.d_gamma[l] = (&dy * &cache.xhats[l]).sum_axis(Axis(0));
        grads.d_beta[l] = dy.sum_axis(Axis(0));
        let dxhat = &dy * &params.norms[l].gamma;
        // Batch-norm backward with batch-statistic terms:
        // dz = istd/B * (B*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat)).
        let s1 = dxhat.sum_axis(Axis(0));
        let s2 = (&dxhat * &cache.xhats[l]).sum_axis(Axis(0));
        let dz = ((&dxhat * b) - &s1 - &cache.xhats[l] * &s2) * &cache.istds[l] / b;
        grads.d_w[l] = cache.inputs[l].t().dot(&dz);
        grads.d_b[l] = dz.sum_axis(Axis(0));
        da = dz.dot(&params.layers[l].w.t());
    }
    grads
}

/// Inference-mode class probabilities `[p_up, p_down]` for one window.
/// Pure: neither parameters nor statistics are modified.
pub fn predict(params: &ModelParams, window: &FeatureWindow) -> Result<[f64; 2], NetError> {
    let flat = window.flat();
    if flat.len() != params.input_dim() {
        return Err(NetError::ShapeMismatch { got: flat.len(), expected: params.input_dim() });
    }
    let batch = flat.insert_axis(Axis(0));
    let (probs, _) = forward(params, &batch, Mode::Inference)?;
    Ok([probs[[0, 0]], probs[[0, 1]]])
}
