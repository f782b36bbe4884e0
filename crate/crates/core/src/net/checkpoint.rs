//! Self-describing JSON checkpoints.
//!
//! A checkpoint carries everything scoring needs: the architecture (feature
//! count and tensor shapes), all weights and batch-norm statistics, the
//! denominator floors the features were built with, the seed, the hash of the
//! training config, and the validation metric that selected the model. Loads
//! re-validate shapes and numeric sanity so a truncated or hand-edited file
//! fails loudly instead of scoring garbage.

use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::features::DenominatorFloors;

use super::{layer_shapes, Affine, BatchNorm, Checkpoint, ModelParams, NetError, SelectionMetric, TrainConfig};

const FORMAT: &str = "fundrank-checkpoint-v1";

#[derive(Debug, Serialize, Deserialize)]
struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    fn of2(a: &Array2<f64>) -> Self {
        Self { shape: vec![a.nrows(), a.ncols()], data: a.iter().copied().collect() }
    }

    fn of1(a: &Array1<f64>) -> Self {
        Self { shape: vec![a.len()], data: a.to_vec() }
    }

    fn into2(self, what: &str, rows: usize, cols: usize) -> Result<Array2<f64>, NetError> {
        if self.shape != [rows, cols] {
            return Err(NetError::Checkpoint(format!(
                "{what} has shape {:?}, expected [{rows}, {cols}]",
                self.shape
            )));
        }
        Array2::from_shape_vec((rows, cols), self.data)
            .map_err(|e| NetError::Checkpoint(format!("{what}: {e}")))
    }

    fn into1(self, what: &str, len: usize) -> Result<Array1<f64>, NetError> {
        if self.shape != [len] {
            return Err(NetError::Checkpoint(format!(
                "{what} has shape {:?}, expected [{len}]",
                self.shape
            )));
        }
        Ok(Array1::from_vec(self.data))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct LayerRecord {
    w: Tensor,
    b: Tensor,
}

#[derive(Debug, Serialize, Deserialize)]
struct NormRecord {
    gamma: Tensor,
    beta: Tensor,
    running_mean: Tensor,
    running_var: Tensor,
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointRecord {
    format: String,
    f: usize,
    seed: u64,
    iteration: u64,
    selection_metric: SelectionMetric,
    metric_value: f64,
    config_hash: String,
    denominator_floors: Vec<f64>,
    layers: Vec<LayerRecord>,
    norms: Vec<NormRecord>,
}

/// A loaded checkpoint plus the context it was saved with.
#[derive(Debug, Clone)]
pub struct CheckpointEnvelope {
    pub checkpoint: Checkpoint,
    pub config_hash: String,
    pub floors: DenominatorFloors,
}

/// Hex SHA-256 of the canonical JSON encoding of a training config. Stored in
/// checkpoints so downstream stages can tell which configuration produced a
/// model.
pub fn config_hash(config: &TrainConfig) -> String {
    let json = serde_json::to_string(config).expect("train config serializes");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_checkpoint(
    path: &Path,
    checkpoint: &Checkpoint,
    config_hash: &str,
    floors: &DenominatorFloors,
) -> Result<(), NetError> {
    let params = &checkpoint.params;
    let record = CheckpointRecord {
        format: FORMAT.to_string(),
        f: params.f,
        seed: params.seed,
        iteration: checkpoint.iteration,
        selection_metric: checkpoint.metric,
        metric_value: checkpoint.metric_value,
        config_hash: config_hash.to_string(),
        denominator_floors: floors.as_slice().to_vec(),
        layers: params
            .layers
            .iter()
            .map(|l| LayerRecord { w: Tensor::of2(&l.w), b: Tensor::of1(&l.b) })
            .collect(),
        norms: params
            .norms
            .iter()
            .map(|n| NormRecord {
                gamma: Tensor::of1(&n.gamma),
                beta: Tensor::of1(&n.beta),
                running_mean: Tensor::of1(&n.running_mean),
                running_var: Tensor::of1(&n.running_var),
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&record)
        .map_err(|e| NetError::Checkpoint(format!("encode: {e}")))?;
    fs::write(path, json)
        .map_err(|e| NetError::Checkpoint(format!("write {}: {e}", path.display())))
}

pub fn load_checkpoint(path: &Path) -> Result<CheckpointEnvelope, NetError> {
    let text = fs::read_to_string(path)
        .map_err(|e| NetError::Checkpoint(format!("read {}: {e}", path.display())))?;
    let record: CheckpointRecord =
        serde_json::from_str(&text).map_err(|e| NetError::Checkpoint(format!("parse: {e}")))?;
    if record.format != FORMAT {
        return Err(NetError::Checkpoint(format!(
            "unsupported format {:?}, expected {FORMAT:?}",
            record.format
        )));
    }
    if record.f == 0 {
        return Err(NetError::Checkpoint("feature count must be positive".into()));
    }
    if record.denominator_floors.len() != record.f {
        return Err(NetError::Checkpoint(format!(
            "{} denominator floors for {} features",
            record.denominator_floors.len(),
            record.f
        )));
    }

    let shapes = layer_shapes(record.f);
    if record.layers.len() != shapes.len() {
        return Err(NetError::Checkpoint(format!(
            "{} layers, expected {}",
            record.layers.len(),
            shapes.len()
        )));
    }
    if record.norms.len() != shapes.len() - 1 {
        return Err(NetError::Checkpoint(format!(
            "{} norm blocks, expected {}",
            record.norms.len(),
            shapes.len() - 1
        )));
    }

    let mut layers = Vec::with_capacity(shapes.len());
    for (idx, (layer, (n_in, n_out))) in record.layers.into_iter().zip(shapes).enumerate() {
        layers.push(Affine {
            w: layer.w.into2(&format!("layer {} weights", idx + 1), n_in, n_out)?,
            b: layer.b.into1(&format!("layer {} bias", idx + 1), n_out)?,
        });
    }
    let mut norms = Vec::with_capacity(shapes.len() - 1);
    for (idx, (norm, (_, n_out))) in record.norms.into_iter().zip(shapes).enumerate() {
        let what = |part: &str| format!("norm {} {part}", idx + 1);
        let block = BatchNorm {
            gamma: norm.gamma.into1(&what("gamma"), n_out)?,
            beta: norm.beta.into1(&what("beta"), n_out)?,
            running_mean: norm.running_mean.into1(&what("running_mean"), n_out)?,
            running_var: norm.running_var.into1(&what("running_var"), n_out)?,
        };
        if block.running_var.iter().any(|&v| !(v > 0.0)) {
            return Err(NetError::Checkpoint(format!(
                "norm {} running variance must be strictly positive",
                idx + 1
            )));
        }
        norms.push(block);
    }

    let params = ModelParams { f: record.f, seed: record.seed, layers, norms };
    if !params.all_finite() {
        return Err(NetError::Checkpoint("non-finite parameter values".into()));
    }
    if params.norms.iter().any(|n| {
        n.running_mean.iter().any(|v| !v.is_finite()) || n.running_var.iter().any(|v| !v.is_finite())
    }) {
        return Err(NetError::Checkpoint("non-finite running statistics".into()));
    }
    if !record.metric_value.is_finite() {
        return Err(NetError::Checkpoint("non-finite metric value".into()));
    }
    if record.denominator_floors.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
        return Err(NetError::Checkpoint("denominator floors must be finite and non-negative".into()));
    }

    Ok(CheckpointEnvelope {
        checkpoint: Checkpoint {
            params,
            iteration: record.iteration,
            metric: record.selection_metric,
            metric_value: record.metric_value,
        },
        config_hash: record.config_hash,
        floors: DenominatorFloors::from_vec(record.denominator_floors),
    })
}
