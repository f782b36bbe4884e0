//! Adam optimizer with bias correction.
//!
//! Per parameter: `m <- b1*m + (1-b1)*g`, `v <- b2*v + (1-b2)*g²`, then
//! `p <- p - lr * m̂ / (sqrt(v̂) + eps)` with `m̂ = m/(1-b1^t)`,
//! `v̂ = v/(1-b2^t)`. Epsilon sits outside the square root.

use serde::{Deserialize, Serialize};

use super::{Gradients, ModelParams, NetError};

/// Adam hyperparameters. The learning rate is passed per step so schedules
/// stay possible without touching optimizer state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<(), NetError> {
        for (name, beta) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&beta) {
                return Err(NetError::Config(format!("{name} must be in [0, 1), got {beta}")));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(NetError::Config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// First and second moment estimates, one slot per trainable parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Gradients,
    v: Gradients,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        Self { m: Gradients::zeros_like(params), v: Gradients::zeros_like(params), step: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

/// One optimizer step over every trainable parameter. Fails if any parameter
/// is non-finite afterwards, leaving the caller to abort.
pub fn adam_step(
    params: &mut ModelParams,
    grads: &Gradients,
    state: &mut AdamState,
    lr: f64,
    config: &AdamConfig,
) -> Result<(), NetError> {
    state.step += 1;
    let bc1 = 1.0 - config.beta1.powi(state.step as i32);
    let bc2 = 1.0 - config.beta2.powi(state.step as i32);
    let AdamState { m, v, .. } = state;

    let mut ok = true;
    for (((p, g), m), v) in params
        .param_tensors_mut()
        .into_iter()
        .zip(grads.tensors())
        .zip(m.tensors_mut())
        .zip(v.tensors_mut())
    {
        debug_assert_eq!(p.len(), g.len(), "parameter/gradient layout mismatch");
        for i in 0..p.len() {
            m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
            v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] -= lr * m_hat / (v_hat.sqrt() + config.epsilon);
            ok &= p[i].is_finite();
        }
    }
    if ok {
        Ok(())
    } else {
        Err(NetError::NonFiniteParams)
    }
}
