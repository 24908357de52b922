use serde::{Deserialize, Serialize};

use super::param::ParamStore;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step_count: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

/// Adaptive-moment optimizer bound to the layout of one parameter store.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    pub state: OptimizerState,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        Self {
            config,
            state: OptimizerState {
                step_count: 0,
                first_moment: zeros.clone(),
                second_moment: zeros,
            },
        }
    }

    /// Apply one bias-corrected update from the gradients currently held in `store`.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if let Some(bad) = store
            .tensors()
            .iter()
            .find(|t| t.grad.iter().any(|g| !g.is_finite()))
        {
            return Err(Error::NonFinite(format!("gradient of tensor '{}'", bad.name)));
        }
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            eps,
        } = self.config;
        self.state.step_count += 1;
        let t = self.state.step_count as i32;
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        for ((tensor, m), v) in store
            .tensors_mut()
            .iter_mut()
            .zip(&mut self.state.first_moment)
            .zip(&mut self.state.second_moment)
        {
            for k in 0..tensor.values.len() {
                let g = tensor.grad[k];
                m[k] = b1 * m[k] + (1.0 - b1) * g;
                v[k] = b2 * v[k] + (1.0 - b2) * g * g;
                let mh = m[k] / c1;
                let vh = v[k] / c2;
                tensor.values[k] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}
