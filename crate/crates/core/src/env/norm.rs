use serde::{Deserialize, Serialize};

use super::dataset::Transition;
use crate::error::{Error, Result};

pub const STD_FLOOR: f64 = 1e-6;

/// Per-dimension state standardization plus a min-max map of rewards onto `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub state_mean: Vec<f64>,
    pub state_std: Vec<f64>,
    pub reward_min: f64,
    pub reward_max: f64,
}

impl NormStats {
    pub fn fit<'a>(transitions: impl IntoIterator<Item = &'a Transition>) -> Result<Self> {
        let ts: Vec<&Transition> = transitions.into_iter().collect();
        let first = ts
            .first()
            .ok_or_else(|| Error::InvalidArgument("cannot fit norm stats on empty data".into()))?;
        let d = first.state.len();
        let n = ts.len() as f64;
        let mut mean = vec![0.0; d];
        for t in &ts {
            for (m, x) in mean.iter_mut().zip(&t.state) {
                *m += x / n;
            }
        }
        let mut var = vec![0.0; d];
        for t in &ts {
            for ((v, x), m) in var.iter_mut().zip(&t.state).zip(&mean) {
                *v += (x - m) * (x - m) / n;
            }
        }
        let state_std = var.iter().map(|v| v.sqrt().max(STD_FLOOR)).collect();
        let reward_min = ts.iter().map(|t| t.reward).fold(f64::INFINITY, f64::min);
        let reward_max = ts.iter().map(|t| t.reward).fold(f64::NEG_INFINITY, f64::max);
        if reward_max <= reward_min {
            return Err(Error::InvalidArgument(format!(
                "reward column is constant ({reward_min}); cannot normalize rewards"
            )));
        }
        Ok(Self {
            state_mean: mean,
            state_std,
            reward_min,
            reward_max,
        })
    }

    pub fn apply_state(&self, s: &[f64]) -> Vec<f64> {
        s.iter()
            .zip(&self.state_mean)
            .zip(&self.state_std)
            .map(|((x, m), sd)| (x - m) / sd)
            .collect()
    }

    pub fn invert_state(&self, z: &[f64]) -> Vec<f64> {
        z.iter()
            .zip(&self.state_mean)
            .zip(&self.state_std)
            .map(|((x, m), sd)| x * sd + m)
            .collect()
    }

    pub fn apply_reward(&self, r: f64) -> f64 {
        (r - self.reward_min) / (self.reward_max - self.reward_min)
    }

    pub fn invert_reward(&self, r: f64) -> f64 {
        r * (self.reward_max - self.reward_min) + self.reward_min
    }
}
