use serde::{Deserialize, Serialize};

use crate::env::score::run_episode;
use crate::env::{EnvKind, EnvSpec, NormStats};
use crate::error::Result;
use crate::nn::{Matrix, Network};
use crate::rng::derive_indexed;

/// A deterministic actor mapping raw observations to raw actions.
#[derive(Clone, Debug)]
pub struct Actor<'a> {
    pub network: &'a Network,
    pub norm: &'a NormStats,
    pub env: &'a EnvSpec,
}

impl Actor<'_> {
    pub fn act(&self, state: &[f64]) -> Result<Vec<f64>> {
        let out = self.network.eval_batch(&Matrix::row_vector(&self.norm.apply_state(state)))?;
        let mut a = self.env.denormalize_action(&out.data);
        self.env.clip_action(&mut a);
        Ok(a)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub mean: f64,
    pub std: f64,
    pub returns: Vec<f64>,
}

impl Evaluation {
    /// Population statistics of `returns`.
    pub fn from_returns(returns: Vec<f64>) -> Self {
        let n = returns.len().max(1) as f64;
        let mean = returns.iter().sum::<f64>() / n;
        let std = (returns.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n).sqrt();
        Self { mean, std, returns }
    }
}

/// Undiscounted returns of `policy` in the real environment; episode `i` resets from `derive_indexed(seed, i)`.
pub fn evaluate_policy(
    env: EnvKind,
    mut policy: impl FnMut(&[f64]) -> Result<Vec<f64>>,
    n_episodes: usize,
    seed: u64,
) -> Result<Evaluation> {
    let mut returns = Vec::with_capacity(n_episodes);
    for i in 0..n_episodes {
        let mut failure = None;
        let r = run_episode(env, derive_indexed(seed, i as u64), |s, _| match policy(s) {
            Ok(a) => a,
            Err(e) => {
                failure.get_or_insert(e);
                vec![0.0; env.spec().action_dim]
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        returns.push(r);
    }
    Ok(Evaluation::from_returns(returns))
}
