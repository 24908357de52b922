use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, NormStats};
use crate::error::{Error, Result};
use crate::rng::rng_from;
use crate::vae::Vae;
use crate::world_model::WorldModel;

/// Thresholds and sampling sizes of the three-stage filter, in the loss convention
/// (a higher manifold score means less data support).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UncertaintyConfig {
    pub e_t: f64,
    pub s_t: f64,
    pub d_t: f64,
    pub e_max: f64,
    pub k: f64,
    pub l_p: f64,
    pub k_mc: usize,
    pub pert_sigma: f64,
    pub n_pert: usize,
}

impl UncertaintyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("uncertainty: {m}")));
        let all = [self.e_t, self.s_t, self.d_t, self.e_max, self.k, self.l_p, self.pert_sigma];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("thresholds must be finite".into());
        }
        if !(self.l_p <= self.e_t && self.e_t <= self.e_max) {
            return bad(format!(
                "need l_p <= E_t <= E_max, got {} / {} / {}",
                self.l_p, self.e_t, self.e_max
            ));
        }
        if self.k < 0.0 || self.pert_sigma < 0.0 {
            return bad("K and pert_sigma must be >= 0".into());
        }
        if self.k_mc < 2 || self.n_pert < 2 {
            return bad("k_mc and n_pert must be >= 2".into());
        }
        Ok(())
    }
}

/// A one-step dynamics model the sensitivity and epistemic checks can probe.
pub trait Dynamics {
    fn env(&self) -> &EnvSpec;
    fn norm(&self) -> &NormStats;
    fn window_n(&self) -> usize;
    fn has_dropout(&self) -> bool;
    /// Next states in environment units; `pass_seed` selects a dropout pass.
    fn predict_next(&self, histories: &[Vec<Vec<f64>>], actions: &[Vec<f64>], pass_seed: Option<u64>) -> Result<Vec<Vec<f64>>>;
}

impl Dynamics for WorldModel {
    fn env(&self) -> &EnvSpec {
        WorldModel::env(self)
    }

    fn norm(&self) -> &NormStats {
        WorldModel::norm(self)
    }

    fn window_n(&self) -> usize {
        self.config().window_n
    }

    fn has_dropout(&self) -> bool {
        self.config().dropout_rate > 0.0
    }

    fn predict_next(&self, histories: &[Vec<Vec<f64>>], actions: &[Vec<f64>], pass_seed: Option<u64>) -> Result<Vec<Vec<f64>>> {
        Ok(self
            .predict_next_batch(histories, actions, pass_seed)?
            .into_iter()
            .map(|(s, _)| s)
            .collect())
    }
}

/// Mean over dimensions of the unbiased per-dimension variance across `rows`.
pub fn mean_variance(rows: &[Vec<f64>]) -> f64 {
    let n = rows.len();
    if n < 2 {
        return 0.0;
    }
    let d = rows[0].len();
    let total: f64 = (0..d)
        .map(|j| {
            let mean = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            rows.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        })
        .sum();
    total / d as f64
}

/// Manifold check: passes when `u ≤ E_t`.
pub fn check_manifold(scorer: &Vae, s: &[f64], a: &[f64], e_t: f64) -> Result<(f64, bool)> {
    let u = scorer.score(s, a)?;
    Ok((u, u <= e_t))
}

/// Sensitivity check: variance (normalized state units) of the predicted next state when the newest
/// history state and the action receive `n_pert` seeded Gaussian perturbations of `pert_sigma`
/// normalized units, clipped to the environment bounds.
pub fn check_sensitivity(
    model: &impl Dynamics,
    history: &[Vec<f64>],
    action: &[f64],
    pert_sigma: f64,
    n_pert: usize,
    s_t: f64,
    seed: u64,
) -> Result<(f64, bool)> {
    if n_pert < 2 {
        return Err(Error::InvalidArgument(format!("n_pert must be >= 2, got {n_pert}")));
    }
    let var = if pert_sigma == 0.0 {
        0.0
    } else {
        let env = model.env();
        let norm = model.norm();
        let noise = Normal::new(0.0, pert_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let mut rng = rng_from(seed);
        let newest = history.last().ok_or_else(|| Error::InvalidArgument("empty history".into()))?;
        let mut histories = Vec::with_capacity(n_pert);
        let mut actions = Vec::with_capacity(n_pert);
        for _ in 0..n_pert {
            let s: Vec<f64> = newest
                .iter()
                .enumerate()
                .map(|(j, x)| {
                    let v = x + noise.sample(&mut rng) * norm.state_std[j];
                    v.clamp(env.state_low[j], env.state_high[j])
                })
                .collect();
            let mut a: Vec<f64> = action
                .iter()
                .enumerate()
                .map(|(j, x)| x + noise.sample(&mut rng) * 0.5 * (env.action_high[j] - env.action_low[j]))
                .collect();
            env.clip_action(&mut a);
            let mut h = history.to_vec();
            *h.last_mut().expect("non-empty") = s;
            histories.push(h);
            actions.push(a);
        }
        let preds = model.predict_next(&histories, &actions, None)?;
        let normed: Vec<Vec<f64>> = preds.iter().map(|p| norm.apply_state(p)).collect();
        mean_variance(&normed)
    };
    if !var.is_finite() {
        return Err(Error::NonFinite("sensitivity variance".into()));
    }
    Ok((var, var <= s_t))
}

/// Epistemic check: `k_mc` dropout passes seeded `seed, seed + 1, …`.
pub fn check_epistemic(
    model: &impl Dynamics,
    history: &[Vec<f64>],
    action: &[f64],
    k_mc: usize,
    d_t: f64,
    seed: u64,
) -> Result<(f64, bool)> {
    if k_mc < 2 {
        return Err(Error::InvalidArgument(format!("k_mc must be >= 2, got {k_mc}")));
    }
    let seeds: Vec<u64> = (0..k_mc as u64).map(|i| seed.wrapping_add(i)).collect();
    check_epistemic_with_seeds(model, history, action, &seeds, d_t)
}

/// Epistemic check over explicit per-pass mask seeds.
pub fn check_epistemic_with_seeds(
    model: &impl Dynamics,
    history: &[Vec<f64>],
    action: &[f64],
    pass_seeds: &[u64],
    d_t: f64,
) -> Result<(f64, bool)> {
    if !model.has_dropout() {
        return Err(Error::InvalidArgument(
            "epistemic check needs a model with nonzero dropout".into(),
        ));
    }
    let h = [history.to_vec()];
    let a = [action.to_vec()];
    let passes = pass_seeds
        .iter()
        .map(|s| Ok(model.norm().apply_state(&model.predict_next(&h, &a, Some(*s))?[0])))
        .collect::<Result<Vec<_>>>()?;
    let var = mean_variance(&passes);
    if !var.is_finite() {
        return Err(Error::NonFinite("epistemic variance".into()));
    }
    Ok((var, var <= d_t))
}

/// `R / (1 + K·max(0, u − l_p))`.
pub fn penalize_reward(r: f64, u: f64, k: f64, l_p: f64) -> f64 {
    r / (1.0 + k * (u - l_p).max(0.0))
}
