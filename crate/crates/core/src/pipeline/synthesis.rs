use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::env::{Trajectory, Transition};
use crate::error::{Error, Result};
use crate::rng::derive_indexed;
use crate::uncertainty::{
    filter_rollout, Ablations, Candidate, FilteredTransition, ModelScorer, Probe, UncertaintyConfig,
    UncertaintyVerdict,
};
use crate::vae::Vae;
use crate::world_model::WorldModel;

/// The `n` states ending at step `t` of `traj`, front-padded with the first state.
pub fn window_at(traj: &Trajectory, t: usize, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| {
            let idx = (t + i + 1).saturating_sub(n);
            traj.transitions[idx].state.clone()
        })
        .collect()
}

/// Every decision point of `trajectories` as a probe carrying the dataset action.
pub fn dataset_probes(trajectories: &[Trajectory], n: usize) -> Vec<Probe> {
    trajectories
        .iter()
        .flat_map(|tr| {
            (0..tr.len()).map(move |t| Probe {
                history: window_at(tr, t, n),
                action: tr.transitions[t].action.clone(),
            })
        })
        .collect()
}

/// Uniformly chosen real windows to start rollouts from, with their (trajectory, step) origin.
pub fn sample_starts(trajectories: &[Trajectory], count: usize, rng: &mut impl Rng) -> Vec<(usize, usize)> {
    (0..count)
        .map(|_| {
            let i = rng.gen_range(0..trajectories.len());
            (i, rng.gen_range(0..trajectories[i].len()))
        })
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundStats {
    pub candidates: usize,
    pub accepted: usize,
    pub truncated: usize,
}

impl RoundStats {
    pub fn add(&mut self, other: RoundStats) {
        self.candidates += other.candidates;
        self.accepted += other.accepted;
        self.truncated += other.truncated;
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.candidates == 0 {
            0.0
        } else {
            self.accepted as f64 / self.candidates as f64
        }
    }
}

/// Frozen models and thresholds used to generate and vet synthetic rollouts.
pub struct Synthesizer<'a> {
    pub model: &'a WorldModel,
    pub vae: Option<&'a Vae>,
    pub thresholds: &'a UncertaintyConfig,
    pub ablations: Ablations,
}

pub struct RoundOutput {
    pub accepted: Vec<FilteredTransition>,
    pub verdicts: Vec<UncertaintyVerdict>,
    pub stats: RoundStats,
}

impl Synthesizer<'_> {
    /// Roll every start window forward `horizon` steps in the simulator, choosing actions with
    /// `policy(step, newest states)`, then filter each rollout. Rollout ids start at `first_id`.
    pub fn round(
        &self,
        starts: Vec<Vec<Vec<f64>>>,
        horizon: usize,
        mut policy: impl FnMut(usize, &[Vec<f64>]) -> Result<Vec<Vec<f64>>>,
        first_id: usize,
        seed: u64,
    ) -> Result<RoundOutput> {
        if self.vae.is_none() && !self.ablations.no_vae {
            return Err(Error::InvalidArgument("synthesis without a vae requires the no-vae ablation".into()));
        }
        let r = starts.len();
        let mut windows = starts;
        let mut probes: Vec<Vec<Probe>> = vec![Vec::with_capacity(horizon); r];
        let mut candidates: Vec<Vec<Candidate>> = vec![Vec::with_capacity(horizon); r];
        for k in 0..horizon {
            let newest: Vec<Vec<f64>> = windows.iter().map(|w| w[w.len() - 1].clone()).collect();
            let actions = policy(k, &newest)?;
            let preds = self.model.predict_next_batch(&windows, &actions, None)?;
            for (i, (next, reward)) in preds.into_iter().enumerate() {
                probes[i].push(Probe {
                    history: windows[i].clone(),
                    action: actions[i].clone(),
                });
                candidates[i].push(Candidate {
                    transition: Transition {
                        state: newest[i].clone(),
                        action: actions[i].clone(),
                        reward: self.model.norm().invert_reward(reward),
                        next_state: next.clone(),
                        done: false,
                    },
                    reward: reward.clamp(0.0, 1.0),
                });
                windows[i].remove(0);
                windows[i].push(next);
            }
        }
        let mut out = RoundOutput {
            accepted: Vec::new(),
            verdicts: Vec::new(),
            stats: RoundStats::default(),
        };
        for (i, (cands, prbs)) in candidates.iter().zip(&probes).enumerate() {
            let mut scorer = ModelScorer {
                model: self.model,
                vae: self.vae,
                probes: prbs,
                config: self.thresholds,
                seed: derive_indexed(seed, i as u64),
            };
            let res = filter_rollout(first_id + i, cands, &mut scorer, self.thresholds, self.ablations)?;
            out.stats.add(RoundStats {
                candidates: cands.len(),
                accepted: res.accepted.len(),
                truncated: usize::from(res.truncated_at.is_some()),
            });
            out.accepted.extend(res.accepted);
            out.verdicts.extend(res.verdicts);
        }
        Ok(out)
    }
}
