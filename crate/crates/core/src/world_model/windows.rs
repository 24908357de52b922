//! Sliding windows over trajectories for multi-step supervision.
//!
//! A window at offset `o` uses transitions `o .. o + n + τ`: the states of the first
//! `n` are the history, step `k` applies the action of transition `o + n − 1 + k`, and
//! its targets are the state of transition `o + n + k` and the reward of `o + n − 1 + k`.
//! A trajectory of exactly `n + τ` transitions therefore yields one window.

use crate::env::{EnvSpec, NormStats, Trajectory};
use crate::error::{Error, Result};
use crate::nn::Matrix;

#[derive(Clone, Debug, PartialEq)]
pub struct Window {
    pub trajectory: usize,
    pub offset: usize,
    /// Number of leading history slots filled by repeating the first state.
    pub padded: usize,
    pub history: Vec<Vec<f64>>,
    pub actions: Vec<Vec<f64>>,
    pub target_states: Vec<Vec<f64>>,
    pub target_rewards: Vec<f64>,
}

/// Enumerate every window, visiting trajectories longest-first (ties by id).
///
/// Trajectories shorter than `n + τ` but with at least `τ + 1` transitions contribute a
/// single front-padded window.
pub fn build_windows(trajectories: &[Trajectory], window_n: usize, horizon_tau: usize) -> Result<Vec<Window>> {
    if window_n == 0 || horizon_tau == 0 {
        return Err(Error::InvalidArgument("window_n and horizon_tau must be >= 1".into()));
    }
    let mut order: Vec<&Trajectory> = trajectories.iter().collect();
    order.sort_by(|a, b| b.len().cmp(&a.len()).then(a.id.cmp(&b.id)));
    let span = window_n + horizon_tau;
    let mut out = Vec::new();
    for t in order {
        let len = t.len();
        if len < horizon_tau + 1 {
            continue;
        }
        let padded = span.saturating_sub(len);
        let count = if padded > 0 { 1 } else { len - span + 1 };
        for o in 0..count {
            // index into the padded sequence: i < padded → first state
            let state_at = |i: usize| -> &Vec<f64> {
                if i < padded {
                    &t.transitions[0].state
                } else {
                    &t.transitions[o + i - padded].state
                }
            };
            let tr_at = |i: usize| &t.transitions[o + i - padded];
            out.push(Window {
                trajectory: t.id,
                offset: o,
                padded,
                history: (0..window_n).map(|i| state_at(i).clone()).collect(),
                actions: (0..horizon_tau).map(|k| tr_at(window_n - 1 + k).action.clone()).collect(),
                target_states: (0..horizon_tau).map(|k| state_at(window_n + k).clone()).collect(),
                target_rewards: (0..horizon_tau).map(|k| tr_at(window_n - 1 + k).reward).collect(),
            });
        }
    }
    if out.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "no trajectory has the {} transitions needed for a window",
            horizon_tau + 1
        )));
    }
    Ok(out)
}

/// Normalized, batched tensors for a set of windows.
#[derive(Clone, Debug)]
pub struct WindowBatch {
    /// `n` matrices of `batch x state_dim`, oldest first.
    pub histories: Vec<Matrix>,
    /// `τ` matrices of `batch x action_dim`.
    pub actions: Vec<Matrix>,
    pub target_states: Vec<Matrix>,
    /// `τ` matrices of `batch x 1`, rewards mapped to `[0, 1]`.
    pub target_rewards: Vec<Matrix>,
}

impl WindowBatch {
    pub fn from_windows(windows: &[&Window], norm: &NormStats, spec: &EnvSpec) -> Result<Self> {
        let first = windows
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty window batch".into()))?;
        let n = first.history.len();
        let tau = first.actions.len();
        let states = |f: &dyn Fn(&Window) -> &Vec<f64>| -> Result<Matrix> {
            let rows: Vec<Vec<f64>> = windows.iter().map(|w| norm.apply_state(f(w))).collect();
            Matrix::from_rows(&rows)
        };
        let histories = (0..n).map(|i| states(&|w| &w.history[i])).collect::<Result<_>>()?;
        let target_states = (0..tau).map(|k| states(&|w| &w.target_states[k])).collect::<Result<_>>()?;
        let actions = (0..tau)
            .map(|k| {
                let rows: Vec<Vec<f64>> = windows.iter().map(|w| spec.normalize_action(&w.actions[k])).collect();
                Matrix::from_rows(&rows)
            })
            .collect::<Result<_>>()?;
        let target_rewards = (0..tau)
            .map(|k| {
                let v = windows.iter().map(|w| norm.apply_reward(w.target_rewards[k])).collect();
                Matrix::from_vec(windows.len(), 1, v)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            histories,
            actions,
            target_states,
            target_rewards,
        })
    }

    pub fn len(&self) -> usize {
        self.actions.first().map(|m| m.rows).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{Tier, Transition};

    fn traj(id: usize, len: usize) -> Trajectory {
        let transitions = (0..len)
            .map(|t| Transition {
                state: vec![(id * 1000 + t) as f64],
                action: vec![t as f64],
                reward: -(t as f64),
                next_state: vec![(id * 1000 + t + 1) as f64],
                done: t + 1 == len,
            })
            .collect();
        Trajectory {
            id,
            behavior_tier: Tier::Random,
            seed: 0,
            transitions,
        }
    }

    #[test]
    fn window_counts() {
        let (n, tau) = (10, 5);
        assert_eq!(build_windows(&[traj(0, n + tau)], n, tau).unwrap().len(), 1);
        for k in [1, 2, 7] {
            assert_eq!(build_windows(&[traj(0, n + tau + k)], n, tau).unwrap().len(), k + 1);
        }
    }

    #[test]
    fn short_trajectories_are_padded_or_skipped() {
        let w = build_windows(&[traj(0, 8)], 10, 5).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].padded, 7);
        assert!(w[0].history[..7].iter().all(|s| s == &vec![0.0]));
        assert_eq!(w[0].target_states[4], vec![7.0]);
        assert!(build_windows(&[traj(0, 5)], 10, 5).is_err());
    }

    #[test]
    fn windows_never_mix_trajectories() {
        // Brute force: every window's states and actions must come from its own trajectory,
        // and the set of windows must be exactly all valid offsets.
        let trajs = [traj(1, 23), traj(2, 17)];
        let (n, tau) = (4, 3);
        let ws = build_windows(&trajs, n, tau).unwrap();
        let mut expected = Vec::new();
        for t in &trajs {
            for o in 0..=(t.len() - n - tau) {
                expected.push((t.id, o));
            }
        }
        let mut got: Vec<(usize, usize)> = ws.iter().map(|w| (w.trajectory, w.offset)).collect();
        got.sort();
        expected.sort();
        assert_eq!(got, expected);
        for w in &ws {
            let base = (w.trajectory * 1000) as f64;
            let all = w.history.iter().chain(&w.target_states);
            for (i, s) in all.enumerate() {
                assert_eq!(s[0], base + (w.offset + i) as f64);
            }
            for (k, a) in w.actions.iter().enumerate() {
                assert_eq!(a[0], (w.offset + n - 1 + k) as f64);
            }
        }
        // longest trajectory first
        assert_eq!(ws[0].trajectory, 1);
    }
}
