//! Offline datasets produced by tiered behavior policies.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::spec::EnvKind;
use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from};

/// One `(s, a, r, s', done)` record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

impl Transition {
    pub fn is_finite(&self) -> bool {
        self.state
            .iter()
            .chain(&self.action)
            .chain(&self.next_state)
            .chain([&self.reward])
            .all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Tier {
    Random,
    Medium,
    Expert,
    ReplayMix,
}

impl Tier {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "random" => Ok(Self::Random),
            "medium" => Ok(Self::Medium),
            "expert" => Ok(Self::Expert),
            "replay-mix" => Ok(Self::ReplayMix),
            other => Err(Error::InvalidArgument(format!("unknown dataset tier '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Random => "random",
            Self::Medium => "medium",
            Self::Expert => "expert",
            Self::ReplayMix => "replay-mix",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub id: usize,
    pub behavior_tier: Tier,
    pub seed: u64,
    pub transitions: Vec<Transition>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn undiscounted_return(&self) -> f64 {
        self.transitions.iter().map(|t| t.reward).sum()
    }

    /// `next_state[t] == state[t+1]` everywhere and `done` only on the last step.
    pub fn is_chained(&self) -> bool {
        let n = self.transitions.len();
        self.transitions.windows(2).all(|w| w[0].next_state == w[1].state)
            && self.transitions.iter().enumerate().all(|(i, t)| t.done == (i + 1 == n))
    }
}

/// Behavior mixture for the `replay-mix` tier: relative weights of random, medium, expert.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixRatio {
    pub random: f64,
    pub medium: f64,
    pub expert: f64,
}

impl Default for MixRatio {
    fn default() -> Self {
        Self {
            random: 1.0,
            medium: 1.0,
            expert: 1.0,
        }
    }
}

/// Tier behavior knobs.
pub const MEDIUM_NOISE_FRACTION: f64 = 0.3;
pub const MEDIUM_RANDOM_EPISODES: f64 = 0.2;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub env: EnvKind,
    pub tier: Tier,
    pub seed: u64,
    pub trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn num_transitions(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn transitions(&self) -> impl Iterator<Item = &Transition> {
        self.trajectories.iter().flat_map(|t| t.transitions.iter())
    }

    /// Mean undiscounted return over complete (full-length) episodes, falling back to all.
    pub fn mean_episode_return(&self) -> f64 {
        let full = self.env.spec().max_episode_steps;
        let complete: Vec<f64> = self
            .trajectories
            .iter()
            .filter(|t| t.len() == full)
            .map(Trajectory::undiscounted_return)
            .collect();
        let rs = if complete.is_empty() {
            self.trajectories.iter().map(Trajectory::undiscounted_return).collect()
        } else {
            complete
        };
        rs.iter().sum::<f64>() / rs.len().max(1) as f64
    }

    /// Concatenate datasets of one environment, renumbering trajectory ids.
    pub fn concat(parts: Vec<Dataset>, tier: Tier, seed: u64) -> Result<Dataset> {
        let env = parts
            .first()
            .map(|d| d.env)
            .ok_or_else(|| Error::InvalidArgument("nothing to concatenate".into()))?;
        let mut trajectories = Vec::new();
        for d in parts {
            if d.env != env {
                return Err(Error::InvalidArgument("mixed environments".into()));
            }
            for mut t in d.trajectories {
                t.id = trajectories.len();
                trajectories.push(t);
            }
        }
        Ok(Dataset {
            env,
            tier,
            seed,
            trajectories,
        })
    }
}

/// Roll out a behavior policy until `n_transitions` are collected.
pub fn generate_dataset(env: EnvKind, tier: Tier, n_transitions: usize, seed: u64, mix: MixRatio) -> Result<Dataset> {
    if n_transitions == 0 {
        return Err(Error::InvalidArgument("n_transitions must be >= 1".into()));
    }
    if tier == Tier::ReplayMix {
        let weights = [mix.random, mix.medium, mix.expert];
        if weights.iter().any(|w| *w < 0.0) || weights.iter().sum::<f64>() <= 0.0 {
            return Err(Error::InvalidArgument(format!("bad replay-mix ratio {mix:?}")));
        }
        let counts = largest_remainder(n_transitions, &weights);
        let mut parts = Vec::new();
        for (t, n) in [Tier::Random, Tier::Medium, Tier::Expert].into_iter().zip(counts) {
            if n > 0 {
                parts.push(generate_dataset(env, t, n, derive_seed(seed, t.name()), mix)?);
            }
        }
        return Dataset::concat(parts, Tier::ReplayMix, seed);
    }

    let spec = env.spec();
    let mut trajectories = Vec::new();
    let mut remaining = n_transitions;
    while remaining > 0 {
        let id = trajectories.len();
        let traj_seed = seed.wrapping_add(id as u64);
        let len = remaining.min(spec.max_episode_steps);
        trajectories.push(rollout_tier(env, tier, id, traj_seed, len)?);
        remaining -= len;
    }
    Ok(Dataset {
        env,
        tier,
        seed,
        trajectories,
    })
}

fn rollout_tier(env: EnvKind, tier: Tier, id: usize, seed: u64, len: usize) -> Result<Trajectory> {
    let spec = env.spec();
    let mut rng = rng_from(seed);
    let random_episode = match tier {
        Tier::Random => true,
        Tier::Medium => rng.gen::<f64>() < MEDIUM_RANDOM_EPISODES,
        _ => false,
    };
    let noise: Vec<Normal<f64>> = spec
        .action_low
        .iter()
        .zip(&spec.action_high)
        .map(|(l, h)| Normal::new(0.0, MEDIUM_NOISE_FRACTION * (h - l)).expect("positive sigma"))
        .collect();
    let mut state = env.reset(&mut rng);
    let mut transitions = Vec::with_capacity(len);
    for t in 0..len {
        let mut action = if random_episode {
            spec.action_low
                .iter()
                .zip(&spec.action_high)
                .map(|(l, h)| rng.gen_range(*l..*h))
                .collect()
        } else {
            let mut a = env.expert_action(&state);
            if tier == Tier::Medium {
                for (x, n) in a.iter_mut().zip(&noise) {
                    *x += n.sample(&mut rng);
                }
            }
            a
        };
        spec.clip_action(&mut action);
        let (next_state, reward) = env.step(&state, &action)?;
        transitions.push(Transition {
            state: std::mem::replace(&mut state, next_state.clone()),
            action,
            reward,
            next_state,
            done: t + 1 == len,
        });
    }
    Ok(Trajectory {
        id,
        behavior_tier: tier,
        seed,
        transitions,
    })
}

/// Split `total` proportionally to `weights` using the largest-remainder method.
/// Ties in the remainder go to the earlier index.
pub fn largest_remainder(total: usize, weights: &[f64]) -> Vec<usize> {
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return vec![0; weights.len()];
    }
    let exact: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| (e + 1e-9).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - counts[a] as f64;
        let rb = exact[b] - counts[b] as f64;
        rb.partial_cmp(&ra).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b))
    });
    for &i in order.iter().take(total.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_tier_exact_count_and_bounds() {
        let d = generate_dataset(EnvKind::Pendulum, Tier::Random, 1000, 5, MixRatio::default()).unwrap();
        assert_eq!(d.num_transitions(), 1000);
        let spec = EnvKind::Pendulum.spec();
        assert!(d.transitions().all(|t| spec.action_in_bounds(&t.action)));
        assert!(d.trajectories.iter().all(Trajectory::is_chained));
        // Kolmogorov–Smirnov distance to U(-2, 2); the 1% critical value at n=1000 is ~0.0515.
        let mut a: Vec<f64> = d.transitions().map(|t| t.action[0]).collect();
        a.sort_by(f64::total_cmp);
        let n = a.len() as f64;
        let ks = a
            .iter()
            .enumerate()
            .map(|(i, x)| {
                let cdf = (x + 2.0) / 4.0;
                ((i + 1) as f64 / n - cdf).abs().max((cdf - i as f64 / n).abs())
            })
            .fold(0.0, f64::max);
        assert!(ks < 0.0515, "KS statistic {ks}");
    }

    #[test]
    fn same_seed_same_dataset() {
        let a = generate_dataset(EnvKind::Reacher, Tier::Medium, 700, 9, MixRatio::default()).unwrap();
        let b = generate_dataset(EnvKind::Reacher, Tier::Medium, 700, 9, MixRatio::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn replay_mix_splits_by_ratio() {
        let d = generate_dataset(EnvKind::Pendulum, Tier::ReplayMix, 900, 1, MixRatio::default()).unwrap();
        assert_eq!(d.num_transitions(), 900);
        let count = |t: Tier| {
            d.trajectories
                .iter()
                .filter(|x| x.behavior_tier == t)
                .map(Trajectory::len)
                .sum::<usize>()
        };
        assert_eq!(count(Tier::Random), 300);
        assert_eq!(count(Tier::Medium), 300);
        assert_eq!(count(Tier::Expert), 300);
        assert!(d.trajectories.iter().enumerate().all(|(i, t)| t.id == i));
    }

    #[test]
    fn unknown_tier_and_zero_count_are_rejected() {
        assert!(Tier::from_name("medium-expert-ish").is_err());
        assert!(generate_dataset(EnvKind::Pendulum, Tier::Random, 0, 1, MixRatio::default()).is_err());
    }

    #[test]
    fn largest_remainder_examples() {
        assert_eq!(largest_remainder(100, &[0.6, 0.3, 0.1]), vec![60, 30, 10]);
        assert_eq!(largest_remainder(10, &[1.0, 1.0, 1.0]), vec![4, 3, 3]);
        assert_eq!(largest_remainder(7, &[0.5, 0.5]), vec![4, 3]);
    }
}
