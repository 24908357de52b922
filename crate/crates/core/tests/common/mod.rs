#![allow(dead_code)]

use morebrac::env::{EnvSpec, Tier, Trajectory, Transition};
use morebrac::rng::rng_from;
use rand::Rng;

pub const A: [[f64; 2]; 2] = [[0.95, 0.1], [-0.1, 0.95]];
pub const B: [f64; 2] = [0.0, 0.1];

pub fn linear_spec() -> EnvSpec {
    EnvSpec {
        name: "linear".into(),
        state_dim: 2,
        action_dim: 1,
        action_low: vec![-1.0],
        action_high: vec![1.0],
        state_low: vec![-5.0, -5.0],
        state_high: vec![5.0, 5.0],
        max_episode_steps: 60,
        dt: 1.0,
    }
}

pub fn linear_step(s: &[f64], a: f64) -> Vec<f64> {
    (0..2).map(|i| A[i][0] * s[0] + A[i][1] * s[1] + B[i] * a).collect()
}

pub fn linear_reward(s: &[f64]) -> f64 {
    -(s[0] * s[0] + s[1] * s[1])
}

/// Trajectories of `s' = As + Ba` under uniform random actions.
pub fn linear_trajectories(count: usize, len: usize, seed: u64) -> Vec<Trajectory> {
    let mut rng = rng_from(seed);
    (0..count)
        .map(|id| {
            let mut s: Vec<f64> = (0..2).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let transitions = (0..len)
                .map(|t| {
                    let a = rng.gen_range(-1.0..1.0);
                    let next = linear_step(&s, a);
                    let tr = Transition {
                        state: s.clone(),
                        action: vec![a],
                        reward: linear_reward(&s),
                        next_state: next.clone(),
                        done: t + 1 == len,
                    };
                    s = next;
                    tr
                })
                .collect();
            Trajectory {
                id,
                behavior_tier: Tier::Random,
                seed,
                transitions,
            }
        })
        .collect()
}
