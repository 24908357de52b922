//! Planar point mass with linear drag, pushed toward the origin. State `[x, y, vx, vy]`.

use rand::Rng;

use super::spec::EnvSpec;
use crate::error::{Error, Result};

pub const DT: f64 = 0.1;
pub const DRAG: f64 = 1.0;
pub const MAX_FORCE: f64 = 1.0;
pub const WALL: f64 = 3.0;
pub const EPISODE_STEPS: usize = 100;

pub fn spec() -> EnvSpec {
    EnvSpec {
        name: "reacher".into(),
        state_dim: 4,
        action_dim: 2,
        action_low: vec![-MAX_FORCE; 2],
        action_high: vec![MAX_FORCE; 2],
        state_low: vec![-WALL, -WALL, -2.0, -2.0],
        state_high: vec![WALL, WALL, 2.0, 2.0],
        max_episode_steps: EPISODE_STEPS,
        dt: DT,
    }
}

pub fn reset(rng: &mut impl Rng) -> Vec<f64> {
    vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), 0.0, 0.0]
}

pub fn step(state: &[f64], action: &[f64]) -> Result<(Vec<f64>, f64)> {
    if state.len() != 4 || action.len() != 2 || state.iter().chain(action).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "reacher step needs finite 4-vector state and 2-vector action, got {state:?}, {action:?}"
        )));
    }
    if action.iter().any(|a| a.abs() > MAX_FORCE) {
        return Err(Error::InvalidArgument(format!("force {action:?} exceeds limit")));
    }
    let p2 = state[0] * state[0] + state[1] * state[1];
    let v2 = state[2] * state[2] + state[3] * state[3];
    let a2 = action[0] * action[0] + action[1] * action[1];
    let r = -(p2 + 0.1 * v2 + 0.01 * a2);
    let mut next = vec![0.0; 4];
    for k in 0..2 {
        let mut v = state[2 + k] + (action[k] - DRAG * state[2 + k]) * DT;
        let mut p = state[k] + v * DT;
        if p.abs() > WALL {
            p = p.clamp(-WALL, WALL);
            v = 0.0;
        }
        next[k] = p;
        next[2 + k] = v;
    }
    Ok((next, r))
}

/// PD controller toward the origin.
pub fn expert_force(state: &[f64]) -> Vec<f64> {
    (0..2)
        .map(|k| (-2.0 * state[k] - 1.5 * state[2 + k]).clamp(-MAX_FORCE, MAX_FORCE))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_at_rest_is_fixed() {
        let (s, r) = step(&[0.0; 4], &[0.0, 0.0]).unwrap();
        assert_eq!(s, vec![0.0; 4]);
        assert_eq!(r, 0.0);
    }

    #[test]
    fn drag_slows_free_motion() {
        let (s, _) = step(&[0.0, 0.0, 1.0, -1.0], &[0.0, 0.0]).unwrap();
        assert!((s[2] - 0.9).abs() < 1e-12 && (s[3] + 0.9).abs() < 1e-12);
    }

    #[test]
    fn expert_reaches_origin() {
        let mut s = vec![1.0, -0.8, 0.0, 0.0];
        for _ in 0..EPISODE_STEPS {
            let a = expert_force(&s);
            s = step(&s, &a).unwrap().0;
        }
        assert!(s[0].abs() < 0.05 && s[1].abs() < 0.05, "{s:?}");
    }
}
