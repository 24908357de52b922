//! Torque-limited pendulum, observed as `[cos θ, sin θ, ω]` with θ = 0 upright.

use std::f64::consts::PI;

use rand::Rng;

use super::spec::EnvSpec;
use crate::error::{Error, Result};

pub const GRAVITY: f64 = 10.0;
pub const MASS: f64 = 1.0;
pub const LENGTH: f64 = 1.0;
pub const DT: f64 = 0.05;
pub const MAX_SPEED: f64 = 8.0;
pub const MAX_TORQUE: f64 = 2.0;
/// Semi-implicit Euler substeps per control step. Energy drift of the integrator is
/// O(dt / SUBSTEPS); 500 keeps the zero-torque per-step energy gain below 1e-3.
pub const SUBSTEPS: usize = 500;
pub const EPISODE_STEPS: usize = 200;

pub fn spec() -> EnvSpec {
    EnvSpec {
        name: "pendulum".into(),
        state_dim: 3,
        action_dim: 1,
        action_low: vec![-MAX_TORQUE],
        action_high: vec![MAX_TORQUE],
        state_low: vec![-1.0, -1.0, -MAX_SPEED],
        state_high: vec![1.0, 1.0, MAX_SPEED],
        max_episode_steps: EPISODE_STEPS,
        dt: DT,
    }
}

/// Wrap into `[-π, π]`. Angles already in range are returned untouched, which keeps
/// the map exactly odd-symmetric for atan2 outputs.
pub fn wrap_angle(x: f64) -> f64 {
    if (-PI..=PI).contains(&x) {
        x
    } else {
        (x + PI).rem_euclid(2.0 * PI) - PI
    }
}

pub fn observe(theta: f64, omega: f64) -> Vec<f64> {
    vec![theta.cos(), theta.sin(), omega]
}

pub fn angle(state: &[f64]) -> f64 {
    state[1].atan2(state[0])
}

/// Mechanical energy `½·(m l²/3)·ω² + m g (l/2) cos θ` of a uniform rod.
pub fn energy(state: &[f64]) -> f64 {
    let (c, w) = (state[0], state[2]);
    0.5 * (MASS * LENGTH * LENGTH / 3.0) * w * w + MASS * GRAVITY * 0.5 * LENGTH * c
}

pub fn reward(theta: f64, omega: f64, torque: f64) -> f64 {
    let th = wrap_angle(theta);
    -(th * th + 0.1 * omega * omega + 0.001 * torque * torque)
}

pub fn reset(rng: &mut impl Rng) -> Vec<f64> {
    let th = rng.gen_range(-PI..PI);
    let w = rng.gen_range(-1.0..1.0);
    observe(th, w)
}

pub fn step(state: &[f64], torque: f64) -> Result<(Vec<f64>, f64)> {
    if state.len() != 3 || state.iter().chain([&torque]).any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "pendulum step needs a finite 3-vector state and torque, got {state:?}, {torque}"
        )));
    }
    if torque.abs() > MAX_TORQUE {
        return Err(Error::InvalidArgument(format!(
            "torque {torque} exceeds limit {MAX_TORQUE}"
        )));
    }
    let radius = state[0] * state[0] + state[1] * state[1];
    if (radius - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "state is off the unit circle (cos²+sin² = {radius})"
        )));
    }
    let mut th = angle(state);
    let mut w = state[2];
    let r = reward(th, w, torque);
    let h = DT / SUBSTEPS as f64;
    let accel_g = 3.0 * GRAVITY / (2.0 * LENGTH);
    let accel_u = 3.0 / (MASS * LENGTH * LENGTH);
    for _ in 0..SUBSTEPS {
        w += (accel_g * th.sin() + accel_u * torque) * h;
        w = w.clamp(-MAX_SPEED, MAX_SPEED);
        th += w * h;
    }
    Ok((observe(th, w), r))
}

/// Energy-shaping swing-up with a PD catch near the top.
pub fn expert_torque(state: &[f64]) -> f64 {
    let th = wrap_angle(angle(state));
    let w = state[2];
    let e_top = MASS * GRAVITY * 0.5 * LENGTH;
    let u = if th.cos() > 0.85 && w.abs() < 4.0 {
        -(10.0 * th + 2.0 * w)
    } else if w.abs() > 0.1 {
        5.0 * (e_top - energy(state)) * w
    } else {
        MAX_TORQUE
    };
    u.clamp(-MAX_TORQUE, MAX_TORQUE)
}
