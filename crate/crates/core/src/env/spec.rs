use serde::{Deserialize, Serialize};

use super::{pendulum, reacher};
use crate::error::{Error, Result};

/// Static description of a built-in environment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub name: String,
    pub state_dim: usize,
    pub action_dim: usize,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    /// Box containing every reachable observation; used to clip perturbed inputs.
    pub state_low: Vec<f64>,
    pub state_high: Vec<f64>,
    pub max_episode_steps: usize,
    pub dt: f64,
}

impl EnvSpec {
    pub fn validate(&self) -> Result<()> {
        if self.state_dim == 0 || self.action_dim == 0 {
            return Err(Error::InvalidArgument(format!("{}: empty state or action", self.name)));
        }
        if self.action_low.len() != self.action_dim
            || self.action_high.len() != self.action_dim
            || self.action_low.iter().zip(&self.action_high).any(|(l, h)| l >= h)
        {
            return Err(Error::InvalidArgument(format!("{}: bad action bounds", self.name)));
        }
        if self.max_episode_steps == 0 {
            return Err(Error::InvalidArgument(format!("{}: max_episode_steps must be >= 1", self.name)));
        }
        Ok(())
    }

    pub fn clip_action(&self, a: &mut [f64]) {
        for ((x, lo), hi) in a.iter_mut().zip(&self.action_low).zip(&self.action_high) {
            *x = x.clamp(*lo, *hi);
        }
    }

    pub fn action_in_bounds(&self, a: &[f64]) -> bool {
        a.iter()
            .zip(&self.action_low)
            .zip(&self.action_high)
            .all(|((x, lo), hi)| *x >= *lo && *x <= *hi)
    }

    /// Map an action to `[-1, 1]` per dimension.
    pub fn normalize_action(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(&self.action_low)
            .zip(&self.action_high)
            .map(|((x, lo), hi)| 2.0 * (x - lo) / (hi - lo) - 1.0)
            .collect()
    }

    pub fn denormalize_action(&self, a: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(&self.action_low)
            .zip(&self.action_high)
            .map(|((x, lo), hi)| lo + (x + 1.0) * 0.5 * (hi - lo))
            .collect()
    }
}

/// The built-in environments.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    Pendulum,
    Reacher,
}

impl EnvKind {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "pendulum" => Ok(Self::Pendulum),
            "reacher" => Ok(Self::Reacher),
            other => Err(Error::InvalidArgument(format!("unknown environment '{other}'"))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Pendulum => "pendulum",
            Self::Reacher => "reacher",
        }
    }

    pub fn spec(self) -> EnvSpec {
        match self {
            Self::Pendulum => pendulum::spec(),
            Self::Reacher => reacher::spec(),
        }
    }

    pub fn reset(self, rng: &mut impl rand::Rng) -> Vec<f64> {
        match self {
            Self::Pendulum => pendulum::reset(rng),
            Self::Reacher => reacher::reset(rng),
        }
    }

    pub fn step(self, state: &[f64], action: &[f64]) -> Result<(Vec<f64>, f64)> {
        match self {
            Self::Pendulum => {
                if action.len() != 1 {
                    return Err(Error::InvalidArgument("pendulum takes one torque".into()));
                }
                pendulum::step(state, action[0])
            }
            Self::Reacher => reacher::step(state, action),
        }
    }

    /// The scripted expert used for the `expert` tier and as the score reference.
    pub fn expert_action(self, state: &[f64]) -> Vec<f64> {
        match self {
            Self::Pendulum => vec![pendulum::expert_torque(state)],
            Self::Reacher => reacher::expert_force(state),
        }
    }
}
