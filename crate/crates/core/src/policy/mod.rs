//! Behavior-regularized twin-critic learner and real-environment evaluation.

pub mod eval;
pub mod learner;

pub use eval::{evaluate_policy, Actor, Evaluation};
pub use learner::{CriticStats, Learner, PolicyBatch, PolicyConfig};
