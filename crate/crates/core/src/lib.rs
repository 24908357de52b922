//! Model-based data synthesis for behavior-regularized offline reinforcement learning.
//!
//! A recurrent world model proposes synthetic transitions, a three-stage uncertainty
//! filter (VAE manifold loss, input-sensitivity variance, MC-dropout variance) vets and
//! reward-penalizes them, and a twin-critic actor-critic learns from a partitioned replay
//! buffer under a warm-up then hybrid sampling curriculum.
//!
//! Start with [`pipeline`] for the end-to-end stages, or the individual modules:
//! [`nn`], [`env`], [`world_model`], [`vae`], [`uncertainty`], [`replay`], [`policy`].

pub mod env;
pub mod error;
pub mod nn;
pub mod pipeline;
pub mod policy;
pub mod replay;
pub mod rng;
pub mod uncertainty;
pub mod vae;
pub mod world_model;

pub use error::{Error, Result};
