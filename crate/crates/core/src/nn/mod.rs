//! Minimal differentiable-computation substrate.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod layers;
pub mod matrix;
pub mod network;
pub mod param;
pub mod tape;

pub use adam::{Adam, AdamConfig, OptimizerState};
pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, Parameterized};
pub use layers::{Activation, DropoutMask, LayerKind, LayerSpec, RecurrentState};
pub use matrix::Matrix;
pub use network::{ForwardCache, ForwardPass, Network, StateVars};
pub use param::{clip_global_norm, ParamId, ParamStore, ParamTensor};
pub use tape::{Gradients, Tape, Var};
