//! Learned simulator: history encoder, gated refiner and reward head.

pub mod metrics;
pub mod model;
pub mod train;
pub mod windows;

pub use metrics::{r_squared, RSquared};
pub use model::{PassMasks, Prediction, TrainingReport, WorldModel, WorldModelConfig};
pub use train::{evaluate_windows, split_trajectories, train_world_model, Evaluation};
pub use windows::{build_windows, Window, WindowBatch};
