//! Built-in environments, tiered behavior datasets, normalization and scoring.

pub mod dataset;
pub mod io;
pub mod norm;
pub mod pendulum;
pub mod reacher;
pub mod score;
pub mod spec;

pub use dataset::{generate_dataset, Dataset, MixRatio, Tier, Trajectory, Transition};
pub use io::{read_dataset, write_dataset, DatasetManifest};
pub use norm::NormStats;
pub use score::{normalized_score, reference_returns};
pub use spec::{EnvKind, EnvSpec};
