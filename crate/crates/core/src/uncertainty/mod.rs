//! Hierarchical filter for synthetic transitions: manifold, sensitivity and epistemic checks,
//! reward penalization and rollout truncation.

pub mod calibrate;
pub mod checks;
pub mod filter;

pub use calibrate::{calibrate, CalibrationConfig, CalibrationStats, ModelScorer, Probe};
pub use checks::{
    check_epistemic, check_epistemic_with_seeds, check_manifold, check_sensitivity, mean_variance, penalize_reward,
    Dynamics, UncertaintyConfig,
};
pub use filter::{
    filter_rollout, write_verdict_log, Ablations, Candidate, CandidateScorer, Decision, FilterOutcome,
    FilteredTransition, ScoreTable, UncertaintyVerdict,
};
