use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::checks::{penalize_reward, UncertaintyConfig};
use crate::env::Transition;
use crate::error::{Error, Result};

/// Components of the filter that can be switched off.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablations {
    /// No manifold scorer at all: the manifold check and truncation always pass and,
    /// with no manifold score to read, the penalty is the identity.
    pub no_vae: bool,
    pub no_sensitivity: bool,
    pub no_mc: bool,
    pub no_penalty: bool,
}

/// Lazily computed scores for the candidates of one rollout, indexed by step.
pub trait CandidateScorer {
    fn manifold(&mut self, step: usize) -> Result<f64>;
    fn sensitivity(&mut self, step: usize) -> Result<f64>;
    fn epistemic(&mut self, step: usize) -> Result<f64>;
}

/// Precomputed score table; handy for audits and property tests.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreTable {
    pub manifold: Vec<f64>,
    pub sensitivity: Vec<f64>,
    pub epistemic: Vec<f64>,
}

impl CandidateScorer for ScoreTable {
    fn manifold(&mut self, step: usize) -> Result<f64> {
        Ok(self.manifold[step])
    }

    fn sensitivity(&mut self, step: usize) -> Result<f64> {
        Ok(self.sensitivity[step])
    }

    fn epistemic(&mut self, step: usize) -> Result<f64> {
        Ok(self.epistemic[step])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Accepted,
    FailedManifold,
    FailedSensitivity,
    FailedEpistemic,
    Truncated,
    AfterTruncation,
}

impl Decision {
    pub fn name(self) -> &'static str {
        match self {
            Decision::Accepted => "accepted",
            Decision::FailedManifold => "failed-manifold",
            Decision::FailedSensitivity => "failed-sensitivity",
            Decision::FailedEpistemic => "failed-epistemic",
            Decision::Truncated => "truncated",
            Decision::AfterTruncation => "after-truncation",
        }
    }
}

/// Scores are `None` when the stage was not evaluated (short-circuit, truncation or ablation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyVerdict {
    pub rollout: usize,
    pub step: usize,
    pub manifold_u: Option<f64>,
    pub sensitivity_var: Option<f64>,
    pub epistemic_var: Option<f64>,
    pub passed_manifold: bool,
    pub passed_sensitivity: bool,
    pub passed_epistemic: bool,
    pub truncate: bool,
    pub decision: Decision,
}

/// A synthetic transition with its reward in normalized `[0, 1]` units.
#[derive(Clone, Debug, PartialEq)]
pub struct Candidate {
    pub transition: Transition,
    pub reward: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FilteredTransition {
    pub transition: Transition,
    pub reward: f64,
    pub penalized_reward: f64,
    pub verdict: UncertaintyVerdict,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FilterOutcome {
    pub accepted: Vec<FilteredTransition>,
    pub verdicts: Vec<UncertaintyVerdict>,
    pub truncated_at: Option<usize>,
}

/// Run manifold → sensitivity → epistemic on each candidate in temporal order.
///
/// A failing candidate is dropped and the rollout continues. A manifold score above
/// `E_max` truncates: that step and every later one are discarded.
pub fn filter_rollout(
    rollout: usize,
    candidates: &[Candidate],
    scorer: &mut impl CandidateScorer,
    config: &UncertaintyConfig,
    ablations: Ablations,
) -> Result<FilterOutcome> {
    let mut out = FilterOutcome::default();
    for (step, cand) in candidates.iter().enumerate() {
        let mut v = UncertaintyVerdict {
            rollout,
            step,
            manifold_u: None,
            sensitivity_var: None,
            epistemic_var: None,
            passed_manifold: false,
            passed_sensitivity: false,
            passed_epistemic: false,
            truncate: false,
            decision: Decision::AfterTruncation,
        };
        if out.truncated_at.is_some() {
            out.verdicts.push(v);
            continue;
        }
        let u = if ablations.no_vae {
            None
        } else {
            Some(finite(scorer.manifold(step)?, "manifold score")?)
        };
        v.manifold_u = u;
        if u.is_some_and(|u| u > config.e_max) {
            v.truncate = true;
            v.decision = Decision::Truncated;
            out.truncated_at = Some(step);
            out.verdicts.push(v);
            continue;
        }
        v.passed_manifold = u.map_or(true, |u| u <= config.e_t);
        v.decision = Decision::FailedManifold;
        if v.passed_manifold {
            v.passed_sensitivity = if ablations.no_sensitivity {
                true
            } else {
                let s = finite(scorer.sensitivity(step)?, "sensitivity variance")?;
                v.sensitivity_var = Some(s);
                s <= config.s_t
            };
            v.decision = Decision::FailedSensitivity;
        }
        if v.passed_sensitivity {
            v.passed_epistemic = if ablations.no_mc {
                true
            } else {
                let d = finite(scorer.epistemic(step)?, "epistemic variance")?;
                v.epistemic_var = Some(d);
                d <= config.d_t
            };
            v.decision = Decision::FailedEpistemic;
        }
        if v.passed_epistemic {
            v.decision = Decision::Accepted;
            let penalized = match u {
                Some(u) if !ablations.no_penalty => penalize_reward(cand.reward, u, config.k, config.l_p),
                _ => cand.reward,
            };
            out.accepted.push(FilteredTransition {
                transition: cand.transition.clone(),
                reward: cand.reward,
                penalized_reward: penalized,
                verdict: v.clone(),
            });
        }
        out.verdicts.push(v);
    }
    Ok(out)
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

pub const VERDICT_HEADER: &str = "rollout,step,manifold_u,sensitivity_var,epistemic_var,decision";

/// One CSV row per verdict; stages that did not run are written as `NA`.
pub fn write_verdict_log(path: &Path, verdicts: &[UncertaintyVerdict]) -> Result<()> {
    let cell = |x: Option<f64>| x.map_or_else(|| "NA".to_string(), |v| format!("{v:e}"));
    let mut buf = Vec::new();
    writeln!(buf, "{VERDICT_HEADER}").expect("in-memory write");
    for v in verdicts {
        writeln!(
            buf,
            "{},{},{},{},{},{}",
            v.rollout,
            v.step,
            cell(v.manifold_u),
            cell(v.sensitivity_var),
            cell(v.epistemic_var),
            v.decision.name()
        )
        .expect("in-memory write");
    }
    std::fs::write(path, buf).map_err(|e| Error::io(path, e))
}
