use serde::{Deserialize, Serialize};

use super::checks::{check_epistemic, check_sensitivity, Dynamics, UncertaintyConfig};
use super::filter::CandidateScorer;
use crate::error::{Error, Result};
use crate::rng::derive_indexed;
use crate::vae::{percentile, Vae};

/// Percentile anchors for deriving thresholds from held-out real data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationConfig {
    pub e_t_percentile: f64,
    pub l_p_percentile: f64,
    pub e_max_percentile: f64,
    pub s_t_percentile: f64,
    pub d_t_percentile: f64,
    /// Penalty gain; by default chosen so a reward at `u = E_t` is halved.
    pub k: Option<f64>,
    pub k_mc: usize,
    pub pert_sigma: f64,
    pub n_pert: usize,
    /// Held-out samples scored for the sensitivity and epistemic statistics.
    pub samples: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            e_t_percentile: 95.0,
            l_p_percentile: 50.0,
            e_max_percentile: 99.5,
            s_t_percentile: 95.0,
            d_t_percentile: 95.0,
            k: None,
            k_mc: 3,
            pert_sigma: 0.01,
            n_pert: 8,
            samples: 400,
        }
    }
}

/// A real or synthetic decision point: the window the model saw, the action, and the resulting pair.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub history: Vec<Vec<f64>>,
    pub action: Vec<f64>,
}

impl Probe {
    pub fn state(&self) -> &[f64] {
        self.history.last().expect("non-empty history")
    }
}

/// Scores rollout steps on demand against the frozen models.
pub struct ModelScorer<'a, D: Dynamics> {
    pub model: &'a D,
    pub vae: Option<&'a Vae>,
    pub probes: &'a [Probe],
    pub config: &'a UncertaintyConfig,
    pub seed: u64,
}

impl<D: Dynamics> CandidateScorer for ModelScorer<'_, D> {
    fn manifold(&mut self, step: usize) -> Result<f64> {
        let vae = self
            .vae
            .ok_or_else(|| Error::InvalidArgument("manifold score requested without a vae".into()))?;
        let p = &self.probes[step];
        vae.score(p.state(), &p.action)
    }

    fn sensitivity(&mut self, step: usize) -> Result<f64> {
        let p = &self.probes[step];
        let c = self.config;
        let seed = derive_indexed(self.seed, 2 * step as u64);
        check_sensitivity(self.model, &p.history, &p.action, c.pert_sigma, c.n_pert, c.s_t, seed).map(|r| r.0)
    }

    fn epistemic(&mut self, step: usize) -> Result<f64> {
        let p = &self.probes[step];
        let seed = derive_indexed(self.seed, 2 * step as u64 + 1);
        check_epistemic(self.model, &p.history, &p.action, self.config.k_mc, self.config.d_t, seed).map(|r| r.0)
    }
}

/// Raw statistics behind a calibration, kept for reporting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationStats {
    pub manifold: Vec<f64>,
    pub sensitivity: Vec<f64>,
    pub epistemic: Vec<f64>,
}

/// Derive thresholds from held-out real probes. Every probe is scored by the VAE; the first
/// `samples` (evenly spread) also get sensitivity and epistemic statistics.
pub fn calibrate(
    model: &impl Dynamics,
    vae: &Vae,
    probes: &[Probe],
    config: &CalibrationConfig,
    seed: u64,
) -> Result<(UncertaintyConfig, CalibrationStats)> {
    if probes.is_empty() || config.samples == 0 {
        return Err(Error::InvalidArgument("calibration needs held-out probes".into()));
    }
    let pairs: Vec<(Vec<f64>, Vec<f64>)> = probes.iter().map(|p| (p.state().to_vec(), p.action.clone())).collect();
    let manifold: Vec<f64> = vae.score_batch(&pairs)?.iter().map(|s| s.u).collect();
    let m = config.samples.min(probes.len());
    let mut sensitivity = Vec::with_capacity(m);
    let mut epistemic = Vec::with_capacity(m);
    for i in 0..m {
        let p = &probes[i * probes.len() / m];
        let s = derive_indexed(seed, 2 * i as u64);
        sensitivity.push(check_sensitivity(model, &p.history, &p.action, config.pert_sigma, config.n_pert, 0.0, s)?.0);
        let e = derive_indexed(seed, 2 * i as u64 + 1);
        epistemic.push(check_epistemic(model, &p.history, &p.action, config.k_mc, 0.0, e)?.0);
    }
    let e_t = percentile(&manifold, config.e_t_percentile)?;
    let l_p = percentile(&manifold, config.l_p_percentile)?;
    let e_max = percentile(&manifold, config.e_max_percentile)?;
    let k = config.k.unwrap_or(if e_t > l_p { 1.0 / (e_t - l_p) } else { 0.0 });
    let out = UncertaintyConfig {
        e_t,
        s_t: percentile(&sensitivity, config.s_t_percentile)?,
        d_t: percentile(&epistemic, config.d_t_percentile)?,
        e_max,
        k,
        l_p,
        k_mc: config.k_mc,
        pert_sigma: config.pert_sigma,
        n_pert: config.n_pert,
    };
    out.validate()?;
    Ok((
        out,
        CalibrationStats {
            manifold,
            sensitivity,
            epistemic,
        },
    ))
}
