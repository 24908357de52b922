use std::collections::BTreeSet;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::env::{EnvKind, MixRatio, Tier};
use crate::error::{Error, Result};
use crate::policy::PolicyConfig;
use crate::replay::{PrioritySpec, SamplingSchedule};
use crate::uncertainty::CalibrationConfig;
use crate::vae::VaeConfig;
use crate::world_model::WorldModelConfig;

/// Switches that each disable one pipeline component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    NoVae,
    NoMc,
    NoSensitivity,
    NoPenalty,
    NoPrb,
    NoHybrid,
    /// The offline-only baseline: same learner, synthesis disabled.
    NoSynthesis,
}

impl Ablation {
    pub const ALL: [Ablation; 7] = [
        Ablation::NoVae,
        Ablation::NoMc,
        Ablation::NoSensitivity,
        Ablation::NoPenalty,
        Ablation::NoPrb,
        Ablation::NoHybrid,
        Ablation::NoSynthesis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::NoVae => "no-vae",
            Ablation::NoMc => "no-mc",
            Ablation::NoSensitivity => "no-sensitivity",
            Ablation::NoPenalty => "no-penalty",
            Ablation::NoPrb => "no-prb",
            Ablation::NoHybrid => "no-hybrid",
            Ablation::NoSynthesis => "no-synthesis",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Ablation::ALL.iter().map(|a| a.name()).collect();
                Error::Config(format!("unknown ablation '{s}', expected one of {}", names.join(", ")))
            })
    }
}

/// A set of ablations applied together; the empty set is the full pipeline.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Variant(pub BTreeSet<Ablation>);

impl Variant {
    pub fn full() -> Self {
        Self::default()
    }

    pub fn single(a: Ablation) -> Self {
        Self(BTreeSet::from([a]))
    }

    pub fn has(&self, a: Ablation) -> bool {
        self.0.contains(&a)
    }

    /// Directory-safe name: `full` or ablation names joined by `+`.
    pub fn name(&self) -> String {
        if self.0.is_empty() {
            "full".into()
        } else {
            self.0.iter().map(|a| a.name()).collect::<Vec<_>>().join("+")
        }
    }
}

impl FromIterator<Ablation> for Variant {
    fn from_iter<I: IntoIterator<Item = Ablation>>(iter: I) -> Self {
        Self(iter.into_iter().collect())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    /// Transitions in the policy's offline dataset.
    pub transitions: usize,
    /// Transitions per tier in the simulator/VAE pre-training pool.
    pub pretrain_per_tier: usize,
    /// Transitions per tier kept aside for threshold calibration.
    pub heldout_per_tier: usize,
    pub mix: MixRatio,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            transitions: 50_000,
            pretrain_per_tier: 20_000,
            heldout_per_tier: 2_000,
            mix: MixRatio::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthesisConfig {
    /// Policy steps between synthesis rounds after warm-up.
    pub every: usize,
    pub rollouts: usize,
    /// Gaussian exploration noise on policy actions, as a fraction of the half-range.
    pub action_noise: f64,
    pub generated_capacity: usize,
    /// Rollouts drawn with dataset actions for the audit log written by `synthesize`.
    pub audit_rollouts: usize,
}

impl Default for SynthesisConfig {
    fn default() -> Self {
        Self {
            every: 1000,
            rollouts: 10,
            action_noise: 0.1,
            generated_capacity: 100_000,
            audit_rollouts: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainingConfig {
    pub steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub final_eval_episodes: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            eval_every: 2_000,
            eval_episodes: 5,
            final_eval_episodes: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub env: String,
    pub tier: String,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub ablations: Vec<Ablation>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub world_model: WorldModelConfig,
    #[serde(default)]
    pub vae: VaeConfig,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub policy: PolicyConfig,
    #[serde(default)]
    pub sampling: SamplingSchedule,
    #[serde(default)]
    pub priority: PrioritySpec,
    #[serde(default)]
    pub synthesis: SynthesisConfig,
    #[serde(default)]
    pub training: TrainingConfig,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.env_kind()?;
        self.tier_kind()?;
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        if self.data.transitions == 0 || self.data.pretrain_per_tier == 0 || self.data.heldout_per_tier == 0 {
            return Err(Error::Config("data sizes must be positive".into()));
        }
        if self.synthesis.every == 0 || self.synthesis.rollouts == 0 || self.synthesis.generated_capacity == 0 {
            return Err(Error::Config("synthesis sizes must be positive".into()));
        }
        if self.training.eval_every == 0 || self.training.eval_episodes == 0 || self.training.final_eval_episodes == 0 {
            return Err(Error::Config("evaluation sizes must be positive".into()));
        }
        self.world_model.validate()?;
        self.vae.validate()?;
        self.policy.validate()?;
        self.sampling.validate()?;
        self.priority.validate()
    }

    pub fn env_kind(&self) -> Result<EnvKind> {
        EnvKind::from_name(&self.env)
    }

    pub fn tier_kind(&self) -> Result<Tier> {
        Tier::from_name(&self.tier)
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        hash_json(self)
    }

    /// Variants of a matrix: the full pipeline then each configured ablation alone.
    pub fn matrix_variants(&self) -> Vec<Variant> {
        let mut out = vec![Variant::full()];
        for a in &self.ablations {
            let v = Variant::single(*a);
            if !out.contains(&v) {
                out.push(v);
            }
        }
        out
    }
}

pub fn hash_json(value: &impl Serialize) -> String {
    let bytes = serde_json::to_vec(value).expect("config serializes");
    crate::nn::param::hex(&Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "env = \"pendulum\"\ntier = \"random\"\nseeds = [0]\n";

    #[test]
    fn minimal_config_uses_defaults() {
        let c = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.world_model, WorldModelConfig::default());
        assert_eq!(c.matrix_variants(), vec![Variant::full()]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = RunConfig::from_toml(&format!("{MINIMAL}bogus = 1\n")).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        let err = RunConfig::from_toml(&format!("{MINIMAL}[vae]\nhiden_width = 3\n")).unwrap_err();
        assert!(err.to_string().contains("hiden_width"), "{err}");
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.policy.gamma = 0.98;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn ablation_names_round_trip() {
        for a in Ablation::ALL {
            assert_eq!(a.name().parse::<Ablation>().unwrap(), a);
        }
        assert!("no-thing".parse::<Ablation>().is_err());
        let v: Variant = [Ablation::NoPrb, Ablation::NoVae].into_iter().collect();
        assert_eq!(v.name(), "no-vae+no-prb");
    }

    #[test]
    fn ablations_parse_from_toml() {
        let c = RunConfig::from_toml(&format!("{MINIMAL}ablations = [\"no-vae\", \"no-synthesis\"]\n")).unwrap();
        assert_eq!(c.matrix_variants().len(), 3);
    }
}
