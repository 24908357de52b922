use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::config::{hash_json, Ablation, RunConfig, Variant};
use super::layout::{clear_stamp, ensure_dir, read_json, read_stamp, require, write_json, write_stamp, Layout};
use super::synthesis::{dataset_probes, sample_starts, window_at, RoundStats, Synthesizer};
use crate::env::{
    generate_dataset, normalized_score, read_dataset, reference_returns, write_dataset, Dataset, EnvKind, NormStats,
    Tier,
};
use crate::error::{Error, Result};
use crate::nn::Checkpoint;
use crate::policy::{evaluate_policy, Actor, Learner, PolicyBatch};
use crate::replay::{PartitionedBuffer, SamplingSchedule, Source, Stored};
use crate::rng::{derive_indexed, derive_seed, rng_from};
use crate::uncertainty::{calibrate, write_verdict_log, Ablations, UncertaintyConfig};
use crate::vae::{train_vae, Vae};
use crate::world_model::{train_world_model, WorldModel};

/// Pipeline stages in dependency order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    GenerateData,
    TrainSim,
    TrainVae,
    Synthesize,
    TrainPolicy,
    Evaluate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::GenerateData,
        Stage::TrainSim,
        Stage::TrainVae,
        Stage::Synthesize,
        Stage::TrainPolicy,
        Stage::Evaluate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::GenerateData => "generate-data",
            Stage::TrainSim => "train-sim",
            Stage::TrainVae => "train-vae",
            Stage::Synthesize => "synthesize",
            Stage::TrainPolicy => "train-policy",
            Stage::Evaluate => "evaluate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage '{s}'")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageStatus {
    Ran,
    Skipped,
}

pub const TARGET: &str = "target";
pub const PRETRAIN_TIERS: [Tier; 3] = [Tier::Random, Tier::Medium, Tier::Expert];

pub fn pretrain_name(t: Tier) -> String {
    format!("pretrain-{}", t.name())
}

pub fn heldout_name(t: Tier) -> String {
    format!("heldout-{}", t.name())
}

/// One evaluation point of policy training, written as a JSONL line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsLine {
    pub step: usize,
    pub critic_loss: f64,
    pub actor_loss: Option<f64>,
    pub mean_q: f64,
    pub penalized_fraction: f64,
    /// Partition sizes: offline, generated, prioritized.
    pub buffer: [usize; 3],
    pub candidates: usize,
    pub accepted: usize,
    pub acceptance_rate: f64,
    pub eval_mean: f64,
    pub eval_std: f64,
    pub score: f64,
}

/// Contents of `thresholds.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThresholdsFile {
    pub config_hash: String,
    pub thresholds: UncertaintyConfig,
    pub calibration_probes: usize,
    pub audit: RoundStats,
}

/// Contents of `eval.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalFile {
    pub config_hash: String,
    pub variant: String,
    pub seed: u64,
    pub mean_return: f64,
    pub std_return: f64,
    pub returns: Vec<f64>,
    pub score: f64,
    pub random_reference: f64,
    pub expert_reference: f64,
    pub synthesis: RoundStats,
}

/// Summary written next to the policy checkpoint.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PolicySummary {
    pub config_hash: String,
    pub steps: usize,
    pub critic_updates: usize,
    pub actor_updates: usize,
    pub synthesis: RoundStats,
    pub final_buffer: [usize; 3],
}

/// Runs stages for one seed of a config.
#[derive(Clone, Debug)]
pub struct Pipeline {
    pub config: RunConfig,
    pub layout: Layout,
    pub force: bool,
}

impl Pipeline {
    pub fn new(config: RunConfig, out: impl Into<PathBuf>, seed: u64, force: bool) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            layout: Layout::new(out, seed),
            force,
        })
    }

    pub fn seed(&self) -> u64 {
        self.layout.seed
    }

    fn env(&self) -> EnvKind {
        self.config.env_kind().expect("validated")
    }

    pub fn data_hash(&self) -> String {
        let c = &self.config;
        hash_json(&json!({"env": c.env, "tier": c.tier, "data": c.data, "seed": self.seed()}))
    }

    pub fn sim_hash(&self) -> String {
        hash_json(&json!({"data": self.data_hash(), "world_model": self.config.world_model}))
    }

    pub fn vae_hash(&self) -> String {
        hash_json(&json!({"data": self.data_hash(), "vae": self.config.vae}))
    }

    pub fn synth_hash(&self) -> String {
        let c = &self.config;
        hash_json(&json!({
            "sim": self.sim_hash(),
            "vae": self.vae_hash(),
            "calibration": c.calibration,
            "audit_rollouts": c.synthesis.audit_rollouts,
        }))
    }

    pub fn policy_hash(&self, v: &Variant) -> String {
        let c = &self.config;
        hash_json(&json!({
            "synth": self.synth_hash(),
            "policy": c.policy,
            "sampling": c.sampling,
            "priority": c.priority,
            "synthesis": c.synthesis,
            "steps": c.training.steps,
            "eval_every": c.training.eval_every,
            "eval_episodes": c.training.eval_episodes,
            "variant": v,
        }))
    }

    pub fn eval_hash(&self, v: &Variant) -> String {
        hash_json(&json!({"policy": self.policy_hash(v), "episodes": self.config.training.final_eval_episodes}))
    }

    /// Shared stage gate: `Ok(true)` when the stage must run.
    fn begin(&self, stage: Stage, dir: &std::path::Path, hash: &str) -> Result<bool> {
        if !self.force && read_stamp(dir)?.as_deref() == Some(hash) {
            log::info!("{stage} (seed {}): up to date, skipping", self.seed());
            return Ok(false);
        }
        ensure_dir(dir)?;
        clear_stamp(dir)?;
        log::info!("{stage} (seed {}): running", self.seed());
        Ok(true)
    }

    fn finish(&self, dir: &std::path::Path, hash: &str, started: Instant) -> Result<()> {
        write_json(&dir.join("timings.json"), &json!({"seconds": started.elapsed().as_secs_f64()}))?;
        write_stamp(dir, hash)
    }

    pub fn run(&self, stage: Stage, variant: &Variant) -> Result<StageStatus> {
        let ran = match stage {
            Stage::GenerateData => self.generate_data()?,
            Stage::TrainSim => self.train_sim()?,
            Stage::TrainVae => self.train_vae()?,
            Stage::Synthesize => self.synthesize()?,
            Stage::TrainPolicy => self.train_policy(variant)?,
            Stage::Evaluate => self.evaluate(variant)?,
        };
        Ok(if ran { StageStatus::Ran } else { StageStatus::Skipped })
    }

    /// Every stage in order for one variant.
    pub fn run_all(&self, variant: &Variant) -> Result<EvalFile> {
        for stage in Stage::ALL {
            self.run(stage, variant)?;
        }
        read_json(&self.layout.eval(variant))
    }

    pub fn generate_data(&self) -> Result<bool> {
        let dir = self.layout.data_dir();
        let hash = self.data_hash();
        if !self.begin(Stage::GenerateData, &dir, &hash)? {
            return Ok(false);
        }
        let t0 = Instant::now();
        let c = &self.config;
        let env = self.env();
        let seed = derive_seed(self.seed(), "data");
        let target = generate_dataset(env, c.tier_kind()?, c.data.transitions, derive_seed(seed, TARGET), c.data.mix)?;
        write_dataset(&target, &dir, TARGET, Some(&hash))?;
        for tier in PRETRAIN_TIERS {
            let name = pretrain_name(tier);
            let d = generate_dataset(env, tier, c.data.pretrain_per_tier, derive_seed(seed, &name), c.data.mix)?;
            write_dataset(&d, &dir, &name, Some(&hash))?;
            let name = heldout_name(tier);
            let d = generate_dataset(env, tier, c.data.heldout_per_tier, derive_seed(seed, &name), c.data.mix)?;
            write_dataset(&d, &dir, &name, Some(&hash))?;
        }
        self.finish(&dir, &hash, t0)?;
        Ok(true)
    }

    fn load_data(&self, name: &str) -> Result<Dataset> {
        let dir = self.layout.data_dir();
        require(&crate::env::io::manifest_path(&dir, name), &self.data_hash())?;
        Ok(read_dataset(&dir, name)?.0)
    }

    fn load_pool(&self, prefix: fn(Tier) -> String) -> Result<Dataset> {
        let parts = PRETRAIN_TIERS
            .iter()
            .map(|t| self.load_data(&prefix(*t)))
            .collect::<Result<Vec<_>>>()?;
        Dataset::concat(parts, Tier::ReplayMix, self.seed())
    }

    pub fn train_sim(&self) -> Result<bool> {
        let dir = self.layout.sim_dir();
        let hash = self.sim_hash();
        if !self.begin(Stage::TrainSim, &dir, &hash)? {
            return Ok(false);
        }
        let t0 = Instant::now();
        let pool = self.load_pool(pretrain_name)?;
        let env = self.env().spec();
        let model = train_world_model(&pool.trajectories, &env, &self.config.world_model, derive_seed(self.seed(), "sim"))?;
        if let Some(r) = model.report() {
            log::info!("train-sim: held-out R² state {:.4}, reward {:.4}", r.r2_state, r.r2_reward);
            write_json(&dir.join("report.json"), r)?;
        }
        let mut ckpt = model.to_checkpoint()?;
        ckpt.metadata["config_hash"] = json!(hash);
        ckpt.save(&self.layout.world_model())?;
        self.finish(&dir, &hash, t0)?;
        Ok(true)
    }

    pub fn load_world_model(&self) -> Result<WorldModel> {
        let path = self.layout.world_model();
        require(&path, &self.sim_hash())?;
        WorldModel::from_checkpoint(Checkpoint::load(&path)?)
    }

    pub fn train_vae(&self) -> Result<bool> {
        let dir = self.layout.vae_dir();
        let hash = self.vae_hash();
        if !self.begin(Stage::TrainVae, &dir, &hash)? {
            return Ok(false);
        }
        let t0 = Instant::now();
        let pool = self.load_pool(pretrain_name)?;
        let env = self.env().spec();
        let norm = NormStats::fit(pool.transitions())?;
        let (vae, report) = train_vae(pool.transitions(), &env, &norm, &self.config.vae, derive_seed(self.seed(), "vae"))?;
        log::info!(
            "train-vae: validation u {:.4} -> {:.4} in {} epochs",
            report.untrained_val_u,
            report.best_val_u,
            report.epochs
        );
        write_json(&dir.join("report.json"), &report)?;
        let mut ckpt = vae.to_checkpoint();
        ckpt.metadata["config_hash"] = json!(hash);
        ckpt.save(&self.layout.vae())?;
        self.finish(&dir, &hash, t0)?;
        Ok(true)
    }

    pub fn load_vae(&self) -> Result<Vae> {
        let path = self.layout.vae();
        require(&path, &self.vae_hash())?;
        Vae::from_checkpoint(Checkpoint::load(&path)?)
    }

    /// Calibrate thresholds on held-out real data and audit the filter on rollouts that replay dataset actions.
    pub fn synthesize(&self) -> Result<bool> {
        let dir = self.layout.synth_dir();
        let hash = self.synth_hash();
        if !self.begin(Stage::Synthesize, &dir, &hash)? {
            return Ok(false);
        }
        let t0 = Instant::now();
        let model = self.load_world_model()?;
        let vae = self.load_vae()?;
        let n = model.config().window_n;
        let held = self.load_pool(heldout_name)?;
        let probes = dataset_probes(&held.trajectories, n);
        let seed = derive_seed(self.seed(), "synth");
        let (thresholds, stats) = calibrate(&model, &vae, &probes, &self.config.calibration, derive_seed(seed, "calibrate"))?;
        log::info!(
            "synthesize: E_t {:.4} S_t {:.3e} D_t {:.3e} E_max {:.4}",
            thresholds.e_t,
            thresholds.s_t,
            thresholds.d_t,
            thresholds.e_max
        );
        write_json(&dir.join("calibration.json"), &stats)?;

        let target = self.load_data(TARGET)?;
        let tau = model.config().horizon_tau;
        let mut rng = rng_from(derive_seed(seed, "audit.starts"));
        let starts = sample_starts(&target.trajectories, self.config.synthesis.audit_rollouts, &mut rng);
        let windows = starts.iter().map(|(i, t)| window_at(&target.trajectories[*i], *t, n)).collect();
        let synth = Synthesizer {
            model: &model,
            vae: Some(&vae),
            thresholds: &thresholds,
            ablations: Ablations::default(),
        };
        let trajs = &target.trajectories;
        let out = synth.round(
            windows,
            tau,
            |k, _| {
                Ok(starts
                    .iter()
                    .map(|(i, t)| trajs[*i].transitions[(t + k).min(trajs[*i].len() - 1)].action.clone())
                    .collect())
            },
            0,
            derive_seed(seed, "audit.filter"),
        )?;
        write_verdict_log(&dir.join("audit_verdicts.csv"), &out.verdicts)?;
        write_json(
            &self.layout.thresholds(),
            &ThresholdsFile {
                config_hash: hash.clone(),
                thresholds,
                calibration_probes: probes.len(),
                audit: out.stats,
            },
        )?;
        self.finish(&dir, &hash, t0)?;
        Ok(true)
    }

    pub fn load_thresholds(&self) -> Result<UncertaintyConfig> {
        let path = self.layout.thresholds();
        require(&path, &self.synth_hash())?;
        let f: ThresholdsFile = read_json(&path)?;
        Ok(f.thresholds)
    }

    /// The sampling schedule after applying the variant's ablations.
    pub fn schedule(&self, v: &Variant) -> SamplingSchedule {
        let mut s = self.config.sampling;
        if v.has(Ablation::NoHybrid) {
            s.warmup_steps = 0;
        }
        if v.has(Ablation::NoPrb) {
            s.mix_offline += s.mix_prioritized;
            s.mix_prioritized = 0.0;
        }
        s
    }

    pub fn filter_ablations(v: &Variant) -> Ablations {
        Ablations {
            no_vae: v.has(Ablation::NoVae),
            no_sensitivity: v.has(Ablation::NoSensitivity),
            no_mc: v.has(Ablation::NoMc),
            no_penalty: v.has(Ablation::NoPenalty),
        }
    }

    pub fn train_policy(&self, v: &Variant) -> Result<bool> {
        let dir = self.layout.variant_dir(v);
        let hash = self.policy_hash(v);
        if !self.begin(Stage::TrainPolicy, &dir, &hash)? {
            return Ok(false);
        }
        let t0 = Instant::now();
        let model = self.load_world_model()?;
        let vae = if v.has(Ablation::NoVae) { None } else { Some(self.load_vae()?) };
        let thresholds = self.load_thresholds()?;
        let target = self.load_data(TARGET)?;
        let summary = train_policy_loop(self, v, &hash, &model, vae.as_ref(), &thresholds, &target)?;
        write_json(&dir.join("summary.json"), &summary)?;
        self.finish(&dir, &hash, t0)?;
        Ok(true)
    }

    pub fn evaluate(&self, v: &Variant) -> Result<bool> {
        let dir = self.layout.variant_dir(v);
        let hash = self.eval_hash(v);
        let eval_path = self.layout.eval(v);
        if !self.force {
            if let Ok(f) = read_json::<EvalFile>(&eval_path) {
                if f.config_hash == hash {
                    log::info!("evaluate (seed {}): up to date, skipping", self.seed());
                    return Ok(false);
                }
            }
        }
        log::info!("evaluate (seed {}): running", self.seed());
        let policy_path = self.layout.policy(v);
        require(&policy_path, &self.policy_hash(v))?;
        let mut ckpt = Checkpoint::load(&policy_path)?;
        let norm: NormStats = serde_json::from_value(
            ckpt.metadata
                .get("norm")
                .cloned()
                .ok_or_else(|| Error::Format("policy checkpoint lacks 'norm'".into()))?,
        )?;
        let actor_net = ckpt.take("actor")?;
        let env = self.env();
        let spec = env.spec();
        let actor = Actor {
            network: &actor_net,
            norm: &norm,
            env: &spec,
        };
        let ev = evaluate_policy(
            env,
            |s| actor.act(s),
            self.config.training.final_eval_episodes,
            derive_seed(self.seed(), "eval.final"),
        )?;
        let (rnd, exp) = reference_returns(env)?;
        let summary: PolicySummary = read_json(&dir.join("summary.json"))?;
        let file = EvalFile {
            config_hash: hash,
            variant: v.name(),
            seed: self.seed(),
            mean_return: ev.mean,
            std_return: ev.std,
            score: normalized_score(ev.mean, rnd, exp)?,
            returns: ev.returns,
            random_reference: rnd,
            expert_reference: exp,
            synthesis: summary.synthesis,
        };
        log::info!("evaluate (seed {}, {}): score {:.2}", self.seed(), v.name(), file.score);
        write_json(&eval_path, &file)?;
        Ok(true)
    }
}

/// Offline transitions as replay entries with rewards in the simulator's normalized units.
pub fn offline_entries(data: &Dataset, norm: &NormStats) -> Vec<Stored> {
    data.trajectories
        .iter()
        .flat_map(|tr| {
            tr.transitions.iter().enumerate().map(move |(i, t)| Stored {
                transition: t.clone(),
                reward: norm.apply_reward(t.reward),
                next_action: tr.transitions.get(i + 1).map(|n| n.action.clone()),
                source: Source::Offline,
                seq: 0,
            })
        })
        .collect()
}

#[derive(Default)]
struct Window {
    critic_loss: f64,
    actor_loss: f64,
    actor_n: usize,
    mean_q: f64,
    penalized: f64,
    n: usize,
}

fn train_policy_loop(
    p: &Pipeline,
    v: &Variant,
    hash: &str,
    model: &WorldModel,
    vae: Option<&Vae>,
    thresholds: &UncertaintyConfig,
    target: &Dataset,
) -> Result<PolicySummary> {
    let c = &p.config;
    let seed = derive_seed(p.seed(), "policy");
    let env = p.env();
    let spec = env.spec();
    let norm = model.norm();
    let n = model.config().window_n;
    let tau = model.config().horizon_tau;
    let schedule = p.schedule(v);
    let synthesize = !v.has(Ablation::NoSynthesis);
    let prb = !v.has(Ablation::NoPrb);

    let mut buffer = PartitionedBuffer::new(offline_entries(target, norm), c.synthesis.generated_capacity)?;
    let mut learner = Learner::new(c.policy.clone(), spec.state_dim, spec.action_dim, derive_seed(seed, "init"))?;
    let synth = Synthesizer {
        model,
        vae,
        thresholds,
        ablations: Pipeline::filter_ablations(v),
    };
    let (rnd, exp) = reference_returns(env)?;
    let mut sample_rng = rng_from(derive_seed(seed, "sample"));
    let mut target_rng = rng_from(derive_seed(seed, "target-noise"));
    let mut synth_rng = rng_from(derive_seed(seed, "synthesis"));
    let filter_seed = derive_seed(seed, "filter");
    let eval_seed = derive_seed(seed, "eval.progress");

    let metrics_path = p.layout.metrics(v);
    let mut metrics = String::new();
    let mut verdicts = Vec::new();
    let mut totals = RoundStats::default();
    let mut rounds = 0u64;
    let mut win = Window::default();

    for step in 0..c.training.steps {
        let hybrid = step >= schedule.warmup_steps;
        let since = step.saturating_sub(schedule.warmup_steps);
        if synthesize && hybrid && since % c.synthesis.every == 0 {
            let starts = sample_starts(&target.trajectories, c.synthesis.rollouts, &mut synth_rng);
            let windows = starts
                .iter()
                .map(|(i, t)| window_at(&target.trajectories[*i], *t, n))
                .collect();
            let noise = c.synthesis.action_noise;
            let out = synth.round(
                windows,
                tau,
                |_, newest| {
                    let z = crate::nn::Matrix::from_rows(&newest.iter().map(|s| norm.apply_state(s)).collect::<Vec<_>>())?;
                    let a = learner.act(&z)?;
                    Ok((0..newest.len())
                        .map(|i| {
                            let noisy: Vec<f64> = a
                                .row(i)
                                .iter()
                                .map(|x| {
                                    let e: f64 = rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut synth_rng);
                                    (x + noise * e).clamp(-1.0, 1.0)
                                })
                                .collect();
                            spec.denormalize_action(&noisy)
                        })
                        .collect())
                },
                (rounds as usize) * c.synthesis.rollouts,
                derive_indexed(filter_seed, rounds),
            )?;
            rounds += 1;
            totals.add(out.stats);
            buffer.insert_generated(out.accepted.into_iter().map(|f| Stored {
                transition: f.transition,
                reward: f.penalized_reward,
                next_action: None,
                source: Source::Generated,
                seq: 0,
            }));
            verdicts.extend(out.verdicts);
        }
        if prb && hybrid && since % c.priority.rebuild_every == 0 {
            buffer.rebuild_prioritized(&c.priority)?;
        }

        let batch = buffer.sample(&schedule, c.policy.batch_size, step, &mut sample_rng)?;
        let pb = PolicyBatch::from_stored(&batch.items, norm, &spec)?;
        let (stats, actor_loss) = learner.train_step(&pb, &mut target_rng)?;
        win.critic_loss += stats.loss;
        win.mean_q += stats.mean_q;
        win.penalized += stats.penalized_fraction;
        win.n += 1;
        if let Some(l) = actor_loss {
            win.actor_loss += l;
            win.actor_n += 1;
        }

        let done = step + 1;
        if done % c.training.eval_every == 0 || done == c.training.steps {
            let actor = Actor {
                network: learner.actor(),
                norm,
                env: &spec,
            };
            let ev = evaluate_policy(env, |s| actor.act(s), c.training.eval_episodes, eval_seed)?;
            let k = win.n as f64;
            let line = MetricsLine {
                step: done,
                critic_loss: win.critic_loss / k,
                actor_loss: (win.actor_n > 0).then(|| win.actor_loss / win.actor_n as f64),
                mean_q: win.mean_q / k,
                penalized_fraction: win.penalized / k,
                buffer: buffer.sizes(),
                candidates: totals.candidates,
                accepted: totals.accepted,
                acceptance_rate: totals.acceptance_rate(),
                eval_mean: ev.mean,
                eval_std: ev.std,
                score: normalized_score(ev.mean, rnd, exp)?,
            };
            log::info!(
                "train-policy (seed {}, {}): step {done} score {:.2} buffer {:?}",
                p.seed(),
                v.name(),
                line.score,
                line.buffer
            );
            metrics.push_str(&serde_json::to_string(&line)?);
            metrics.push('\n');
            win = Window::default();
        }
    }

    std::fs::write(&metrics_path, &metrics).map_err(|e| Error::io(&metrics_path, e))?;
    write_verdict_log(&p.layout.variant_dir(v).join("verdicts.csv"), &verdicts)?;
    let [c1, c2] = learner.critics();
    let ckpt = Checkpoint::new(json!({
        "kind": "policy",
        "config_hash": hash,
        "variant": v.name(),
        "norm": norm,
        "env": spec,
    }))
    .with("actor", learner.actor())
    .with("critic1", c1)
    .with("critic2", c2);
    ckpt.save(&p.layout.policy(v))?;
    let (critic_updates, actor_updates) = learner.update_counts();
    Ok(PolicySummary {
        config_hash: hash.to_string(),
        steps: c.training.steps,
        critic_updates,
        actor_updates,
        synthesis: totals,
        final_buffer: buffer.sizes(),
    })
}
