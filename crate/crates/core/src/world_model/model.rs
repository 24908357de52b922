use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, NormStats};
use crate::error::{Error, Result};
use crate::nn::layers::mask_seed;
use crate::nn::{Activation, Checkpoint, DropoutMask, LayerSpec, Matrix, Network, StateVars, Tape, Var};
use crate::rng::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldModelConfig {
    pub window_n: usize,
    pub encoder_layers: usize,
    pub encoder_hidden: usize,
    pub refiner_hidden: usize,
    pub reward_hidden: usize,
    pub horizon_tau: usize,
    pub dropout_rate: f64,
    pub patience: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Cap on minibatches per epoch; `None` sweeps every training window.
    pub batches_per_epoch: Option<usize>,
    /// Cap on held-out windows scored per epoch.
    pub max_val_windows: usize,
    pub grad_clip: f64,
}

impl Default for WorldModelConfig {
    fn default() -> Self {
        Self {
            window_n: 10,
            encoder_layers: 2,
            encoder_hidden: 32,
            refiner_hidden: 64,
            reward_hidden: 64,
            horizon_tau: 5,
            dropout_rate: 0.1,
            patience: 3,
            batch_size: 64,
            learning_rate: 1e-3,
            max_epochs: 30,
            batches_per_epoch: None,
            max_val_windows: 2000,
            grad_clip: 1.0,
        }
    }
}

impl WorldModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("world model: {m}")));
        if self.window_n == 0 || self.horizon_tau == 0 {
            return bad("window_n and horizon_tau must be >= 1");
        }
        if !(self.dropout_rate > 0.0 && self.dropout_rate < 1.0) {
            return bad("dropout_rate must lie in (0, 1)");
        }
        if self.encoder_layers == 0 || self.encoder_hidden == 0 || self.refiner_hidden == 0 || self.reward_hidden == 0 {
            return bad("layer sizes must be positive");
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.max_val_windows == 0 {
            return bad("batch_size, max_epochs and max_val_windows must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.grad_clip > 0.0) {
            return bad("learning_rate and grad_clip must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingReport {
    pub r2_state: f64,
    pub r2_reward: f64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub val_loss_history: Vec<f64>,
}

/// A multi-step rollout in environment units.
#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub states: Vec<Vec<f64>>,
    pub rewards: Vec<f64>,
    /// Set when the package had not been trained and frozen.
    pub untrained: bool,
}

/// Dropout masks for one stochastic pass, sized for a batch.
#[derive(Clone, Debug)]
pub struct PassMasks {
    bridge: Vec<DropoutMask>,
    head: Vec<DropoutMask>,
}

/// History encoder, gated refiner and reward head, with the normalization they were trained under.
#[derive(Clone, Debug)]
pub struct WorldModel {
    config: WorldModelConfig,
    env: EnvSpec,
    norm: NormStats,
    encoder: Network,
    bridge: Network,
    refiner: Network,
    head: Network,
    reward_head: Network,
    frozen: bool,
    report: Option<TrainingReport>,
}

const NETS: [&str; 5] = ["encoder", "bridge", "refiner", "head", "reward_head"];

impl WorldModel {
    pub fn new(config: WorldModelConfig, env: EnvSpec, norm: NormStats, seed: u64) -> Result<Self> {
        config.validate()?;
        env.validate()?;
        if norm.state_mean.len() != env.state_dim {
            return Err(Error::DimensionMismatch {
                layer: 0,
                expected: env.state_dim,
                got: norm.state_mean.len(),
            });
        }
        let (d, a) = (env.state_dim, env.action_dim);
        let (he, hr) = (config.encoder_hidden, config.refiner_hidden);
        let enc_specs = (0..config.encoder_layers)
            .map(|i| LayerSpec::lstm(if i == 0 { d + a } else { he }, he))
            .collect();
        let encoder = Network::new(enc_specs, derive_seed(seed, "encoder"))?;
        let bridge = Network::new(
            vec![
                LayerSpec::affine(he, hr),
                LayerSpec::activation(hr, Activation::Tanh),
                LayerSpec::dropout(hr, config.dropout_rate),
            ],
            derive_seed(seed, "bridge"),
        )?;
        let refiner = Network::new(vec![LayerSpec::gru(d + a, hr)], derive_seed(seed, "refiner"))?;
        let head = Network::new(
            vec![LayerSpec::dropout(hr, config.dropout_rate), LayerSpec::affine(hr, d)],
            derive_seed(seed, "head"),
        )?;
        let reward_head = Network::mlp(
            2 * d + a,
            &[config.reward_hidden],
            1,
            Activation::Tanh,
            Activation::Identity,
            derive_seed(seed, "reward_head"),
        )?;
        Ok(Self {
            config,
            env,
            norm,
            encoder,
            bridge,
            refiner,
            head,
            reward_head,
            frozen: false,
            report: None,
        })
    }

    pub fn config(&self) -> &WorldModelConfig {
        &self.config
    }

    pub fn env(&self) -> &EnvSpec {
        &self.env
    }

    pub fn norm(&self) -> &NormStats {
        &self.norm
    }

    pub fn report(&self) -> Option<&TrainingReport> {
        self.report.as_ref()
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Idempotent; afterwards every parameter-mutating call is rejected.
    pub fn freeze(&mut self) {
        self.frozen = true;
        self.networks_mut().into_iter().for_each(Network::freeze);
    }

    pub fn networks(&self) -> [&Network; 5] {
        [&self.encoder, &self.bridge, &self.refiner, &self.head, &self.reward_head]
    }

    pub(crate) fn networks_mut(&mut self) -> [&mut Network; 5] {
        [
            &mut self.encoder,
            &mut self.bridge,
            &mut self.refiner,
            &mut self.head,
            &mut self.reward_head,
        ]
    }

    pub(crate) fn set_report(&mut self, report: TrainingReport) -> Result<()> {
        if self.frozen {
            return Err(Error::Frozen("world model report is fixed once frozen".into()));
        }
        self.report = Some(report);
        Ok(())
    }

    /// Concatenated parameter checksums of all sub-networks.
    pub fn checksum(&self) -> String {
        self.networks()
            .iter()
            .map(|n| n.params().checksum())
            .collect::<Vec<_>>()
            .join(":")
    }

    pub fn num_params(&self) -> usize {
        self.networks().iter().map(|n| n.params().num_params()).sum()
    }

    /// Masks for the stochastic pass seeded by `pass_seed`; dropout slot `j` uses `mask_seed(pass_seed, j)`.
    pub fn pass_masks(&self, pass_seed: u64, batch: usize) -> PassMasks {
        let hr = self.config.refiner_hidden;
        let rate = self.config.dropout_rate;
        PassMasks {
            bridge: vec![DropoutMask::generate(mask_seed(pass_seed, 0), rate, batch * hr)],
            head: vec![DropoutMask::generate(mask_seed(pass_seed, 1), rate, batch * hr)],
        }
    }

    /// One transition on normalized tensors: returns (next state, reward in `[0, 1]` units).
    pub(crate) fn step_tape(
        &self,
        tape: &mut Tape,
        window: &[Var],
        action: Var,
        masks: Option<&PassMasks>,
    ) -> Result<(Var, Var)> {
        let batch = tape.value(action).rows;
        let mut states = self.encoder.zero_state_vars(tape, batch);
        let mut context = None;
        for &s in window {
            let x = tape.concat(&[s, action]);
            let (y, next) = self.encoder.forward_tape(tape, x, &states, None, false)?;
            states = next;
            context = Some(y);
        }
        let context = context.ok_or_else(|| Error::InvalidArgument("empty history window".into()))?;
        let training = masks.is_some();
        let (h0, _) = self
            .bridge
            .forward_tape(tape, context, &[], masks.map(|m| m.bridge.as_slice()), training)?;
        let newest = window[window.len() - 1];
        let x = tape.concat(&[newest, action]);
        let init = [StateVars {
            hidden: h0,
            cell: None,
        }];
        let (h, _) = self.refiner.forward_tape(tape, x, &init, None, false)?;
        let (delta, _) = self
            .head
            .forward_tape(tape, h, &[], masks.map(|m| m.head.as_slice()), training)?;
        let next = tape.add(newest, delta);
        let rin = tape.concat(&[newest, action, next]);
        let (reward, _) = self.reward_head.forward_tape(tape, rin, &[], None, false)?;
        Ok((next, reward))
    }

    /// Auto-regressive rollout on normalized tensors. With `teacher` set, step `k + 1`
    /// sees the true state `teacher[k]` instead of the prediction.
    pub(crate) fn rollout_tape(
        &self,
        tape: &mut Tape,
        history: &[Var],
        actions: &[Var],
        masks: Option<&PassMasks>,
        teacher: Option<&[Var]>,
    ) -> Result<Vec<(Var, Var)>> {
        let mut window = history.to_vec();
        let mut out = Vec::with_capacity(actions.len());
        for (k, &a) in actions.iter().enumerate() {
            let (s, r) = self.step_tape(tape, &window, a, masks)?;
            out.push((s, r));
            window.remove(0);
            window.push(teacher.map_or(s, |t| t[k]));
        }
        Ok(out)
    }

    fn check_history(&self, history: &[Vec<f64>]) -> Result<()> {
        if history.len() != self.config.window_n {
            return Err(Error::InvalidArgument(format!(
                "history holds {} states, window_n is {}",
                history.len(),
                self.config.window_n
            )));
        }
        for s in history {
            if s.len() != self.env.state_dim {
                return Err(Error::DimensionMismatch {
                    layer: 0,
                    expected: self.env.state_dim,
                    got: s.len(),
                });
            }
        }
        Ok(())
    }

    fn check_action(&self, a: &[f64]) -> Result<()> {
        if a.len() != self.env.action_dim {
            return Err(Error::DimensionMismatch {
                layer: 0,
                expected: self.env.action_dim,
                got: a.len(),
            });
        }
        Ok(())
    }

    fn warn_untrained(&self) -> bool {
        if !self.frozen {
            log::warn!("world model is not frozen; predictions come from an untrained package");
        }
        !self.frozen
    }

    /// Roll out `horizon_tau` steps holding `action` fixed.
    pub fn predict(&self, history: &[Vec<f64>], action: &[f64]) -> Result<Prediction> {
        self.predict_actions(history, &vec![action.to_vec(); self.config.horizon_tau])
    }

    /// Roll out one step per entry of `actions`, feeding each prediction back as the newest window state.
    pub fn predict_actions(&self, history: &[Vec<f64>], actions: &[Vec<f64>]) -> Result<Prediction> {
        self.check_history(history)?;
        actions.iter().try_for_each(|a| self.check_action(a))?;
        let untrained = self.warn_untrained();
        let mut tape = Tape::new();
        let hist: Vec<Var> = history
            .iter()
            .map(|s| tape.leaf(Matrix::row_vector(&self.norm.apply_state(s))))
            .collect();
        let acts: Vec<Var> = actions
            .iter()
            .map(|a| tape.leaf(Matrix::row_vector(&self.env.normalize_action(a))))
            .collect();
        let steps = self.rollout_tape(&mut tape, &hist, &acts, None, None)?;
        let mut states = Vec::with_capacity(steps.len());
        let mut rewards = Vec::with_capacity(steps.len());
        for (s, r) in steps {
            let sv = &tape.value(s).data;
            let rv = tape.scalar(r);
            if !sv.iter().all(|v| v.is_finite()) || !rv.is_finite() {
                return Err(Error::NonFinite("world model prediction".into()));
            }
            states.push(self.norm.invert_state(sv));
            rewards.push(self.norm.invert_reward(rv));
        }
        Ok(Prediction {
            states,
            rewards,
            untrained,
        })
    }

    /// Batched single step in environment units. `pass_seed` enables dropout with that pass's masks.
    /// Rewards are returned in normalized `[0, 1]` units.
    pub fn predict_next_batch(
        &self,
        histories: &[Vec<Vec<f64>>],
        actions: &[Vec<f64>],
        pass_seed: Option<u64>,
    ) -> Result<Vec<(Vec<f64>, f64)>> {
        if histories.len() != actions.len() || histories.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "batch needs matching non-empty histories and actions, got {} and {}",
                histories.len(),
                actions.len()
            )));
        }
        histories.iter().try_for_each(|h| self.check_history(h))?;
        actions.iter().try_for_each(|a| self.check_action(a))?;
        self.warn_untrained();
        let b = histories.len();
        let mut tape = Tape::new();
        let window: Vec<Var> = (0..self.config.window_n)
            .map(|i| {
                let rows: Vec<Vec<f64>> = histories.iter().map(|h| self.norm.apply_state(&h[i])).collect();
                tape.leaf(Matrix::from_rows(&rows).expect("uniform rows"))
            })
            .collect();
        let arows: Vec<Vec<f64>> = actions.iter().map(|a| self.env.normalize_action(a)).collect();
        let act = tape.leaf(Matrix::from_rows(&arows)?);
        let masks = pass_seed.map(|s| self.pass_masks(s, b));
        let (s, r) = self.step_tape(&mut tape, &window, act, masks.as_ref())?;
        let (sm, rm) = (tape.value(s), tape.value(r));
        if !sm.is_finite() || !rm.is_finite() {
            return Err(Error::NonFinite("world model prediction".into()));
        }
        Ok((0..b).map(|i| (self.norm.invert_state(sm.row(i)), rm.data[i])).collect())
    }

    pub fn to_checkpoint(&self) -> Result<Checkpoint> {
        let metadata = serde_json::json!({
            "kind": "world_model",
            "config": self.config,
            "env": self.env,
            "norm": self.norm,
            "frozen": self.frozen,
            "report": self.report,
        });
        Ok(NETS
            .iter()
            .zip(self.networks())
            .fold(Checkpoint::new(metadata), |c, (name, net)| c.with(name, net)))
    }

    pub fn from_checkpoint(mut ckpt: Checkpoint) -> Result<Self> {
        let meta = &ckpt.metadata;
        if meta.get("kind").and_then(|k| k.as_str()) != Some("world_model") {
            return Err(Error::Format("checkpoint is not a world model".into()));
        }
        let field = |name: &str| {
            meta.get(name)
                .cloned()
                .ok_or_else(|| Error::Format(format!("world model checkpoint lacks '{name}'")))
        };
        let config: WorldModelConfig = serde_json::from_value(field("config")?)?;
        let env: EnvSpec = serde_json::from_value(field("env")?)?;
        let norm: NormStats = serde_json::from_value(field("norm")?)?;
        let report: Option<TrainingReport> = serde_json::from_value(field("report")?)?;
        let frozen = field("frozen")?.as_bool().unwrap_or(false);
        let mut model = Self::new(config, env, norm, 0)?;
        for (name, slot) in NETS.iter().zip(model.networks_mut()) {
            let net = ckpt.take(name)?;
            if net.specs() != slot.specs() {
                return Err(Error::Format(format!("network '{name}' layout differs from its config")));
            }
            *slot = net;
        }
        model.report = report;
        if frozen {
            model.freeze();
        }
        Ok(model)
    }
}
