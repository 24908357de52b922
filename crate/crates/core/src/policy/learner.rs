use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, NormStats};
use crate::error::{Error, Result};
use crate::nn::{Activation, Adam, AdamConfig, Matrix, Network, Tape};
use crate::replay::Stored;
use crate::rng::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PolicyConfig {
    pub gamma: f64,
    pub polyak_tau: f64,
    pub policy_delay: usize,
    pub policy_noise_sigma: f64,
    pub noise_clip: f64,
    pub beta_actor: f64,
    pub beta_critic: f64,
    pub actor_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub batch_size: usize,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            polyak_tau: 0.005,
            policy_delay: 2,
            policy_noise_sigma: 0.2,
            noise_clip: 0.5,
            beta_actor: 0.1,
            beta_critic: 0.1,
            actor_hidden: vec![64, 64],
            critic_hidden: vec![64, 64],
            actor_lr: 1e-3,
            critic_lr: 1e-3,
            batch_size: 100,
        }
    }
}

impl PolicyConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("policy: {m}")));
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in [0, 1)");
        }
        if !(self.polyak_tau >= 0.0 && self.polyak_tau <= 1.0) {
            return bad("polyak_tau must lie in [0, 1]");
        }
        if self.policy_delay == 0 || self.batch_size == 0 {
            return bad("policy_delay and batch_size must be >= 1");
        }
        let nonneg = [self.policy_noise_sigma, self.noise_clip, self.beta_actor, self.beta_critic];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return bad("noise and beta coefficients must be finite and >= 0");
        }
        if !(self.actor_lr > 0.0 && self.critic_lr > 0.0) {
            return bad("learning rates must be positive");
        }
        Ok(())
    }
}

/// A learner batch in normalized units: states standardized, actions in `[-1, 1]`, rewards in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyBatch {
    pub states: Matrix,
    pub actions: Matrix,
    pub rewards: Matrix,
    pub next_states: Matrix,
    pub dones: Matrix,
    pub next_actions: Vec<Option<Vec<f64>>>,
}

impl PolicyBatch {
    pub fn from_stored(items: &[&Stored], norm: &NormStats, env: &EnvSpec) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidArgument("empty policy batch".into()));
        }
        let rows = |f: &dyn Fn(&Stored) -> Vec<f64>| Matrix::from_rows(&items.iter().map(|s| f(s)).collect::<Vec<_>>());
        Ok(Self {
            states: rows(&|s| norm.apply_state(&s.transition.state))?,
            actions: rows(&|s| env.normalize_action(&s.transition.action))?,
            rewards: rows(&|s| vec![s.reward])?,
            next_states: rows(&|s| norm.apply_state(&s.transition.next_state))?,
            dones: rows(&|s| vec![if s.transition.done { 1.0 } else { 0.0 }])?,
            next_actions: items
                .iter()
                .map(|s| s.next_action.as_ref().map(|a| env.normalize_action(a)))
                .collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.states.rows
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticStats {
    pub loss: f64,
    pub mean_q: f64,
    /// Fraction of the batch whose target carried the behavior-proximity term.
    pub penalized_fraction: f64,
}

/// Twin-critic actor-critic with behavior regularization in both actor and critic.
#[derive(Clone, Debug)]
pub struct Learner {
    config: PolicyConfig,
    actor: Network,
    actor_target: Network,
    critics: [Network; 2],
    critic_targets: [Network; 2],
    actor_opt: Adam,
    critic_opts: [Adam; 2],
    critic_updates: usize,
    actor_updates: usize,
}

impl Learner {
    pub fn new(config: PolicyConfig, state_dim: usize, action_dim: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        let actor = Network::mlp(
            state_dim,
            &config.actor_hidden,
            action_dim,
            Activation::Relu,
            Activation::Tanh,
            derive_seed(seed, "actor"),
        )?;
        let critic = |label| {
            Network::mlp(
                state_dim + action_dim,
                &config.critic_hidden,
                1,
                Activation::Relu,
                Activation::Identity,
                derive_seed(seed, label),
            )
        };
        let (c1, c2) = (critic("critic1")?, critic("critic2")?);
        Self::from_networks(config, actor, c1, c2)
    }

    /// Assemble a learner from given networks; targets start as copies.
    pub fn from_networks(config: PolicyConfig, actor: Network, critic1: Network, critic2: Network) -> Result<Self> {
        config.validate()?;
        let (sd, ad) = (actor.in_dim(), actor.out_dim());
        for c in [&critic1, &critic2] {
            if c.in_dim() != sd + ad || c.out_dim() != 1 {
                return Err(Error::DimensionMismatch {
                    layer: 0,
                    expected: sd + ad,
                    got: c.in_dim(),
                });
            }
        }
        let actor_opt = Adam::new(AdamConfig::with_lr(config.actor_lr), actor.params());
        let critic_cfg = AdamConfig::with_lr(config.critic_lr);
        let critic_opts = [Adam::new(critic_cfg, critic1.params()), Adam::new(critic_cfg, critic2.params())];
        Ok(Self {
            actor_target: actor.clone(),
            critic_targets: [critic1.clone(), critic2.clone()],
            actor,
            critics: [critic1, critic2],
            actor_opt,
            critic_opts,
            config,
            critic_updates: 0,
            actor_updates: 0,
        })
    }

    pub fn config(&self) -> &PolicyConfig {
        &self.config
    }

    pub fn actor(&self) -> &Network {
        &self.actor
    }

    pub fn actor_target(&self) -> &Network {
        &self.actor_target
    }

    pub fn critics(&self) -> &[Network; 2] {
        &self.critics
    }

    pub fn critic_targets(&self) -> &[Network; 2] {
        &self.critic_targets
    }

    pub fn update_counts(&self) -> (usize, usize) {
        (self.critic_updates, self.actor_updates)
    }

    /// Deterministic normalized actions for normalized states.
    pub fn act(&self, states: &Matrix) -> Result<Matrix> {
        self.actor.eval_batch(states)
    }

    fn q(net: &Network, s: &Matrix, a: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let sv = tape.leaf(s.clone());
        let av = tape.leaf(a.clone());
        let x = tape.concat(&[sv, av]);
        let (y, _) = net.forward_tape(&mut tape, x, &[], None, false)?;
        Ok(tape.value(y).clone())
    }

    /// Bellman targets `y` and the proximity-term mask, with target smoothing noise drawn from `rng`.
    pub fn targets(&self, batch: &PolicyBatch, rng: &mut impl Rng) -> Result<(Vec<f64>, f64)> {
        let c = &self.config;
        let mut next_a = self.actor_target.eval_batch(&batch.next_states)?;
        if c.policy_noise_sigma > 0.0 {
            for v in next_a.data.iter_mut() {
                let n: f64 = StandardNormal.sample(rng);
                *v = (*v + (n * c.policy_noise_sigma).clamp(-c.noise_clip, c.noise_clip)).clamp(-1.0, 1.0);
            }
        }
        let q1 = Self::q(&self.critic_targets[0], &batch.next_states, &next_a)?;
        let q2 = Self::q(&self.critic_targets[1], &batch.next_states, &next_a)?;
        let mut penalized = 0usize;
        let y = (0..batch.len())
            .map(|i| {
                let mut boot = q1.data[i].min(q2.data[i]);
                if let Some(a_next) = &batch.next_actions[i] {
                    penalized += 1;
                    let d: f64 = next_a.row(i).iter().zip(a_next).map(|(x, y)| (x - y).powi(2)).sum();
                    boot -= c.beta_critic * d;
                }
                batch.rewards.data[i] + c.gamma * (1.0 - batch.dones.data[i]) * boot
            })
            .collect::<Vec<f64>>();
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "critic target for batch row {i}: reward {}, done {}",
                batch.rewards.data[i], batch.dones.data[i]
            )));
        }
        Ok((y, penalized as f64 / batch.len() as f64))
    }

    /// Regress both critics onto the shared target.
    pub fn critic_update(&mut self, batch: &PolicyBatch, rng: &mut impl Rng) -> Result<CriticStats> {
        let (y, penalized_fraction) = self.targets(batch, rng)?;
        let target = Matrix::from_vec(batch.len(), 1, y)?;
        let mut loss = 0.0;
        let mut mean_q = 0.0;
        for (critic, opt) in self.critics.iter_mut().zip(self.critic_opts.iter_mut()) {
            let mut tape = Tape::new();
            let s = tape.leaf(batch.states.clone());
            let a = tape.leaf(batch.actions.clone());
            let x = tape.concat(&[s, a]);
            let (q, _) = critic.forward_tape(&mut tape, x, &[], None, false)?;
            mean_q += tape.value(q).data.iter().sum::<f64>() / batch.len() as f64 / 2.0;
            let l = tape.mse(q, &target);
            let lv = tape.scalar(l);
            if !lv.is_finite() {
                return Err(Error::NonFinite(format!("critic loss at update {}", self.critic_updates)));
            }
            loss += lv;
            let grads = tape.backward(l);
            let store = critic.params_mut()?;
            store.zero_grad();
            grads.accumulate_into(store);
            opt.step(store)?;
        }
        self.critic_updates += 1;
        Ok(CriticStats {
            loss,
            mean_q,
            penalized_fraction,
        })
    }

    /// `−λ·Q1(s, π(s)) + β_a·‖π(s) − a‖²` with `λ = 1 / (mean |Q1| + 1e-8)` held constant.
    pub fn actor_update(&mut self, batch: &PolicyBatch) -> Result<f64> {
        let b = batch.len() as f64;
        let mut tape = Tape::new();
        let s = tape.leaf(batch.states.clone());
        let (pi, _) = self.actor.forward_tape(&mut tape, s, &[], None, false)?;
        let x = tape.concat(&[s, pi]);
        let (q, _) = self.critics[0].forward_tape(&mut tape, x, &[], None, false)?;
        let lambda = 1.0 / (tape.value(q).data.iter().map(|v| v.abs()).sum::<f64>() / b + 1e-8);
        let q_sum = tape.sum_all(q);
        let q_term = tape.scale(q_sum, -lambda / b);
        let dataset = tape.leaf(batch.actions.clone());
        let diff = tape.sub(pi, dataset);
        let sq = tape.square(diff);
        let bc_sum = tape.sum_all(sq);
        let bc = tape.scale(bc_sum, self.config.beta_actor / b);
        let both = tape.concat(&[q_term, bc]);
        let loss = tape.sum_all(both);
        let lv = tape.scalar(loss);
        if !lv.is_finite() {
            return Err(Error::NonFinite(format!("actor loss at update {}", self.actor_updates)));
        }
        let grads = tape.backward(loss);
        let store = self.actor.params_mut()?;
        store.zero_grad();
        grads.accumulate_into(store);
        self.actor_opt.step(store)?;
        self.actor_updates += 1;
        Ok(lv)
    }

    /// Move every target toward its online network by `polyak_tau`.
    pub fn update_targets(&mut self) -> Result<()> {
        let tau = self.config.polyak_tau;
        self.actor_target.params_mut()?.polyak_from(self.actor.params(), tau);
        for (t, c) in self.critic_targets.iter_mut().zip(&self.critics) {
            t.params_mut()?.polyak_from(c.params(), tau);
        }
        Ok(())
    }

    /// One critic update; every `policy_delay`-th also updates the actor and the targets.
    pub fn train_step(&mut self, batch: &PolicyBatch, rng: &mut impl Rng) -> Result<(CriticStats, Option<f64>)> {
        let stats = self.critic_update(batch, rng)?;
        let actor_loss = if self.critic_updates % self.config.policy_delay == 0 {
            let l = self.actor_update(batch)?;
            self.update_targets()?;
            Some(l)
        } else {
            None
        };
        Ok((stats, actor_loss))
    }
}
