use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env::{EnvSpec, NormStats};
use crate::error::{Error, Result};
use crate::nn::{Activation, Checkpoint, LayerSpec, Matrix, Network, ParamStore, Parameterized, Tape, Var};
use crate::rng::{derive_seed, rng_from};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaeConfig {
    pub hidden_width: usize,
    /// Defaults to twice the action dimension.
    pub latent_dim: Option<usize>,
    pub kl_weight: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub patience: usize,
    pub batches_per_epoch: Option<usize>,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            hidden_width: 96,
            latent_dim: None,
            kl_weight: 1.0,
            epochs: 30,
            batch_size: 128,
            learning_rate: 1e-3,
            patience: 4,
            batches_per_epoch: None,
        }
    }
}

impl VaeConfig {
    pub fn latent_dim(&self, action_dim: usize) -> usize {
        self.latent_dim.unwrap_or(2 * action_dim)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("vae: {m}")));
        if self.hidden_width == 0 || self.latent_dim == Some(0) {
            return bad("hidden_width and latent_dim must be positive");
        }
        if !(self.kl_weight >= 0.0 && self.kl_weight.is_finite()) {
            return bad("kl_weight must be finite and >= 0");
        }
        if self.epochs == 0 || self.batch_size == 0 || !(self.learning_rate > 0.0) {
            return bad("epochs, batch_size and learning_rate must be positive");
        }
        Ok(())
    }
}

/// Manifold loss of one pair: higher means less support in the training data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElboScore {
    pub recon_loss: f64,
    pub kl_loss: f64,
    pub u: f64,
}

/// `KL(N(mu, exp(logvar)) ‖ N(0, I))` in closed form.
pub fn kl_divergence(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
        .sum::<f64>()
}

pub fn elbo_loss(reconstruction: &[f64], target: &[f64], mu: &[f64], logvar: &[f64], kl_weight: f64) -> Result<ElboScore> {
    if reconstruction.len() != target.len() || mu.len() != logvar.len() || target.is_empty() {
        return Err(Error::DimensionMismatch {
            layer: 0,
            expected: target.len(),
            got: reconstruction.len(),
        });
    }
    let recon_loss = reconstruction
        .iter()
        .zip(target)
        .map(|(r, t)| (r - t).powi(2))
        .sum::<f64>()
        / target.len() as f64;
    let kl_loss = kl_divergence(mu, logvar);
    Ok(ElboScore {
        recon_loss,
        kl_loss,
        u: recon_loss + kl_weight * kl_loss,
    })
}

/// Reparameterization noise.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Noise {
    /// `z = mu`; used for scoring.
    Zero,
    Seeded(u64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct VaeOutput {
    pub reconstruction: Vec<f64>,
    pub mu: Vec<f64>,
    pub logvar: Vec<f64>,
}

/// Tape handles of one batched pass.
pub(crate) struct VaeVars {
    pub input: Var,
    pub recon: Var,
    pub mu: Var,
    pub logvar: Var,
}

/// Encoder/decoder over normalized `(state, action)` with one skip from encoder mid-layer to decoder mid-layer.
#[derive(Clone, Debug)]
pub struct Vae {
    config: VaeConfig,
    env: EnvSpec,
    norm: NormStats,
    encoder: Network,
    latent_head: Network,
    decoder_in: Network,
    decoder_out: Network,
    frozen: bool,
}

const NETS: [&str; 4] = ["encoder", "latent_head", "decoder_in", "decoder_out"];

impl Vae {
    pub fn new(config: VaeConfig, env: EnvSpec, norm: NormStats, seed: u64) -> Result<Self> {
        config.validate()?;
        env.validate()?;
        if config.latent_dim.is_some_and(|l| l != 2 * env.action_dim) {
            log::warn!("vae latent_dim overridden to {:?}", config.latent_dim);
        }
        let x = env.state_dim + env.action_dim;
        let h = config.hidden_width;
        let l = config.latent_dim(env.action_dim);
        let tanh = Activation::Tanh;
        let encoder = Network::new(
            vec![
                LayerSpec::affine(x, h),
                LayerSpec::activation(h, tanh),
                LayerSpec::affine(h, h),
                LayerSpec::activation(h, tanh),
            ],
            derive_seed(seed, "vae.encoder"),
        )?;
        let latent_head = Network::new(vec![LayerSpec::affine(h, 2 * l)], derive_seed(seed, "vae.latent"))?;
        let decoder_in = Network::new(
            vec![LayerSpec::affine(l, h), LayerSpec::activation(h, tanh)],
            derive_seed(seed, "vae.decoder_in"),
        )?;
        let decoder_out = Network::new(
            vec![
                LayerSpec::affine(2 * h, h),
                LayerSpec::activation(h, tanh),
                LayerSpec::affine(h, x),
            ],
            derive_seed(seed, "vae.decoder_out"),
        )?;
        Ok(Self {
            config,
            env,
            norm,
            encoder,
            latent_head,
            decoder_in,
            decoder_out,
            frozen: false,
        })
    }

    pub fn config(&self) -> &VaeConfig {
        &self.config
    }

    pub fn env(&self) -> &EnvSpec {
        &self.env
    }

    pub fn norm(&self) -> &NormStats {
        &self.norm
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim(self.env.action_dim)
    }

    pub fn input_dim(&self) -> usize {
        self.env.state_dim + self.env.action_dim
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
        self.networks_mut().into_iter().for_each(Network::freeze);
    }

    pub fn networks(&self) -> [&Network; 4] {
        [&self.encoder, &self.latent_head, &self.decoder_in, &self.decoder_out]
    }

    pub(crate) fn networks_mut(&mut self) -> [&mut Network; 4] {
        [
            &mut self.encoder,
            &mut self.latent_head,
            &mut self.decoder_in,
            &mut self.decoder_out,
        ]
    }

    pub fn checksum(&self) -> String {
        self.networks()
            .iter()
            .map(|n| n.params().checksum())
            .collect::<Vec<_>>()
            .join(":")
    }

    /// Normalized network input for a raw `(state, action)` pair.
    pub fn encode_input(&self, s: &[f64], a: &[f64]) -> Result<Vec<f64>> {
        if s.len() != self.env.state_dim || a.len() != self.env.action_dim {
            return Err(Error::DimensionMismatch {
                layer: 0,
                expected: self.input_dim(),
                got: s.len() + a.len(),
            });
        }
        let mut x = self.norm.apply_state(s);
        x.extend(self.env.normalize_action(a));
        Ok(x)
    }

    /// Record a batched pass on normalized inputs; `eps` is `batch x latent` (zeros for scoring).
    pub(crate) fn forward_tape(&self, tape: &mut Tape, x: &Matrix, eps: &Matrix) -> Result<VaeVars> {
        let l = self.latent_dim();
        let input = tape.leaf(x.clone());
        let (mid, _) = self.encoder.forward_tape(tape, input, &[], None, false)?;
        let (stats, _) = self.latent_head.forward_tape(tape, mid, &[], None, false)?;
        let mu = tape.slice(stats, 0, l);
        let logvar = tape.slice(stats, l, l);
        if !tape.value(logvar).is_finite() {
            return Err(Error::NonFinite("vae logvar".into()));
        }
        let half = tape.scale(logvar, 0.5);
        let std = tape.exp(half);
        let e = tape.leaf(eps.clone());
        let noise = tape.mul(std, e);
        let z = tape.add(mu, noise);
        let (dmid, _) = self.decoder_in.forward_tape(tape, z, &[], None, false)?;
        let joined = tape.concat(&[dmid, mid]);
        let (recon, _) = self.decoder_out.forward_tape(tape, joined, &[], None, false)?;
        Ok(VaeVars {
            input,
            recon,
            mu,
            logvar,
        })
    }

    /// Mean `u` over the batch as a differentiable scalar.
    pub(crate) fn loss_tape(&self, tape: &mut Tape, x: &Matrix, eps: &Matrix) -> Result<Var> {
        let v = self.forward_tape(tape, x, eps)?;
        let batch = x.rows as f64;
        let diff = tape.sub(v.recon, v.input);
        let sq = tape.square(diff);
        let recon = tape.sum_all(sq);
        let recon = tape.scale(recon, 1.0 / (batch * x.cols as f64));
        let mu2 = tape.square(v.mu);
        let var = tape.exp(v.logvar);
        let a = tape.add(mu2, var);
        let b = tape.sub(a, v.logvar);
        let kl_terms = tape.add_scalar(b, -1.0);
        let kl = tape.sum_all(kl_terms);
        let kl = tape.scale(kl, 0.5 * self.config.kl_weight / batch);
        let both = tape.concat(&[recon, kl]);
        Ok(tape.sum_all(both))
    }

    fn noise_matrix(&self, rows: usize, noise: Noise) -> Matrix {
        let l = self.latent_dim();
        match noise {
            Noise::Zero => Matrix::zeros(rows, l),
            Noise::Seeded(seed) => {
                let mut rng = rng_from(seed);
                let data = (0..rows * l).map(|_| StandardNormal.sample(&mut rng)).collect();
                Matrix::from_vec(rows, l, data).expect("sized")
            }
        }
    }

    /// Full pass for one raw pair.
    pub fn forward(&self, s: &[f64], a: &[f64], noise: Noise) -> Result<VaeOutput> {
        let x = Matrix::row_vector(&self.encode_input(s, a)?);
        let mut tape = Tape::new();
        let v = self.forward_tape(&mut tape, &x, &self.noise_matrix(1, noise))?;
        Ok(VaeOutput {
            reconstruction: tape.value(v.recon).data.clone(),
            mu: tape.value(v.mu).data.clone(),
            logvar: tape.value(v.logvar).data.clone(),
        })
    }

    /// Deterministic ELBO scores for normalized input rows, regardless of frozen state.
    pub(crate) fn score_normalized(&self, x: &Matrix) -> Result<Vec<ElboScore>> {
        let mut tape = Tape::new();
        let v = self.forward_tape(&mut tape, x, &self.noise_matrix(x.rows, Noise::Zero))?;
        let (r, mu, lv) = (tape.value(v.recon), tape.value(v.mu), tape.value(v.logvar));
        (0..x.rows)
            .map(|i| {
                let e = elbo_loss(r.row(i), x.row(i), mu.row(i), lv.row(i), self.config.kl_weight)?;
                if !e.u.is_finite() {
                    return Err(Error::NonFinite("vae score".into()));
                }
                Ok(e)
            })
            .collect()
    }

    /// Manifold loss `u` of a raw pair with `ε = 0`. Requires a trained, frozen scorer.
    pub fn score(&self, s: &[f64], a: &[f64]) -> Result<f64> {
        Ok(self.score_batch(&[(s.to_vec(), a.to_vec())])?[0].u)
    }

    pub fn score_batch(&self, pairs: &[(Vec<f64>, Vec<f64>)]) -> Result<Vec<ElboScore>> {
        if !self.frozen {
            return Err(Error::Untrained("vae scorer must be trained and frozen".into()));
        }
        let mut out = Vec::with_capacity(pairs.len());
        for chunk in pairs.chunks(512) {
            let rows = chunk
                .iter()
                .map(|(s, a)| self.encode_input(s, a))
                .collect::<Result<Vec<_>>>()?;
            out.extend(self.score_normalized(&Matrix::from_rows(&rows)?)?);
        }
        Ok(out)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let metadata = serde_json::json!({
            "kind": "vae",
            "config": self.config,
            "env": self.env,
            "norm": self.norm,
            "frozen": self.frozen,
        });
        NETS.iter()
            .zip(self.networks())
            .fold(Checkpoint::new(metadata), |c, (name, net)| c.with(name, net))
    }

    pub fn from_checkpoint(mut ckpt: Checkpoint) -> Result<Self> {
        let meta = &ckpt.metadata;
        if meta.get("kind").and_then(|k| k.as_str()) != Some("vae") {
            return Err(Error::Format("checkpoint is not a vae".into()));
        }
        let field = |name: &str| {
            meta.get(name)
                .cloned()
                .ok_or_else(|| Error::Format(format!("vae checkpoint lacks '{name}'")))
        };
        let config: VaeConfig = serde_json::from_value(field("config")?)?;
        let env: EnvSpec = serde_json::from_value(field("env")?)?;
        let norm: NormStats = serde_json::from_value(field("norm")?)?;
        let frozen = field("frozen")?.as_bool().unwrap_or(false);
        let mut vae = Self::new(config, env, norm, 0)?;
        for (name, slot) in NETS.iter().zip(vae.networks_mut()) {
            let net = ckpt.take(name)?;
            if net.specs() != slot.specs() {
                return Err(Error::Format(format!("network '{name}' layout differs from its config")));
            }
            *slot = net;
        }
        if frozen {
            vae.freeze();
        }
        Ok(vae)
    }
}

impl Parameterized for Vae {
    fn stores(&self) -> Vec<&ParamStore> {
        self.networks().into_iter().map(Network::params).collect()
    }

    fn stores_mut(&mut self) -> Vec<&mut ParamStore> {
        self.networks_mut()
            .into_iter()
            .map(|n| n.store_unchecked())
            .collect()
    }
}

impl Vae {
    /// Differentiable mean-`u` loss for gradient checking and training.
    pub fn loss(&self, x: &Matrix, noise: Noise) -> Result<(Tape, Var)> {
        let mut tape = Tape::new();
        let eps = self.noise_matrix(x.rows, noise);
        let l = self.loss_tape(&mut tape, x, &eps)?;
        Ok((tape, l))
    }
}
