use rand::seq::SliceRandom;
use rand::Rng;

use super::model::{Noise, Vae, VaeConfig};
use crate::env::{EnvSpec, NormStats, Transition};
use crate::error::{Error, Result};
use crate::nn::{clip_global_norm, Adam, AdamConfig, Matrix, ParamStore};
use crate::rng::{derive_seed, rng_from};

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct VaeReport {
    pub untrained_val_u: f64,
    pub best_val_u: f64,
    pub epochs: usize,
    pub best_epoch: usize,
}

fn mean_u(vae: &Vae, rows: &Matrix) -> Result<f64> {
    let scores = vae.score_normalized(rows)?;
    Ok(scores.iter().map(|s| s.u).sum::<f64>() / scores.len() as f64)
}

/// Fit a VAE on the `(state, action)` pairs of `transitions`, early-stopping on a 10% validation split.
/// `norm` defines the input normalization; the returned scorer is frozen.
pub fn train_vae<'a>(
    transitions: impl IntoIterator<Item = &'a Transition>,
    env: &EnvSpec,
    norm: &NormStats,
    config: &VaeConfig,
    seed: u64,
) -> Result<(Vae, VaeReport)> {
    config.validate()?;
    let mut vae = Vae::new(config.clone(), env.clone(), norm.clone(), derive_seed(seed, "vae.init"))?;
    let mut rows = transitions
        .into_iter()
        .map(|t| vae.encode_input(&t.state, &t.action))
        .collect::<Result<Vec<_>>>()?;
    if rows.len() < 10 {
        return Err(Error::InvalidArgument(format!(
            "vae needs at least 10 pairs, got {}",
            rows.len()
        )));
    }
    let mut rng = rng_from(derive_seed(seed, "vae.batches"));
    rows.shuffle(&mut rng);
    let n_val = rows.len() / 10;
    let val = Matrix::from_rows(&rows[..n_val])?;
    let train = &rows[n_val..];

    let adam_cfg = AdamConfig::with_lr(config.learning_rate);
    let mut opts: Vec<Adam> = vae.networks().iter().map(|n| Adam::new(adam_cfg, n.params())).collect();
    let untrained_val_u = mean_u(&vae, &val)?;
    let mut best: Vec<ParamStore> = vae.networks().iter().map(|n| n.params().clone()).collect();
    let mut best_u = untrained_val_u;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut epochs = 0;
    for epoch in 0..config.epochs {
        epochs = epoch + 1;
        order.shuffle(&mut rng);
        let cap = config.batches_per_epoch.unwrap_or(usize::MAX);
        for (b, chunk) in order.chunks(config.batch_size).take(cap).enumerate() {
            let batch: Vec<&Vec<f64>> = chunk.iter().map(|&i| &train[i]).collect();
            let x = Matrix::from_rows(&batch)?;
            let (tape, loss) = vae.loss(&x, Noise::Seeded(rng.gen()))?;
            let lv = tape.scalar(loss);
            if !lv.is_finite() {
                return Err(Error::Diverged(format!("vae epoch {epoch}, batch {b}: loss {lv}")));
            }
            let grads = tape.backward(loss);
            let mut stores: Vec<&mut ParamStore> = Vec::with_capacity(4);
            for net in vae.networks_mut() {
                stores.push(net.params_mut()?);
            }
            stores.iter_mut().for_each(|s| s.zero_grad());
            stores.iter_mut().for_each(|s| grads.accumulate_into(s));
            clip_global_norm(&mut stores, 5.0);
            for (opt, s) in opts.iter_mut().zip(stores) {
                opt.step(s)
                    .map_err(|e| Error::Diverged(format!("vae epoch {epoch}, batch {b}: {e}")))?;
            }
        }
        let u = mean_u(&vae, &val).map_err(|e| Error::Diverged(format!("vae epoch {epoch}: {e}")))?;
        log::info!("vae epoch {epoch}: validation mean u {u:.5}");
        if u < best_u {
            best_u = u;
            best_epoch = epoch + 1;
            stale = 0;
            for (dst, net) in best.iter_mut().zip(vae.networks()) {
                dst.copy_values_from(net.params());
            }
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    for (net, src) in vae.networks_mut().into_iter().zip(&best) {
        net.params_mut()?.copy_values_from(src);
    }
    vae.freeze();
    Ok((
        vae,
        VaeReport {
            untrained_val_u,
            best_val_u: best_u,
            epochs,
            best_epoch,
        },
    ))
}

/// Fraction of `ood` scores strictly above the `q`-quantile of `in_dist` scores.
pub fn ood_separation(in_dist: &[f64], ood: &[f64], q: f64) -> Result<f64> {
    if in_dist.is_empty() || ood.is_empty() {
        return Err(Error::InvalidArgument("ood separation needs non-empty score sets".into()));
    }
    let threshold = percentile(in_dist, q)?;
    Ok(ood.iter().filter(|u| **u > threshold).count() as f64 / ood.len() as f64)
}

/// Linear-interpolated percentile, `q` in `[0, 100]`.
pub fn percentile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() || !(0.0..=100.0).contains(&q) {
        return Err(Error::InvalidArgument(format!(
            "percentile {q} of {} values",
            values.len()
        )));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q / 100.0 * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Ok(v[lo] + (v[hi] - v[lo]) * (pos - lo as f64))
}

/// Uniform samples over the environment's state box and action range.
pub fn uniform_pairs(env: &EnvSpec, n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>)> {
    let mut rng = rng_from(seed);
    (0..n)
        .map(|_| {
            let s = env
                .state_low
                .iter()
                .zip(&env.state_high)
                .map(|(l, h)| rng.gen_range(*l..=*h))
                .collect();
            let a = env
                .action_low
                .iter()
                .zip(&env.action_high)
                .map(|(l, h)| rng.gen_range(*l..=*h))
                .collect();
            (s, a)
        })
        .collect()
}
