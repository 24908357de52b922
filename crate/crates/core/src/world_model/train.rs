use rand::seq::SliceRandom;
use rand::Rng;

use super::metrics::r_squared;
use super::model::{TrainingReport, WorldModel, WorldModelConfig};
use super::windows::{build_windows, Window, WindowBatch};
use crate::env::{EnvSpec, NormStats, Trajectory};
use crate::error::{Error, Result};
use crate::nn::{clip_global_norm, Adam, AdamConfig, ParamStore, Tape, Var};
use crate::rng::{derive_seed, rng_from};

/// Held-out statistics for a set of windows, computed auto-regressively without dropout.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub r2_state: f64,
    pub r2_reward: f64,
}

/// Split whole trajectories 90/10 into (train, held-out), deterministically from `seed`.
pub fn split_trajectories(trajectories: &[Trajectory], seed: u64) -> Result<(Vec<Trajectory>, Vec<Trajectory>)> {
    if trajectories.len() < 2 {
        return Err(Error::InvalidArgument(
            "need at least two trajectories to hold one out".into(),
        ));
    }
    let mut idx: Vec<usize> = (0..trajectories.len()).collect();
    idx.shuffle(&mut rng_from(seed));
    let n_val = ((trajectories.len() as f64) * 0.1).round().max(1.0) as usize;
    let pick = |ids: &[usize]| ids.iter().map(|&i| trajectories[i].clone()).collect();
    Ok((pick(&idx[n_val..]), pick(&idx[..n_val])))
}

fn batch_loss(
    model: &WorldModel,
    tape: &mut Tape,
    batch: &WindowBatch,
    pass_seed: Option<u64>,
    teacher: bool,
) -> Result<(Var, Vec<(Var, Var)>)> {
    let hist: Vec<Var> = batch.histories.iter().map(|m| tape.leaf(m.clone())).collect();
    let acts: Vec<Var> = batch.actions.iter().map(|m| tape.leaf(m.clone())).collect();
    let truth: Vec<Var> = batch.target_states.iter().map(|m| tape.leaf(m.clone())).collect();
    let masks = pass_seed.map(|s| model.pass_masks(s, batch.len()));
    let steps = model.rollout_tape(tape, &hist, &acts, masks.as_ref(), teacher.then_some(truth.as_slice()))?;
    let mut terms = Vec::with_capacity(2 * steps.len());
    for (k, &(s, r)) in steps.iter().enumerate() {
        terms.push(tape.mse(s, &batch.target_states[k]));
        terms.push(tape.mse(r, &batch.target_rewards[k]));
    }
    let all = tape.concat(&terms);
    Ok((tape.sum_all(all), steps))
}

/// Score `windows` with the current weights.
pub fn evaluate_windows(model: &WorldModel, windows: &[&Window]) -> Result<Evaluation> {
    let mut pred_s = Vec::new();
    let mut true_s = Vec::new();
    let mut pred_r = Vec::new();
    let mut true_r = Vec::new();
    let mut loss = 0.0;
    for chunk in windows.chunks(256) {
        let batch = WindowBatch::from_windows(chunk, model.norm(), model.env())?;
        let mut tape = Tape::new();
        let (l, steps) = batch_loss(model, &mut tape, &batch, None, false)?;
        loss += tape.scalar(l) * chunk.len() as f64;
        for (k, (s, r)) in steps.into_iter().enumerate() {
            pred_s.extend(tape.value(s).to_rows());
            true_s.extend(batch.target_states[k].to_rows());
            pred_r.extend(tape.value(r).data.iter().map(|v| vec![*v]));
            true_r.extend(batch.target_rewards[k].data.iter().map(|v| vec![*v]));
        }
    }
    let loss = loss / windows.len() as f64;
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("held-out loss is {loss}")));
    }
    let rs = r_squared(&pred_s, &true_s)?;
    if !rs.excluded.is_empty() {
        log::warn!("R²: constant state dimensions {:?} excluded", rs.excluded);
    }
    let rr = r_squared(&pred_r, &true_r)?;
    Ok(Evaluation {
        loss,
        r2_state: rs.value,
        r2_reward: rr.value,
    })
}

fn spread_subset(windows: &[Window], cap: usize) -> Vec<&Window> {
    if windows.len() <= cap {
        return windows.iter().collect();
    }
    (0..cap).map(|i| &windows[i * windows.len() / cap]).collect()
}

/// Fit a world model on `trajectories`, holding out 10% of them for R² and early stopping.
///
/// Teacher forcing is used for the first half of `max_epochs`; afterwards targets are fully
/// auto-regressive. The best held-out epoch is restored and the package is returned frozen.
pub fn train_world_model(
    trajectories: &[Trajectory],
    env: &EnvSpec,
    config: &WorldModelConfig,
    seed: u64,
) -> Result<WorldModel> {
    config.validate()?;
    let (train, held) = split_trajectories(trajectories, derive_seed(seed, "split"))?;
    let norm = NormStats::fit(train.iter().flat_map(|t| t.transitions.iter()))?;
    let train_w = build_windows(&train, config.window_n, config.horizon_tau)?;
    let held_w = build_windows(&held, config.window_n, config.horizon_tau)?;
    let val = spread_subset(&held_w, config.max_val_windows);

    let mut model = WorldModel::new(config.clone(), env.clone(), norm, derive_seed(seed, "init"))?;
    let adam_cfg = AdamConfig::with_lr(config.learning_rate);
    let mut opts: Vec<Adam> = model.networks().iter().map(|n| Adam::new(adam_cfg, n.params())).collect();
    let mut rng = rng_from(derive_seed(seed, "batches"));
    let mut best: Vec<ParamStore> = model.networks().iter().map(|n| n.params().clone()).collect();
    let mut best_eval = evaluate_windows(&model, &val)?;
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;
    let mut history = Vec::new();
    let teacher_epochs = config.max_epochs / 2;
    let mut order: Vec<usize> = (0..train_w.len()).collect();
    let mut epochs = 0;

    for epoch in 0..config.max_epochs {
        epochs = epoch + 1;
        let teacher = epoch < teacher_epochs;
        if epoch == teacher_epochs {
            // switching to free-running targets changes the objective
            stale = 0;
        }
        order.shuffle(&mut rng);
        let cap = config.batches_per_epoch.unwrap_or(usize::MAX);
        for (b, chunk) in order.chunks(config.batch_size).take(cap).enumerate() {
            let ws: Vec<&Window> = chunk.iter().map(|&i| &train_w[i]).collect();
            let batch = WindowBatch::from_windows(&ws, model.norm(), model.env())?;
            let mut tape = Tape::new();
            let (loss, _) = batch_loss(&model, &mut tape, &batch, Some(rng.gen()), teacher)?;
            let lv = tape.scalar(loss);
            if !lv.is_finite() {
                return Err(Error::Diverged(format!("epoch {epoch}, batch {b}: training loss {lv}")));
            }
            let grads = tape.backward(loss);
            let mut stores: Vec<&mut ParamStore> = Vec::with_capacity(5);
            for net in model.networks_mut() {
                stores.push(net.params_mut()?);
            }
            stores.iter_mut().for_each(|s| s.zero_grad());
            stores.iter_mut().for_each(|s| grads.accumulate_into(s));
            clip_global_norm(&mut stores, config.grad_clip);
            for (opt, s) in opts.iter_mut().zip(stores) {
                opt.step(s).map_err(|e| Error::Diverged(format!("epoch {epoch}, batch {b}: {e}")))?;
            }
        }
        let eval = evaluate_windows(&model, &val)
            .map_err(|e| Error::Diverged(format!("epoch {epoch}: {e}")))?;
        log::info!(
            "world model epoch {epoch}: val loss {:.5}, R² state {:.4}, reward {:.4}",
            eval.loss,
            eval.r2_state,
            eval.r2_reward
        );
        history.push(eval.loss);
        if eval.loss < best_loss {
            best_loss = eval.loss;
            best_epoch = epoch;
            best_eval = eval;
            stale = 0;
            for (dst, net) in best.iter_mut().zip(model.networks()) {
                dst.copy_values_from(net.params());
            }
        } else {
            stale += 1;
            if stale >= config.patience && !teacher {
                break;
            }
        }
    }
    for (net, src) in model.networks_mut().into_iter().zip(&best) {
        net.params_mut()?.copy_values_from(src);
    }
    model.set_report(TrainingReport {
        r2_state: best_eval.r2_state,
        r2_reward: best_eval.r2_reward,
        epochs,
        best_epoch,
        best_val_loss: best_loss,
        val_loss_history: history,
    })?;
    model.freeze();
    Ok(model)
}
