use super::network::Network;
use super::param::ParamStore;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Models whose parameters can be enumerated for gradient checking and checkpointing.
pub trait Parameterized {
    fn stores(&self) -> Vec<&ParamStore>;
    fn stores_mut(&mut self) -> Vec<&mut ParamStore>;
}

impl Parameterized for Network {
    fn stores(&self) -> Vec<&ParamStore> {
        vec![self.params()]
    }

    fn stores_mut(&mut self) -> Vec<&mut ParamStore> {
        vec![self.store_unchecked()]
    }
}

const MAX_PARAMS: usize = 10_000;

/// Compare tape gradients against central differences for every parameter.
///
/// `loss` records a scalar loss on a fresh tape. Returns
/// `max |analytic − numeric| / max(|analytic|, |numeric|, 1e-8)`.
pub fn grad_check<M, F>(model: &mut M, mut loss: F, epsilon: f64) -> Result<f64>
where
    M: Parameterized,
    F: FnMut(&M) -> Result<(Tape, Var)>,
{
    let total: usize = model.stores().iter().map(|s| s.num_params()).sum();
    if total >= MAX_PARAMS {
        return Err(Error::InvalidArgument(format!(
            "grad_check limited to < {MAX_PARAMS} parameters, model has {total}"
        )));
    }
    let (tape, root) = loss(model)?;
    let l0 = tape.scalar(root);
    if !l0.is_finite() {
        return Err(Error::NonFinite("grad_check loss".into()));
    }
    let grads = tape.backward(root);
    for s in model.stores_mut() {
        s.zero_grad();
        grads.accumulate_into(s);
    }
    let analytic: Vec<Vec<Vec<f64>>> = model
        .stores()
        .iter()
        .map(|s| s.tensors().iter().map(|t| t.grad.clone()).collect())
        .collect();

    let mut eval = |model: &M| -> Result<f64> {
        let (t, r) = loss(model)?;
        let v = t.scalar(r);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("grad_check loss".into()))
        }
    };

    let mut worst = 0.0f64;
    let n_stores = analytic.len();
    for si in 0..n_stores {
        for ti in 0..analytic[si].len() {
            for k in 0..analytic[si][ti].len() {
                let orig = model.stores()[si].tensors()[ti].values[k];
                model.stores_mut()[si].tensors_mut()[ti].values[k] = orig + epsilon;
                let lp = eval(model)?;
                model.stores_mut()[si].tensors_mut()[ti].values[k] = orig - epsilon;
                let lm = eval(model)?;
                model.stores_mut()[si].tensors_mut()[ti].values[k] = orig;
                let numeric = (lp - lm) / (2.0 * epsilon);
                let a = analytic[si][ti][k];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
                worst = worst.max(rel);
            }
        }
    }
    Ok(worst)
}
