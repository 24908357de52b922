//! Layer stacks built from [`LayerSpec`]s, evaluated on a [`Tape`].

use rand::Rng;

use super::layers::{mask_seed, Activation, DropoutMask, LayerKind, LayerSpec, RecurrentState};
use super::matrix::Matrix;
use super::param::{ParamId, ParamStore, ParamTensor};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};
use crate::rng::rng_from;

/// Tape handles for one recurrent layer's state.
#[derive(Clone, Copy, Debug)]
pub struct StateVars {
    pub hidden: Var,
    pub cell: Option<Var>,
}

/// A feed-forward / recurrent layer stack with its parameters.
#[derive(Debug)]
pub struct Network {
    specs: Vec<LayerSpec>,
    store: ParamStore,
    /// Parameter tensor ids per layer (empty for parameter-free layers).
    slots: Vec<Vec<ParamId>>,
    frozen: bool,
}

/// Everything `backward` needs from a forward pass.
#[derive(Debug)]
pub struct ForwardCache {
    tape: Tape,
    output: Var,
    store_uid: u64,
}

#[derive(Debug)]
pub struct ForwardPass {
    pub output: Vec<f64>,
    pub states: Vec<RecurrentState>,
    pub cache: ForwardCache,
}

impl Clone for Network {
    fn clone(&self) -> Self {
        let store = self.store.clone();
        let slots = self
            .slots
            .iter()
            .map(|ids| ids.iter().map(|id| store.id(id.index)).collect())
            .collect();
        Self {
            specs: self.specs.clone(),
            store,
            slots,
            frozen: self.frozen,
        }
    }
}

impl Network {
    /// Build a stack with weights uniform in ±1/√fan_in and LSTM forget-gate bias 1.
    pub fn new(specs: Vec<LayerSpec>, seed: u64) -> Result<Self> {
        if specs.is_empty() {
            return Err(Error::InvalidArgument("network needs at least one layer".into()));
        }
        for (i, s) in specs.iter().enumerate() {
            s.validate(i)?;
            if i > 0 && specs[i - 1].out_dim != s.in_dim {
                return Err(Error::DimensionMismatch {
                    layer: i,
                    expected: specs[i - 1].out_dim,
                    got: s.in_dim,
                });
            }
        }
        let mut rng = rng_from(seed);
        let mut store = ParamStore::new();
        let mut slots = Vec::with_capacity(specs.len());
        for (i, s) in specs.iter().enumerate() {
            let mut uniform = |name: String, rows: usize, cols: usize, fan_in: usize| {
                let bound = 1.0 / (fan_in as f64).sqrt();
                let v = (0..rows * cols).map(|_| rng.gen_range(-bound..bound)).collect();
                ParamTensor::new(name, vec![rows, cols], v).expect("shape matches")
            };
            let ids = match s.kind {
                LayerKind::Affine => vec![
                    store.push(uniform(format!("l{i}.w"), s.in_dim, s.out_dim, s.in_dim)),
                    store.push(uniform(format!("l{i}.b"), 1, s.out_dim, s.in_dim)),
                ],
                LayerKind::LongMemoryCell => {
                    let h = s.out_dim;
                    let wx = uniform(format!("l{i}.wx"), s.in_dim, 4 * h, s.in_dim);
                    let wh = uniform(format!("l{i}.wh"), h, 4 * h, h);
                    let mut b = uniform(format!("l{i}.b"), 1, 4 * h, h);
                    // gate order i, f, g, o
                    b.values[h..2 * h].iter_mut().for_each(|v| *v = 1.0);
                    vec![store.push(wx), store.push(wh), store.push(b)]
                }
                LayerKind::GatedCell => {
                    let h = s.out_dim;
                    vec![
                        store.push(uniform(format!("l{i}.wx"), s.in_dim, 3 * h, s.in_dim)),
                        store.push(uniform(format!("l{i}.wh"), h, 3 * h, h)),
                        store.push(uniform(format!("l{i}.bx"), 1, 3 * h, h)),
                        store.push(uniform(format!("l{i}.bh"), 1, 3 * h, h)),
                    ]
                }
                LayerKind::Activation | LayerKind::Dropout => vec![],
            };
            slots.push(ids);
        }
        Ok(Self {
            specs,
            store,
            slots,
            frozen: false,
        })
    }

    /// Convenience: an MLP `in → hidden… → out` with the given hidden activation.
    pub fn mlp(
        in_dim: usize,
        hidden: &[usize],
        out_dim: usize,
        act: Activation,
        out_act: Activation,
        seed: u64,
    ) -> Result<Self> {
        let mut specs = Vec::new();
        let mut prev = in_dim;
        for &h in hidden {
            specs.push(LayerSpec::affine(prev, h));
            specs.push(LayerSpec::activation(h, act));
            prev = h;
        }
        specs.push(LayerSpec::affine(prev, out_dim));
        if out_act != Activation::Identity {
            specs.push(LayerSpec::activation(out_dim, out_act));
        }
        Self::new(specs, seed)
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    pub fn in_dim(&self) -> usize {
        self.specs[0].in_dim
    }

    pub fn out_dim(&self) -> usize {
        self.specs[self.specs.len() - 1].out_dim
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    /// Mutable access to parameters; rejected once the network is frozen.
    pub fn params_mut(&mut self) -> Result<&mut ParamStore> {
        if self.frozen {
            return Err(Error::Frozen("network parameters are read-only".into()));
        }
        Ok(&mut self.store)
    }

    pub(crate) fn store_unchecked(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Rebuild a network from its layer specs and tensor values (checkpoint loading).
    pub fn from_parts(specs: Vec<LayerSpec>, tensors: Vec<(Vec<usize>, Vec<f64>)>) -> Result<Self> {
        let mut net = Self::new(specs, 0)?;
        if tensors.len() != net.store.tensors().len() {
            return Err(Error::Format(format!(
                "expected {} tensors, found {}",
                net.store.tensors().len(),
                tensors.len()
            )));
        }
        for (t, (shape, values)) in net.store.tensors_mut().iter_mut().zip(tensors) {
            if t.shape != shape || t.values.len() != values.len() {
                return Err(Error::Format(format!(
                    "tensor '{}' has shape {:?}, checkpoint has {:?}",
                    t.name, t.shape, shape
                )));
            }
            t.values = values;
        }
        Ok(net)
    }

    /// Layer index owning each tensor, in store order.
    pub fn tensor_layers(&self) -> Vec<usize> {
        self.slots
            .iter()
            .enumerate()
            .flat_map(|(i, ids)| ids.iter().map(move |_| i))
            .collect()
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn num_dropout_layers(&self) -> usize {
        self.specs.iter().filter(|s| s.kind == LayerKind::Dropout).count()
    }

    pub fn recurrent_layers(&self) -> impl Iterator<Item = &LayerSpec> {
        self.specs.iter().filter(|s| s.is_recurrent())
    }

    /// Zero initial states for every recurrent layer, as tape leaves.
    pub fn zero_state_vars(&self, tape: &mut Tape, batch: usize) -> Vec<StateVars> {
        self.recurrent_layers()
            .map(|s| StateVars {
                hidden: tape.leaf(Matrix::zeros(batch, s.out_dim)),
                cell: (s.kind == LayerKind::LongMemoryCell)
                    .then(|| tape.leaf(Matrix::zeros(batch, s.out_dim))),
            })
            .collect()
    }

    /// Masks for one pass seeded with `pass_seed`, one per dropout layer, sized for `batch` rows.
    pub fn masks_for(&self, pass_seed: u64, batch: usize) -> Vec<DropoutMask> {
        self.specs
            .iter()
            .filter(|s| s.kind == LayerKind::Dropout)
            .enumerate()
            .map(|(slot, s)| {
                DropoutMask::generate(mask_seed(pass_seed, slot), s.dropout_rate, batch * s.out_dim)
            })
            .collect()
    }

    /// Record one step of the stack on `tape`.
    ///
    /// `states` holds one entry per recurrent layer. Dropout is applied only when
    /// `training` is set and masks are supplied.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        input: Var,
        states: &[StateVars],
        masks: Option<&[DropoutMask]>,
        training: bool,
    ) -> Result<(Var, Vec<StateVars>)> {
        let n_rec = self.recurrent_layers().count();
        if states.len() != n_rec {
            return Err(Error::InvalidArgument(format!(
                "expected {n_rec} recurrent states, got {}",
                states.len()
            )));
        }
        if let Some(m) = masks {
            if m.len() != self.num_dropout_layers() {
                return Err(Error::InvalidArgument(format!(
                    "expected {} dropout masks, got {}",
                    self.num_dropout_layers(),
                    m.len()
                )));
            }
        }
        let mut x = input;
        let mut new_states = Vec::with_capacity(n_rec);
        let mut rec_i = 0;
        let mut drop_i = 0;
        for (i, spec) in self.specs.iter().enumerate() {
            let xm = tape.value(x);
            if xm.cols != spec.in_dim {
                return Err(Error::DimensionMismatch {
                    layer: i,
                    expected: spec.in_dim,
                    got: xm.cols,
                });
            }
            let batch = xm.rows;
            let ids = &self.slots[i];
            x = match spec.kind {
                LayerKind::Affine => {
                    let w = tape.param(&self.store, ids[0]);
                    let b = tape.param(&self.store, ids[1]);
                    tape.affine(x, w, b)
                }
                LayerKind::Activation => apply_activation(tape, x, spec.activation),
                LayerKind::Dropout => {
                    let slot = drop_i;
                    drop_i += 1;
                    match masks {
                        Some(m) if training => {
                            let mask = &m[slot];
                            if mask.mask.len() != batch * spec.out_dim {
                                return Err(Error::DimensionMismatch {
                                    layer: i,
                                    expected: batch * spec.out_dim,
                                    got: mask.mask.len(),
                                });
                            }
                            tape.mul_const(x, mask.scale_matrix(batch, spec.out_dim))
                        }
                        _ => x,
                    }
                }
                LayerKind::LongMemoryCell => {
                    let st = states[rec_i];
                    rec_i += 1;
                    check_state(tape, i, spec, &st, batch)?;
                    let (h, c) = lstm_step(tape, &self.store, ids, spec.out_dim, x, st)?;
                    new_states.push(StateVars {
                        hidden: h,
                        cell: Some(c),
                    });
                    h
                }
                LayerKind::GatedCell => {
                    let st = states[rec_i];
                    rec_i += 1;
                    check_state(tape, i, spec, &st, batch)?;
                    let h = gru_step(tape, &self.store, ids, spec.out_dim, x, st.hidden);
                    new_states.push(StateVars {
                        hidden: h,
                        cell: None,
                    });
                    h
                }
            };
        }
        Ok((x, new_states))
    }

    /// Single-sample forward on plain vectors; the returned cache feeds [`Network::backward`].
    pub fn forward(
        &self,
        input: &[f64],
        states: &[RecurrentState],
        masks: Option<&[DropoutMask]>,
        training: bool,
    ) -> Result<ForwardPass> {
        if input.len() != self.in_dim() {
            return Err(Error::DimensionMismatch {
                layer: 0,
                expected: self.in_dim(),
                got: input.len(),
            });
        }
        let mut tape = Tape::new();
        let x = tape.leaf(Matrix::row_vector(input));
        let svars = self.state_leaves(&mut tape, states)?;
        let (y, new_vars) = self.forward_tape(&mut tape, x, &svars, masks, training)?;
        let output = tape.value(y).data.clone();
        if !output.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        let states = new_vars
            .iter()
            .map(|s| RecurrentState {
                hidden: tape.value(s.hidden).data.clone(),
                cell: s.cell.map(|c| tape.value(c).data.clone()),
            })
            .collect();
        Ok(ForwardPass {
            output,
            states,
            cache: ForwardCache {
                tape,
                output: y,
                store_uid: self.store.uid(),
            },
        })
    }

    /// Unroll over a sequence, threading recurrent state; one output per step.
    pub fn forward_sequence(
        &self,
        inputs: &[Vec<f64>],
        states: &[RecurrentState],
    ) -> Result<(Vec<Vec<f64>>, Vec<RecurrentState>)> {
        let mut tape = Tape::new();
        let mut svars = self.state_leaves(&mut tape, states)?;
        let mut outs = Vec::with_capacity(inputs.len());
        for x in inputs {
            let xv = tape.leaf(Matrix::row_vector(x));
            let (y, ns) = self.forward_tape(&mut tape, xv, &svars, None, false)?;
            outs.push(tape.value(y).data.clone());
            svars = ns;
        }
        let states = svars
            .iter()
            .map(|s| RecurrentState {
                hidden: tape.value(s.hidden).data.clone(),
                cell: s.cell.map(|c| tape.value(c).data.clone()),
            })
            .collect();
        Ok((outs, states))
    }

    fn state_leaves(&self, tape: &mut Tape, states: &[RecurrentState]) -> Result<Vec<StateVars>> {
        let specs: Vec<&LayerSpec> = self.recurrent_layers().collect();
        if states.is_empty() {
            return Ok(self.zero_state_vars(tape, 1));
        }
        if states.len() != specs.len() {
            return Err(Error::InvalidArgument(format!(
                "expected {} recurrent states, got {}",
                specs.len(),
                states.len()
            )));
        }
        Ok(states
            .iter()
            .map(|s| StateVars {
                hidden: tape.leaf(Matrix::row_vector(&s.hidden)),
                cell: s.cell.as_ref().map(|c| tape.leaf(Matrix::row_vector(c))),
            })
            .collect())
    }

    /// Accumulate parameter gradients for `output_grad` (dLoss/dOutput) into `grad` fields.
    /// Calling twice without zeroing accumulates.
    pub fn backward(&mut self, cache: Option<&ForwardCache>, output_grad: &[f64]) -> Result<()> {
        let cache = cache.ok_or(Error::MissingCache)?;
        if cache.store_uid != self.store.uid() {
            return Err(Error::MissingCache);
        }
        let out = cache.tape.value(cache.output);
        if output_grad.len() != out.data.len() {
            return Err(Error::DimensionMismatch {
                layer: self.specs.len() - 1,
                expected: out.data.len(),
                got: output_grad.len(),
            });
        }
        let seed = Matrix {
            rows: out.rows,
            cols: out.cols,
            data: output_grad.to_vec(),
        };
        let grads = cache.tape.backward_from(cache.output, seed);
        grads.accumulate_into(self.params_mut()?);
        Ok(())
    }

    /// `k` dropout-enabled passes; pass `i` draws its masks from seed `base_seed + i`.
    pub fn mc_forward(&self, input: &[f64], k: usize, base_seed: u64) -> Result<Vec<Vec<f64>>> {
        if self.num_dropout_layers() == 0 {
            return Err(Error::InvalidArgument(
                "MC dropout needs at least one dropout layer".into(),
            ));
        }
        if k < 2 {
            return Err(Error::InvalidArgument(format!("MC dropout needs k >= 2, got {k}")));
        }
        (0..k)
            .map(|i| {
                let masks = self.masks_for(base_seed.wrapping_add(i as u64), 1);
                self.forward(input, &[], Some(&masks), true).map(|p| p.output)
            })
            .collect()
    }

    /// Batched evaluation without gradients.
    pub fn eval_batch(&self, input: &Matrix) -> Result<Matrix> {
        let mut tape = Tape::new();
        let x = tape.leaf(input.clone());
        let states = self.zero_state_vars(&mut tape, input.rows);
        let (y, _) = self.forward_tape(&mut tape, x, &states, None, false)?;
        Ok(tape.value(y).clone())
    }
}

fn check_state(tape: &Tape, layer: usize, spec: &LayerSpec, st: &StateVars, batch: usize) -> Result<()> {
    let h = tape.value(st.hidden);
    if h.cols != spec.out_dim || h.rows != batch {
        return Err(Error::DimensionMismatch {
            layer,
            expected: spec.out_dim,
            got: h.cols,
        });
    }
    if spec.kind == LayerKind::LongMemoryCell && st.cell.is_none() {
        return Err(Error::InvalidArgument(format!(
            "layer {layer}: LSTM state needs a cell vector"
        )));
    }
    Ok(())
}

pub(crate) fn apply_activation(tape: &mut Tape, x: Var, act: Activation) -> Var {
    match act {
        Activation::Tanh => tape.tanh(x),
        Activation::Relu => tape.relu(x),
        Activation::Sigmoid => tape.sigmoid(x),
        Activation::Identity => x,
    }
}

fn lstm_step(
    tape: &mut Tape,
    store: &ParamStore,
    ids: &[ParamId],
    h: usize,
    x: Var,
    st: StateVars,
) -> Result<(Var, Var)> {
    let wx = tape.param(store, ids[0]);
    let wh = tape.param(store, ids[1]);
    let b = tape.param(store, ids[2]);
    let zx = tape.matmul(x, wx);
    let zh = tape.matmul(st.hidden, wh);
    let z = tape.add(zx, zh);
    let z = tape.add_row(z, b);
    let zi = tape.slice(z, 0, h);
    let zf = tape.slice(z, h, h);
    let zg = tape.slice(z, 2 * h, h);
    let zo = tape.slice(z, 3 * h, h);
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let g = tape.tanh(zg);
    let o = tape.sigmoid(zo);
    let c_prev = st.cell.ok_or_else(|| Error::InvalidArgument("LSTM state needs a cell".into()))?;
    let fc = tape.mul(f, c_prev);
    let ig = tape.mul(i, g);
    let c = tape.add(fc, ig);
    let tc = tape.tanh(c);
    let hn = tape.mul(o, tc);
    Ok((hn, c))
}

/// GRU with the reset gate applied to the recurrent candidate term:
/// `n = tanh(Wx_n x + bx_n + r ⊙ (Wh_n h + bh_n))`, `h' = (1 − z) ⊙ n + z ⊙ h`.
fn gru_step(tape: &mut Tape, store: &ParamStore, ids: &[ParamId], h: usize, x: Var, hp: Var) -> Var {
    let wx = tape.param(store, ids[0]);
    let wh = tape.param(store, ids[1]);
    let bx = tape.param(store, ids[2]);
    let bh = tape.param(store, ids[3]);
    let gx = tape.affine(x, wx, bx);
    let gh = tape.affine(hp, wh, bh);
    let gxz = tape.slice(gx, 0, h);
    let gxr = tape.slice(gx, h, h);
    let gxn = tape.slice(gx, 2 * h, h);
    let ghz = tape.slice(gh, 0, h);
    let ghr = tape.slice(gh, h, h);
    let ghn = tape.slice(gh, 2 * h, h);
    let zs = tape.add(gxz, ghz);
    let z = tape.sigmoid(zs);
    let rs = tape.add(gxr, ghr);
    let r = tape.sigmoid(rs);
    let rn = tape.mul(r, ghn);
    let ns = tape.add(gxn, rn);
    let n = tape.tanh(ns);
    let omz = tape.one_minus(z);
    let a = tape.mul(omz, n);
    let bz = tape.mul(z, hp);
    tape.add(a, bz)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_all(net: &mut Network) {
        for t in net.params_mut().unwrap().tensors_mut() {
            t.values.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    #[test]
    fn identity_affine_passes_input_through() {
        let mut net = Network::new(vec![LayerSpec::affine(2, 2)], 0).unwrap();
        let p = net.params_mut().unwrap();
        p.tensors_mut()[0].values = vec![1.0, 0.0, 0.0, 1.0];
        p.tensors_mut()[1].values = vec![0.0, 0.0];
        let out = net.forward(&[1.0, 2.0], &[], None, false).unwrap();
        assert_eq!(out.output, vec![1.0, 2.0]);
    }

    #[test]
    fn zero_weight_gru_keeps_zero_hidden() {
        let mut net = Network::new(vec![LayerSpec::gru(3, 4)], 5).unwrap();
        zero_all(&mut net);
        let out = net.forward(&[0.7, -2.0, 5.0], &[], None, false).unwrap();
        assert_eq!(out.output, vec![0.0; 4]);
        assert_eq!(out.states[0].hidden, vec![0.0; 4]);
    }

    #[test]
    fn zero_rate_dropout_is_identity() {
        let net = Network::new(vec![LayerSpec::dropout(5, 0.0)], 0).unwrap();
        let x = [0.1, -0.2, 0.3, 4.0, -5.0];
        let masks = net.masks_for(9, 1);
        let out = net.forward(&x, &[], Some(&masks), true).unwrap();
        assert_eq!(out.output, x.to_vec());
    }

    #[test]
    fn dimension_mismatch_names_layer() {
        let net = Network::new(
            vec![LayerSpec::affine(3, 4), LayerSpec::activation(4, Activation::Tanh)],
            0,
        )
        .unwrap();
        match net.forward(&[1.0, 2.0], &[], None, false) {
            Err(Error::DimensionMismatch { layer: 0, expected: 3, got: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let err = Network::new(vec![LayerSpec::affine(3, 4), LayerSpec::affine(5, 1)], 0);
        assert!(matches!(err, Err(Error::DimensionMismatch { layer: 1, .. })));
    }

    #[test]
    fn scalar_affine_gradient_by_hand() {
        // y = w·x, L = y², x = 1, w = 3 → dL/dw = 2·y·x = 6
        let mut net = Network::new(vec![LayerSpec::affine(1, 1)], 0).unwrap();
        {
            let p = net.params_mut().unwrap();
            p.tensors_mut()[0].values = vec![3.0];
            p.tensors_mut()[1].values = vec![0.0];
        }
        let pass = net.forward(&[1.0], &[], None, false).unwrap();
        let y = pass.output[0];
        net.backward(Some(&pass.cache), &[2.0 * y]).unwrap();
        assert_eq!(net.params().tensors()[0].grad, vec![6.0]);
        // accumulation without zeroing
        net.backward(Some(&pass.cache), &[2.0 * y]).unwrap();
        assert_eq!(net.params().tensors()[0].grad, vec![12.0]);
    }

    #[test]
    fn clones_train_their_own_parameters() {
        let net = Network::new(vec![LayerSpec::gru(1, 2), LayerSpec::affine(2, 1)], 3).unwrap();
        let mut copy = net.clone();
        let pass = copy.forward(&[0.5], &[], None, false).unwrap();
        copy.backward(Some(&pass.cache), &[1.0]).unwrap();
        assert!(copy.params().grad_norm() > 0.0);
        assert_eq!(net.params().grad_norm(), 0.0);
        assert_eq!(copy.eval_batch(&Matrix::filled(1, 1, 0.5)).unwrap().data, vec![pass.output[0]]);
    }

    #[test]
    fn squared_error_at_optimum_has_zero_gradient() {
        let mut net = Network::new(vec![LayerSpec::affine(2, 1)], 3).unwrap();
        let x = [0.5, -1.5];
        let pass = net.forward(&x, &[], None, false).unwrap();
        let target = pass.output[0];
        net.backward(Some(&pass.cache), &[2.0 * (pass.output[0] - target)]).unwrap();
        assert!(net.params().tensors().iter().all(|t| t.grad.iter().all(|&g| g == 0.0)));
    }

    #[test]
    fn backward_without_cache_is_rejected() {
        let mut net = Network::new(vec![LayerSpec::affine(1, 1)], 0).unwrap();
        assert!(matches!(net.backward(None, &[1.0]), Err(Error::MissingCache)));
        let other = Network::new(vec![LayerSpec::affine(1, 1)], 0).unwrap();
        let pass = other.forward(&[1.0], &[], None, false).unwrap();
        assert!(matches!(net.backward(Some(&pass.cache), &[1.0]), Err(Error::MissingCache)));
    }

    #[test]
    fn sequence_unroll_equals_threaded_single_steps() {
        let net = Network::new(vec![LayerSpec::lstm(2, 3), LayerSpec::gru(3, 2)], 11).unwrap();
        let inputs: Vec<Vec<f64>> = (0..6).map(|t| vec![(t as f64).sin(), 0.1 * t as f64]).collect();
        let (outs, final_states) = net.forward_sequence(&inputs, &[]).unwrap();
        let mut states: Vec<RecurrentState> =
            net.recurrent_layers().map(RecurrentState::zeros).collect();
        for (x, expected) in inputs.iter().zip(&outs) {
            let p = net.forward(x, &states, None, false).unwrap();
            assert_eq!(&p.output, expected);
            states = p.states;
        }
        assert_eq!(states, final_states);
    }

    #[test]
    fn mc_forward_contract() {
        let net = Network::new(
            vec![LayerSpec::affine(3, 8), LayerSpec::dropout(8, 0.5), LayerSpec::affine(8, 2)],
            1,
        )
        .unwrap();
        let x = [0.2, 0.4, -0.6];
        let a = net.mc_forward(&x, 3, 100).unwrap();
        let b = net.mc_forward(&x, 3, 100).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
        assert!(net.mc_forward(&x, 1, 0).is_err());

        let plain = Network::new(vec![LayerSpec::affine(3, 2)], 1).unwrap();
        assert!(plain.mc_forward(&x, 3, 0).is_err());

        let zero = Network::new(
            vec![LayerSpec::affine(3, 8), LayerSpec::dropout(8, 0.0), LayerSpec::affine(8, 2)],
            1,
        )
        .unwrap();
        let outs = zero.mc_forward(&x, 3, 7).unwrap();
        assert!(outs.iter().all(|o| o == &outs[0]));
    }

    #[test]
    fn frozen_network_rejects_mutation() {
        let mut net = Network::new(vec![LayerSpec::affine(1, 1)], 0).unwrap();
        net.freeze();
        assert!(net.params_mut().is_err());
        let pass = net.forward(&[1.0], &[], None, false).unwrap();
        assert!(net.backward(Some(&pass.cache), &[1.0]).is_err());
    }
}
