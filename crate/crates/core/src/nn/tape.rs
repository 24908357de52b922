//! Reverse-mode differentiation over batched matrices.
//!
//! A [`Tape`] records every operation of one forward pass. `backward` walks the
//! record in reverse creation order, which is a valid topological order because
//! an op can only reference nodes created before it.

use std::collections::HashMap;

use super::matrix::Matrix;
use super::param::{ParamId, ParamStore};

/// Index of a node on a tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Min(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MulConst(Var, Matrix),
    Sigmoid(Var),
    Tanh(Var),
    Relu(Var),
    Exp(Var),
    Square(Var),
    Concat(Vec<Var>),
    Slice(Var, usize),
    SumCols(Var),
    SumAll(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    params: HashMap<ParamId, Var>,
}

/// Gradients produced by one backward pass, keyed by parameter.
#[derive(Debug, Default)]
pub struct Gradients {
    params: Vec<(ParamId, Matrix)>,
    leaves: HashMap<usize, Matrix>,
}

impl Gradients {
    /// Add every gradient that belongs to `store` into its tensors' `grad` fields.
    pub fn accumulate_into(&self, store: &mut ParamStore) {
        for (id, g) in &self.params {
            if id.store == store.uid() {
                let t = store.get_mut(*id);
                for (a, b) in t.grad.iter_mut().zip(&g.data) {
                    *a += b;
                }
            }
        }
    }

    /// Gradient with respect to a leaf input, if it was reached.
    pub fn leaf(&self, v: Var) -> Option<&Matrix> {
        self.leaves.get(&v.0)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn leaf(&mut self, m: Matrix) -> Var {
        self.push(m, Op::Leaf)
    }

    /// Register a parameter; repeated calls within one tape return the same node.
    pub fn param(&mut self, store: &ParamStore, id: ParamId) -> Var {
        if let Some(v) = self.params.get(&id) {
            return *v;
        }
        let v = self.push(store.get(id).as_matrix(), Op::Param(id));
        self.params.insert(id, v);
        v
    }

    pub fn matmul(&mut self, a: Var, w: Var) -> Var {
        let v = self.value(a).matmul(self.value(w));
        self.push(v, Op::MatMul(a, w))
    }

    /// Broadcast-add a `1 x n` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, b: Var) -> Var {
        let am = self.value(a);
        let bm = self.value(b);
        debug_assert_eq!(bm.rows, 1);
        debug_assert_eq!(am.cols, bm.cols);
        let mut out = am.clone();
        for r in 0..out.rows {
            for (o, x) in out.row_mut(r).iter_mut().zip(&bm.data) {
                *o += x;
            }
        }
        self.push(out, Op::AddRow(a, b))
    }

    /// `x·W + b`.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let h = self.matmul(x, w);
        self.add_row(h, b)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x + y);
        self.push(v, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x - y);
        self.push(v, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), |x, y| x * y);
        self.push(v, Op::Mul(a, b))
    }

    /// Elementwise minimum; ties route the gradient to `a`.
    pub fn min(&mut self, a: Var, b: Var) -> Var {
        let v = self.value(a).zip(self.value(b), f64::min);
        self.push(v, Op::Min(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x * c);
        self.push(v, Op::Scale(a, c))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let v = self.value(a).map(|x| x + c);
        self.push(v, Op::AddScalar(a))
    }

    /// `1 − a`.
    pub fn one_minus(&mut self, a: Var) -> Var {
        let n = self.scale(a, -1.0);
        self.add_scalar(n, 1.0)
    }

    /// Elementwise product with a constant (no gradient flows into `c`).
    pub fn mul_const(&mut self, a: Var, c: Matrix) -> Var {
        let v = self.value(a).zip(&c, |x, y| x * y);
        self.push(v, Op::MulConst(a, c))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let v = self.value(a).map(sigmoid);
        self.push(v, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::tanh);
        self.push(v, Op::Tanh(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x.max(0.0));
        self.push(v, Op::Relu(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let v = self.value(a).map(f64::exp);
        self.push(v, Op::Exp(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let v = self.value(a).map(|x| x * x);
        self.push(v, Op::Square(a))
    }

    /// Column-wise concatenation of equal-row matrices.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|p| self.value(*p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        for r in 0..rows {
            let mut off = 0;
            for p in parts {
                let m = self.value(*p);
                debug_assert_eq!(m.rows, rows);
                out.data[r * cols + off..r * cols + off + m.cols].copy_from_slice(m.row(r));
                off += m.cols;
            }
        }
        self.push(out, Op::Concat(parts.to_vec()))
    }

    /// Columns `[start, start + len)`.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Var {
        let m = self.value(a);
        let mut out = Matrix::zeros(m.rows, len);
        for r in 0..m.rows {
            out.row_mut(r).copy_from_slice(&m.row(r)[start..start + len]);
        }
        self.push(out, Op::Slice(a, start))
    }

    /// Per-row sum, giving `rows x 1`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let data = (0..m.rows).map(|r| m.row(r).iter().sum()).collect();
        let out = Matrix {
            rows: m.rows,
            cols: 1,
            data,
        };
        self.push(out, Op::SumCols(a))
    }

    pub fn sum_all(&mut self, a: Var) -> Var {
        let s: f64 = self.value(a).data.iter().sum();
        self.push(Matrix::filled(1, 1, s), Op::SumAll(a))
    }

    pub fn mean_all(&mut self, a: Var) -> Var {
        let n = self.value(a).data.len() as f64;
        let s = self.sum_all(a);
        self.scale(s, 1.0 / n)
    }

    /// Mean squared error between `a` and a constant target.
    pub fn mse(&mut self, a: Var, target: &Matrix) -> Var {
        let t = self.leaf(target.clone());
        let d = self.sub(a, t);
        let sq = self.square(d);
        self.mean_all(sq)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.value(v).data[0]
    }

    /// Backpropagate from `root` seeded with `seed` (same shape as the root value).
    pub fn backward_from(&self, root: Var, seed: Matrix) -> Gradients {
        let mut grads: Vec<Option<Matrix>> = (0..=root.0).map(|_| None).collect();
        grads[root.0] = Some(seed);
        let mut out = Gradients::default();
        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {
                    out.leaves.insert(i, g);
                }
                Op::Param(id) => out.params.push((*id, g)),
                Op::MatMul(a, w) => {
                    let ga = g.matmul_t(self.value(*w));
                    let gw = self.value(*a).t_matmul(&g);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *w, gw);
                }
                Op::AddRow(a, b) => {
                    let gb = g.sum_rows();
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *a, g);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::Sub(a, b) => {
                    acc(&mut grads, *b, g.map(|x| -x));
                    acc(&mut grads, *a, g);
                }
                Op::Mul(a, b) => {
                    let ga = g.zip(self.value(*b), |x, y| x * y);
                    let gb = g.zip(self.value(*a), |x, y| x * y);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Min(a, b) => {
                    let (av, bv) = (self.value(*a), self.value(*b));
                    let mut ga = g.clone();
                    let mut gb = g;
                    for k in 0..ga.data.len() {
                        if av.data[k] <= bv.data[k] {
                            gb.data[k] = 0.0;
                        } else {
                            ga.data[k] = 0.0;
                        }
                    }
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => acc(&mut grads, *a, g.map(|x| x * c)),
                Op::AddScalar(a) => acc(&mut grads, *a, g),
                Op::MulConst(a, c) => acc(&mut grads, *a, g.zip(c, |x, y| x * y)),
                Op::Sigmoid(a) => {
                    let ga = g.zip(&node.value, |x, s| x * s * (1.0 - s));
                    acc(&mut grads, *a, ga);
                }
                Op::Tanh(a) => {
                    let ga = g.zip(&node.value, |x, t| x * (1.0 - t * t));
                    acc(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip(self.value(*a), |x, y| if y > 0.0 { x } else { 0.0 });
                    acc(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = g.zip(&node.value, |x, e| x * e);
                    acc(&mut grads, *a, ga);
                }
                Op::Square(a) => {
                    let ga = g.zip(self.value(*a), |x, y| 2.0 * x * y);
                    acc(&mut grads, *a, ga);
                }
                Op::Concat(parts) => {
                    let mut off = 0;
                    for p in parts {
                        let cols = self.value(*p).cols;
                        let mut gp = Matrix::zeros(g.rows, cols);
                        for r in 0..g.rows {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                        }
                        acc(&mut grads, *p, gp);
                        off += cols;
                    }
                }
                Op::Slice(a, start) => {
                    let src = self.value(*a);
                    let mut ga = Matrix::zeros(src.rows, src.cols);
                    for r in 0..g.rows {
                        ga.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SumCols(a) => {
                    let src = self.value(*a);
                    let mut ga = Matrix::zeros(src.rows, src.cols);
                    for r in 0..src.rows {
                        let gr = g.data[r];
                        ga.row_mut(r).iter_mut().for_each(|x| *x = gr);
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::SumAll(a) => {
                    let src = self.value(*a);
                    acc(&mut grads, *a, Matrix::filled(src.rows, src.cols, g.data[0]));
                }
            }
        }
        out
    }

    /// Backpropagate a scalar loss.
    pub fn backward(&self, loss: Var) -> Gradients {
        self.backward_from(loss, Matrix::filled(1, 1, 1.0))
    }
}

fn acc(grads: &mut [Option<Matrix>], v: Var, g: Matrix) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Central differences with respect to a leaf input, for ops not reachable through layers.
    fn leaf_fd(build: impl Fn(&mut Tape, Var) -> Var, x: Matrix) -> (Matrix, Matrix) {
        let mut t = Tape::new();
        let xv = t.leaf(x.clone());
        let y = build(&mut t, xv);
        let s = t.sum_all(y);
        let analytic = t.backward(s).leaf(xv).unwrap().clone();
        let mut numeric = Matrix::zeros(x.rows, x.cols);
        let eps = 1e-6;
        for k in 0..x.data.len() {
            let eval = |d: f64| {
                let mut xp = x.clone();
                xp.data[k] += d;
                let mut t = Tape::new();
                let xv = t.leaf(xp);
                let y = build(&mut t, xv);
                let s = t.sum_all(y);
                t.scalar(s)
            };
            numeric.data[k] = (eval(eps) - eval(-eps)) / (2.0 * eps);
        }
        (analytic, numeric)
    }

    #[test]
    fn elementwise_ops_match_finite_differences() {
        let x = Matrix::from_vec(2, 3, vec![0.3, -0.7, 1.1, 0.05, -1.4, 0.9]).unwrap();
        let cases: Vec<Box<dyn Fn(&mut Tape, Var) -> Var>> = vec![
            Box::new(|t, x| t.sigmoid(x)),
            Box::new(|t, x| t.tanh(x)),
            Box::new(|t, x| t.exp(x)),
            Box::new(|t, x| t.square(x)),
            Box::new(|t, x| t.relu(x)),
            Box::new(|t, x| {
                let a = t.slice(x, 1, 2);
                let b = t.slice(x, 0, 2);
                t.mul(a, b)
            }),
            Box::new(|t, x| {
                let s = t.sum_cols(x);
                let c = t.concat(&[x, s]);
                t.square(c)
            }),
            Box::new(|t, x| {
                let y = t.scale(x, -2.0);
                t.min(x, y)
            }),
        ];
        for build in cases {
            let (a, n) = leaf_fd(build, x.clone());
            for (p, q) in a.data.iter().zip(&n.data) {
                assert!((p - q).abs() < 1e-6, "{p} vs {q}");
            }
        }
    }

    #[test]
    fn repeated_param_use_shares_one_node() {
        let mut store = ParamStore::new();
        let id = store.push(
            crate::nn::param::ParamTensor::new("w", vec![1, 1], vec![3.0]).unwrap(),
        );
        let mut t = Tape::new();
        let a = t.param(&store, id);
        let b = t.param(&store, id);
        assert_eq!(a, b);
        // loss = w * w → d/dw = 2w = 6
        let y = t.mul(a, b);
        t.backward(y).accumulate_into(&mut store);
        assert_eq!(store.get(id).grad, vec![6.0]);
    }
}
