use std::sync::atomic::{AtomicU64, Ordering};

use sha2::{Digest, Sha256};

use super::matrix::Matrix;
use crate::error::{Error, Result};

static NEXT_STORE: AtomicU64 = AtomicU64::new(1);

/// A trainable tensor: values plus an accumulated gradient of the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grad: Vec<f64>,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let n: usize = shape.iter().product();
        if values.len() != n {
            return Err(Error::InvalidArgument(format!(
                "tensor shape {shape:?} needs {n} values, got {}",
                values.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            shape,
            grad: vec![0.0; n],
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// View as a 2-D matrix. 1-D tensors become a single row.
    pub fn as_matrix(&self) -> Matrix {
        let (r, c) = match self.shape.as_slice() {
            [n] => (1, *n),
            [r, c] => (*r, *c),
            _ => (1, self.values.len()),
        };
        Matrix {
            rows: r,
            cols: c,
            data: self.values.clone(),
        }
    }
}

/// Handle to a tensor inside a specific [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId {
    pub store: u64,
    pub index: usize,
}

/// Owns the tensors of one network. Every store (including clones) gets a fresh uid,
/// so gradients recorded on a tape are only ever accumulated into the store they came from.
#[derive(Debug)]
pub struct ParamStore {
    uid: u64,
    tensors: Vec<ParamTensor>,
}

impl Clone for ParamStore {
    fn clone(&self) -> Self {
        Self {
            uid: NEXT_STORE.fetch_add(1, Ordering::Relaxed),
            tensors: self.tensors.clone(),
        }
    }
}

impl Default for ParamStore {
    fn default() -> Self {
        Self::new()
    }
}

impl ParamStore {
    pub fn new() -> Self {
        Self {
            uid: NEXT_STORE.fetch_add(1, Ordering::Relaxed),
            tensors: Vec::new(),
        }
    }

    pub fn uid(&self) -> u64 {
        self.uid
    }

    pub fn push(&mut self, t: ParamTensor) -> ParamId {
        self.tensors.push(t);
        ParamId {
            store: self.uid,
            index: self.tensors.len() - 1,
        }
    }

    pub fn id(&self, index: usize) -> ParamId {
        ParamId {
            store: self.uid,
            index,
        }
    }

    pub fn get(&self, id: ParamId) -> &ParamTensor {
        debug_assert_eq!(id.store, self.uid);
        &self.tensors[id.index]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamTensor {
        debug_assert_eq!(id.store, self.uid);
        &mut self.tensors[id.index]
    }

    pub fn tensors(&self) -> &[ParamTensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [ParamTensor] {
        &mut self.tensors
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(ParamTensor::len).sum()
    }

    pub fn zero_grad(&mut self) {
        for t in &mut self.tensors {
            t.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.tensors
            .iter()
            .flat_map(|t| t.grad.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Rescale gradients so their global L2 norm is at most `max_norm`. Returns the pre-clip norm.
    pub fn clip_grad_norm(&mut self, max_norm: f64) -> f64 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for t in &mut self.tensors {
                t.grad.iter_mut().for_each(|g| *g *= s);
            }
        }
        norm
    }

    /// Copy values from another store with identical layout.
    pub fn copy_values_from(&mut self, other: &ParamStore) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            a.values.copy_from_slice(&b.values);
        }
    }

    /// `self ← tau·other + (1 − tau)·self`.
    pub fn polyak_from(&mut self, other: &ParamStore, tau: f64) {
        for (a, b) in self.tensors.iter_mut().zip(&other.tensors) {
            for (x, y) in a.values.iter_mut().zip(&b.values) {
                *x = tau * y + (1.0 - tau) * *x;
            }
        }
    }

    /// SHA-256 over shapes and little-endian values.
    pub fn checksum(&self) -> String {
        let mut h = Sha256::new();
        for t in &self.tensors {
            for d in &t.shape {
                h.update((*d as u64).to_le_bytes());
            }
            for v in &t.values {
                h.update(v.to_le_bytes());
            }
        }
        hex(&h.finalize())
    }

    pub fn flat_values(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|t| t.values.iter().copied()).collect()
    }
}

/// Clip the joint gradient norm of several stores. Returns the pre-clip norm.
pub fn clip_global_norm(stores: &mut [&mut ParamStore], max_norm: f64) -> f64 {
    let norm = stores.iter().map(|s| s.grad_norm().powi(2)).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let k = max_norm / norm;
        for s in stores.iter_mut() {
            for t in &mut s.tensors {
                t.grad.iter_mut().for_each(|g| *g *= k);
            }
        }
    }
    norm
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clones_get_distinct_uids_and_equal_checksums() {
        let mut s = ParamStore::new();
        s.push(ParamTensor::new("w", vec![2, 2], vec![1., 2., 3., 4.]).unwrap());
        let c = s.clone();
        assert_ne!(s.uid(), c.uid());
        assert_eq!(s.checksum(), c.checksum());
    }

    #[test]
    fn polyak_endpoints() {
        let mut a = ParamStore::new();
        a.push(ParamTensor::new("w", vec![3], vec![0., 0., 0.]).unwrap());
        let mut b = ParamStore::new();
        b.push(ParamTensor::new("w", vec![3], vec![1., 2., 3.]).unwrap());
        let before = a.flat_values();
        a.polyak_from(&b, 0.0);
        assert_eq!(a.flat_values(), before);
        a.polyak_from(&b, 1.0);
        assert_eq!(a.flat_values(), b.flat_values());
    }

    #[test]
    fn clipping_caps_global_norm() {
        let mut s = ParamStore::new();
        let id = s.push(ParamTensor::new("w", vec![2], vec![0., 0.]).unwrap());
        s.get_mut(id).grad = vec![3.0, 4.0];
        assert_eq!(s.clip_grad_norm(1.0), 5.0);
        assert!((s.grad_norm() - 1.0).abs() < 1e-12);
    }
}
