use rand::Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use crate::error::{Error, Result};
use crate::rng::rng_from;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerKind {
    Affine,
    Activation,
    Dropout,
    /// LSTM cell, one time step per call.
    LongMemoryCell,
    /// GRU cell, one time step per call.
    GatedCell,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
    Identity,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub kind: LayerKind,
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    pub dropout_rate: f64,
}

impl LayerSpec {
    pub fn affine(in_dim: usize, out_dim: usize) -> Self {
        Self {
            kind: LayerKind::Affine,
            in_dim,
            out_dim,
            activation: Activation::Identity,
            dropout_rate: 0.0,
        }
    }

    pub fn activation(dim: usize, activation: Activation) -> Self {
        Self {
            kind: LayerKind::Activation,
            in_dim: dim,
            out_dim: dim,
            activation,
            dropout_rate: 0.0,
        }
    }

    pub fn dropout(dim: usize, rate: f64) -> Self {
        Self {
            kind: LayerKind::Dropout,
            in_dim: dim,
            out_dim: dim,
            activation: Activation::Identity,
            dropout_rate: rate,
        }
    }

    pub fn lstm(in_dim: usize, hidden: usize) -> Self {
        Self {
            kind: LayerKind::LongMemoryCell,
            in_dim,
            out_dim: hidden,
            activation: Activation::Tanh,
            dropout_rate: 0.0,
        }
    }

    pub fn gru(in_dim: usize, hidden: usize) -> Self {
        Self {
            kind: LayerKind::GatedCell,
            in_dim,
            out_dim: hidden,
            activation: Activation::Tanh,
            dropout_rate: 0.0,
        }
    }

    pub fn is_recurrent(&self) -> bool {
        matches!(self.kind, LayerKind::LongMemoryCell | LayerKind::GatedCell)
    }

    pub fn validate(&self, index: usize) -> Result<()> {
        if self.in_dim == 0 || self.out_dim == 0 {
            return Err(Error::InvalidArgument(format!(
                "layer {index}: dimensions must be positive"
            )));
        }
        if matches!(self.kind, LayerKind::Activation | LayerKind::Dropout)
            && self.in_dim != self.out_dim
        {
            return Err(Error::DimensionMismatch {
                layer: index,
                expected: self.in_dim,
                got: self.out_dim,
            });
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::InvalidArgument(format!(
                "layer {index}: dropout rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        Ok(())
    }
}

/// Hidden (and, for LSTM layers, cell) vectors carried between time steps.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentState {
    pub hidden: Vec<f64>,
    pub cell: Option<Vec<f64>>,
}

impl RecurrentState {
    pub fn zeros(spec: &LayerSpec) -> Self {
        Self {
            hidden: vec![0.0; spec.out_dim],
            cell: (spec.kind == LayerKind::LongMemoryCell).then(|| vec![0.0; spec.out_dim]),
        }
    }
}

/// A Bernoulli keep-mask that is a pure function of `(seed, rate, len)`.
#[derive(Clone, Debug, PartialEq)]
pub struct DropoutMask {
    pub seed: u64,
    pub rate: f64,
    pub mask: Vec<bool>,
}

impl DropoutMask {
    pub fn generate(seed: u64, rate: f64, len: usize) -> Self {
        let mut rng = rng_from(seed);
        let mask = (0..len).map(|_| rng.gen::<f64>() >= rate).collect();
        Self { seed, rate, mask }
    }

    /// Inverted-dropout multiplier: kept units are scaled by `1 / (1 − rate)`.
    pub fn scale_matrix(&self, rows: usize, cols: usize) -> Matrix {
        let keep = 1.0 / (1.0 - self.rate);
        Matrix {
            rows,
            cols,
            data: self
                .mask
                .iter()
                .map(|&k| if k { keep } else { 0.0 })
                .collect(),
        }
    }
}

/// Seed for the dropout layer at `slot` during a pass seeded with `pass_seed`.
/// Slot 0 uses the pass seed itself.
pub fn mask_seed(pass_seed: u64, slot: usize) -> u64 {
    pass_seed.wrapping_add((slot as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}
