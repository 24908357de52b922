//! Variational autoencoder over `(state, action)` pairs, used as a manifold-distance scorer.

pub mod model;
pub mod train;

pub use model::{elbo_loss, kl_divergence, ElboScore, Noise, Vae, VaeConfig, VaeOutput};
pub use train::{ood_separation, percentile, train_vae, uniform_pairs, VaeReport};
