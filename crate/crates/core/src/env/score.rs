use rand::Rng;

use super::spec::EnvKind;
use crate::error::{Error, Result};
use crate::rng::{derive_indexed, rng_from};

/// Episodes used to measure the random and expert reference returns.
pub const REFERENCE_EPISODES: usize = 100;
/// Fixed seed for reference measurements so scores are comparable across runs.
pub const REFERENCE_SEED: u64 = 0x5EED_0F_5C0E;

/// `100 · (return − random) / (expert − random)`.
pub fn normalized_score(mean_return: f64, random_ref: f64, expert_ref: f64) -> Result<f64> {
    if !(expert_ref > random_ref) || !random_ref.is_finite() || !expert_ref.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "degenerate score references: random {random_ref}, expert {expert_ref}"
        )));
    }
    Ok(100.0 * (mean_return - random_ref) / (expert_ref - random_ref))
}

/// Run one episode of `policy` from a seeded reset; returns the undiscounted return.
pub fn run_episode(env: EnvKind, seed: u64, mut policy: impl FnMut(&[f64], &mut rand_chacha::ChaCha8Rng) -> Vec<f64>) -> Result<f64> {
    let spec = env.spec();
    let mut rng = rng_from(seed);
    let mut s = env.reset(&mut rng);
    let mut total = 0.0;
    for _ in 0..spec.max_episode_steps {
        let mut a = policy(&s, &mut rng);
        spec.clip_action(&mut a);
        let (n, r) = env.step(&s, &a)?;
        total += r;
        s = n;
    }
    Ok(total)
}

/// Reference returns for the environment: (uniform-random policy, scripted expert).
pub fn reference_returns(env: EnvKind) -> Result<(f64, f64)> {
    let spec = env.spec();
    let mut rnd = 0.0;
    let mut exp = 0.0;
    for i in 0..REFERENCE_EPISODES {
        let seed = derive_indexed(REFERENCE_SEED, i as u64);
        rnd += run_episode(env, seed, |_, rng| {
            spec.action_low
                .iter()
                .zip(&spec.action_high)
                .map(|(l, h)| rng.gen_range(*l..*h))
                .collect()
        })?;
        exp += run_episode(env, seed, |s, _| env.expert_action(s))?;
    }
    let n = REFERENCE_EPISODES as f64;
    Ok((rnd / n, exp / n))
}
