//! Seed plumbing.
//!
//! Every random stream in the crate is a `ChaCha8Rng` seeded from a 64-bit value.
//! Child seeds are derived with a splitmix64 finalizer over `(parent, label)` so that
//! adding a new consumer never shifts the stream of an existing one.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The splitmix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derive a child seed from a parent seed and a stable textual label.
pub fn derive_seed(parent: u64, label: &str) -> u64 {
    let mut h = splitmix64(parent);
    for b in label.bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    h
}

/// Derive a child seed from a parent seed and an index.
pub fn derive_indexed(parent: u64, index: u64) -> u64 {
    splitmix64(splitmix64(parent) ^ index)
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // First outputs of the reference splitmix64 generator seeded with 0.
        assert_eq!(splitmix64(0), 0xE220_A839_7B1D_CDAF);
        assert_eq!(splitmix64(0x9E37_79B9_7F4A_7C15), 0x6E78_9E6A_A1B9_65F4);
    }

    #[test]
    fn labels_separate_streams() {
        assert_ne!(derive_seed(7, "data"), derive_seed(7, "sim"));
        assert_eq!(derive_seed(7, "data"), derive_seed(7, "data"));
        assert_ne!(derive_indexed(7, 0), derive_indexed(7, 1));
    }
}
