//! Stable seed derivation.
//!
//! Seeds are mixed with the SplitMix64 finalizer so that a derived seed
//! depends only on its inputs, never on execution order or platform. The
//! mixing function is part of the reproducibility contract: changing it
//! changes every recorded experiment.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags keep independent random draws for one trial apart.
pub mod stream {
    pub const DATA: u64 = 0x6461_7461;
    pub const INIT: u64 = 0x696e_6974;
    pub const SHUFFLE: u64 = 0x7368_7566;
}

#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into one seed; order matters.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5eed0f9a0d_u64, |acc, &p| {
        splitmix64(acc ^ splitmix64(p))
    })
}

/// Seed for one random stream of one trial: `hash(base_seed, trial, tag)`.
pub fn trial_seed(base_seed: u64, trial: usize, tag: u64) -> u64 {
    derive_seed(&[base_seed, trial as u64, tag])
}

pub fn rng_from(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivation_is_stable() {
        // Frozen values: these pin the hash so recorded runs stay reproducible.
        assert_eq!(splitmix64(0), 0xe220_a839_7b1d_cdaf);
        let a = trial_seed(7, 3, stream::DATA);
        assert_eq!(a, trial_seed(7, 3, stream::DATA));
        assert_ne!(a, trial_seed(7, 4, stream::DATA));
        assert_ne!(a, trial_seed(7, 3, stream::INIT));
        assert_ne!(derive_seed(&[1, 2]), derive_seed(&[2, 1]));
    }
}
