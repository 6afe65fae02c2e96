//! Deterministic derivation of independent RNG streams from a run seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream tags; each consumer of randomness gets its own.
pub mod stream {
    pub const ENCODER_INIT: u64 = 1;
    pub const CLASSIFIER_INIT: u64 = 2;
    pub const PAIRS: u64 = 3;
    pub const PAIR_ORDER: u64 = 4;
    pub const VALIDATION_PAIRS: u64 = 5;
    pub const PSEUDO_LABELS: u64 = 6;
    pub const LABELED_ORDER: u64 = 7;
    pub const UNLABELED_ORDER: u64 = 8;
    pub const FOLDS: u64 = 9;
    pub const MASK: u64 = 10;
    pub const VALIDATION_SPLIT: u64 = 11;
    pub const REPETITION: u64 = 12;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes `base` with a path of stream components.
pub fn derive_seed(base: u64, path: &[u64]) -> u64 {
    path.iter().fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_for(base: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, path))
}
