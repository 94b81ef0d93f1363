//! Seed derivation.
//!
//! Every random stream in a run descends from one root seed. A child seed is
//! obtained by folding a path of labels into the parent with SplitMix64, so
//! `derive(root, &[fold, iteration])` names the stream of a single sub-run
//! and can be recomputed in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream labels used across the crate.
pub mod stream {
    pub const FOLDS: u64 = 1;
    pub const FOLD_RUN: u64 = 2;
    pub const ITERATION: u64 = 3;
    pub const SAMPLING: u64 = 4;
    pub const TRAINING: u64 = 5;
    pub const TUNING: u64 = 6;
    pub const RESAMPLE: u64 = 7;
    pub const KEYWORDS: u64 = 8;
    pub const GLOVE: u64 = 9;
    pub const LDA: u64 = 10;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `root` and a path of labels.
pub fn derive(root: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(root), |acc, &label| splitmix64(acc ^ splitmix64(label)))
}

/// The crate's RNG, seeded deterministically.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
