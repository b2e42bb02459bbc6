//! Stable seed derivation.
//!
//! Every random stream in a run descends from one master seed. Child seeds are
//! derived by mixing structural indices (block, replicate, step, ...) into the
//! master with SplitMix64, so a worker can rebuild its stream from its indices
//! alone regardless of scheduling order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The RNG used throughout the crate.
pub type Rng = ChaCha8Rng;

/// Stream tags keep independent consumers of the same indices apart.
pub mod stream {
    pub const BLOCKS: u64 = 0x000b_10c5;
    pub const REPLICATE: u64 = 0x4e9;
    pub const CAMPAIGN: u64 = 0xca49;
    pub const HOLDOUT: u64 = 0x401d;
    pub const INITIAL: u64 = 0x1417;
    pub const POLICY: u64 = 0x9011;
    pub const ACQUIRE: u64 = 0xac9;
    pub const EXPERIMENT: u64 = 0xe49;
    pub const TRAIN: u64 = 0x7a1;
    pub const SUITABILITY: u64 = 0x5017;
    pub const ROBUSTNESS: u64 = 0x40b5;
    pub const DATASET: u64 = 0xda7a;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Derives a child seed from `master` and a path of structural indices.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn rng_from(master: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(master, path))
}

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}
