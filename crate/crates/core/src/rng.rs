//! Seeded random streams.
//!
//! Every stochastic stage draws from its own ChaCha stream derived from the
//! user seed and a stage tag, so stages reproduce independently of one another
//! and of the thread count.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StageRng = ChaCha8Rng;

/// Mixes `seed` with a stage tag (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stage: u64) -> u64 {
    let mut z = seed ^ stage.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stage_rng(seed: u64, stage: u64) -> StageRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stage))
}

pub(crate) mod stage {
    pub const CANDIDATES: u64 = 1;
    pub const INITIAL_SUBSET: u64 = 2;
    pub const PASSES: u64 = 3;
    pub const KMEANS: u64 = 4;
    pub const KFLATS_INIT: u64 = 5;
    pub const EIGEN: u64 = 6;
    pub const FLATS: u64 = 7;
    pub const SAMPLES: u64 = 8;
    pub const OUTLIERS: u64 = 9;
    pub const MONTE_CARLO: u64 = 10;
    pub const BOOTSTRAP: u64 = 11;
    pub const MODEL_ORDER: u64 = 12;
}
