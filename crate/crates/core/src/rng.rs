//! Seeding.
//!
//! Every sampler takes a 64-bit seed and builds a ChaCha8 generator from it.
//! Replicates get their own seed through [`derive_seed`], which folds the
//! root seed and the replicate coordinates through SplitMix64 finalizers, so
//! streams for different cells never share a key.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Deterministic child seed for the coordinates `parts` under `root`.
pub fn derive_seed(root: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(root), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}
