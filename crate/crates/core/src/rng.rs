//! Seed derivation.
//!
//! Every randomized computation draws from a ChaCha stream selected by
//! `(seed, stream)`, so parallel work items get independent generators and the
//! result never depends on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StdRng = ChaCha8Rng;

/// Generator for work item `stream` under the run seed `seed`.
pub fn derive(seed: u64, stream: u64) -> StdRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Child seed for a nested stage, e.g. one CV repeat inside a permutation
/// iteration. SplitMix64 finalizer over the pair.
pub fn child_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(0x632B_E59B_D9B4_E019);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
