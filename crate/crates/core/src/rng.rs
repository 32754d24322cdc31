//! Keyed random streams.
//!
//! Every random draw in the crate comes from a [`ChaCha8Rng`] derived from a
//! top-level seed plus a key path such as `(chain, purpose)` or
//! `(replicate, iteration, query)`. Two streams with different key paths are
//! independent for practical purposes, and the same key path always yields the
//! same stream regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags, so streams for different jobs never collide.
pub mod purpose {
    pub const CHAIN: u64 = 0x01;
    pub const EFFECTS: u64 = 0x02;
    pub const REPLICATE: u64 = 0x03;
    pub const GENERATE: u64 = 0x04;
    pub const MISSINGNESS: u64 = 0x05;
    pub const BOOTSTRAP: u64 = 0x06;
    pub const BASELINE: u64 = 0x07;
    pub const PREDICTIVE: u64 = 0x08;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a 64-bit sub-seed from a seed and a key path.
pub fn derive_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter()
        .fold(splitmix64(seed), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

pub fn stream(seed: u64, keys: &[u64]) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, keys))
}
