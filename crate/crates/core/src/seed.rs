//! Seed derivation shared by every randomized component.
//!
//! All randomness flows from explicit `u64` seeds. Independent streams
//! (initialization, training data, test data, ...) are derived from a base
//! seed and a stream tag so that no two consumers share a generator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub const STREAM_INIT: u64 = 0x1;
pub const STREAM_DATA: u64 = 0x2;
pub const STREAM_TEST: u64 = 0x3;
pub const STREAM_PROXY: u64 = 0x4;
pub const STREAM_TRIAL: u64 = 0x5;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with a stream tag and an index into a new seed.
pub fn derive_seed(base: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(base) ^ stream) ^ index)
}

pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
