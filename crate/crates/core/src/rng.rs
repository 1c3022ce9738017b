//! Seeded random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator
//! (`rand_chacha::ChaCha8Rng`, 8-round ChaCha keyed by a 32-byte seed).
//! Independent substreams are keyed by `(seed, stream, index)`: the three
//! words are folded together with the SplitMix64 finalizer and the result is
//! expanded into the ChaCha key by `SeedableRng::seed_from_u64`. Another
//! implementation reproduces a stream by repeating those two steps.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Substream tags. Kept stable: changing one changes every output file.
pub mod stream {
    pub const SCENARIO: u64 = 0x5343_454e;
    pub const NOISE: u64 = 0x4e4f_4953;
    pub const OCCLUSION: u64 = 0x4f43_434c;
    pub const TRACKER: u64 = 0x5452_434b;
    pub const LEARN: u64 = 0x4c45_524e;
}

/// SplitMix64 output function.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds a seed with a stream tag and an index into one 64-bit key.
pub fn mix(seed: u64, stream: u64, index: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(seed) ^ stream) ^ index)
}

pub fn substream(seed: u64, stream: u64, index: u64) -> SimRng {
    SimRng::seed_from_u64(mix(seed, stream, index))
}
