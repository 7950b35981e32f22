//! Sub-seed derivation from a single master seed.
//!
//! A sub-seed is addressed by a path of integers: a stream tag followed by
//! counters such as factor index, run index and feature scope. Each path
//! element is folded into the state with SplitMix64, so every
//! sub-computation can be reproduced in isolation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_SPLIT: u64 = 1;
pub const STREAM_EXPLICITNESS_INIT: u64 = 2;
pub const STREAM_PROBE_SPLIT: u64 = 3;
pub const STREAM_PROBE_INIT: u64 = 4;
pub const STREAM_SYNTH_FACTORS: u64 = 5;
pub const STREAM_SYNTH_NOISE: u64 = 6;
pub const STREAM_SYNTH_DERIVED: u64 = 7;
pub const STREAM_RESPLIT: u64 = 8;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |state, &p| splitmix64(state ^ splitmix64(p)))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
