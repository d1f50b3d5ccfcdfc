//! Seed derivation and named random streams.
//!
//! Every stream is a `ChaCha8Rng` seeded from `derive_seed(base, tag, index)`.
//! The mixing function folds the tag bytes and the index into the base seed
//! with rounds of SplitMix64, so streams with different tags or indices are
//! statistically independent and stable across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Environment sub-streams.
pub const PATIENTS: &str = "patients";
pub const OUTCOMES: &str = "outcomes";
pub const AMR_OBSERVATION_NOISE: &str = "amr-observation-noise";
pub const PATIENT_OBSERVATION_NOISE: &str = "patient-observation-noise";

/// Episode-seed phase tags.
pub const TRAIN: &str = "train";
pub const EVAL: &str = "eval";
pub const AGENT: &str = "agent";
pub const TUNE: &str = "tune";

pub fn splitmix64(state: u64) -> u64 {
    let mut z = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64` chained over the base seed, each tag byte and the index.
pub fn derive_seed(base: u64, tag: &str, index: u64) -> u64 {
    let mut h = splitmix64(base);
    for &b in tag.as_bytes() {
        h = splitmix64(h ^ u64::from(b));
    }
    splitmix64(h ^ splitmix64(index))
}

pub fn stream(base: u64, tag: &str) -> StreamRng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, tag, 0))
}

pub fn seeded(seed: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(seed)
}
