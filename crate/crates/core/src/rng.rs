//! Seed derivation.
//!
//! Every random stream in a run is a ChaCha8 generator keyed by the run seed and
//! a path of integer tags, e.g. `(seed, EVAL, cell, episode, step)`. Streams
//! therefore never depend on the order in which work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

/// Stream tags. Kept in one place so two subsystems never share a stream.
pub mod tags {
    pub const CMVAE_DATA: u64 = 1;
    pub const POLICY_DATA: u64 = 2;
    pub const CMVAE_INIT: u64 = 3;
    pub const CMVAE_TRAIN: u64 = 4;
    pub const MEMBER_INIT: u64 = 5;
    pub const MEMBER_TRAIN: u64 = 6;
    pub const BASELINE_INIT: u64 = 7;
    pub const BASELINE_TRAIN: u64 = 8;
    pub const TRACK: u64 = 9;
    pub const EPISODE: u64 = 10;
    pub const RENDER: u64 = 11;
    pub const POLICY: u64 = 12;
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a seed with a tag path into a 64-bit key.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |h, &tag| splitmix64(h ^ splitmix64(tag.wrapping_add(h))))
}

pub fn stream(seed: u64, path: &[u64]) -> Rng {
    Rng::seed_from_u64(derive_seed(seed, path))
}

/// Hash of a record index, used for the train/held-out split.
pub fn index_hash(index: u64) -> u64 {
    splitmix64(index ^ 0xD1B5_4A32_D192_ED03)
}
