//! Seeded, addressable random streams.
//!
//! Every random draw in the library goes through a [`RandomnessStream`]: a
//! `(seed, stream_id)` pair mapped onto an independent ChaCha8 stream. Work
//! items (problem instances, replicates, Monte-Carlo trials) derive their
//! stream ids from their indices, so results do not depend on scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RandomnessStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RandomnessStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        Self { seed, stream_id }
    }

    /// Fresh generator positioned at the start of this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// Child stream addressed by `(tag, index)`; used to give each work item
    /// of a stage its own stream.
    pub fn child(&self, tag: u64, index: u64) -> Self {
        Self { seed: self.seed, stream_id: derive_stream_id(self.stream_id ^ tag.rotate_left(17), index) }
    }

    /// Child with an independent seed, for nested derivations.
    pub fn fork(&self, tag: u64) -> Self {
        Self { seed: splitmix64(self.seed ^ splitmix64(tag ^ self.stream_id)), stream_id: 0 }
    }
}

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id for replicate `replicate` of problem `problem`.
pub fn derive_stream_id(problem: u64, replicate: u64) -> u64 {
    splitmix64(splitmix64(problem) ^ replicate.wrapping_mul(0xD1B5_4A32_D192_ED03))
}

/// Stage tags used when deriving child streams.
pub mod tags {
    pub const PROBLEMS: u64 = 0x5052_4f42;
    pub const DESIGN: u64 = 0x4445_5349;
    pub const INIT: u64 = 0x494e_4954;
    pub const TRAIN: u64 = 0x5452_4149;
    pub const PRIOR: u64 = 0x5052_494f;
    pub const ROLLOUT: u64 = 0x524f_4c4c;
    pub const TRIAL: u64 = 0x5452_4941;
}
