//! Deterministic RNG streams.
//!
//! All randomness in training and evaluation is drawn from streams keyed by
//! `(seed, domain, major, minor)`, typically `(run seed, purpose, epoch,
//! trajectory index)`. A stream never depends on how many draws another
//! stream made, which is what keeps parallel rollouts and resumed runs
//! reproducible.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type StreamRng = ChaCha8Rng;

/// Purpose tags so unrelated consumers never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    Init = 1,
    Rollout = 2,
    Minibatch = 3,
    Evaluation = 4,
    Instances = 5,
    Observation = 6,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn stream_seed(seed: u64, domain: Domain, major: u64, minor: u64) -> u64 {
    let mut h = splitmix(seed);
    h = splitmix(h ^ domain as u64);
    h = splitmix(h ^ major);
    splitmix(h ^ minor.rotate_left(32))
}

pub fn stream(seed: u64, domain: Domain, major: u64, minor: u64) -> StreamRng {
    ChaCha8Rng::seed_from_u64(stream_seed(seed, domain, major, minor))
}

/// Serializable position of a ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngPosition {
    pub seed: u64,
    pub stream: u64,
    pub word_pos: u128,
}

impl RngPosition {
    pub fn capture(seed: u64, rng: &StreamRng) -> Self {
        Self {
            seed,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> StreamRng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}
