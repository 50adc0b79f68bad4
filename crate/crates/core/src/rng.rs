//! Seeded random streams. Every stochastic component takes its generator
//! from here so a run is reproducible from its integer seeds alone.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type TeaRng = ChaCha8Rng;

pub fn seeded(seed: u64) -> TeaRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator seeded with `seed`.
pub fn stream(seed: u64, stream: u64) -> TeaRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// A child seed that depends only on `(seed, stream, index)`, so jobs can
/// derive their own generators in any order.
pub fn derive(seed: u64, stream_id: u64, index: u64) -> u64 {
    let mut rng = stream(seed, stream_id);
    rng.set_word_pos(2 * u128::from(index));
    rng.next_u64()
}

/// Stream identifiers used across the pipeline.
pub mod streams {
    pub const NET_INIT: u64 = 1;
    pub const BATCHES: u64 = 2;
    pub const ENV: u64 = 3;
    pub const EXPLORATION: u64 = 4;
    pub const EVALUATION: u64 = 5;
    pub const WINDOW_SELECTION: u64 = 6;
    pub const NEW_ENV_ENCODING: u64 = 7;
    pub const SHUFFLE: u64 = 8;
    pub const STAGES: u64 = 9;
}
