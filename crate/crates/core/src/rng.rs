//! Reproducible random streams.
//!
//! Every path (or branching run) draws from its own ChaCha8 stream keyed by
//! `(seed, stream)`, so results never depend on how work is scheduled across
//! threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Stream offsets that keep independent estimators of the same run apart.
pub mod purpose {
    pub const PATHS: u64 = 0;
    pub const BRANCHING: u64 = 1 << 40;
    pub const LADDER: u64 = 2 << 40;
    pub const INITIAL_LAW: u64 = 3 << 40;
    pub const CONTROL: u64 = 4 << 40;
    pub const GW: u64 = 5 << 40;
    pub const MCKEAN: u64 = 6 << 40;
}

pub fn stream(seed: u64, index: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
