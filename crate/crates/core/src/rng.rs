//! Deterministic random streams.
//!
//! Every replicate draws from its own ChaCha8 stream selected by
//! `(seed, stream_id)`. ChaCha is counter based, so streams are reproducible
//! bit for bit on every platform and independent of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Name recorded in reports.
pub const GENERATOR: &str = "chacha8 (rand_chacha 0.9), seed_from_u64 + set_stream";

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub stream_id: u64,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    pub fn rng(&self) -> Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(self.stream_id);
        r
    }

    /// Stream for replicate `i` of the sub-experiment tagged `tag`.
    pub fn replicate(seed: u64, tag: u32, i: u64) -> Self {
        RngStream::new(seed, ((tag as u64) << 40) | i)
    }
}
