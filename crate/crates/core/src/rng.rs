//! Reproducible random streams.
//!
//! Every replicate draws from its own ChaCha8 stream keyed by `(seed, index)`,
//! so replicate `b` sees the same numbers however the work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Recorded in reports next to the seed.
pub const RNG_ALGORITHM: &str = "ChaCha8 (rand_chacha 0.9), seed_from_u64(seed), stream = replicate index";

pub type StreamRng = ChaCha8Rng;

pub fn substream(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
