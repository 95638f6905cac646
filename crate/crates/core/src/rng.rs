//! Seeded random streams.
//!
//! Every independent unit of work (a Monte Carlo trial, a population member) draws from
//! its own ChaCha stream derived from `(seed, stream index)`, so results do not depend
//! on the order or thread the work runs on.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
