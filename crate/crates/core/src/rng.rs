//! Seed derivation. Every stochastic step of an experiment draws from a
//! ChaCha8 stream keyed by the experiment seed, so a run can be resumed
//! from its sample history alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type ExperimentRng = ChaCha8Rng;

/// Stream used for the Latin hypercube initialization.
pub const INIT_STREAM: u64 = 0;

/// Generator for stream `stream` of experiment `seed`. Batch `k` uses stream `k`.
pub fn stream_rng(seed: u64, stream: u64) -> ExperimentRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Per-sample seed handed to simulators, a splitmix64 mix of both inputs.
pub fn sample_seed(seed: u64, sample_index: u64) -> u64 {
    let mut z = seed ^ sample_index.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
