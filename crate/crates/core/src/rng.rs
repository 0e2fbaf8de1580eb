//! Deterministic RNG stream derivation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Independent purposes a run draws randomness for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Truth = 1,
    Measurement = 2,
    Plan = 3,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// RNG for `(seed, run, stream)`. Streams are shared across profile strategies so
/// that strategies are compared under common random numbers.
pub fn stream_rng(seed: u64, run: u64, stream: Stream) -> SimRng {
    let s = splitmix(splitmix(splitmix(seed) ^ run) ^ stream as u64);
    ChaCha8Rng::seed_from_u64(s)
}
