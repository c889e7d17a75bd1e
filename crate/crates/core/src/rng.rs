//! Seeded random streams.
//!
//! Every random quantity in the crate comes from a ChaCha20 generator seeded
//! with the user seed and a fixed stream id, so independent consumers never
//! share draws and reruns reproduce bit-exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Identifier of the generator and sampling algorithms, recorded in model
/// files. Bump it whenever a change alters any sampled value.
pub const RNG_ID: &str = "chacha20/rand_distr-0.5-ziggurat/v1";

pub(crate) const STREAM_FEATURES: u64 = 1;
pub(crate) const STREAM_VAL_SPLIT: u64 = 2;
pub(crate) const STREAM_THREEWAY_SPLIT: u64 = 3;
pub(crate) const STREAM_SYNTH: u64 = 4;
/// Minibatch shuffles use `STREAM_SHUFFLE_BASE + epoch`.
pub(crate) const STREAM_SHUFFLE_BASE: u64 = 1 << 32;

pub fn stream(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
