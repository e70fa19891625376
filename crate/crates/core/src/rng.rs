//! Seed derivation. Every random draw in the crate comes from a ChaCha8
//! generator keyed by the user seed, with a fixed stream per purpose so the
//! consumers never share a sequence.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub(crate) const STREAM_INIT: u64 = 0;
pub(crate) const STREAM_KFOLD: u64 = 1;
pub(crate) const STREAM_SPLIT: u64 = 2;
pub(crate) const STREAM_SUBSAMPLE: u64 = 3;
const STREAM_BATCH_BASE: u64 = 1 << 32;

pub(crate) fn stream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Generator for the batch permutation of epoch `epoch` (zero-based).
pub(crate) fn batch_stream(seed: u64, epoch: usize) -> ChaCha8Rng {
    stream(seed, STREAM_BATCH_BASE + epoch as u64)
}
