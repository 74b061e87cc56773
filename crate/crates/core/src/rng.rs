//! Seeded random streams.
//!
//! Every random quantity in the toolkit is drawn from a ChaCha8 generator
//! keyed by a master seed. Parallel work is split into fixed lanes, and each
//! lane uses its own ChaCha stream id, so results do not depend on the
//! number of worker threads. The generator choice is part of the output
//! contract: changing it changes every simulated dataset.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// Generator for `lane` of the run keyed by `seed`.
pub fn substream(seed: u64, lane: u64) -> SimRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(lane);
    rng
}

/// Derives an independent child seed, e.g. one per probability-map cell.
///
/// SplitMix64 finalizer over `seed ^ f(index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
