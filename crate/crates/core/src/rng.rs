//! Seed derivation.
//!
//! Every random consumer owns its generator. Batch items and bootstrap
//! replicates get their own ChaCha stream derived from one master seed, so
//! results do not depend on how work is split across threads.

use rand::SeedableRng;
pub use rand_chacha::ChaCha8Rng;

/// Generator for item `index` under `seed`.
pub fn stream(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}
