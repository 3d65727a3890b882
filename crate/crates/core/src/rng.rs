//! Seed derivation. Every random stream in the crate is a ChaCha8 generator
//! built from a master seed plus a stream number, so results never depend on
//! scheduling or on how many other streams were consumed first.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` under master `seed` (tree index, fold, class id, ...).
pub fn stream(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
