//! Seeded random streams. Every consumer draws from its own ChaCha stream,
//! keyed by a seed, a purpose domain and an item index, so parallel work is
//! reproducible independently of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Domain {
    Channel = 1,
    Init = 2,
    Spsa = 3,
    Split = 4,
    Check = 5,
}

pub fn rng_for(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 56) ^ index);
    rng
}
