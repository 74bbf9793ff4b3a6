//! Counter-based random streams: every parallel task draws from its own
//! ChaCha stream derived from `(seed, domain, index)`, so results do not
//! depend on how tasks are scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent users of the same seed.
#[derive(Debug, Clone, Copy)]
#[repr(u64)]
pub enum Domain {
    Shots = 1,
    Bootstrap = 2,
    Perturbation = 3,
    Experiment = 4,
}

pub fn stream_rng(seed: u64, domain: Domain, index: u64) -> ChaCha8Rng {
    debug_assert!(index < 1 << 48);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((domain as u64) << 48) | index);
    rng
}
