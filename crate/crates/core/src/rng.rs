//! Counter-based seed derivation.
//!
//! Every random draw in a run comes from a fresh ChaCha stream keyed by
//! `(master, purpose, round, agent)`, so draws never depend on the order in
//! which agents or rounds are visited.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a draw is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Graph = 1,
    Initial = 2,
    Scheduler = 3,
    Rule = 4,
    Deviation = 5,
    Injection = 6,
    Estimator = 7,
    Repetition = 8,
    Workload = 9,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `parts` into `master` one word at a time.
pub fn derive_seed(master: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix(master), |acc, &p| splitmix(acc ^ splitmix(p)))
}

pub fn stream(master: u64, purpose: Purpose, round: u64, agent: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, &[purpose as u64, round, agent]))
}

/// Uniform draw in `[0, 1)` keyed by `(master, purpose, round, agent, salt)`.
pub fn uniform(master: u64, purpose: Purpose, round: u64, agent: u64, salt: u64) -> f64 {
    let bits = derive_seed(master, &[purpose as u64, round, agent, salt]);
    (bits >> 11) as f64 / (1u64 << 53) as f64
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
