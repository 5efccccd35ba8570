//! Deterministic seed derivation.
//!
//! Every random stream in a simulation is keyed by a tuple of integers
//! (base seed, condition index, replication index, attempt) folded through
//! the SplitMix64 finalizer, so a work unit's stream does not depend on the
//! order or thread it runs on.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds `parts` into `base` one word at a time.
pub fn derive(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &part| splitmix64(acc ^ splitmix64(part)))
}

/// Seed of replication `rep` in condition `cell`; `attempt` > 0 selects the
/// reserved stream used to replace degenerate draws.
pub fn replication_seed(base: u64, cell: usize, rep: usize, attempt: usize) -> u64 {
    derive(base, &[cell as u64, rep as u64, attempt as u64])
}

/// Seed of the fixed finite population drawn for population model `model`.
pub fn population_seed(base: u64, model: usize) -> u64 {
    derive(base, &[u64::MAX, model as u64])
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
