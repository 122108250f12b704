//! Seed derivation so parallel tasks stay reproducible regardless of scheduling.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type TaskRng = ChaCha8Rng;

/// Mixes a base seed with a task index (splitmix64 finalizer).
pub fn derive_seed(base: u64, task: u64) -> u64 {
    let mut z = base ^ task.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn task_rng(base: u64, task: u64) -> TaskRng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, task))
}
