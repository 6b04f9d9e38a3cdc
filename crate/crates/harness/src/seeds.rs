//! Independent random streams split from one master seed.
//!
//! Every consumer gets its own ChaCha stream id, so adding draws in one
//! place never shifts another. Uniform and adaptive runs of the same trial
//! share their sampling stream, which is what makes `alpha = 0` reproduce
//! uniform SGD draw for draw.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

pub const TRAIN_DATA: u64 = 0;
pub const TEST_DATA: u64 = 1;
pub const PROBE: u64 = 2;
const SAMPLING_BASE: u64 = 1 << 32;

pub fn stream(master: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(master);
    rng.set_stream(id);
    rng
}

/// Index-sampling stream of trial `k`.
pub fn sampling(master: u64, trial: u64) -> ChaCha20Rng {
    stream(master, SAMPLING_BASE + trial)
}
