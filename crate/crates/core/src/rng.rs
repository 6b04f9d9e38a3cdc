//! Uniform draws from a raw random stream.
//!
//! Every consumer of randomness in the core goes through [`uniform01`] so
//! the number of `u64`s taken from the stream is fixed: one per draw.

use rand_core::RngCore;

const SCALE: f64 = 1.0 / (1u64 << 53) as f64;

/// A uniform draw in `[0, 1)` built from the top 53 bits of one `u64`.
#[inline]
pub fn uniform01<R: RngCore + ?Sized>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * SCALE
}

/// Uniform index in `0..n` by inversion of a single [`uniform01`] draw.
#[inline]
pub fn uniform_index<R: RngCore + ?Sized>(rng: &mut R, n: usize) -> usize {
    debug_assert!(n > 0);
    let i = (uniform01(rng) * n as f64) as usize;
    i.min(n - 1)
}
