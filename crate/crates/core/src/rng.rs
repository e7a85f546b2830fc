//! Deterministic seeded randomness.
//!
//! splitmix64 is the only generator in the crate; every stochastic choice
//! anywhere (init, data generation, dream seeds) flows through it so that
//! a run is fully pinned by its seeds.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// One splitmix64 step: returns the output for `state` and the advanced state.
#[inline]
pub fn splitmix64(state: u64) -> (u64, u64) {
    let state = state.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    (z ^ (z >> 31), state)
}

/// Derives an independent stream seed from a base seed and an index.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base.wrapping_add(index)).0
}

/// splitmix64 generator state. Copy semantics on purpose: the state is
/// passed and returned by value, never shared.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rng {
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Rng {
        Rng { state: seed }
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let (v, state) = splitmix64(self.state);
        self.state = state;
        v
    }

    /// Uniform in the open interval (0, 1): (z + 0.5) / 2^53 over the top
    /// 53 bits, so it never returns an exact 0 or 1.
    #[inline]
    pub fn next_f64_open01(&mut self) -> f64 {
        const SCALE: f64 = 1.0 / 9007199254740992.0; // 2^-53
        ((self.next_u64() >> 11) as f64 + 0.5) * SCALE
    }

    /// Uniform in [lo, hi).
    #[inline]
    pub fn uniform_f32(&mut self, lo: f32, hi: f32) -> f32 {
        lo + (hi - lo) * (((self.next_u64() >> 40) as f32) / (1u32 << 24) as f32)
    }

    /// Uniform integer in [0, n).
    #[inline]
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    /// One standard Gaussian sample via Box-Muller on two consecutive
    /// outputs. The sine branch is discarded: one sample per pair keeps the
    /// stream layout trivial to reason about.
    #[inline]
    pub fn next_gaussian(&mut self) -> f64 {
        let u1 = self.next_f64_open01();
        let u2 = self.next_f64_open01();
        (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}

/// Tensor of i.i.d. Gaussian samples with the given mean and stddev.
pub fn randn_tensor(rng: &mut Rng, shape: [usize; 4], mean: f32, stddev: f32) -> Result<Tensor> {
    if stddev < 0.0 || !stddev.is_finite() || !mean.is_finite() {
        return Err(Error::InvalidParam(format!(
            "randn_tensor: mean {mean}, stddev {stddev}"
        )));
    }
    let mut t = Tensor::zeros(shape);
    for v in t.data_mut() {
        *v = mean + stddev * rng.next_gaussian() as f32;
    }
    Ok(t)
}
