//! SplitMix64 PRNG: tiny, seedable, identical on every platform — which is
//! exactly what bitwise-reproducible training runs need. Initialization
//! derives an independent stream per parameter name, so adding one parameter
//! never reshuffles the others.

use super::{Scalar, Tensor};

#[derive(Clone, Debug)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        SplitMix64 { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in `[0, n)`. The modulo bias is irrelevant at the sizes
    /// used here; determinism is what matters.
    pub fn below(&mut self, n: usize) -> usize {
        assert!(n > 0, "below: empty range");
        (self.next_u64() % n as u64) as usize
    }

    pub fn chance(&mut self, p: f64) -> bool {
        self.next_f64() < p
    }

    pub fn pick<'a, T>(&mut self, xs: &'a [T]) -> &'a T {
        &xs[self.below(xs.len())]
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, xs: &mut [T]) {
        for i in (1..xs.len()).rev() {
            let j = self.below(i + 1);
            xs.swap(i, j);
        }
    }
}

/// FNV-1a of a parameter name; xored with the run seed to give each parameter
/// its own stream.
pub fn fnv1a(name: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in name.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}

pub fn param_rng(seed: u64, name: &str) -> SplitMix64 {
    SplitMix64::new(seed ^ fnv1a(name))
}

/// Glorot-uniform weights for a `[fan_in, fan_out]` matrix: entries drawn
/// from `U(-l, l)` with `l = sqrt(6 / (fan_in + fan_out))`. Draws happen in
/// f64 and are narrowed, so f32 and f64 runs see the same underlying values.
pub fn glorot<S: Scalar>(fan_in: usize, fan_out: usize, rng: &mut SplitMix64) -> Tensor<S> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| S::from_f64(rng.uniform(-limit, limit)))
        .collect();
    Tensor::param(vec![fan_in, fan_out], data)
}
