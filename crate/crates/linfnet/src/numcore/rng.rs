//! Deterministic random number generation based on SplitMix64.
//!
//! SplitMix64 is a published generator with portable reference outputs, so
//! two runs from the same seed produce bit-identical streams on every
//! platform. Each `Rng` is single-owner; parallel work receives
//! independently seeded instances via [`Rng::derive`].

use crate::error::{Error, Result};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Deterministic SplitMix64 stream.
#[derive(Debug, Clone)]
pub struct Rng {
    seed: u64,
    state: u64,
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { seed, state: seed }
    }

    /// The seed this stream was created from.
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A new independent stream with seed `parent_seed XOR stream_index`.
    pub fn derive(&self, stream_index: u64) -> Rng {
        Rng::new(self.seed ^ stream_index)
    }

    /// Next raw 64-bit output (one SplitMix64 step).
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform draw in `[0, 1)` using the top 53 bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform draw in `[lo, hi)`, advancing the state by exactly one step.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> Result<f64> {
        if lo > hi {
            return Err(Error::Param(format!("uniform range inverted: lo={lo} > hi={hi}")));
        }
        let u = self.next_f64();
        let v = lo + (hi - lo) * u;
        if v >= hi && lo < hi {
            // rounding pushed us onto the open end of the interval
            return Ok(hi.next_down().max(lo));
        }
        Ok(v)
    }

    /// Uniform integer in `[0, n)`. `n` must be positive.
    pub fn below(&mut self, n: u64) -> u64 {
        debug_assert!(n > 0);
        self.next_u64() % n
    }

    /// Fair coin.
    pub fn coin(&mut self) -> bool {
        self.next_u64() & 1 == 1
    }

    /// In-place Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }
}
