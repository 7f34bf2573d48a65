//! Seeded xoshiro256** streams.
//!
//! A stream is seeded by expanding a `u64` with splitmix64. Per-cell streams
//! for frame `t` and site `i` are keyed by chaining the splitmix64 output
//! function over `(seed, t, i)`, so cells can be evaluated in any order or in
//! parallel and still see the same draws.

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256StarStar;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// One splitmix64 step applied to `x` (increment then finalize).
pub fn splitmix64_mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seed of the substream owned by `(frame, site)` under a run seed.
pub fn cell_seed(seed: u64, frame: u64, site: u64) -> u64 {
    splitmix64_mix(splitmix64_mix(splitmix64_mix(seed) ^ frame) ^ site)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngState {
    seed: u64,
    inner: Xoshiro256StarStar,
}

impl RngState {
    pub fn from_seed(seed: u64) -> Self {
        Self { seed, inner: Xoshiro256StarStar::seed_from_u64(seed) }
    }

    pub fn for_cell(seed: u64, frame: u64, site: u64) -> Self {
        Self::from_seed(cell_seed(seed, frame, site))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    /// Uniform in `[0, 1)` from the top 53 bits of one output.
    pub fn uniform(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
