#![allow(dead_code)]

use enkg_core::samplers::REACH_EPS;
use enkg_core::{EnkgParams, ProbabilityDistribution, RngState};

/// Random distribution whose peakedness varies from near-flat to near-one-hot.
pub fn random_dist(rng: &mut RngState, vocab: usize) -> ProbabilityDistribution {
    let gamma = 0.2 + 7.8 * rng.uniform();
    let w: Vec<f64> = (0..vocab).map(|_| (-(1.0 - rng.uniform()).ln()).powf(gamma)).collect();
    let total: f64 = w.iter().sum();
    ProbabilityDistribution::new(w.iter().map(|x| x / total).collect()).unwrap()
}

pub fn random_params(rng: &mut RngState, vocab: usize, with_cap: bool) -> EnkgParams {
    let a = rng.uniform();
    let b = rng.uniform();
    let (h_low, h_high) = (a.min(b) * 0.9, a.max(b) * 0.9 + 0.1);
    let c = 0.05 + 0.95 * rng.uniform();
    let d = 0.05 + 0.95 * rng.uniform();
    let k_guard = 1 + (rng.uniform() * (vocab.min(64) + 2) as f64) as usize;
    let mut params = EnkgParams::new(h_low, h_high, c.min(d), c.max(d), k_guard).unwrap();
    if with_cap {
        let extra = (rng.uniform() * vocab as f64) as usize;
        params = params.with_n_max(k_guard + extra).unwrap();
    }
    params
}

/// Smallest subset reaching `p_target`, by exhaustive search; among subsets of
/// that size, the one with the most mass. Returned as a bitmask.
pub fn brute_force_nucleus(probs: &[f64], p_target: f64) -> u32 {
    let v = probs.len();
    let mut best: Option<(u32, f64, u32)> = None;
    for mask in 1u32..(1 << v) {
        let mass: f64 = (0..v).filter(|i| mask >> i & 1 == 1).map(|i| probs[i]).sum();
        if mass < p_target - REACH_EPS {
            continue;
        }
        let size = mask.count_ones();
        let better = match best {
            None => true,
            Some((s, m, _)) => size < s || (size == s && mass > m),
        };
        if better {
            best = Some((size, mass, mask));
        }
    }
    best.expect("full set always reaches").2
}
