//! Entropy-guided k-guard (ENkG) sampling and the static baselines.
//!
//! ENkG maps the normalized entropy of each prediction onto a nucleus mass
//! through a clipped affine map, takes the minimal top-probability prefix
//! reaching that mass, and then widens the prefix to at least `k_guard`
//! tokens. The guard and the nucleus are both prefixes of the descending
//! order, so their union is simply the longer prefix.

use serde::{Deserialize, Serialize};

use crate::distributions::{ProbabilityDistribution, SortedDistribution, TokenId};
use crate::error::{Error, Result};
use crate::rng::RngState;

/// Slack used when deciding whether a cumulative sum has reached its target.
/// Sums of f64 probabilities drift by a few ulps (`0.4 + 0.3 + 0.2 < 0.9`).
pub const REACH_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnkgParams {
    pub h_low: f64,
    pub h_high: f64,
    pub p_low: f64,
    pub p_high: f64,
    pub k_guard: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_max: Option<usize>,
}

impl Default for EnkgParams {
    /// The "mid" configuration with a guard of 3 and no cap.
    fn default() -> Self {
        Self::mid()
    }
}

impl EnkgParams {
    pub fn new(h_low: f64, h_high: f64, p_low: f64, p_high: f64, k_guard: usize) -> Result<Self> {
        let params = Self { h_low, h_high, p_low, p_high, k_guard, n_max: None };
        params.validate()?;
        Ok(params)
    }

    pub fn with_n_max(mut self, n_max: usize) -> Result<Self> {
        self.n_max = Some(n_max);
        self.validate()?;
        Ok(self)
    }

    pub fn with_k_guard(mut self, k_guard: usize) -> Result<Self> {
        self.k_guard = k_guard;
        self.validate()?;
        Ok(self)
    }

    /// Conservative thresholds: entropy band 0.0/0.5, nucleus band 0.60/0.90.
    pub fn left() -> Self {
        Self { h_low: 0.0, h_high: 0.5, p_low: 0.60, p_high: 0.90, k_guard: 3, n_max: None }
    }

    /// Default thresholds: entropy band 0.25/0.60, nucleus band 0.65/0.90.
    pub fn mid() -> Self {
        Self { h_low: 0.25, h_high: 0.60, p_low: 0.65, p_high: 0.90, k_guard: 3, n_max: None }
    }

    /// Aggressive thresholds: entropy band 0.40/0.90, nucleus band 0.80/0.95.
    pub fn right() -> Self {
        Self { h_low: 0.40, h_high: 0.90, p_low: 0.80, p_high: 0.95, k_guard: 3, n_max: None }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        let finite = [self.h_low, self.h_high, self.p_low, self.p_high].iter().all(|v| v.is_finite());
        if !finite {
            return bad("thresholds must be finite".into());
        }
        if !(0.0 <= self.h_low && self.h_low < self.h_high && self.h_high <= 1.0) {
            return bad(format!(
                "need 0 <= h_low < h_high <= 1, got h_low={} h_high={}",
                self.h_low, self.h_high
            ));
        }
        if !(0.0 < self.p_low && self.p_low <= self.p_high && self.p_high <= 1.0) {
            return bad(format!(
                "need 0 < p_low <= p_high <= 1, got p_low={} p_high={}",
                self.p_low, self.p_high
            ));
        }
        if self.k_guard == 0 {
            return bad("k_guard must be at least 1".into());
        }
        if let Some(n_max) = self.n_max {
            if n_max < self.k_guard {
                return bad(format!("n_max ({n_max}) must be >= k_guard ({})", self.k_guard));
            }
        }
        Ok(())
    }
}

/// Slope and intercept of the entropy -> nucleus-mass line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AffineMap {
    pub alpha: f64,
    pub beta: f64,
}

impl AffineMap {
    pub fn eval(&self, h_norm: f64) -> f64 {
        self.alpha * h_norm + self.beta
    }
}

/// Only the entropy band needs to be non-degenerate here; the full parameter
/// check happens wherever the map is applied.
pub fn affine_from_params(params: &EnkgParams) -> Result<AffineMap> {
    let span = params.h_high - params.h_low;
    if !(span > 0.0) || !span.is_finite() {
        return Err(Error::InvalidParams("h_low and h_high coincide".into()));
    }
    let alpha = (params.p_high - params.p_low) / span;
    let beta = params.p_low - alpha * params.h_low;
    Ok(AffineMap { alpha, beta })
}

/// Nucleus mass for a normalized entropy: `clip(alpha * h + beta, p_low, p_high)`.
///
/// At or beyond the entropy thresholds the clip bound is returned directly,
/// which keeps the endpoints exact in floating point.
pub fn map_entropy_to_p(h_norm: f64, params: &EnkgParams) -> Result<f64> {
    params.validate()?;
    let map = affine_from_params(params)?;
    if !(0.0..=1.0).contains(&h_norm) {
        return Err(Error::InvalidParams(format!("normalized entropy {h_norm} outside [0, 1]")));
    }
    Ok(if h_norm <= params.h_low {
        params.p_low
    } else if h_norm >= params.h_high {
        params.p_high
    } else {
        map.eval(h_norm).clamp(params.p_low, params.p_high)
    })
}

fn reach_cutoff(sorted_probs: &[f64], p_target: f64) -> usize {
    let mut cum = 0.0;
    for (j, &p) in sorted_probs.iter().enumerate() {
        cum += p;
        if cum >= p_target - REACH_EPS {
            return j + 1;
        }
    }
    sorted_probs.len()
}

/// Length of the smallest top-probability prefix with mass `>= p_target`.
pub fn nucleus_cutoff(sorted: &SortedDistribution, p_target: f64) -> Result<usize> {
    if !(p_target > 0.0 && p_target <= 1.0) {
        return Err(Error::InvalidPTarget(p_target));
    }
    Ok(reach_cutoff(sorted.sorted_probs(), p_target))
}

/// Raise the cutoff to the guard, then lower it to the optional cap.
pub fn apply_k_guard(cutoff: usize, params: &EnkgParams, vocab: usize) -> usize {
    let guarded = cutoff.max(params.k_guard.min(vocab));
    let ceiling = params.n_max.map_or(vocab, |n| n.min(vocab));
    guarded.clamp(1, ceiling.max(1))
}

/// A renormalized prefix of the descending order.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    renorm_probs: Vec<f64>,
    permutation: Vec<TokenId>,
}

impl CandidateSet {
    pub fn cutoff(&self) -> usize {
        self.renorm_probs.len()
    }

    pub fn renorm_probs(&self) -> &[f64] {
        &self.renorm_probs
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.permutation
    }

    pub fn contains(&self, token: TokenId) -> bool {
        self.permutation.contains(&token)
    }

    /// Sample rank for a uniform draw `u` in `[0, 1)`; bucket `r` is
    /// `[cdf(r-1), cdf(r))`.
    pub fn rank_for(&self, u: f64) -> usize {
        let mut cum = 0.0;
        for (r, &q) in self.renorm_probs.iter().enumerate() {
            cum += q;
            if u < cum {
                return r;
            }
        }
        // u fell past the accumulated mass through rounding
        self.renorm_probs.iter().rposition(|&q| q > 0.0).unwrap_or(0)
    }
}

pub fn truncate_renormalize(sorted: &SortedDistribution, cutoff: usize) -> Result<CandidateSet> {
    let vocab = sorted.vocab();
    if cutoff == 0 || cutoff > vocab {
        return Err(Error::InvalidCutoff { cutoff, vocab });
    }
    let prefix = &sorted.sorted_probs()[..cutoff];
    let mass: f64 = prefix.iter().sum();
    if !(mass > 0.0) {
        return Err(Error::ZeroMassPrefix);
    }
    Ok(CandidateSet {
        renorm_probs: prefix.iter().map(|p| p / mass).collect(),
        permutation: sorted.permutation()[..cutoff].to_vec(),
    })
}

/// Inverse-CDF draw using exactly one uniform from `rng`.
pub fn sample_from(candidates: &CandidateSet, rng: &mut RngState) -> TokenId {
    let u = rng.uniform();
    candidates.permutation[candidates.rank_for(u)]
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleDiagnostics {
    pub normalized_entropy: f64,
    /// Nucleus mass in effect, for the strategies that use one.
    pub p_target: Option<f64>,
    pub cutoff: usize,
    pub guard_triggered: bool,
}

/// Candidate set and diagnostics of the ENkG rule, without drawing.
pub fn enkg_candidates(
    dist: &ProbabilityDistribution,
    params: &EnkgParams,
) -> Result<(CandidateSet, SampleDiagnostics)> {
    params.validate()?;
    let h_norm = dist.normalized_entropy();
    let p_target = map_entropy_to_p(h_norm, params)?;
    let sorted = dist.sort_descending();
    let nucleus = nucleus_cutoff(&sorted, p_target)?;
    let cutoff = apply_k_guard(nucleus, params, dist.vocab());
    let candidates = truncate_renormalize(&sorted, cutoff)?;
    let diag = SampleDiagnostics {
        normalized_entropy: h_norm,
        p_target: Some(p_target),
        cutoff,
        guard_triggered: cutoff > nucleus,
    };
    Ok((candidates, diag))
}

pub fn enkg_sample(
    dist: &ProbabilityDistribution,
    params: &EnkgParams,
    rng: &mut RngState,
) -> Result<(TokenId, SampleDiagnostics)> {
    let (candidates, diag) = enkg_candidates(dist, params)?;
    Ok((sample_from(&candidates, rng), diag))
}

/// Argmax with ties going to the lowest token index.
pub fn greedy_sample(dist: &ProbabilityDistribution) -> TokenId {
    let mut best = 0;
    for (i, &p) in dist.probs().iter().enumerate() {
        if p > dist.probs()[best] {
            best = i;
        }
    }
    TokenId::from(best)
}

pub fn top_k_sample(dist: &ProbabilityDistribution, k: usize, rng: &mut RngState) -> Result<TokenId> {
    let (candidates, _) = SamplerConfig::TopK { k }.candidates(dist)?;
    Ok(sample_from(&candidates, rng))
}

pub fn top_p_sample(dist: &ProbabilityDistribution, p: f64, rng: &mut RngState) -> Result<TokenId> {
    let (candidates, _) = SamplerConfig::TopP { p }.candidates(dist)?;
    Ok(sample_from(&candidates, rng))
}

pub fn top_pk_sample(
    dist: &ProbabilityDistribution,
    p: f64,
    k: usize,
    rng: &mut RngState,
) -> Result<TokenId> {
    let (candidates, _) = SamplerConfig::TopPk { p, k }.candidates(dist)?;
    Ok(sample_from(&candidates, rng))
}

pub fn temperature_sample(
    dist: &ProbabilityDistribution,
    t: f64,
    rng: &mut RngState,
) -> Result<TokenId> {
    let (candidates, _) = SamplerConfig::Temperature { t }.candidates(dist)?;
    Ok(sample_from(&candidates, rng))
}

/// A decoding strategy and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum SamplerConfig {
    Greedy,
    Temperature { t: f64 },
    TopK { k: usize },
    TopP { p: f64 },
    /// Top-k truncation, then a nucleus inside the renormalized top-k.
    TopPk { p: f64, k: usize },
    Enkg(EnkgParams),
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig::Enkg(EnkgParams::default())
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParams(msg));
        match *self {
            SamplerConfig::Greedy => Ok(()),
            SamplerConfig::Temperature { t } if !(t > 0.0 && t.is_finite()) => {
                Err(Error::InvalidTemperature(t))
            }
            SamplerConfig::Temperature { .. } => Ok(()),
            SamplerConfig::TopK { k } | SamplerConfig::TopPk { k, .. } if k == 0 => {
                bad("k must be at least 1".into())
            }
            SamplerConfig::TopP { p } | SamplerConfig::TopPk { p, .. } if !(p > 0.0 && p <= 1.0) => {
                Err(Error::InvalidPTarget(p))
            }
            SamplerConfig::TopK { .. } | SamplerConfig::TopP { .. } | SamplerConfig::TopPk { .. } => {
                Ok(())
            }
            SamplerConfig::Enkg(params) => params.validate(),
        }
    }

    /// Short family name, matching the serialized `strategy` tag.
    pub fn family(&self) -> &'static str {
        match self {
            SamplerConfig::Greedy => "greedy",
            SamplerConfig::Temperature { .. } => "temperature",
            SamplerConfig::TopK { .. } => "top_k",
            SamplerConfig::TopP { .. } => "top_p",
            SamplerConfig::TopPk { .. } => "top_pk",
            SamplerConfig::Enkg(_) => "enkg",
        }
    }

    pub fn label(&self) -> String {
        match self {
            SamplerConfig::Greedy => "greedy".into(),
            SamplerConfig::Temperature { t } => format!("temperature(t={t})"),
            SamplerConfig::TopK { k } => format!("top_k(k={k})"),
            SamplerConfig::TopP { p } => format!("top_p(p={p})"),
            SamplerConfig::TopPk { p, k } => format!("top_pk(k={k} p={p})"),
            SamplerConfig::Enkg(e) => {
                let mut s = format!(
                    "enkg(h={}/{} p={}/{} k_g={}",
                    e.h_low, e.h_high, e.p_low, e.p_high, e.k_guard
                );
                if let Some(n) = e.n_max {
                    s.push_str(&format!(" n_max={n}"));
                }
                s.push(')');
                s
            }
        }
    }

    /// The candidate set this strategy would sample from.
    pub fn candidates(
        &self,
        dist: &ProbabilityDistribution,
    ) -> Result<(CandidateSet, SampleDiagnostics)> {
        self.validate()?;
        let vocab = dist.vocab();
        let h_norm = dist.normalized_entropy();
        let plain = |candidates: CandidateSet, p_target: Option<f64>| {
            let cutoff = candidates.cutoff();
            let diag = SampleDiagnostics { normalized_entropy: h_norm, p_target, cutoff, guard_triggered: false };
            (candidates, diag)
        };
        match *self {
            SamplerConfig::Enkg(params) => enkg_candidates(dist, &params),
            SamplerConfig::Greedy => {
                let token = greedy_sample(dist);
                let candidates = CandidateSet { renorm_probs: vec![1.0], permutation: vec![token] };
                Ok(plain(candidates, None))
            }
            SamplerConfig::Temperature { t } => {
                let scaled = temper(dist.probs(), t);
                let sorted = ProbabilityDistribution::new(scaled)?.sort_descending();
                Ok(plain(truncate_renormalize(&sorted, vocab)?, None))
            }
            SamplerConfig::TopK { k } => {
                let sorted = dist.sort_descending();
                Ok(plain(truncate_renormalize(&sorted, k.min(vocab))?, None))
            }
            SamplerConfig::TopP { p } => {
                let sorted = dist.sort_descending();
                let cutoff = nucleus_cutoff(&sorted, p)?;
                Ok(plain(truncate_renormalize(&sorted, cutoff)?, Some(p)))
            }
            SamplerConfig::TopPk { p, k } => {
                let sorted = dist.sort_descending();
                let top_k = truncate_renormalize(&sorted, k.min(vocab))?;
                let cutoff = reach_cutoff(&top_k.renorm_probs, p);
                let mass: f64 = top_k.renorm_probs[..cutoff].iter().sum();
                let candidates = CandidateSet {
                    renorm_probs: top_k.renorm_probs[..cutoff].iter().map(|q| q / mass).collect(),
                    permutation: top_k.permutation[..cutoff].to_vec(),
                };
                Ok(plain(candidates, Some(p)))
            }
        }
    }

    /// Draw one token. Greedy consumes no randomness; every other strategy
    /// consumes exactly one uniform.
    pub fn sample(
        &self,
        dist: &ProbabilityDistribution,
        rng: &mut RngState,
    ) -> Result<(TokenId, SampleDiagnostics)> {
        let (candidates, diag) = self.candidates(dist)?;
        let token = match self {
            SamplerConfig::Greedy => candidates.permutation[0],
            _ => sample_from(&candidates, rng),
        };
        Ok((token, diag))
    }
}

/// `p^(1/t)` renormalized, computed in log space.
fn temper(probs: &[f64], t: f64) -> Vec<f64> {
    let logs: Vec<f64> = probs
        .iter()
        .map(|&p| if p > 0.0 { p.ln() / t } else { f64::NEG_INFINITY })
        .collect();
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logs.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = out.iter().sum();
    for p in &mut out {
        *p /= total;
    }
    out
}
