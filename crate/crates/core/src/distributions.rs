//! Logit vectors, validated categorical distributions and their entropy.
//!
//! All arithmetic is done in `f64`, whatever precision the logits arrived in.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of a [`ProbabilityDistribution`].
pub const MASS_TOLERANCE: f64 = 1e-6;

/// Index into the codebook.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl From<usize> for TokenId {
    fn from(i: usize) -> Self {
        TokenId(i as u32)
    }
}

impl std::fmt::Display for TokenId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Unnormalized scores over a codebook of at least two entries, all finite.
#[derive(Debug, Clone, PartialEq)]
pub struct LogitVector(Vec<f64>);

impl LogitVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::VocabTooSmall(values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteInput(i));
        }
        Ok(Self(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn vocab(&self) -> usize {
        self.0.len()
    }
}

/// A categorical distribution whose invariants were checked at construction.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbabilityDistribution(Vec<f64>);

impl ProbabilityDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        validate(&probs)?;
        if probs.len() < 2 {
            return Err(Error::VocabTooSmall(probs.len()));
        }
        Ok(Self(probs))
    }

    pub fn uniform(vocab: usize) -> Result<Self> {
        if vocab < 2 {
            return Err(Error::VocabTooSmall(vocab));
        }
        Ok(Self(vec![1.0 / vocab as f64; vocab]))
    }

    pub fn one_hot(vocab: usize, token: usize) -> Result<Self> {
        if vocab < 2 {
            return Err(Error::VocabTooSmall(vocab));
        }
        if token >= vocab {
            return Err(Error::DimensionMismatch { expected: vocab, actual: token });
        }
        let mut probs = vec![0.0; vocab];
        probs[token] = 1.0;
        Ok(Self(probs))
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    pub fn vocab(&self) -> usize {
        self.0.len()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Largest single-token probability.
    pub fn top1(&self) -> f64 {
        self.0.iter().copied().fold(0.0, f64::max)
    }

    pub fn entropy(&self) -> f64 {
        shannon_entropy(&self.0)
    }

    pub fn normalized_entropy(&self) -> f64 {
        normalize_entropy(shannon_entropy(&self.0), self.0.len())
    }

    pub fn sort_descending(&self) -> SortedDistribution {
        sort_probs(&self.0)
    }
}

impl<'de> Deserialize<'de> for ProbabilityDistribution {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let probs = Vec::<f64>::deserialize(d)?;
        Self::new(probs).map_err(serde::de::Error::custom)
    }
}

/// Probabilities in descending order together with the rank -> token map.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedDistribution {
    sorted_probs: Vec<f64>,
    permutation: Vec<TokenId>,
}

impl SortedDistribution {
    pub fn sorted_probs(&self) -> &[f64] {
        &self.sorted_probs
    }

    pub fn permutation(&self) -> &[TokenId] {
        &self.permutation
    }

    pub fn vocab(&self) -> usize {
        self.sorted_probs.len()
    }

    #[cfg(test)]
    pub(crate) fn from_parts_unchecked(sorted_probs: Vec<f64>, permutation: Vec<TokenId>) -> Self {
        Self { sorted_probs, permutation }
    }

    /// Scatter the sorted values back to token order.
    pub fn unsort(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.sorted_probs.len()];
        for (p, tok) in self.sorted_probs.iter().zip(&self.permutation) {
            out[tok.index()] = *p;
        }
        out
    }
}

/// Temperature-scaled softmax with max subtraction.
pub fn softmax(logits: &LogitVector, temperature: f64) -> Result<ProbabilityDistribution> {
    if !(temperature > 0.0) || !temperature.is_finite() {
        return Err(Error::InvalidTemperature(temperature));
    }
    let values = logits.values();
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = values.iter().map(|&v| ((v - max) / temperature).exp()).collect();
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    ProbabilityDistribution::new(probs)
}

/// Check the distribution invariants on a raw slice.
pub fn validate(probs: &[f64]) -> Result<()> {
    for (i, &p) in probs.iter().enumerate() {
        if !p.is_finite() {
            return Err(Error::NonFiniteProbability(i));
        }
        if p < 0.0 {
            return Err(Error::NegativeProbability { index: i, value: p });
        }
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > MASS_TOLERANCE {
        return Err(Error::MassNotNormalized(total));
    }
    Ok(())
}

/// Shannon entropy in nats with `0 ln 0 = 0`.
pub fn entropy(dist: &ProbabilityDistribution) -> f64 {
    dist.entropy()
}

/// Entropy divided by `ln V`, clamped into `[0, 1]` against rounding.
pub fn normalized_entropy(dist: &ProbabilityDistribution) -> f64 {
    dist.normalized_entropy()
}

pub fn sort_descending(dist: &ProbabilityDistribution) -> SortedDistribution {
    dist.sort_descending()
}

fn shannon_entropy(probs: &[f64]) -> f64 {
    let h: f64 = probs
        .iter()
        .map(|&p| if p > 0.0 { -p * p.ln() } else { 0.0 })
        .sum();
    h.max(0.0)
}

fn normalize_entropy(h: f64, vocab: usize) -> f64 {
    (h / (vocab as f64).ln()).clamp(0.0, 1.0)
}

fn sort_probs(probs: &[f64]) -> SortedDistribution {
    let mut order: Vec<usize> = (0..probs.len()).collect();
    // ties resolve to the lower token index
    order.sort_by(|&a, &b| probs[b].total_cmp(&probs[a]).then(a.cmp(&b)));
    SortedDistribution {
        sorted_probs: order.iter().map(|&i| probs[i]).collect(),
        permutation: order.into_iter().map(TokenId::from).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dist(p: &[f64]) -> ProbabilityDistribution {
        ProbabilityDistribution::new(p.to_vec()).unwrap()
    }

    #[test]
    fn softmax_of_equal_logits_is_uniform() {
        let p = softmax(&LogitVector::new(vec![0.0; 4]).unwrap(), 1.0).unwrap();
        assert_eq!(p.probs(), &[0.25; 4]);
    }

    #[test]
    fn softmax_of_log_weights() {
        let logits = LogitVector::new(vec![4f64.ln(), 3f64.ln(), 2f64.ln(), 0.0]).unwrap();
        let p = softmax(&logits, 1.0).unwrap();
        for (got, want) in p.probs().iter().zip([0.4, 0.3, 0.2, 0.1]) {
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn softmax_large_gap_does_not_overflow() {
        let p = softmax(&LogitVector::new(vec![1000.0, 0.0]).unwrap(), 1.0).unwrap();
        assert_eq!(p.probs()[0], 1.0);
        assert_eq!(p.probs()[1], 0.0);
    }

    #[test]
    fn softmax_rejects_bad_inputs() {
        assert_eq!(LogitVector::new(vec![0.0, f64::NAN]), Err(Error::NonFiniteInput(1)));
        assert_eq!(LogitVector::new(vec![f64::INFINITY, 0.0]), Err(Error::NonFiniteInput(0)));
        let l = LogitVector::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(softmax(&l, 0.0), Err(Error::InvalidTemperature(0.0)));
        assert!(matches!(softmax(&l, -1.0), Err(Error::InvalidTemperature(_))));
    }

    #[test]
    fn huge_temperature_flattens() {
        let l = LogitVector::new(vec![3.0, -2.0, 0.5, 1.0, -7.0]).unwrap();
        let p = softmax(&l, 1e6).unwrap();
        for &x in p.probs() {
            assert!((x - 0.2).abs() < 1e-4);
        }
    }

    #[test]
    fn validate_cases() {
        assert!(validate(&[0.5, 0.5]).is_ok());
        assert!(matches!(validate(&[0.7, 0.4]), Err(Error::MassNotNormalized(_))));
        assert!(matches!(validate(&[1.2, -0.2]), Err(Error::NegativeProbability { index: 1, .. })));
        assert_eq!(validate(&[f64::NAN, 1.0]), Err(Error::NonFiniteProbability(0)));
        // within the f32-sized tolerance
        assert!(validate(&[0.5, 0.5 + 5e-7]).is_ok());
    }

    #[test]
    fn entropy_reference_values() {
        assert!((dist(&[0.25; 4]).entropy() - 4f64.ln()).abs() < 1e-12);
        assert_eq!(dist(&[0.0, 1.0, 0.0]).entropy(), 0.0);
        // hand summation: 0.366516 + 0.361192 + 0.321888 + 0.230259
        let h = dist(&[0.4, 0.3, 0.2, 0.1]).entropy();
        assert!((h - 1.279854).abs() < 1e-5, "{h}");
    }

    #[test]
    fn normalized_entropy_reference_values() {
        for v in [2, 3, 16, 4096] {
            assert!((ProbabilityDistribution::uniform(v).unwrap().normalized_entropy() - 1.0).abs() < 1e-12);
            assert_eq!(ProbabilityDistribution::one_hot(v, v - 1).unwrap().normalized_entropy(), 0.0);
        }
        let h = dist(&[0.4, 0.3, 0.2, 0.1]).normalized_entropy();
        assert!((h - 0.923220).abs() < 1e-5, "{h}");
    }

    #[test]
    fn sort_examples() {
        let s = dist(&[0.1, 0.4, 0.2, 0.3]).sort_descending();
        assert_eq!(s.sorted_probs(), &[0.4, 0.3, 0.2, 0.1]);
        let perm: Vec<u32> = s.permutation().iter().map(|t| t.0).collect();
        assert_eq!(perm, vec![1, 3, 2, 0]);

        let s = dist(&[0.25; 4]).sort_descending();
        let perm: Vec<u32> = s.permutation().iter().map(|t| t.0).collect();
        assert_eq!(perm, vec![0, 1, 2, 3]);
    }

    #[test]
    fn deserialize_validates() {
        assert!(serde_json::from_str::<ProbabilityDistribution>("[0.5,0.5]").is_ok());
        assert!(serde_json::from_str::<ProbabilityDistribution>("[0.7,0.4]").is_err());
    }
}
