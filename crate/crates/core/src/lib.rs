//! Entropy-guided k-guard sampling for discrete autoregressive generators.
//!
//! The crate is organized bottom-up:
//!
//! * [`distributions`] turns logits into validated categorical distributions
//!   and measures their (normalized) Shannon entropy.
//! * [`samplers`] holds the ENkG rule and the greedy / temperature / top-k /
//!   top-p / combined baselines, all driven by a seeded [`rng::RngState`].
//! * [`diagnostics`] aggregates entropies into per-frame grids, collapse
//!   reports and heatmaps.
//! * [`simulator`] is a small synthetic token-grid world model that exhibits
//!   entropy collapse and frame freezing.
//! * [`trace`] persists logit sequences and replays them through any sampler.
//! * [`sweep`] runs parameter grids over simulator scenes or traces.

pub mod diagnostics;
pub mod distributions;
pub mod error;
pub mod rng;
pub mod samplers;
pub mod simulator;
pub mod sweep;
pub mod trace;

pub use distributions::{LogitVector, ProbabilityDistribution, SortedDistribution, TokenId};
pub use error::{Error, ErrorKind, Result};
pub use rng::RngState;
pub use samplers::{CandidateSet, EnkgParams, SampleDiagnostics, SamplerConfig};
