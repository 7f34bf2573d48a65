//! A synthetic autoregressive world model over a token grid.
//!
//! Every site conditions only on its own token history. The incumbent token
//! at a site receives confidence `s(r) = min(p0 + delta * (r - 1), p_max)`,
//! where `r` is how many consecutive frames the token has persisted, so a
//! decoder that keeps its own high-confidence choices drives `s` up and
//! entropy down until the site locks in. Texture sites spread the remaining
//! mass over a few designated alternatives; Structured sites spread it over
//! the whole codebook.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{self, CollapseReport, EntropyGrid};
use crate::distributions::{ProbabilityDistribution, TokenId};
use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::samplers::{SampleDiagnostics, SamplerConfig};
use crate::trace::LogitTrace;

/// Frame key of the substreams used to draw the initial frame.
const INIT_FRAME: u64 = u64::MAX;

/// Logit written for zero-probability tokens; `exp` of it underflows to 0.
pub const ZERO_PROB_LOGIT: f32 = -1.0e4;

const GEOMETRIC_RATIO: f64 = 2.0 / 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Region {
    Structured,
    Texture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SceneSpecRaw")]
pub struct SceneSpec {
    pub height: usize,
    pub width: usize,
    pub vocab: usize,
    pub region_map: Vec<Region>,
    pub p0: f64,
    pub delta: f64,
    pub p_max: f64,
    pub texture_spread: usize,
}

/// Serialized form; every field is optional and `region_map` defaults to
/// the standard layout for the given grid.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneSpecRaw {
    height: Option<usize>,
    width: Option<usize>,
    vocab: Option<usize>,
    region_map: Option<Vec<Region>>,
    p0: Option<f64>,
    delta: Option<f64>,
    p_max: Option<f64>,
    texture_spread: Option<usize>,
}

impl TryFrom<SceneSpecRaw> for SceneSpec {
    type Error = Error;

    fn try_from(raw: SceneSpecRaw) -> Result<Self> {
        let d = SceneSpec::default();
        let height = raw.height.unwrap_or(d.height);
        let width = raw.width.unwrap_or(d.width);
        let spec = SceneSpec {
            height,
            width,
            vocab: raw.vocab.unwrap_or(d.vocab),
            region_map: raw.region_map.unwrap_or_else(|| SceneSpec::default_layout(height, width)),
            p0: raw.p0.unwrap_or(d.p0),
            delta: raw.delta.unwrap_or(d.delta),
            p_max: raw.p_max.unwrap_or(d.p_max),
            texture_spread: raw.texture_spread.unwrap_or(d.texture_spread),
        };
        spec.validate()?;
        Ok(spec)
    }
}

impl Default for SceneSpec {
    /// 16x16 grid, 16 tokens, texture above the midline, structure below.
    fn default() -> Self {
        Self {
            height: 16,
            width: 16,
            vocab: 16,
            region_map: Self::default_layout(16, 16),
            p0: 0.4,
            delta: 0.1,
            p_max: 0.85,
            texture_spread: 4,
        }
    }
}

impl SceneSpec {
    /// Upper half of the rows Texture, the rest Structured.
    pub fn default_layout(height: usize, width: usize) -> Vec<Region> {
        (0..height * width)
            .map(|i| if i / width.max(1) < height / 2 { Region::Texture } else { Region::Structured })
            .collect()
    }

    pub fn sites(&self) -> usize {
        self.height * self.width
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.height == 0 || self.width == 0 {
            return bad("grid dimensions must be positive".into());
        }
        if self.vocab < 2 {
            return bad(format!("vocab must be at least 2, got {}", self.vocab));
        }
        if self.region_map.len() != self.sites() {
            return bad(format!(
                "region_map has {} entries for {} sites",
                self.region_map.len(),
                self.sites()
            ));
        }
        if !(self.p0 > 0.0 && self.p0 < self.p_max && self.p_max < 1.0) {
            return bad(format!("need 0 < p0 < p_max < 1, got p0={} p_max={}", self.p0, self.p_max));
        }
        if !(self.delta >= 0.0 && self.delta.is_finite()) {
            return bad(format!("delta must be finite and >= 0, got {}", self.delta));
        }
        if self.texture_spread == 0 || self.texture_spread >= self.vocab {
            return bad(format!(
                "texture_spread must lie in 1..{}, got {}",
                self.vocab, self.texture_spread
            ));
        }
        Ok(())
    }

    /// Anchor token of a site: `(row + 2 * col) mod V`.
    pub fn base_token(&self, site: usize) -> usize {
        let (row, col) = (site / self.width, site % self.width);
        (row + 2 * col) % self.vocab
    }
}

/// Immutable scene dynamics.
#[derive(Debug, Clone, PartialEq)]
pub struct SimModel {
    spec: SceneSpec,
    /// Texture sites: their alternative set. Structured sites: the region token.
    palettes: Vec<Vec<TokenId>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimState {
    pub current_frame: Vec<TokenId>,
    /// Consecutive frames the current token has held; 0 marks an empty site.
    pub run_length: Vec<u32>,
    pub frame_index: usize,
}

impl SimState {
    pub fn empty(sites: usize) -> Self {
        Self { current_frame: vec![TokenId(0); sites], run_length: vec![0; sites], frame_index: 0 }
    }

    /// Advance to `next`: runs extend on repeats and restart on change.
    pub fn advance(&mut self, next: &[TokenId]) {
        for ((cur, run), &tok) in self.current_frame.iter_mut().zip(&mut self.run_length).zip(next) {
            *run = if *run > 0 && *cur == tok { run.saturating_add(1) } else { 1 };
            *cur = tok;
        }
        self.frame_index += 1;
    }
}

pub fn build_scene(spec: &SceneSpec, seed: u64) -> Result<(SimModel, SimState)> {
    spec.validate()?;
    let palettes: Vec<Vec<TokenId>> = (0..spec.sites())
        .map(|i| {
            let base = spec.base_token(i);
            match spec.region_map[i] {
                Region::Structured => vec![TokenId::from(base)],
                Region::Texture => (0..spec.texture_spread)
                    .map(|j| TokenId::from((base + j) % spec.vocab))
                    .collect(),
            }
        })
        .collect();
    let current_frame = palettes
        .iter()
        .enumerate()
        .map(|(i, palette)| {
            if palette.len() == 1 {
                palette[0]
            } else {
                let u = RngState::for_cell(seed, INIT_FRAME, i as u64).uniform();
                palette[((u * palette.len() as f64) as usize).min(palette.len() - 1)]
            }
        })
        .collect();
    let state = SimState { current_frame, run_length: vec![1; spec.sites()], frame_index: 0 };
    Ok((SimModel { spec: spec.clone(), palettes }, state))
}

impl SimModel {
    pub fn spec(&self) -> &SceneSpec {
        &self.spec
    }

    pub fn sites(&self) -> usize {
        self.spec.sites()
    }

    pub fn region(&self, site: usize) -> Region {
        self.spec.region_map[site]
    }

    /// Texture alternatives or the single Structured region token.
    pub fn palette(&self, site: usize) -> &[TokenId] {
        &self.palettes[site]
    }

    /// Confidence assigned to a token that has held for `run` frames.
    pub fn confidence(&self, run: u32) -> f64 {
        let r = f64::from(run.max(1));
        (self.spec.p0 + self.spec.delta * (r - 1.0)).min(self.spec.p_max)
    }

    pub fn predict(&self, state: &SimState, site: usize) -> Result<ProbabilityDistribution> {
        if site >= self.sites() || site >= state.run_length.len() {
            return Err(Error::DimensionMismatch { expected: self.sites(), actual: site });
        }
        let run = state.run_length[site];
        if run == 0 {
            return Err(Error::UninitializedState { site });
        }
        let current = state.current_frame[site].index();
        let vocab = self.spec.vocab;
        if current >= vocab {
            return Err(Error::DimensionMismatch { expected: vocab, actual: current });
        }
        let s = self.confidence(run);
        let mut probs = vec![0.0; vocab];
        if self.palettes[site].len() == 1 {
            // Structured sites, or a texture without alternatives
            let rest = (1.0 - s) / (vocab - 1) as f64;
            probs.iter_mut().for_each(|p| *p = rest);
        } else {
            let alternatives = self.texture_alternatives(site, TokenId::from(current));
            let total: f64 = (0..alternatives.len()).map(|j| GEOMETRIC_RATIO.powi(j as i32)).sum();
            for (j, tok) in alternatives.iter().enumerate() {
                probs[tok.index()] = (1.0 - s) * GEOMETRIC_RATIO.powi(j as i32) / total;
            }
        }
        probs[current] = s;
        ProbabilityDistribution::new(probs)
    }

    /// The `texture_spread - 1` alternatives in weight order: the palette
    /// rotated to start just after `current`.
    fn texture_alternatives(&self, site: usize, current: TokenId) -> Vec<TokenId> {
        let palette = &self.palettes[site];
        let n = palette.len();
        match palette.iter().position(|&t| t == current) {
            Some(k) => (1..n).map(|j| palette[(k + j) % n]).collect(),
            None => palette.iter().copied().filter(|&t| t != current).take(n - 1).collect(),
        }
    }

    /// Ground-truth token at generated frame `t` (0-based): Texture sites
    /// step through their palette once per frame, Structured sites hold.
    pub fn reference_token(&self, initial: &SimState, site: usize, t: usize) -> TokenId {
        let palette = &self.palettes[site];
        if palette.len() == 1 {
            return palette[0];
        }
        let start = palette.iter().position(|&tok| tok == initial.current_frame[site]).unwrap_or(0);
        palette[(start + t + 1) % palette.len()]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RolloutConfig {
    pub frames: usize,
    pub sampler: SamplerConfig,
    pub seed: u64,
    pub teacher_forced: bool,
}

impl RolloutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.frames == 0 {
            return Err(Error::InvalidParams("frames must be at least 1".into()));
        }
        self.sampler.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftStats {
    pub freeze_rate: f64,
    pub mismatch_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutResult {
    /// Tokens the sampler chose, `[T][m]`.
    pub frames: Vec<Vec<TokenId>>,
    pub diagnostics: Vec<Vec<SampleDiagnostics>>,
    pub entropy_grids: Vec<EntropyGrid>,
    /// Predicted distributions the choices were drawn from, `[T][m]`.
    pub predictions: Vec<Vec<ProbabilityDistribution>>,
    /// Ground-truth trajectory, `[T][m]`.
    pub reference: Vec<Vec<TokenId>>,
    /// Freeze rate of `frames`; mismatch against `reference`.
    pub drift: DriftStats,
    pub final_state: SimState,
    pub vocab: usize,
}

pub fn rollout(model: &SimModel, state: &SimState, config: &RolloutConfig) -> Result<RolloutResult> {
    config.validate()?;
    let sites = model.sites();
    if state.run_length.len() != sites {
        return Err(Error::DimensionMismatch { expected: sites, actual: state.run_length.len() });
    }
    let spec = model.spec();
    let initial = state.clone();
    let mut state = state.clone();
    let mut result = RolloutResult {
        frames: Vec::with_capacity(config.frames),
        diagnostics: Vec::with_capacity(config.frames),
        entropy_grids: Vec::with_capacity(config.frames),
        predictions: Vec::with_capacity(config.frames),
        reference: Vec::with_capacity(config.frames),
        drift: DriftStats { freeze_rate: 0.0, mismatch_rate: 0.0 },
        final_state: state.clone(),
        vocab: spec.vocab,
    };
    for t in 0..config.frames {
        let cells: Vec<(ProbabilityDistribution, TokenId, SampleDiagnostics)> = (0..sites)
            .into_par_iter()
            .map(|i| {
                let dist = model.predict(&state, i)?;
                let mut rng = RngState::for_cell(config.seed, t as u64, i as u64);
                let (tok, diag) = config.sampler.sample(&dist, &mut rng)?;
                Ok((dist, tok, diag))
            })
            .collect::<Result<_>>()?;
        let mut dists = Vec::with_capacity(sites);
        let mut tokens = Vec::with_capacity(sites);
        let mut diags = Vec::with_capacity(sites);
        for (d, tok, diag) in cells {
            dists.push(d);
            tokens.push(tok);
            diags.push(diag);
        }
        let reference: Vec<TokenId> = (0..sites).map(|i| model.reference_token(&initial, i, t)).collect();
        let grid = EntropyGrid::new(
            t,
            spec.height,
            spec.width,
            diags.iter().map(|d| d.normalized_entropy).collect(),
        )?;
        state.advance(if config.teacher_forced { &reference } else { &tokens });
        result.frames.push(tokens);
        result.diagnostics.push(diags);
        result.entropy_grids.push(grid);
        result.predictions.push(dists);
        result.reference.push(reference);
    }
    result.drift = DriftStats {
        freeze_rate: freeze_rate(&result.frames),
        mismatch_rate: mismatch_rate(&result.frames, &result.reference)?,
    };
    result.final_state = state;
    Ok(result)
}

/// Fraction of consecutive frame pairs that are identical token for token.
pub fn freeze_rate(frames: &[Vec<TokenId>]) -> f64 {
    if frames.len() < 2 {
        return 0.0;
    }
    let frozen = frames.windows(2).filter(|w| w[0] == w[1]).count();
    frozen as f64 / (frames.len() - 1) as f64
}

/// Fraction of (frame, site) cells where the two token grids disagree.
pub fn mismatch_rate(a: &[Vec<TokenId>], b: &[Vec<TokenId>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch { expected: a.len(), actual: b.len() });
    }
    let mut cells = 0usize;
    let mut differ = 0usize;
    for (fa, fb) in a.iter().zip(b) {
        if fa.len() != fb.len() {
            return Err(Error::DimensionMismatch { expected: fa.len(), actual: fb.len() });
        }
        cells += fa.len();
        differ += fa.iter().zip(fb).filter(|(x, y)| x != y).count();
    }
    Ok(if cells == 0 { 0.0 } else { differ as f64 / cells as f64 })
}

/// Freeze rate of the free run and its disagreement with the teacher-forced run.
pub fn drift_stats(free_run: &RolloutResult, teacher_forced: &RolloutResult) -> Result<DriftStats> {
    Ok(DriftStats {
        freeze_rate: freeze_rate(&free_run.frames),
        mismatch_rate: mismatch_rate(&free_run.frames, &teacher_forced.frames)?,
    })
}

impl RolloutResult {
    pub fn frame_count(&self) -> usize {
        self.frames.len()
    }

    pub fn top1_mass_avg(&self) -> Vec<f64> {
        self.predictions
            .iter()
            .map(|f| f.iter().map(ProbabilityDistribution::top1).sum::<f64>() / f.len().max(1) as f64)
            .collect()
    }

    pub fn collapse_report(&self, threshold: f64) -> Result<CollapseReport> {
        diagnostics::collapse_report_from_grids(&self.entropy_grids, self.top1_mass_avg(), threshold)
    }

    /// Predicted distributions as a logit trace (`ln p`, floored for zeros).
    pub fn to_trace(&self) -> Result<LogitTrace> {
        let sites = self.predictions.first().map_or(0, Vec::len);
        let mut payload = Vec::with_capacity(self.predictions.len() * sites * self.vocab);
        for frame in &self.predictions {
            for dist in frame {
                payload.extend(dist.probs().iter().map(|&p| {
                    if p > 0.0 {
                        (p.ln() as f32).max(ZERO_PROB_LOGIT)
                    } else {
                        ZERO_PROB_LOGIT
                    }
                }));
            }
        }
        LogitTrace::new(self.vocab as u32, self.predictions.len() as u32, sites as u32, payload)
    }
}

/// Free-running rollout, its teacher-forced twin and their drift.
pub fn rollout_pair(
    spec: &SceneSpec,
    sampler: SamplerConfig,
    frames: usize,
    seed: u64,
) -> Result<(RolloutResult, RolloutResult, DriftStats)> {
    let (model, state) = build_scene(spec, seed)?;
    let free = rollout(&model, &state, &RolloutConfig { frames, sampler, seed, teacher_forced: false })?;
    let forced = rollout(&model, &state, &RolloutConfig { frames, sampler, seed, teacher_forced: true })?;
    let drift = drift_stats(&free, &forced)?;
    Ok((free, forced, drift))
}
