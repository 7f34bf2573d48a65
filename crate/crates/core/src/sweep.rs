//! Parameter grids over decoding strategies.
//!
//! A sweep names a strategy family, a list of parameter assignments layered
//! over that family's defaults, a scenario (a synthetic scene or a recorded
//! trace) and a list of seeds. Every (grid point, seed) pair is an
//! independent job; output rows are ordered by declaration regardless of
//! how many threads ran them.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::diagnostics::DEFAULT_LOW_ENTROPY_THRESHOLD;
use crate::error::{Error, Result};
use crate::samplers::{EnkgParams, SamplerConfig};
use crate::simulator::{self, SceneSpec};
use crate::trace;

pub const SWEEP_CSV_HEADER: [&str; 8] = [
    "config",
    "seed",
    "freeze_rate",
    "mismatch_rate",
    "mean_frame_avg_entropy",
    "mean_low_entropy_share",
    "fvd",
    "fid",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Scene(SceneSpec),
    Trace(PathBuf),
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario::Scene(SceneSpec::default())
    }
}

fn default_frames() -> usize {
    50
}

fn default_temperature() -> f64 {
    1.0
}

fn default_threshold() -> f64 {
    DEFAULT_LOW_ENTROPY_THRESHOLD
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Strategy family: greedy, temperature, top_k, top_p, top_pk or enkg.
    pub base: String,
    pub grid: Vec<Map<String, Value>>,
    #[serde(default)]
    pub scenario: Scenario,
    pub seeds: Vec<u64>,
    #[serde(default = "default_frames")]
    pub frames: usize,
    /// Softmax temperature for trace scenarios.
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::InvalidSweep(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::InvalidSweep("grid is empty".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidSweep("seed list is empty".into()));
        }
        if self.frames == 0 {
            return Err(Error::InvalidSweep("frames must be at least 1".into()));
        }
        if let Scenario::Scene(spec) = &self.scenario {
            spec.validate()?;
        }
        self.resolve_grid().map(|_| ())
    }

    /// The sampler for every grid point, in declaration order.
    pub fn resolve_grid(&self) -> Result<Vec<SamplerConfig>> {
        self.grid.iter().map(|point| resolve_point(&self.base, point)).collect()
    }
}

fn family_defaults(base: &str) -> Result<SamplerConfig> {
    Ok(match base {
        "greedy" => SamplerConfig::Greedy,
        "temperature" => SamplerConfig::Temperature { t: 1.0 },
        "top_k" => SamplerConfig::TopK { k: 30 },
        "top_p" => SamplerConfig::TopP { p: 0.8 },
        "top_pk" => SamplerConfig::TopPk { p: 0.8, k: 30 },
        "enkg" => SamplerConfig::Enkg(EnkgParams::mid()),
        other => return Err(Error::InvalidSweep(format!("unknown strategy family {other:?}"))),
    })
}

/// Layer one assignment over the family defaults. ENkG points may name a
/// threshold preset with `"thresholds": "left" | "mid" | "right"`.
pub fn resolve_point(base: &str, point: &Map<String, Value>) -> Result<SamplerConfig> {
    let defaults = family_defaults(base)?;
    let mut merged = match serde_json::to_value(defaults).expect("sampler config serializes") {
        Value::Object(m) => m,
        _ => unreachable!("sampler config is an object"),
    };
    for (key, value) in point {
        if key == "thresholds" && base == "enkg" {
            let preset = match value.as_str() {
                Some("left") => EnkgParams::left(),
                Some("mid") => EnkgParams::mid(),
                Some("right") => EnkgParams::right(),
                _ => return Err(Error::InvalidSweep(format!("unknown threshold preset {value}"))),
            };
            for (k, v) in [
                ("h_low", preset.h_low),
                ("h_high", preset.h_high),
                ("p_low", preset.p_low),
                ("p_high", preset.p_high),
            ] {
                merged.insert(k.into(), v.into());
            }
        } else if key == "strategy" {
            return Err(Error::InvalidSweep("grid points may not override the strategy".into()));
        } else if !merged.contains_key(key) && !(base == "enkg" && key == "n_max") {
            return Err(Error::InvalidSweep(format!("unknown parameter {key:?} for {base}")));
        } else {
            merged.insert(key.clone(), value.clone());
        }
    }
    let config: SamplerConfig = serde_json::from_value(Value::Object(merged))
        .map_err(|e| Error::InvalidSweep(format!("grid point {point:?}: {e}")))?;
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub config: String,
    /// `None` on the per-grid-point mean row.
    pub seed: Option<u64>,
    pub freeze_rate: f64,
    /// Not defined for trace scenarios, which have no reference trajectory.
    pub mismatch_rate: Option<f64>,
    pub mean_frame_avg_entropy: f64,
    pub mean_low_entropy_share: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    /// Mean rows only, in grid order.
    pub fn means(&self) -> impl Iterator<Item = &SweepRow> {
        self.rows.iter().filter(|r| r.seed.is_none())
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let err = |e: csv::Error| Error::Io(e.to_string());
        w.write_record(SWEEP_CSV_HEADER).map_err(err)?;
        for r in &self.rows {
            w.write_record([
                r.config.clone(),
                r.seed.map_or_else(|| "mean".to_string(), |s| s.to_string()),
                format!("{:.6}", r.freeze_rate),
                r.mismatch_rate.map_or_else(String::new, |m| format!("{m:.6}")),
                format!("{:.6}", r.mean_frame_avg_entropy),
                format!("{:.6}", r.mean_low_entropy_share),
                String::new(),
                String::new(),
            ])
            .map_err(err)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is ascii"))
    }
}

struct JobMetrics {
    freeze_rate: f64,
    mismatch_rate: Option<f64>,
    mean_avg_entropy: f64,
    mean_low_share: f64,
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        0.0
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

fn run_job(
    spec: &SweepSpec,
    sampler: SamplerConfig,
    seed: u64,
    loaded: Option<&trace::LogitTrace>,
) -> Result<JobMetrics> {
    match (&spec.scenario, loaded) {
        (Scenario::Scene(scene), _) => {
            let (free, _, drift) = simulator::rollout_pair(scene, sampler, spec.frames, seed)?;
            let report = free.collapse_report(spec.threshold)?;
            Ok(JobMetrics {
                freeze_rate: drift.freeze_rate,
                mismatch_rate: Some(drift.mismatch_rate),
                mean_avg_entropy: mean(&report.frame_avg_entropy),
                mean_low_share: mean(&report.low_entropy_share),
            })
        }
        (Scenario::Trace(_), Some(t)) => {
            let out = trace::replay(t, &sampler, spec.temperature, seed, spec.threshold)?;
            Ok(JobMetrics {
                freeze_rate: simulator::freeze_rate(&out.tokens),
                mismatch_rate: None,
                mean_avg_entropy: mean(&out.report.frame_avg_entropy),
                mean_low_share: mean(&out.report.low_entropy_share),
            })
        }
        (Scenario::Trace(_), None) => unreachable!("trace is loaded before jobs run"),
    }
}

/// Run every (grid point, seed) job on a pool of `jobs` threads.
///
/// Relative trace paths resolve against `base_dir`.
pub fn run_sweep(spec: &SweepSpec, base_dir: &Path, jobs: usize) -> Result<SweepTable> {
    spec.validate()?;
    let samplers = spec.resolve_grid()?;
    let loaded = match &spec.scenario {
        Scenario::Trace(path) => {
            let path = if path.is_absolute() { path.clone() } else { base_dir.join(path) };
            let file = std::fs::File::open(&path)
                .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
            Some(trace::read_trace(std::io::BufReader::new(file))?)
        }
        Scenario::Scene(_) => None,
    };
    let work: Vec<(usize, u64)> = (0..samplers.len())
        .flat_map(|g| spec.seeds.iter().map(move |&s| (g, s)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidSweep(format!("thread pool: {e}")))?;
    let metrics: Vec<JobMetrics> = pool.install(|| {
        work.par_iter()
            .map(|&(g, seed)| run_job(spec, samplers[g], seed, loaded.as_ref()))
            .collect::<Result<_>>()
    })?;

    let mut rows = Vec::with_capacity(work.len() + samplers.len());
    for (g, sampler) in samplers.iter().enumerate() {
        let label = sampler.label();
        let chunk = &metrics[g * spec.seeds.len()..(g + 1) * spec.seeds.len()];
        for (seed, m) in spec.seeds.iter().zip(chunk) {
            rows.push(SweepRow {
                config: label.clone(),
                seed: Some(*seed),
                freeze_rate: m.freeze_rate,
                mismatch_rate: m.mismatch_rate,
                mean_frame_avg_entropy: m.mean_avg_entropy,
                mean_low_entropy_share: m.mean_low_share,
            });
        }
        let col = |f: fn(&JobMetrics) -> f64| mean(&chunk.iter().map(f).collect::<Vec<_>>());
        let mismatch: Option<Vec<f64>> = chunk.iter().map(|m| m.mismatch_rate).collect();
        rows.push(SweepRow {
            config: label,
            seed: None,
            freeze_rate: col(|m| m.freeze_rate),
            mismatch_rate: mismatch.map(|v| mean(&v)),
            mean_frame_avg_entropy: col(|m| m.mean_avg_entropy),
            mean_low_entropy_share: col(|m| m.mean_low_share),
        });
    }
    Ok(SweepTable { rows })
}
