//! Run configuration: a JSON document, optionally wrapped in a manifest,
//! with command-line flags layered on top.

use std::fs;
use std::path::{Path, PathBuf};

use enkg_core::simulator::SceneSpec;
use enkg_core::sweep::SweepSpec;
use enkg_core::{EnkgParams, SamplerConfig};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::CliError;

/// Every knob a command can read. Unset fields fall back to built-in
/// defaults; a manifest stores the fully resolved form.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampler: Option<SamplerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<SceneSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frames: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub teacher_forced: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heatmap_scale: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub uniform: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub site: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

/// Load a config file. A document with a top-level `"config"` key is a
/// manifest and only that key is read.
pub fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let body = match doc {
        Value::Object(mut m) if m.contains_key("config") => m.remove("config").unwrap(),
        other => other,
    };
    serde_json::from_value(body).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Baseline settings of the per-model presets.
pub fn preset(name: &str) -> Result<SamplerConfig, CliError> {
    match name {
        "drivingworld" => Ok(SamplerConfig::TopK { k: 30 }),
        "cosmos" => Ok(SamplerConfig::TopP { p: 0.8 }),
        "greedy" => Ok(SamplerConfig::Greedy),
        other => Err(CliError::Config(format!("unknown preset {other:?}"))),
    }
}

fn family_defaults(strategy: &str) -> Result<SamplerConfig, CliError> {
    Ok(match strategy {
        "greedy" => SamplerConfig::Greedy,
        "temperature" => SamplerConfig::Temperature { t: 1.0 },
        "top-k" | "top_k" => SamplerConfig::TopK { k: 30 },
        "top-p" | "top_p" => SamplerConfig::TopP { p: 0.8 },
        "top-pk" | "top_pk" => SamplerConfig::TopPk { p: 0.8, k: 30 },
        "enkg" => SamplerConfig::Enkg(EnkgParams::default()),
        other => return Err(CliError::Config(format!("unknown strategy {other:?}"))),
    })
}

/// Sampler flags as parsed from the command line.
#[derive(Debug, Clone, Default)]
pub struct SamplerFlags {
    pub preset: Option<String>,
    pub strategy: Option<String>,
    pub t: Option<f64>,
    pub k: Option<usize>,
    pub p: Option<f64>,
    pub thresholds: Option<String>,
    pub h_low: Option<f64>,
    pub h_high: Option<f64>,
    pub p_low: Option<f64>,
    pub p_high: Option<f64>,
    pub k_guard: Option<usize>,
    pub n_max: Option<usize>,
}

impl SamplerFlags {
    /// Preset, then strategy, then individual parameters, over `base`.
    pub fn apply(&self, base: Option<SamplerConfig>) -> Result<SamplerConfig, CliError> {
        let mut sampler = base.unwrap_or_default();
        if let Some(name) = &self.preset {
            sampler = preset(name)?;
        }
        if let Some(strategy) = &self.strategy {
            let fresh = family_defaults(strategy)?;
            if fresh.family() != sampler.family() {
                sampler = fresh;
            }
        }
        let misplaced = |flag: &str, s: &SamplerConfig| {
            CliError::Config(format!("--{flag} does not apply to strategy {}", s.family()))
        };
        if let Some(v) = self.t {
            match &mut sampler {
                SamplerConfig::Temperature { t } => *t = v,
                s => return Err(misplaced("t", s)),
            }
        }
        if let Some(v) = self.k {
            match &mut sampler {
                SamplerConfig::TopK { k } | SamplerConfig::TopPk { k, .. } => *k = v,
                s => return Err(misplaced("k", s)),
            }
        }
        if let Some(v) = self.p {
            match &mut sampler {
                SamplerConfig::TopP { p } | SamplerConfig::TopPk { p, .. } => *p = v,
                s => return Err(misplaced("p", s)),
            }
        }
        let enkg_flags = [
            ("thresholds", self.thresholds.is_some()),
            ("h-low", self.h_low.is_some()),
            ("h-high", self.h_high.is_some()),
            ("p-low", self.p_low.is_some()),
            ("p-high", self.p_high.is_some()),
            ("k-guard", self.k_guard.is_some()),
            ("n-max", self.n_max.is_some()),
        ];
        match &mut sampler {
            SamplerConfig::Enkg(params) => {
                if let Some(name) = &self.thresholds {
                    let preset = match name.as_str() {
                        "left" => EnkgParams::left(),
                        "mid" => EnkgParams::mid(),
                        "right" => EnkgParams::right(),
                        other => return Err(CliError::Config(format!("unknown thresholds {other:?}"))),
                    };
                    params.h_low = preset.h_low;
                    params.h_high = preset.h_high;
                    params.p_low = preset.p_low;
                    params.p_high = preset.p_high;
                }
                params.h_low = self.h_low.unwrap_or(params.h_low);
                params.h_high = self.h_high.unwrap_or(params.h_high);
                params.p_low = self.p_low.unwrap_or(params.p_low);
                params.p_high = self.p_high.unwrap_or(params.p_high);
                params.k_guard = self.k_guard.unwrap_or(params.k_guard);
                if self.n_max.is_some() {
                    params.n_max = self.n_max;
                }
            }
            s => {
                if let Some((flag, _)) = enkg_flags.iter().find(|(_, set)| *set) {
                    return Err(misplaced(flag, s));
                }
            }
        }
        sampler.validate()?;
        Ok(sampler)
    }
}

/// Scene flags as parsed from the command line.
#[derive(Debug, Clone, Default)]
pub struct SceneFlags {
    pub height: Option<usize>,
    pub width: Option<usize>,
    pub vocab: Option<usize>,
    pub p0: Option<f64>,
    pub delta: Option<f64>,
    pub p_max: Option<f64>,
    pub texture_spread: Option<usize>,
}

impl SceneFlags {
    /// Resizing the grid resets the region map to the standard layout.
    pub fn apply(&self, base: Option<SceneSpec>) -> Result<SceneSpec, CliError> {
        let mut scene = base.unwrap_or_default();
        if self.height.is_some() || self.width.is_some() {
            scene.height = self.height.unwrap_or(scene.height);
            scene.width = self.width.unwrap_or(scene.width);
            scene.region_map = SceneSpec::default_layout(scene.height, scene.width);
        }
        scene.vocab = self.vocab.unwrap_or(scene.vocab);
        scene.p0 = self.p0.unwrap_or(scene.p0);
        scene.delta = self.delta.unwrap_or(scene.delta);
        scene.p_max = self.p_max.unwrap_or(scene.p_max);
        scene.texture_spread = self.texture_spread.unwrap_or(scene.texture_spread);
        scene.validate()?;
        Ok(scene)
    }
}

/// What a command produced, written next to its outputs.
#[derive(Debug, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub version: &'a str,
    pub seeds: Vec<u64>,
    pub config: &'a RunConfig,
    pub outputs: Vec<String>,
}

impl RunManifest<'_> {
    pub fn write(&self, dir: &Path) -> Result<PathBuf, CliError> {
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
