use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use enkg_core::diagnostics::{render_heatmap, DEFAULT_LOW_ENTROPY_THRESHOLD};
use enkg_core::simulator::{build_scene, rollout as run_rollout, freeze_rate, RolloutConfig};
use enkg_core::sweep::{run_sweep, Scenario, SweepSpec};
use enkg_core::trace::{self, LogitTrace};
use enkg_core::{ProbabilityDistribution, RngState};
use serde_json::json;

use crate::config::{RunConfig, RunManifest};
use crate::error::CliError;

const DEFAULT_OUT: &str = "enkg-out";
const DEFAULT_FRAMES: usize = 50;

fn out_dir(out: Option<&Path>) -> Result<PathBuf, CliError> {
    let dir = out.map_or_else(|| PathBuf::from(DEFAULT_OUT), Path::to_path_buf);
    fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    Ok(dir)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("json value serializes");
    text.push('\n');
    write_file(path, text.as_bytes())
}

fn read_trace_file(path: &Path) -> Result<LogitTrace, CliError> {
    let file = File::open(path).map_err(|e| CliError::io(path, e))?;
    Ok(trace::read_trace(BufReader::new(file))?)
}

fn require<T>(value: Option<T>, what: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Config(format!("missing {what}")))
}

fn check_frame(trace: &LogitTrace, frame: usize) -> Result<(), CliError> {
    if frame >= trace.frames() {
        return Err(CliError::Config(format!("frame {frame} out of range (trace has {})", trace.frames())));
    }
    Ok(())
}

fn file_name(path: &Path) -> String {
    path.file_name().map_or_else(String::new, |n| n.to_string_lossy().into_owned())
}

pub fn sample(cfg: RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let sampler = cfg.sampler.unwrap_or_default();
    let seed = cfg.seed.unwrap_or(0);
    let temperature = cfg.temperature.unwrap_or(1.0);
    let dist = match (&cfg.probs, cfg.uniform, &cfg.trace) {
        (Some(probs), _, _) => ProbabilityDistribution::new(probs.clone())?,
        (None, Some(vocab), _) => ProbabilityDistribution::uniform(vocab)?,
        (None, None, Some(path)) => {
            let trace = read_trace_file(path)?;
            let frame = cfg.frame.unwrap_or(0);
            let site = cfg.site.unwrap_or(0);
            check_frame(&trace, frame)?;
            if site >= trace.sites() {
                return Err(CliError::Config(format!("site {site} out of range (trace has {})", trace.sites())));
            }
            trace.distribution(frame, site, temperature)?
        }
        (None, None, None) => return Err(CliError::Config("give --probs, --uniform or --trace".into())),
    };
    let (token, diag) = sampler.sample(&dist, &mut RngState::from_seed(seed))?;
    let line = json!({
        "token": token,
        "h_norm": diag.normalized_entropy,
        "p_target": diag.p_target,
        "cutoff": diag.cutoff,
        "guard_triggered": diag.guard_triggered,
    });
    println!("{line}");
    if let Some(dir) = out {
        let dir = out_dir(Some(dir))?;
        let path = dir.join("sample.json");
        write_json(&path, &line)?;
        let resolved = RunConfig { seed: Some(seed), sampler: Some(sampler), ..cfg };
        let manifest = RunManifest {
            command: "sample",
            version: env!("CARGO_PKG_VERSION"),
            seeds: vec![seed],
            config: &resolved,
            outputs: vec![file_name(&path)],
        };
        manifest.write(&dir)?;
    }
    Ok(())
}

pub fn rollout(cfg: RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let resolved = RunConfig {
        seed: Some(cfg.seed.unwrap_or(0)),
        frames: Some(cfg.frames.unwrap_or(DEFAULT_FRAMES)),
        teacher_forced: Some(cfg.teacher_forced.unwrap_or(false)),
        threshold: Some(cfg.threshold.unwrap_or(DEFAULT_LOW_ENTROPY_THRESHOLD)),
        heatmap_scale: Some(cfg.heatmap_scale.unwrap_or(1)),
        sampler: Some(cfg.sampler.unwrap_or_default()),
        scene: Some(cfg.scene.clone().unwrap_or_default()),
        ..cfg
    };
    let scene = resolved.scene.as_ref().unwrap();
    let seed = resolved.seed.unwrap();
    let config = RolloutConfig {
        frames: resolved.frames.unwrap(),
        sampler: resolved.sampler.unwrap(),
        seed,
        teacher_forced: resolved.teacher_forced.unwrap(),
    };
    let (model, state) = build_scene(scene, seed)?;
    let result = run_rollout(&model, &state, &config)?;
    let report = result.collapse_report(resolved.threshold.unwrap())?;

    let dir = out_dir(out)?;
    let mut outputs = Vec::new();

    let trace_path = dir.join("rollout.lgtr");
    let file = File::create(&trace_path).map_err(|e| CliError::io(&trace_path, e))?;
    let mut sink = BufWriter::new(file);
    trace::write_trace(&result.to_trace()?, &mut sink)?;
    sink.flush().map_err(|e| CliError::io(&trace_path, e))?;
    outputs.push(file_name(&trace_path));

    let csv_path = dir.join("collapse.csv");
    write_file(&csv_path, report.to_csv()?.as_bytes())?;
    outputs.push(file_name(&csv_path));

    let heat_dir = dir.join("heatmaps");
    fs::create_dir_all(&heat_dir).map_err(|e| CliError::io(&heat_dir, e))?;
    for grid in &result.entropy_grids {
        let path = heat_dir.join(format!("frame_{:04}.ppm", grid.frame_index));
        write_file(&path, &render_heatmap(grid, resolved.heatmap_scale.unwrap()).to_ppm())?;
        outputs.push(format!("heatmaps/{}", file_name(&path)));
    }

    let last = report.frames() - 1;
    let summary = json!({
        "strategy": config.sampler.label(),
        "seed": seed,
        "frames": config.frames,
        "freeze_rate": result.drift.freeze_rate,
        "mismatch_rate": result.drift.mismatch_rate,
        "final_frame_avg_entropy": report.frame_avg_entropy[last],
        "final_low_entropy_share": report.low_entropy_share[last],
    });
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    outputs.push(file_name(&summary_path));
    println!("{summary}");

    let manifest = RunManifest {
        command: "rollout",
        version: env!("CARGO_PKG_VERSION"),
        seeds: vec![seed],
        config: &resolved,
        outputs,
    };
    manifest.write(&dir)?;
    Ok(())
}

/// Read a sweep spec; a relative trace scenario is re-rooted at the spec's
/// directory so the resolved spec works from anywhere.
pub fn load_sweep(path: &Path) -> Result<SweepSpec, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut spec = SweepSpec::from_json(&text)?;
    if let Scenario::Trace(trace) = &mut spec.scenario {
        if trace.is_relative() {
            *trace = path.parent().unwrap_or(Path::new("")).join(&*trace);
        }
    }
    Ok(spec)
}

pub fn sweep(cfg: RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let spec = require(cfg.sweep.clone(), "sweep spec (positional path or \"sweep\" in --config)")?;
    let jobs = cfg.jobs.unwrap_or(1);
    let table = run_sweep(&spec, Path::new("."), jobs)?;
    let csv = table.to_csv()?;
    match out {
        None => print!("{csv}"),
        Some(dir) => {
            let dir = out_dir(Some(dir))?;
            let path = dir.join("sweep.csv");
            write_file(&path, csv.as_bytes())?;
            let resolved = RunConfig { jobs: Some(jobs), ..cfg };
            let manifest = RunManifest {
                command: "sweep",
                version: env!("CARGO_PKG_VERSION"),
                seeds: spec.seeds.clone(),
                config: &resolved,
                outputs: vec![file_name(&path)],
            };
            manifest.write(&dir)?;
        }
    }
    Ok(())
}

/// Near-square layout when the grid shape is not given.
fn infer_shape(sites: usize, height: Option<usize>, width: Option<usize>) -> Result<(usize, usize), CliError> {
    let shape = match (height, width) {
        (Some(h), Some(w)) => (h, w),
        (Some(h), None) if h > 0 && sites.is_multiple_of(h) => (h, sites / h),
        (None, Some(w)) if w > 0 && sites.is_multiple_of(w) => (sites / w, w),
        (None, None) => {
            let side = (sites as f64).sqrt().round() as usize;
            if side * side == sites {
                (side, side)
            } else {
                (1, sites)
            }
        }
        _ => return Err(CliError::Config(format!("grid shape does not divide {sites} sites"))),
    };
    if shape.0 * shape.1 != sites {
        return Err(CliError::Config(format!("{}x{} grid does not match {sites} sites", shape.0, shape.1)));
    }
    Ok(shape)
}

pub fn heatmap(cfg: RunConfig, output: Option<PathBuf>, out: Option<&Path>) -> Result<(), CliError> {
    let trace_path = require(cfg.trace.clone(), "trace path")?;
    let frame = require(cfg.frame, "frame index")?;
    let trace = read_trace_file(&trace_path)?;
    check_frame(&trace, frame)?;
    let (height, width) = infer_shape(trace.sites(), cfg.height, cfg.width)?;
    let temperature = cfg.temperature.unwrap_or(1.0);
    let scale = cfg.heatmap_scale.unwrap_or(1);
    let grid = trace::frame_entropy_grid(&trace, frame, height, width, temperature)?;
    let image = render_heatmap(&grid, scale);
    let path = match output {
        Some(p) => p,
        None => out_dir(out)?.join(format!("frame_{frame:04}.ppm")),
    };
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    write_file(&path, &image.to_ppm())?;
    if let Some(dir) = out {
        let resolved = RunConfig {
            height: Some(height),
            width: Some(width),
            temperature: Some(temperature),
            heatmap_scale: Some(scale),
            ..cfg
        };
        let manifest = RunManifest {
            command: "heatmap",
            version: env!("CARGO_PKG_VERSION"),
            seeds: Vec::new(),
            config: &resolved,
            outputs: vec![path.display().to_string()],
        };
        manifest.write(&out_dir(Some(dir))?)?;
    }
    Ok(())
}

pub fn replay(cfg: RunConfig, out: Option<&Path>) -> Result<(), CliError> {
    let resolved = RunConfig {
        seed: Some(cfg.seed.unwrap_or(0)),
        temperature: Some(cfg.temperature.unwrap_or(1.0)),
        threshold: Some(cfg.threshold.unwrap_or(DEFAULT_LOW_ENTROPY_THRESHOLD)),
        sampler: Some(cfg.sampler.unwrap_or_default()),
        ..cfg
    };
    let trace_path = require(resolved.trace.clone(), "trace path")?;
    let trace = read_trace_file(&trace_path)?;
    let sampler = resolved.sampler.unwrap();
    let seed = resolved.seed.unwrap();
    let result = trace::replay(&trace, &sampler, resolved.temperature.unwrap(), seed, resolved.threshold.unwrap())?;

    let dir = out_dir(out)?;
    let tokens_path = dir.join("tokens.csv");
    let mut tokens = String::from("frame,site,token\n");
    for (t, frame) in result.tokens.iter().enumerate() {
        for (i, tok) in frame.iter().enumerate() {
            tokens.push_str(&format!("{t},{i},{tok}\n"));
        }
    }
    write_file(&tokens_path, tokens.as_bytes())?;
    let csv_path = dir.join("collapse.csv");
    write_file(&csv_path, result.report.to_csv()?.as_bytes())?;

    let last = result.report.frames() - 1;
    let summary = json!({
        "strategy": sampler.label(),
        "seed": seed,
        "frames": trace.frames(),
        "freeze_rate": freeze_rate(&result.tokens),
        "final_frame_avg_entropy": result.report.frame_avg_entropy[last],
        "final_low_entropy_share": result.report.low_entropy_share[last],
    });
    let summary_path = dir.join("summary.json");
    write_json(&summary_path, &summary)?;
    println!("{summary}");

    let manifest = RunManifest {
        command: "replay",
        version: env!("CARGO_PKG_VERSION"),
        seeds: vec![seed],
        config: &resolved,
        outputs: [&tokens_path, &csv_path, &summary_path].iter().map(|p| file_name(p)).collect(),
    };
    manifest.write(&dir)?;
    Ok(())
}
