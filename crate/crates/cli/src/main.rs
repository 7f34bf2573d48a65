use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod error;

use config::{SamplerFlags, SceneFlags};

#[derive(Parser, Debug)]
#[command(name = "enkg", version, about = "Entropy-guided k-guard sampling toolkit")]
struct Cli {
    /// Run seed (default 0).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// JSON config file or a manifest written by an earlier run. Flags win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample one token and print its diagnostics as JSON.
    Sample(SampleArgs),
    /// Roll out the synthetic scene and write trace, CSV, heatmaps and summary.
    Rollout(RolloutArgs),
    /// Run a parameter grid and emit the metrics table.
    Sweep(SweepArgs),
    /// Render the entropy heatmap of one recorded frame.
    Heatmap(HeatmapArgs),
    /// Decode a recorded trace with a sampler.
    Replay(ReplayArgs),
}

#[derive(Args, Debug, Default)]
struct SamplerArgs {
    /// drivingworld (top-k 30), cosmos (top-p 0.8) or greedy.
    #[arg(long)]
    preset: Option<String>,
    /// greedy, temperature, top-k, top-p, top-pk or enkg.
    #[arg(long)]
    strategy: Option<String>,
    #[arg(long)]
    t: Option<f64>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    p: Option<f64>,
    /// ENkG threshold preset: left, mid or right.
    #[arg(long)]
    thresholds: Option<String>,
    #[arg(long)]
    h_low: Option<f64>,
    #[arg(long)]
    h_high: Option<f64>,
    #[arg(long)]
    p_low: Option<f64>,
    #[arg(long)]
    p_high: Option<f64>,
    #[arg(long)]
    k_guard: Option<usize>,
    #[arg(long)]
    n_max: Option<usize>,
}

impl From<&SamplerArgs> for SamplerFlags {
    fn from(a: &SamplerArgs) -> Self {
        SamplerFlags {
            preset: a.preset.clone(),
            strategy: a.strategy.clone(),
            t: a.t,
            k: a.k,
            p: a.p,
            thresholds: a.thresholds.clone(),
            h_low: a.h_low,
            h_high: a.h_high,
            p_low: a.p_low,
            p_high: a.p_high,
            k_guard: a.k_guard,
            n_max: a.n_max,
        }
    }
}

#[derive(Args, Debug)]
struct SampleArgs {
    /// Comma-separated probabilities.
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["uniform", "trace"])]
    probs: Option<Vec<f64>>,
    /// Uniform distribution over this many tokens.
    #[arg(long, conflicts_with = "trace")]
    uniform: Option<usize>,
    /// Read the distribution from a trace cell.
    #[arg(long)]
    trace: Option<PathBuf>,
    #[arg(long)]
    frame: Option<usize>,
    #[arg(long)]
    site: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Args, Debug)]
struct RolloutArgs {
    #[arg(long)]
    frames: Option<usize>,
    /// Advance the scene along the reference trajectory instead of the samples.
    #[arg(long)]
    teacher_forced: bool,
    /// Low-entropy threshold for the collapse report.
    #[arg(long)]
    threshold: Option<f64>,
    /// Pixels per site in the heatmaps.
    #[arg(long)]
    scale: Option<usize>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    vocab: Option<usize>,
    #[arg(long)]
    p0: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    p_max: Option<f64>,
    #[arg(long)]
    texture_spread: Option<usize>,
    #[command(flatten)]
    sampler: SamplerArgs,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Sweep specification (JSON).
    spec: Option<PathBuf>,
    /// Worker threads.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct HeatmapArgs {
    trace: Option<PathBuf>,
    frame: Option<usize>,
    /// Output PPM; defaults to `<out>/frame_<frame>.ppm`.
    output: Option<PathBuf>,
    #[arg(long)]
    height: Option<usize>,
    #[arg(long)]
    width: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    scale: Option<usize>,
}

#[derive(Args, Debug)]
struct ReplayArgs {
    trace: Option<PathBuf>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[command(flatten)]
    sampler: SamplerArgs,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("enkg: {e}");
            e.exit_code()
        }
    }
}

fn run(cli: Cli) -> Result<(), error::CliError> {
    let mut cfg = match &cli.config {
        Some(path) => config::load(path)?,
        None => config::RunConfig::default(),
    };
    if cli.seed.is_some() {
        cfg.seed = cli.seed;
    }
    let out = cli.out;
    match cli.command {
        Command::Sample(a) => {
            if a.probs.is_some() || a.uniform.is_some() || a.trace.is_some() {
                cfg.probs = a.probs;
                cfg.uniform = a.uniform;
                cfg.trace = a.trace;
            }
            cfg.frame = a.frame.or(cfg.frame);
            cfg.site = a.site.or(cfg.site);
            cfg.temperature = a.temperature.or(cfg.temperature);
            cfg.sampler = Some(SamplerFlags::from(&a.sampler).apply(cfg.sampler)?);
            commands::sample(cfg, out.as_deref())
        }
        Command::Rollout(a) => {
            let scene = SceneFlags {
                height: a.height,
                width: a.width,
                vocab: a.vocab,
                p0: a.p0,
                delta: a.delta,
                p_max: a.p_max,
                texture_spread: a.texture_spread,
            };
            cfg.scene = Some(scene.apply(cfg.scene)?);
            cfg.frames = a.frames.or(cfg.frames);
            if a.teacher_forced {
                cfg.teacher_forced = Some(true);
            }
            cfg.threshold = a.threshold.or(cfg.threshold);
            cfg.heatmap_scale = a.scale.or(cfg.heatmap_scale);
            cfg.sampler = Some(SamplerFlags::from(&a.sampler).apply(cfg.sampler)?);
            commands::rollout(cfg, out.as_deref())
        }
        Command::Sweep(a) => {
            if let Some(path) = &a.spec {
                cfg.sweep = Some(commands::load_sweep(path)?);
            }
            cfg.jobs = a.jobs.or(cfg.jobs);
            commands::sweep(cfg, out.as_deref())
        }
        Command::Heatmap(a) => {
            cfg.trace = a.trace.or(cfg.trace);
            cfg.frame = a.frame.or(cfg.frame);
            cfg.height = a.height.or(cfg.height);
            cfg.width = a.width.or(cfg.width);
            cfg.temperature = a.temperature.or(cfg.temperature);
            cfg.heatmap_scale = a.scale.or(cfg.heatmap_scale);
            commands::heatmap(cfg, a.output, out.as_deref())
        }
        Command::Replay(a) => {
            cfg.trace = a.trace.or(cfg.trace);
            cfg.temperature = a.temperature.or(cfg.temperature);
            cfg.threshold = a.threshold.or(cfg.threshold);
            cfg.sampler = Some(SamplerFlags::from(&a.sampler).apply(cfg.sampler)?);
            commands::replay(cfg, out.as_deref())
        }
    }
}
