use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use crossview::attention::{linear_attention, quadratic_attention, AttentionMode};
use crossview::costvolume::FusionMode;
use crossview::harness::{
    evaluate_clouds, format_report, generate_scene, load_scene_dir, read_ply, report_json, run_pipeline,
    write_outputs, write_scene_dir, PipelineConfig, SceneData,
};
use crossview::losses::run_gradient_suite;
use crossview::numerics::{SeededRng, Tensor};

/// Multi-view depth estimation on synthetic and on-disk scenes.
#[derive(Parser, Debug)]
#[command(name = "crossview", version)]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

/// Settings that override the config file.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// TOML config; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seeds the network weights and the synthetic texture.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Where `synth` writes the scene and `run` writes results.
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// `squared` or `literal`.
    #[arg(long, global = true)]
    fusion_mode: Option<FusionMode>,
    /// Attention outputs divided by the kernel normaliser (the default).
    #[arg(long, global = true, conflicts_with = "attention_literal")]
    attention_normalized: bool,
    /// Attention numerator only, without normalisation.
    #[arg(long, global = true)]
    attention_literal: bool,
    /// `none`, a preset `a`–`e`, or `s1=i,j s2=i,j s3=i,j` (intra, inter).
    #[arg(long, global = true)]
    amt_schedule: Option<String>,
    /// Probability straight from the cost, without the 3-D U-Net.
    #[arg(long, global = true)]
    unet_bypass: bool,
    /// Raw luminance instead of the feature pyramid.
    #[arg(long, global = true)]
    identity_features: bool,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render a synthetic scene: images, cameras and ground-truth depth.
    Synth,
    /// Estimate depth for every view of a scene and fuse a point cloud.
    Run {
        /// Scene directory as written by `synth`; rendered in memory if absent.
        #[arg(long)]
        scene: Option<PathBuf>,
        /// Also print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Accuracy / completeness of one point cloud against another.
    Eval {
        prediction: PathBuf,
        ground_truth: PathBuf,
        /// Outlier distance in mm; defaults to the config value.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Check analytic loss gradients against central differences.
    Gradcheck {
        #[arg(long, default_value_t = 10)]
        instances: usize,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
    },
    /// Time linear against quadratic attention as the token count grows.
    BenchAttention {
        #[arg(long, value_delimiter = ',', default_value = "256,512,1024,2048")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 32)]
        channels: usize,
        #[arg(long, default_value_t = 3)]
        repeats: usize,
    },
}

impl Overrides {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
            cfg.scene.seed = seed;
        }
        if let Some(dir) = &self.output_dir {
            cfg.paths.output_dir = Some(dir.clone());
        }
        if let Some(mode) = self.fusion_mode {
            cfg.pipeline.cost_fusion = mode;
        }
        if self.attention_normalized {
            cfg.attention.mode = AttentionMode::Normalized;
        }
        if self.attention_literal {
            cfg.attention.mode = AttentionMode::Literal;
        }
        if let Some(s) = &self.amt_schedule {
            cfg.attention.schedule = s.clone();
        }
        cfg.pipeline.unet_bypass |= self.unet_bypass;
        cfg.pipeline.identity_features |= self.identity_features;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn output_dir(cfg: &PipelineConfig, fallback: &str) -> PathBuf {
    cfg.paths.output_dir.clone().unwrap_or_else(|| PathBuf::from(fallback))
}

fn synth(cfg: &PipelineConfig) -> Result<()> {
    let dir = output_dir(cfg, "scene");
    let scene = generate_scene(&cfg.scene)?;
    write_scene_dir(&scene, &dir)?;
    println!("wrote {} views to {}", scene.cameras.len(), dir.display());
    Ok(())
}

fn run(cfg: &PipelineConfig, scene: Option<&Path>, json: bool) -> Result<()> {
    let data = match scene.or(cfg.paths.scene_dir.as_deref()) {
        Some(dir) => load_scene_dir(dir).with_context(|| format!("loading scene from {}", dir.display()))?,
        None => SceneData::from(&generate_scene(&cfg.scene)?),
    };
    let started = Instant::now();
    let out = run_pipeline(&data, cfg)?;
    log::info!("pipeline finished in {:.2} s", started.elapsed().as_secs_f64());
    let dir = output_dir(cfg, "out");
    let written = write_outputs(&out, &dir)?;
    print!("{}", format_report(&out));
    if json {
        println!("{}", report_json(&out));
    }
    println!("wrote {} files to {}", written.len(), dir.display());
    Ok(())
}

fn eval(cfg: &PipelineConfig, pred: &Path, gt: &Path, threshold: Option<f64>) -> Result<()> {
    let pred = read_ply(pred)?;
    let gt = read_ply(gt)?;
    let m = evaluate_clouds(&pred, &gt, threshold.unwrap_or(cfg.evaluation.inlier_threshold))?;
    println!("accuracy = {}", m.accuracy);
    println!("completeness = {}", m.completeness);
    println!("overall = {}", m.overall);
    println!("inlier_threshold = {}", m.inlier_threshold);
    Ok(())
}

fn gradcheck(cfg: &PipelineConfig, instances: usize, tolerance: f64) -> Result<bool> {
    let r = run_gradient_suite(instances, cfg.seed)?;
    println!("instances = {}  step = {:e}", r.instances, r.step);
    println!("{:>4}  {:>12}  {:>12}", "#", "ce rel err", "fm rel err");
    for (i, (ce, fm)) in r.ce.iter().zip(&r.fm).enumerate() {
        println!("{i:>4}  {ce:>12.3e}  {fm:>12.3e}");
    }
    let ok = r.passed(tolerance);
    println!(
        "max ce {:.3e}, fm {:.3e}: {}",
        r.ce_max(),
        r.fm_max(),
        if ok { "ok" } else { "FAILED" }
    );
    Ok(ok)
}

fn bench_attention(cfg: &PipelineConfig, sizes: &[usize], channels: usize, repeats: usize) -> Result<()> {
    if sizes.is_empty() || channels == 0 || repeats == 0 {
        bail!("need at least one size, one channel and one repeat");
    }
    let mut rng = SeededRng::new(cfg.seed);
    let mut random = |n: usize| Tensor::from_fn(&[n, channels], |_| 2.0 * rng.next_uniform() - 1.0);
    let best = |f: &dyn Fn() -> crossview::Result<Tensor>| -> Result<f64> {
        let mut t = f64::INFINITY;
        for _ in 0..repeats {
            let start = Instant::now();
            std::hint::black_box(f()?);
            t = t.min(start.elapsed().as_secs_f64());
        }
        Ok(t)
    };
    println!("{:>6}  {:>12}  {:>12}  {:>8}  {:>8}", "n", "linear ms", "quadratic ms", "lin ×", "quad ×");
    let mut prev: Option<(f64, f64)> = None;
    for &n in sizes {
        let (q, k, v) = (random(n), random(n), random(n));
        let lin = best(&|| linear_attention(&q, &k, &v, cfg.attention.mode))?;
        let quad = best(&|| quadratic_attention(&q, &k, &v, cfg.attention.mode))?;
        let ratio = |now: f64, before: Option<f64>| before.map_or("-".to_string(), |b| format!("{:.2}", now / b));
        println!(
            "{n:>6}  {:>12.3}  {:>12.3}  {:>8}  {:>8}",
            lin * 1e3,
            quad * 1e3,
            ratio(lin, prev.map(|p| p.0)),
            ratio(quad, prev.map(|p| p.1)),
        );
        prev = Some((lin, quad));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = cli.overrides.config().and_then(|cfg| match &cli.command {
        Command::Synth => synth(&cfg).map(|_| true),
        Command::Run { scene, json } => run(&cfg, scene.as_deref(), *json).map(|_| true),
        Command::Eval {
            prediction,
            ground_truth,
            threshold,
        } => eval(&cfg, prediction, ground_truth, *threshold).map(|_| true),
        Command::Gradcheck { instances, tolerance } => gradcheck(&cfg, *instances, *tolerance),
        Command::BenchAttention {
            sizes,
            channels,
            repeats,
        } => bench_attention(&cfg, sizes, *channels, *repeats).map(|_| true),
    });
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
