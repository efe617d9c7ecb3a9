//! Subcommands. Each returns the one-line summary printed on success.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use mcgs_core::gaussian::GaussianField;
use mcgs_core::initializer::{self, InitConfig, PointSource};
use mcgs_core::metrics;
use mcgs_core::pruning::FeatureStack;
use mcgs_core::synthetic::{make_scene, ScenePreset, SceneSpec, BACKGROUND};
use mcgs_core::trainer::{TrainConfig, TrainPreset, Trainer};
use mcgs_core::{CameraView, Renderer};
use nalgebra::Vector3;

use crate::checkpoint::{read_checkpoint, write_checkpoint};
use crate::error::{CliError, CliResult};
use crate::formats::camera::{read_cameras, read_cameras_without_images, write_cameras};
use crate::formats::config::read_config;
use crate::formats::depth::write_depth;
use crate::formats::features::read_features;
use crate::formats::image_io::{read_mask, write_png, write_png16};
use crate::formats::matches::{read_matches, write_matches};
use crate::formats::ply::{read_field, read_seed, write_field, write_seed};
use crate::report::{write_loss_csv, write_report, EvalReport, ViewScore};

/// Environment variable that overrides the configured seed; `--seed` wins over it.
pub const SEED_ENV: &str = "MCGS_SEED";
pub const CHECKPOINT_STEM: &str = "checkpoint";

#[derive(Debug, Parser)]
#[command(name = "mcgs", version, about = "Sparse-view Gaussian splatting trainer")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic scene with cameras, images and oracle matches.
    Synth(SynthArgs),
    /// Triangulate matches and fill empty voxels into a seed cloud.
    Init(InitArgs),
    /// Optimize a Gaussian field from a seed cloud or a checkpoint.
    Train(TrainArgs),
    /// Render colour and depth for one or all cameras.
    Render(RenderArgs),
    /// Score renders against ground-truth images.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "shell")]
    pub preset: String,
    #[arg(long, default_value_t = 100)]
    pub gaussians: usize,
    #[arg(long, default_value_t = 8)]
    pub views: usize,
    #[arg(long, default_value_t = 8)]
    pub heldout: usize,
    #[arg(long, default_value_t = 128)]
    pub size: usize,
    #[arg(long, default_value_t = 300)]
    pub matches: usize,
    /// Standard deviation of the pixel noise added to matches.
    #[arg(long, default_value_t = 0.5)]
    pub noise: f64,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub cameras: PathBuf,
    #[arg(long)]
    pub matches: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub filter_outliers: bool,
    /// Fill candidates; defaults to min(1000 per view, 5000).
    #[arg(long)]
    pub fill: Option<usize>,
    #[arg(long, default_value_t = 32)]
    pub resolution: usize,
    /// `xmin,ymin,zmin,xmax,ymax,zmax`
    #[arg(long)]
    pub bbox: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory holding `cameras.json`.
    #[arg(long, conflicts_with = "cameras")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub cameras: Option<PathBuf>,
    /// Seed cloud PLY; not needed with `--resume`.
    #[arg(long)]
    pub init: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Precomputed feature stack; built from the images when absent.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, default_value = "forward_facing")]
    pub preset: String,
    #[arg(long)]
    pub total_iters: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub no_mvc_prune: bool,
    #[arg(long)]
    pub no_eadr: bool,
    #[arg(long)]
    pub threads: Option<usize>,
    /// Checkpoint JSON to continue from.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Also write `checkpoint_NNNNNN.*` every this many iterations.
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// Field PLY or checkpoint JSON.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub cameras: PathBuf,
    /// Render only this view id.
    #[arg(long)]
    pub view: Option<u32>,
    #[arg(long)]
    pub out: PathBuf,
    /// Write composited depth instead of alpha-normalized depth.
    #[arg(long)]
    pub raw_depth: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub cameras: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory of `NNN.png` masks keyed by view id.
    #[arg(long)]
    pub masks: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    pub fps_renders: usize,
}

pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Synth(a) => synth(&a),
        Command::Init(a) => init(&a),
        Command::Train(a) => train(&a),
        Command::Render(a) => render(&a),
        Command::Eval(a) => eval(&a),
    }
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

pub fn synth(a: &SynthArgs) -> CliResult<String> {
    let preset = ScenePreset::parse(&a.preset)?;
    let spec = SceneSpec::new(preset, a.gaussians, a.views, (a.size, a.size), a.seed).with_heldout(a.heldout);
    let scene = make_scene(&spec)?;
    let matches = initializer::generate_matches(&scene, &scene.views, a.matches, a.noise, a.seed)?;
    create_dir(&a.out)?;
    write_cameras(&a.out, &scene.views)?;
    write_matches(&a.out.join("matches.txt"), &matches)?;
    write_field(&a.out.join("gt.ply"), &scene.gt_field)?;
    if !scene.heldout.is_empty() {
        write_cameras(&a.out.join("heldout"), &scene.heldout)?;
    }
    Ok(format!(
        "views={} heldout={} matches={} gaussians={}",
        scene.views.len(),
        scene.heldout.len(),
        matches.len(),
        scene.gt_field.len()
    ))
}

fn parse_bbox(s: &str) -> CliResult<(Vector3<f64>, Vector3<f64>)> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("--bbox: {e}")))?;
    if v.len() != 6 {
        return Err(CliError::Usage(format!("--bbox needs 6 numbers, got {}", v.len())));
    }
    Ok((Vector3::new(v[0], v[1], v[2]), Vector3::new(v[3], v[4], v[5])))
}

pub fn init(a: &InitArgs) -> CliResult<String> {
    let views = read_cameras(&a.cameras)?;
    let matches = read_matches(&a.matches)?;
    let cfg = InitConfig {
        outlier_filter: a
            .filter_outliers
            .then_some((initializer::DEFAULT_FILTER_K, initializer::DEFAULT_FILTER_STD_RATIO)),
        n_fill: a.fill,
        resolution: a.resolution,
        bbox: a.bbox.as_deref().map(parse_bbox).transpose()?,
        seed: a.seed,
    };
    let cloud = initializer::initialize(&matches, &views, &cfg)?;
    write_seed(&a.out, &cloud)?;
    Ok(format!(
        "matched={} filled={}",
        cloud.count(PointSource::Matched),
        cloud.count(PointSource::Filled)
    ))
}

/// Config file over the preset, then `MCGS_SEED`, then flags.
pub fn train_config(a: &TrainArgs, env_seed: Option<&str>) -> CliResult<TrainConfig> {
    let mut config = TrainConfig::preset(TrainPreset::parse(&a.preset)?);
    if let Some(path) = &a.config {
        config = read_config(path, config)?;
    }
    if let Some(s) = env_seed {
        config.seed = s
            .trim()
            .parse()
            .map_err(|e| CliError::Usage(format!("{SEED_ENV}=`{s}`: {e}")))?;
    }
    if let Some(s) = a.seed {
        config.seed = s;
    }
    if let Some(n) = a.total_iters {
        config = config.with_total_iters(n);
    }
    if a.no_mvc_prune {
        config.mvc_prune = false;
    }
    if a.no_eadr {
        config.eadr = false;
    }
    config.validate()?;
    Ok(config)
}

fn training_views(a: &TrainArgs) -> CliResult<Vec<CameraView>> {
    let path = match (&a.data, &a.cameras) {
        (Some(dir), None) => dir.join("cameras.json"),
        (None, Some(p)) => p.clone(),
        _ => return Err(CliError::Usage("pass exactly one of --data or --cameras".into())),
    };
    read_cameras(&path)
}

pub fn train(a: &TrainArgs) -> CliResult<String> {
    if let Some(n) = a.threads {
        // the global pool can only be built once per process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let env_seed = std::env::var(SEED_ENV).ok();
    let config = train_config(a, env_seed.as_deref())?;
    let views = training_views(a)?;
    let features = match (&a.features, config.mvc_prune) {
        (Some(p), _) => Some(read_features(p)?),
        (None, true) => Some(FeatureStack::from_views(&views, &config.level_dims)?),
        (None, false) => None,
    };
    let mut trainer = match (&a.resume, &a.init) {
        (Some(ckpt), _) => {
            let state = read_checkpoint(ckpt)?;
            if let Some(f) = &features {
                f.check_views(&views)?;
            }
            Trainer {
                config,
                views,
                features,
                renderer: Renderer::default(),
                state,
            }
        }
        (None, Some(seed)) => Trainer::with_features(config, views, &read_seed(seed)?, features)?,
        (None, None) => return Err(CliError::Usage("pass --init or --resume".into())),
    };
    create_dir(&a.out)?;
    while trainer.state.iter < trainer.config.total_iters {
        trainer.step()?;
        if a.checkpoint_every.is_some_and(|k| k > 0 && trainer.state.iter % k == 0) {
            let stem = format!("{CHECKPOINT_STEM}_{:06}", trainer.state.iter);
            write_checkpoint(&a.out, &stem, &trainer.state)?;
        }
    }
    let state = &trainer.state;
    write_field(&a.out.join("final.ply"), &state.field)?;
    write_loss_csv(&a.out.join("loss.csv"), &state.history)?;
    write_checkpoint(&a.out, CHECKPOINT_STEM, state)?;
    let last = state.history.last().map(|r| r.loss.total).unwrap_or(f64::NAN);
    Ok(format!(
        "iters={} gaussians={} prunes={} loss={last:.6}",
        state.iter,
        state.field.len(),
        state.mvc_prunes().count()
    ))
}

/// A field PLY, or the field stored in a checkpoint JSON.
pub fn load_model(path: &Path) -> CliResult<GaussianField> {
    if path.extension().is_some_and(|e| e == "json") {
        Ok(read_checkpoint(path)?.field)
    } else {
        read_field(path)
    }
}

pub fn render(a: &RenderArgs) -> CliResult<String> {
    let field = load_model(&a.model)?;
    let views = read_cameras_without_images(&a.cameras)?;
    let selected: Vec<&CameraView> = match a.view {
        Some(id) => vec![views
            .iter()
            .find(|v| v.view_id == id)
            .ok_or(mcgs_core::Error::UnknownView(id))?],
        None => views.iter().collect(),
    };
    create_dir(&a.out)?;
    let renderer = Renderer::default();
    for v in &selected {
        let out = renderer.render(&field, v, BACKGROUND).output;
        let depth = if a.raw_depth { &out.depth } else { &out.depth_normalized };
        let id = v.view_id;
        write_png(&a.out.join(format!("{id:03}.png")), &out.color)?;
        write_png16(&a.out.join(format!("{id:03}_depth.png")), depth)?;
        write_depth(&a.out.join(format!("{id:03}_depth.bin")), depth)?;
    }
    Ok(format!("rendered={} gaussians={}", selected.len(), field.len()))
}

pub fn eval(a: &EvalArgs) -> CliResult<String> {
    let field = load_model(&a.model)?;
    let views = read_cameras(&a.cameras)?;
    let renderer = Renderer::default();
    let mut scores = Vec::with_capacity(views.len());
    for v in &views {
        let mut rendered = renderer.render(&field, v, BACKGROUND).output.color;
        let mut target = v.image.clone();
        if let Some(dir) = &a.masks {
            let mask = read_mask(&dir.join(format!("{:03}.png", v.view_id)))?;
            rendered = rendered.masked(&mask)?;
            target = target.masked(&mask)?;
        }
        scores.push(ViewScore {
            view_id: v.view_id,
            psnr: metrics::psnr(&rendered, &target)?,
            ssim: metrics::ssim(&rendered, &target)?,
        });
    }
    let fps = match views.first() {
        Some(v) if a.fps_renders > 0 => {
            let start = Instant::now();
            for _ in 0..a.fps_renders {
                std::hint::black_box(renderer.render(&field, v, BACKGROUND));
            }
            a.fps_renders as f64 / start.elapsed().as_secs_f64().max(1e-9)
        }
        _ => 0.0,
    };
    let report = EvalReport::new(scores, field.len(), fps, a.masks.is_some());
    if let Some(dir) = a.out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    write_report(&a.out, &report)?;
    Ok(format!(
        "psnr={:.4} ssim={:.4} gaussians={} fps={fps:.1}",
        report.mean_psnr, report.mean_ssim, report.n_gaussians
    ))
}
