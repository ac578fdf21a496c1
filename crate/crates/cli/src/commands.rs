use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fusplat::cma::{cma_forward, load_cma, CmaParameters};
use fusplat::dataio::{
    generate_synthetic_with, load_dataset, read_image_rgb, write_image, BitDepth, DatasetIndex, Split, SyntheticConfig,
    TrainingView,
};
use fusplat::evalmetrics::{evaluate_fused, EvalOptions, Report};
use fusplat::optimizer::{
    initial_scene, read_marker, train_stage1, train_stage2, TrainConfig, CMA_FILE, SCENE_FILE, STAGE1_MARKER, STAGE2_MARKER,
};
use fusplat::rasterizer::{render_fused, render_single, RenderSettings};
use fusplat::scene::load_scene;
use fusplat::{Error, Image, Real, Scene};

#[derive(Debug, Parser)]
#[command(name = "fusplat", version, about = "Infrared/visible Gaussian splatting with fused rendering")]
pub struct Cli {
    /// Worker threads for rendering and loss evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic paired dataset with known ground truth.
    Synth(SynthArgs),
    /// Reconstruct one Gaussian set per modality.
    TrainStage1(Stage1Args),
    /// Train the opacity modulator on a frozen stage-1 scene.
    TrainStage2(Stage2Args),
    /// Render fused or per-modality images.
    Render(RenderArgs),
    /// Score rendered images against the dataset's visible and infrared images.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 12)]
    views: usize,
    #[arg(long, default_value_t = 30)]
    gaussians: usize,
    #[arg(long, default_value_t = 128)]
    width: u32,
    #[arg(long, default_value_t = 128)]
    height: u32,
    /// Hold out every k-th view for testing (0: none).
    #[arg(long, default_value_t = 4)]
    test_every: usize,
}

#[derive(Debug, Args)]
struct Stage1Args {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 15_000)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    sh_degree: usize,
    /// Random initial points when the manifest lists none.
    #[arg(long, default_value_t = 1000)]
    init_points: usize,
    #[arg(long, default_value_t = 1.6e-4)]
    lr_position: f64,
    #[arg(long, default_value_t = 1.6e-6)]
    lr_position_final: f64,
    #[arg(long, default_value_t = 2.5e-3)]
    lr_sh: f64,
    #[arg(long, default_value_t = 5e-2)]
    lr_opacity: f64,
    #[arg(long, default_value_t = 5e-3)]
    lr_scale: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr_rotation: f64,
    #[arg(long)]
    no_densify: bool,
    #[arg(long, default_value_t = 500)]
    densify_from: usize,
    /// Default: half of --iters.
    #[arg(long)]
    densify_until: Option<usize>,
    #[arg(long, default_value_t = 100)]
    densify_interval: usize,
    #[arg(long, default_value_t = 2e-4)]
    grad_threshold: f64,
    #[arg(long, default_value_t = 0.005)]
    min_opacity: f64,
    /// Intermediate checkpoint interval in iterations (0: final only).
    #[arg(long, default_value_t = 0)]
    checkpoint_interval: usize,
}

#[derive(Debug, Args)]
struct Stage2Args {
    #[arg(long)]
    data: PathBuf,
    /// Stage-1 output directory or scene PLY.
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 15_000)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1.0)]
    lambda1: f64,
    #[arg(long, default_value_t = 2.0)]
    lambda2: f64,
    #[arg(long, default_value_t = 1e-3)]
    lr_cma: f64,
    #[arg(long, default_value_t = 64)]
    hidden1: usize,
    #[arg(long, default_value_t = 64)]
    hidden2: usize,
    #[arg(long, default_value_t = 0.01)]
    leaky_slope: f64,
    /// Also fine-tune SH coefficients and opacities (writes a new scene.ply).
    #[arg(long)]
    finetune: bool,
    #[arg(long, default_value_t = 0)]
    checkpoint_interval: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum RenderModality {
    /// Both sets with the modulator's weights.
    Fused,
    /// Both sets with every weight equal to one.
    Multimodal,
    Visible,
    Infrared,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SplitArg {
    Train,
    Test,
    All,
}

impl SplitArg {
    fn filter(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Test => Some(Split::Test),
            SplitArg::All => None,
        }
    }
}

#[derive(Debug, Args)]
struct RenderArgs {
    /// Dataset whose camera poses are rendered.
    #[arg(long)]
    data: PathBuf,
    /// Stage-1 (or fine-tuned stage-2) directory, or a scene PLY.
    #[arg(long)]
    scene: PathBuf,
    /// Stage-2 directory or modulator checkpoint; required for fused renders
    /// without --tau-override.
    #[arg(long)]
    cma: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = RenderModality::Fused)]
    modality: RenderModality,
    /// Use this constant weight for every primitive instead of the modulator.
    #[arg(long)]
    tau_override: Option<f64>,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    /// Comma-separated view names (overrides --split).
    #[arg(long, value_delimiter = ',')]
    views: Option<Vec<String>>,
    /// Also write unquantized `<view>.f32` dumps next to the PNGs.
    #[arg(long)]
    raw: bool,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Directory holding `<view>.png` renders.
    #[arg(long)]
    renders: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    split: SplitArg,
    /// Quantize all images to 8 bits before scoring.
    #[arg(long)]
    quantized: bool,
    /// Scene label in the report (default: dataset directory name).
    #[arg(long)]
    label: Option<String>,
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Error::InvalidParameter("--threads must be positive".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Synth(a) => synth(a),
        Command::TrainStage1(a) => stage1(a),
        Command::TrainStage2(a) => stage2(a),
        Command::Render(a) => render(a),
        Command::Evaluate(a) => evaluate(a),
    }
}

fn synth(a: SynthArgs) -> Result<()> {
    let config = SyntheticConfig {
        seed: a.seed,
        n_views: a.views,
        n_gaussians: a.gaussians,
        width: a.width,
        height: a.height,
        test_every: a.test_every,
        ..SyntheticConfig::default()
    };
    let (index, _) = generate_synthetic_with::<Real>(&config, &a.out)?;
    println!("wrote {} views to {}", index.views.len(), a.out.display());
    Ok(())
}

fn open_dataset(root: &Path) -> Result<DatasetIndex<Real>> {
    Ok(load_dataset(root)?)
}

fn train_views(index: &DatasetIndex<Real>) -> Result<Vec<TrainingView<Real>>> {
    let views = index.load_views(Some(Split::Train))?;
    if views.is_empty() {
        return Err(Error::Dataset(format!("{} has no training views", index.root.display())).into());
    }
    Ok(views)
}

fn stage1(a: Stage1Args) -> Result<()> {
    let mut config = TrainConfig {
        seed: a.seed,
        stage1_iters: a.iters,
        sh_degree: a.sh_degree,
        random_init_points: a.init_points,
        ..TrainConfig::default()
    };
    config.lr.position_init = a.lr_position;
    config.lr.position_final = a.lr_position_final;
    config.lr.sh_dc = a.lr_sh;
    config.lr.opacity = a.lr_opacity;
    config.lr.scale = a.lr_scale;
    config.lr.rotation = a.lr_rotation;
    config.densify.enabled = !a.no_densify;
    config.densify.from_iter = a.densify_from;
    config.densify.until_iter = a.densify_until;
    config.densify.interval = a.densify_interval;
    config.densify.grad_threshold = a.grad_threshold;
    config.densify.min_opacity = a.min_opacity;
    config.checkpoint.dir = Some(a.out.clone());
    config.checkpoint.interval = a.checkpoint_interval;
    config.validate()?;
    let index = open_dataset(&a.data)?;
    let views = train_views(&index)?;
    let init = initial_scene(&views, &index.points, &config)?;
    let result = train_stage1(&views, init, &config)?;
    let last = result.curve.last().expect("at least one iteration");
    println!(
        "stage 1 done: {} visible / {} infrared primitives, final loss {:.5}, psnr {:.2} / {:.2} dB",
        result.scene.visible.len(),
        result.scene.infrared.len(),
        last.loss,
        last.psnr_visible,
        last.psnr_infrared
    );
    Ok(())
}

/// Resolves a directory argument to `dir/file`, checking the stage marker.
fn resolve(path: &Path, file: &str, marker: &str) -> Result<PathBuf> {
    if !path.is_dir() {
        if !path.exists() {
            return Err(Error::Checkpoint(format!("{} does not exist", path.display())).into());
        }
        return Ok(path.to_path_buf());
    }
    match read_marker(path, marker)? {
        Some(m) if m.complete => Ok(path.join(file)),
        Some(m) => Err(Error::Checkpoint(format!(
            "{} holds an unfinished checkpoint (iteration {})",
            path.display(),
            m.iteration
        ))
        .into()),
        None => Err(Error::Checkpoint(format!("{} has no {marker}", path.display())).into()),
    }
}

fn open_scene(path: &Path) -> Result<Scene> {
    let file = if path.is_dir() && path.join(STAGE2_MARKER).exists() && path.join(SCENE_FILE).exists() {
        resolve(path, SCENE_FILE, STAGE2_MARKER)?
    } else {
        resolve(path, SCENE_FILE, STAGE1_MARKER)?
    };
    Ok(load_scene(&file)?)
}

fn open_cma(path: &Path, scene: &Scene) -> Result<CmaParameters<Real>> {
    let cma: CmaParameters<Real> = load_cma(&resolve(path, CMA_FILE, STAGE2_MARKER)?)?;
    if cma.d_c != scene.sh_dim() {
        return Err(Error::Shape(format!(
            "modulator expects {} SH coefficients per primitive, scene has {} (degree {})",
            cma.d_c,
            scene.sh_dim(),
            scene.sh_degree
        ))
        .into());
    }
    Ok(cma)
}

fn stage2(a: Stage2Args) -> Result<()> {
    let mut config = TrainConfig {
        seed: a.seed,
        stage2_iters: a.iters,
        lambda1: a.lambda1,
        lambda2: a.lambda2,
        cma_hidden: (a.hidden1, a.hidden2),
        stage2_finetune: a.finetune,
        ..TrainConfig::default()
    };
    config.lr.cma = a.lr_cma;
    config.cma.leaky_slope = a.leaky_slope;
    config.checkpoint.dir = Some(a.out.clone());
    config.checkpoint.interval = a.checkpoint_interval;
    config.validate()?;
    let scene = open_scene(&a.scene)?;
    config.sh_degree = scene.sh_degree;
    let index = open_dataset(&a.data)?;
    let views = train_views(&index)?;
    let result = train_stage2(&scene, &views, &config)?;
    let last = result.curve.last().expect("at least one iteration");
    println!("stage 2 done: final loss {:.5}, mean tau {:.4}", last.loss, last.mean_tau);
    Ok(())
}

fn write_raw(path: &Path, img: &Image) -> Result<()> {
    let mut bytes = Vec::with_capacity(20 + img.data.len() * 4);
    bytes.extend_from_slice(b"FSPLIMG\0");
    for d in [img.width, img.height, img.channels] {
        bytes.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in &img.data {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    std::fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn render(a: RenderArgs) -> Result<()> {
    let scene = open_scene(&a.scene)?;
    let index = open_dataset(&a.data)?;
    let selected: Vec<_> = match &a.views {
        Some(names) => names
            .iter()
            .map(|n| {
                index
                    .views
                    .iter()
                    .find(|v| &v.name == n)
                    .ok_or_else(|| Error::Dataset(format!("view '{n}' is not in {}", index.root.display())))
            })
            .collect::<Result<_, _>>()?,
        None => index.views_in(a.split.filter()).collect(),
    };
    if let Some(t) = a.tau_override {
        if !(0.0..=1.0).contains(&t) {
            bail!(Error::InvalidParameter(format!("--tau-override must lie in [0, 1], got {t}")));
        }
    }
    let tau: Vec<Real> = match (a.modality, a.tau_override) {
        (RenderModality::Fused | RenderModality::Multimodal, Some(t)) => vec![t as Real; scene.len()],
        (RenderModality::Multimodal, None) => vec![1.0; scene.len()],
        (RenderModality::Fused, None) => {
            let path = a
                .cma
                .as_deref()
                .ok_or_else(|| Error::InvalidParameter("fused rendering needs --cma or --tau-override".into()))?;
            cma_forward(&open_cma(path, &scene)?, &scene)?
        }
        _ => Vec::new(),
    };
    let settings = RenderSettings::default();
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for view in &selected {
        let image = match a.modality {
            RenderModality::Visible => render_single(&scene.visible, scene.sh_degree, &view.camera, &settings)?.image,
            RenderModality::Infrared => render_single(&scene.infrared, scene.sh_degree, &view.camera, &settings)?.image,
            _ => render_fused(&scene, &view.camera, &tau, &settings)?.image,
        };
        write_image(&a.out.join(format!("{}.png", view.name)), &image, BitDepth::Eight)?;
        if a.raw {
            write_raw(&a.out.join(format!("{}.f32", view.name)), &image)?;
        }
    }
    println!("rendered {} views to {}", selected.len(), a.out.display());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let index = open_dataset(&a.data)?;
    let options = EvalOptions { quantized: a.quantized };
    let label = a.label.clone().unwrap_or_else(|| {
        index
            .root
            .canonicalize()
            .ok()
            .and_then(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .unwrap_or_else(|| "scene".into())
    });
    let mut scores = Vec::new();
    for view in index.views_in(a.split.filter()) {
        let render_path = a.renders.join(format!("{}.png", view.name));
        let (fused, _) = read_image_rgb::<Real>(&render_path)?;
        let (visible, _) = read_image_rgb::<Real>(&view.visible_path)?;
        let (infrared, _) = read_image_rgb::<Real>(&view.infrared_path)?;
        scores.push(evaluate_fused(&fused, &visible, &infrared, options)?.labelled(&label, &view.name));
    }
    if scores.is_empty() {
        return Err(Error::Dataset(format!("no views selected in {}", index.root.display())).into());
    }
    let report = Report::new(scores, options);
    report.write(&a.out)?;
    print!("{}", report.table());
    Ok(())
}
