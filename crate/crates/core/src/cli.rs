//! Command-line entry point.
//!
//! Each command takes an optional JSON config file; explicit flags override
//! its fields, and missing fields fall back to defaults. Every output
//! directory receives a `run.json` record of the effective configuration.

use std::ffi::OsString;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::background::{train_background, BackgroundConfig, BackgroundModel};
use crate::data::loader::{load_background_training, load_object_store, read_manifest};
use crate::data::toy::{self, ToySource};
use crate::data::Split;
use crate::eval::classifier::{ClassifierConfig, ImageClassifier};
use crate::eval::extract::{FeatureExtractor, PixelPca};
use crate::eval::{evaluate, EvalInputs};
use crate::imaging::{ColorImage, EdgeImage};
use crate::layers::sub_seed;
use crate::model::{train_object_model, Ablation, ObjectModel, OptimizerKind, TrainConfig, TrainOptions};
use crate::scene::{generate_scene, segment_scene, ModelBundle, SceneSketch, SegmentMode};
use crate::service::{self, AppState, GenerateSceneRequest};
use crate::{Error, Result};

pub const RUN_RECORD: &str = "run.json";
pub const CODE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Parser)]
#[command(name = "sketchscene", version, about = "Sketch-to-scene dataset building, training, generation and evaluation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a dataset from a scene source.
    BuildData(BuildDataArgs),
    /// Train the object model on a dataset's train split.
    TrainObject(TrainObjectArgs),
    /// Train the background model on a dataset's composites.
    TrainBackground(TrainBackgroundArgs),
    /// Generate one object image from a sketch PNG.
    GenerateObject(GenerateObjectArgs),
    /// Generate a scene from a labeled-stroke JSON file.
    GenerateScene(GenerateSceneArgs),
    /// Score checkpoints on a dataset split.
    Evaluate(EvaluateArgs),
    /// Train and score an object-model variant with one component removed.
    Ablate(AblateArgs),
    /// Start the HTTP service.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SourceKind {
    Toy,
}

#[derive(Debug, Args)]
pub struct BuildDataArgs {
    #[arg(long, value_enum, default_value = "toy")]
    pub source: SourceKind,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub scenes: Option<usize>,
    #[arg(long)]
    pub sketches_per_category: Option<usize>,
    /// JSON file with source settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    /// JSON file with training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub noise_dim: Option<usize>,
    /// Base width of generators, critics and encoder.
    #[arg(long)]
    pub width: Option<i64>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub checkpoint_every: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainObjectArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub train: TrainFlags,
}

#[derive(Debug, Args)]
pub struct TrainBackgroundArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub width: Option<i64>,
    #[arg(long)]
    pub resolution: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenerateObjectArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub sketch: PathBuf,
    #[arg(long)]
    pub category: String,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct GenerateSceneArgs {
    #[arg(long)]
    pub object: PathBuf,
    #[arg(long)]
    pub background: PathBuf,
    /// JSON with `canvas_size` and `strokes`, as accepted by the service.
    #[arg(long)]
    pub strokes: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExtractorKind {
    ToyClassifier,
    PixelPca,
}

#[derive(Debug, Args)]
pub struct EvalFlags {
    #[arg(long, value_enum, default_value = "test")]
    pub split: SplitArg,
    /// Classifier checkpoint used to judge category accuracy; trained on the
    /// train split when absent.
    #[arg(long)]
    pub judge: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "toy-classifier")]
    pub extractor: ExtractorKind,
    /// Classifier checkpoint used as the FID feature extractor.
    #[arg(long, conflicts_with = "extractor")]
    pub pretrained_extractor: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub eval_seed: u64,
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "checkpoints/object.safetensors")]
    pub object: PathBuf,
    #[arg(long, default_value = "checkpoints/background.safetensors")]
    pub background: PathBuf,
    /// Score the object model only.
    #[arg(long)]
    pub objects_only: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value = "Ours")]
    pub label: String,
    #[command(flatten)]
    pub eval: EvalFlags,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Train,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DropTerm {
    #[value(name = "DJ")]
    Dj,
    #[value(name = "DI")]
    Di,
    #[value(name = "DE")]
    De,
    #[value(name = "C")]
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    WganGp,
    Wgan,
    Dcgan,
}

#[derive(Debug, Args)]
pub struct AblateArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Component to remove.
    #[arg(long, value_enum)]
    pub drop: Vec<DropTerm>,
    /// Adversarial objective of the variant.
    #[arg(long, value_enum, default_value = "wgan-gp")]
    pub objective: ObjectiveArg,
    /// Train only; skip scoring.
    #[arg(long)]
    pub no_eval: bool,
    #[command(flatten)]
    pub train: TrainFlags,
    #[command(flatten)]
    pub eval: EvalFlags,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[arg(long, env = "SKETCHSCENE_OBJECT")]
    pub object: PathBuf,
    #[arg(long, env = "SKETCHSCENE_BACKGROUND")]
    pub background: PathBuf,
    #[arg(long, env = "SKETCHSCENE_ADDR", default_value = "127.0.0.1:8080")]
    pub addr: SocketAddr,
    #[arg(long, default_value_t = service::DEFAULT_MAX_IN_FLIGHT)]
    pub max_in_flight: usize,
}

/// Parses `argv` and runs the command; returns the process exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

pub fn execute(cmd: Command) -> Result<String> {
    match cmd {
        Command::BuildData(a) => build_data(a),
        Command::TrainObject(a) => train_object(a),
        Command::TrainBackground(a) => train_bg(a),
        Command::GenerateObject(a) => generate_object(a),
        Command::GenerateScene(a) => generate_scene_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
        Command::Ablate(a) => ablate(a),
        Command::Serve(a) => serve(a),
    }
}

#[derive(Serialize)]
struct RunRecord<'a, C: Serialize> {
    command: &'a str,
    code_version: &'a str,
    seed: u64,
    config: &'a C,
}

pub fn write_run_record<C: Serialize>(dir: &Path, command: &str, seed: u64, config: &C) -> Result<()> {
    let rec = RunRecord {
        command,
        code_version: CODE_VERSION,
        seed,
        config,
    };
    let text = serde_json::to_string_pretty(&rec)?;
    let path = dir.join(RUN_RECORD);
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(path, e))
}

fn read_config<C: DeserializeOwned + Default>(path: Option<&Path>) -> Result<C> {
    match path {
        None => Ok(C::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn require_file(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Data(format!("{what} {} not found", path.display())))
    }
}

fn require_dataset(root: &Path) -> Result<()> {
    read_manifest(root).map(|_| ())
}

fn make_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn build_data(a: BuildDataArgs) -> Result<String> {
    let mut source: ToySource = read_config(a.config.as_deref())?;
    if let Some(s) = a.seed {
        source.seed = s;
    }
    if let Some(n) = a.scenes {
        source.scenes = n;
    }
    if let Some(n) = a.sketches_per_category {
        source.sketches_per_category = n;
    }
    let m = toy::build(&source, &a.out)?;
    write_run_record(&a.out, "build-data", source.seed, &source)?;
    let c = |s: Split| m.counts.get(&s).map_or(0, |c| c.scenes);
    Ok(format!(
        "built {} scenes ({} train, {} test) in {}",
        m.total_scenes(),
        c(Split::Train),
        c(Split::Test),
        a.out.display()
    ))
}

fn train_config(flags: &TrainFlags) -> Result<TrainConfig> {
    let mut cfg: TrainConfig = read_config(flags.config.as_deref())?;
    if let Some(v) = flags.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = flags.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = flags.seed {
        cfg.seed = v;
    }
    if let Some(v) = flags.noise_dim {
        cfg.noise_dim = v;
    }
    if let Some(w) = flags.width {
        cfg.widths.generator = w;
        cfg.widths.critic = w;
        cfg.widths.encoder = w;
    }
    if let Some(v) = flags.learning_rate {
        cfg.learning_rate = v;
    }
    if let Some(v) = flags.checkpoint_every {
        cfg.checkpoint_every = v;
    }
    Ok(cfg)
}

/// Trains on the train split and copies the last checkpoint to `object.safetensors`.
fn fit_object(data: &Path, out: &Path, mut cfg: TrainConfig, command: &str) -> Result<(ObjectModel, PathBuf)> {
    require_dataset(data)?;
    let store = load_object_store(data, Split::Train)?;
    cfg.num_categories = store.categories.len();
    cfg.resolution = store.resolution().unwrap_or(cfg.resolution);
    cfg.validate()?;
    make_dir(out)?;
    write_run_record(out, command, cfg.seed, &cfg)?;
    let outcome = train_object_model(&store, &cfg, &TrainOptions { out_dir: Some(out.to_path_buf()) })?;
    let path = out.join("object.safetensors");
    outcome.model.save(&path)?;
    Ok((outcome.model, path))
}

fn train_object(a: TrainObjectArgs) -> Result<String> {
    let cfg = train_config(&a.train)?;
    let (m, path) = fit_object(&a.data, &a.out, cfg, "train-object")?;
    Ok(format!("trained object model for {} epochs; checkpoint {}", m.epochs_trained, path.display()))
}

fn train_bg(a: TrainBackgroundArgs) -> Result<String> {
    require_dataset(&a.data)?;
    let mut cfg: BackgroundConfig = read_config(a.config.as_deref())?;
    if let Some(v) = a.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = a.batch_size {
        cfg.batch_size = v;
    }
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.width {
        cfg.width = v;
    }
    if let Some(v) = a.resolution {
        cfg.resolution = v;
    }
    let manifest = read_manifest(&a.data)?;
    cfg.categories = manifest.config.background.clone();
    cfg.validate()?;
    let pairs = load_background_training(&a.data, Split::Train, Some(cfg.resolution))?;
    make_dir(&a.out)?;
    write_run_record(&a.out, "train-background", cfg.seed, &cfg)?;
    let outcome = train_background(&pairs, &cfg, Some(&a.out))?;
    let path = a.out.join("background.safetensors");
    outcome.model.save(&path)?;
    Ok(format!(
        "trained background model for {} epochs on {} pairs; checkpoint {}",
        outcome.model.epochs_trained,
        pairs.len(),
        path.display()
    ))
}

fn generate_object(a: GenerateObjectArgs) -> Result<String> {
    require_file(&a.checkpoint, "object checkpoint")?;
    require_file(&a.sketch, "sketch")?;
    let model = ObjectModel::load(&a.checkpoint)?;
    let c = model.category_index(&a.category).ok_or_else(|| {
        Error::Input(format!("unknown category {:?}; valid: {}", a.category, model.categories.join(", ")))
    })?;
    let sketch = EdgeImage::load_png(&a.sketch)?.resize(model.resolution());
    let image = model.infer_object(&sketch, c)?;
    make_dir(&a.out)?;
    let path = a.out.join("object.png");
    image.save_png(&path)?;
    write_run_record(
        &a.out,
        "generate-object",
        model.config.seed,
        &serde_json::json!({
            "checkpoint": a.checkpoint,
            "sketch": a.sketch,
            "category": a.category,
        }),
    )?;
    Ok(format!("wrote {}", path.display()))
}

fn generate_scene_cmd(a: GenerateSceneArgs) -> Result<String> {
    require_file(&a.object, "object checkpoint")?;
    require_file(&a.background, "background checkpoint")?;
    require_file(&a.strokes, "stroke file")?;
    let text = std::fs::read_to_string(&a.strokes).map_err(|e| Error::io(&a.strokes, e))?;
    let req: GenerateSceneRequest =
        serde_json::from_str(&text).map_err(|e| Error::Input(format!("{}: {e}", a.strokes.display())))?;
    let seed = a.seed.or(req.seed).unwrap_or(0);
    let bundle = ModelBundle::load(&a.object, &a.background)?;
    let sketch = SceneSketch::from_strokes(req.canvas_size, req.strokes.clone())?;
    let seg = segment_scene(&sketch, SegmentMode::LabeledStrokes, &bundle.categories())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = generate_scene(&sketch, &seg, &bundle, &mut rng)?;
    make_dir(&a.out)?;
    out.image.save_png(&a.out.join("scene.png"))?;
    out.foreground_canvas.save_png(&a.out.join("foreground.png"))?;
    for (i, p) in out.patches.iter().enumerate() {
        p.image.save_png(&a.out.join(format!("patch-{i:02}-{}.png", p.category)))?;
    }
    write_run_record(
        &a.out,
        "generate-scene",
        seed,
        &serde_json::json!({
            "object": a.object,
            "background": a.background,
            "strokes": a.strokes,
            "paste_order": out.paste_order,
        }),
    )?;
    Ok(format!(
        "wrote {} with {} foreground instances (seed {seed})",
        a.out.join("scene.png").display(),
        out.patches.len()
    ))
}

/// Judge and FID extractor for a dataset, trained with distinct seeds when
/// no checkpoint is supplied.
fn eval_models(data: &Path, flags: &EvalFlags, out: &Path) -> Result<(ImageClassifier, FeatureExtractor)> {
    let mut train: Option<(Vec<ColorImage>, Vec<usize>, Vec<String>)> = None;
    let mut train_set = || -> Result<(Vec<ColorImage>, Vec<usize>, Vec<String>)> {
        if train.is_none() {
            let store = load_object_store(data, Split::Train)?;
            let images = store.items.iter().map(|t| t.image.clone()).collect();
            let labels = store.items.iter().map(|t| t.category).collect();
            train = Some((images, labels, store.categories));
        }
        Ok(train.clone().expect("filled above"))
    };
    let judge = match &flags.judge {
        Some(p) => {
            require_file(p, "judge checkpoint")?;
            ImageClassifier::load(p)?
        }
        None => {
            let (im, lb, cats) = train_set()?;
            let cfg = ClassifierConfig {
                seed: sub_seed(flags.eval_seed, "judge"),
                ..Default::default()
            };
            let c = ImageClassifier::train(&im, &lb, cats, cfg)?;
            c.save(&out.join("judge.safetensors"))?;
            c
        }
    };
    let extractor = match (&flags.pretrained_extractor, flags.extractor) {
        (Some(p), _) => FeatureExtractor::pretrained(p)?,
        (None, ExtractorKind::ToyClassifier) => {
            let (im, lb, cats) = train_set()?;
            let cfg = ClassifierConfig {
                seed: sub_seed(flags.eval_seed, "extractor"),
                ..Default::default()
            };
            let c = ImageClassifier::train(&im, &lb, cats, cfg)?;
            c.save(&out.join("extractor.safetensors"))?;
            FeatureExtractor::ToyClassifier(c)
        }
        (None, ExtractorKind::PixelPca) => {
            let (im, _, _) = train_set()?;
            FeatureExtractor::PixelPca(PixelPca::fit(&im, 16, 32)?)
        }
    };
    Ok((judge, extractor))
}

fn write_report(out: &Path, report: &crate::eval::EvalReport, label: &str) -> Result<()> {
    let json = out.join("report.json");
    std::fs::write(&json, serde_json::to_string_pretty(report)? + "\n").map_err(|e| Error::io(&json, e))?;
    let table = out.join("table.txt");
    std::fs::write(&table, report.table(label)).map_err(|e| Error::io(&table, e))
}

fn evaluate_cmd(a: EvaluateArgs) -> Result<String> {
    require_dataset(&a.data)?;
    require_file(&a.object, "object checkpoint")?;
    if !a.objects_only {
        require_file(&a.background, "background checkpoint")?;
    }
    make_dir(&a.out)?;
    let object = ObjectModel::load(&a.object)?;
    let bundle = if a.objects_only {
        None
    } else {
        Some(ModelBundle {
            object: ObjectModel::load(&a.object)?,
            background: BackgroundModel::load(&a.background)?,
        })
    };
    let (judge, extractor) = eval_models(&a.data, &a.eval, &a.out)?;
    let report = evaluate(&EvalInputs {
        root: &a.data,
        split: a.eval.split.into(),
        object: Some(&object),
        bundle: bundle.as_ref(),
        extractor: &extractor,
        judge: &judge,
        seed: a.eval.eval_seed,
        limit: a.eval.limit,
        object_checkpoint: Some(a.object.display().to_string()),
        background_checkpoint: bundle.as_ref().map(|_| a.background.display().to_string()),
    })?;
    report.check().map_err(Error::Data)?;
    write_run_record(
        &a.out,
        "evaluate",
        a.eval.eval_seed,
        &serde_json::json!({ "data": a.data, "object": a.object, "background": a.background, "label": a.label }),
    )?;
    write_report(&a.out, &report, &a.label)?;
    print!("{}", report.table(&a.label));
    Ok(format!("wrote {}", a.out.join("report.json").display()))
}

/// Row label of an ablation variant, in the published table's naming.
pub fn ablation_label(drop: &[DropTerm], objective: ObjectiveArg) -> String {
    let mut parts: Vec<&str> = Vec::new();
    match objective {
        ObjectiveArg::WganGp => {}
        ObjectiveArg::Wgan => parts.push("WGAN"),
        ObjectiveArg::Dcgan => parts.push("DCGAN"),
    }
    let mut sorted = drop.to_vec();
    sorted.sort_by_key(|d| *d as u8);
    sorted.dedup();
    for d in sorted {
        parts.push(match d {
            DropTerm::Dj => "W/O D_J",
            DropTerm::Di => "W/O D_I",
            DropTerm::De => "W/O D_E",
            DropTerm::C => "W/O C",
        });
    }
    if parts.is_empty() {
        "Full Model".into()
    } else {
        parts.join(", ")
    }
}

pub fn apply_ablation(mut cfg: TrainConfig, drop: &[DropTerm], objective: ObjectiveArg) -> TrainConfig {
    let mut ab = Ablation { multiscale: cfg.ablation.multiscale, ..Ablation::default() };
    for d in drop {
        match d {
            DropTerm::Dj => ab.use_dj = false,
            DropTerm::Di => ab.use_di = false,
            DropTerm::De => ab.use_de = false,
            DropTerm::C => ab.use_classifier = false,
        }
    }
    cfg.ablation = ab;
    let kind = match objective {
        ObjectiveArg::WganGp => OptimizerKind::RmspropWgangp,
        ObjectiveArg::Wgan => OptimizerKind::RmspropWgan,
        ObjectiveArg::Dcgan => OptimizerKind::AdamDcgan,
    };
    if kind != cfg.optimizer_kind {
        cfg = cfg.with_optimizer(kind);
    }
    cfg
}

fn ablate(a: AblateArgs) -> Result<String> {
    require_dataset(&a.data)?;
    let label = ablation_label(&a.drop, a.objective);
    let cfg = apply_ablation(train_config(&a.train)?, &a.drop, a.objective);
    make_dir(&a.out)?;
    let label_path = a.out.join("label.txt");
    std::fs::write(&label_path, format!("{label}\n")).map_err(|e| Error::io(&label_path, e))?;
    let (model, path) = fit_object(&a.data, &a.out, cfg, "ablate")?;
    if a.no_eval {
        return Ok(format!("{label}: trained {} epochs; checkpoint {}", model.epochs_trained, path.display()));
    }
    let (judge, extractor) = eval_models(&a.data, &a.eval, &a.out)?;
    let report = evaluate(&EvalInputs {
        root: &a.data,
        split: a.eval.split.into(),
        object: Some(&model),
        bundle: None,
        extractor: &extractor,
        judge: &judge,
        seed: a.eval.eval_seed,
        limit: a.eval.limit,
        object_checkpoint: Some(path.display().to_string()),
        background_checkpoint: None,
    })?;
    write_report(&a.out, &report, &label)?;
    let o = report.object.as_ref().expect("object block requested");
    Ok(format!("{label}: FID {:.4}, accuracy {:.4}, SS {:.4}", o.fid, o.accuracy, o.shape_similarity_mean))
}

fn serve(a: ServeArgs) -> Result<String> {
    require_file(&a.object, "object checkpoint")?;
    require_file(&a.background, "background checkpoint")?;
    let bundle = ModelBundle::load(&a.object, &a.background)?;
    let state = AppState::new(bundle, a.max_in_flight);
    let rt = tokio::runtime::Runtime::new().map_err(|e| Error::io("tokio runtime", e))?;
    rt.block_on(service::serve(a.addr, state)).map_err(|e| Error::io(a.addr.to_string(), e))?;
    Ok("server stopped".into())
}
