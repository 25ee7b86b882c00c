//! Scene completion from pasted foreground patches and a background sketch:
//! an encoder-decoder with skip connections trained against a patch critic
//! plus an L1 reconstruction term.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tch::nn::{self, Module, OptimizerConfig};
use tch::{Kind, Tensor};

use crate::checkpoint::Archive;
use crate::error::{data, input, Error, Result};
use crate::imaging::{BBox, ColorImage, EdgeImage};
use crate::layers::{down_conv, lrelu, same_conv, sub_seed, up_conv, InstanceNorm};
use crate::model::object::Net;

/// Canvas value outside every pasted patch (mid-gray).
pub const NEUTRAL_FILL: f32 = 0.0;

const KIND: &str = "sketchscene-background-model";

/// Conditioning of the background stage: the foreground canvas and the
/// background sketch at the same resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundInput {
    pub canvas: ColorImage,
    pub background_sketch: EdgeImage,
}

impl BackgroundInput {
    pub fn new(canvas: ColorImage, background_sketch: EdgeImage) -> Result<Self> {
        let s = background_sketch.size();
        if canvas.height() != s || canvas.width() != s {
            return input(format!(
                "canvas is {}x{}, background sketch is {s}x{s}",
                canvas.width(),
                canvas.height()
            ));
        }
        Ok(BackgroundInput {
            canvas,
            background_sketch,
        })
    }

    pub fn resolution(&self) -> usize {
        self.background_sketch.size()
    }

    /// `[1, 4, H, W]`: RGB canvas then the sketch channel.
    pub fn fused(&self) -> Tensor {
        Tensor::cat(&[self.canvas.to_tensor(), self.background_sketch.to_tensor()], 1)
    }
}

/// Pastes each patch (resized to its box) onto a neutral canvas in list
/// order, so later patches win on overlap.
pub fn compose_background_input(
    patches: &[(ColorImage, BBox)],
    background_sketch: &EdgeImage,
    canvas_size: usize,
) -> Result<BackgroundInput> {
    compose_with_fill(patches, background_sketch, canvas_size, NEUTRAL_FILL)
}

pub fn compose_with_fill(
    patches: &[(ColorImage, BBox)],
    background_sketch: &EdgeImage,
    canvas_size: usize,
    fill: f32,
) -> Result<BackgroundInput> {
    if background_sketch.size() != canvas_size {
        return input(format!(
            "background sketch is {0}x{0}, canvas is {1}x{1}",
            background_sketch.size(),
            canvas_size
        ));
    }
    if !(-1.0..=1.0).contains(&fill) {
        return input(format!("fill value {fill} outside [-1, 1]"));
    }
    let mut canvas = ColorImage::filled(canvas_size, canvas_size, [fill; 3]);
    for (patch, b) in patches {
        if !b.fits(canvas_size, canvas_size) {
            return input(format!("patch box {b:?} outside {canvas_size}x{canvas_size} canvas"));
        }
        paste(&mut canvas, patch, b);
    }
    BackgroundInput::new(canvas, background_sketch.clone())
}

/// Rectangular paste of `patch`, resampled to the box extents.
pub fn paste(canvas: &mut ColorImage, patch: &ColorImage, b: &BBox) {
    let p = patch.resize(b.height(), b.width());
    for y in 0..b.height() {
        for x in 0..b.width() {
            canvas.set(b.x1 + x, b.y1 + y, p.get(x, y));
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackgroundConfig {
    pub resolution: usize,
    /// Base channel count of both networks.
    pub width: i64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub l1_weight: f64,
    pub seed: u64,
    pub checkpoint_every: usize,
    /// Background category names the stage was trained for.
    pub categories: Vec<String>,
}

impl Default for BackgroundConfig {
    fn default() -> Self {
        BackgroundConfig {
            resolution: 128,
            width: 16,
            epochs: 110,
            batch_size: 8,
            learning_rate: 2e-4,
            l1_weight: 100.0,
            seed: 0,
            checkpoint_every: 0,
            categories: Vec::new(),
        }
    }
}

impl BackgroundConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !self.resolution.is_power_of_two() || self.resolution < 32 {
            return bad(format!("background resolution {} must be a power of two ≥ 32", self.resolution));
        }
        if self.width <= 0 || self.batch_size == 0 {
            return bad("background width and batch size must be positive".into());
        }
        if !(self.learning_rate > 0.0) || self.l1_weight < 0.0 {
            return bad("learning rate must be positive and the L1 weight non-negative".into());
        }
        Ok(())
    }
}

/// Encoder-decoder with skip connections between mirrored levels.
#[derive(Debug)]
pub struct UNet {
    downs: Vec<(nn::Conv2D, Option<InstanceNorm>)>,
    ups: Vec<(nn::ConvTranspose2D, Option<InstanceNorm>)>,
}

impl UNet {
    pub fn new(p: &nn::Path, in_channels: i64, out_channels: i64, width: i64, resolution: usize) -> Self {
        let depth = (resolution.trailing_zeros() as usize).saturating_sub(2).clamp(1, 5);
        let chans: Vec<i64> = (0..depth).map(|i| width << i.min(3)).collect();
        let mut downs = Vec::new();
        let mut c_in = in_channels;
        for (i, &c) in chans.iter().enumerate() {
            let norm = (i > 0).then(|| InstanceNorm::new(p / format!("dnorm{i}"), c));
            downs.push((down_conv(p / format!("down{i}"), c_in, c), norm));
            c_in = c;
        }
        let mut ups = Vec::new();
        for i in (0..depth).rev() {
            // innermost level has no skip input
            let c_in = if i + 1 == depth { chans[i] } else { 2 * chans[i] };
            let (c_out, norm) = if i == 0 {
                (out_channels, None)
            } else {
                (chans[i - 1], Some(InstanceNorm::new(p / format!("unorm{i}"), chans[i - 1])))
            };
            ups.push((up_conv(p / format!("up{i}"), c_in, c_out), norm));
        }
        UNet { downs, ups }
    }
}

impl Module for UNet {
    fn forward(&self, xs: &Tensor) -> Tensor {
        let mut skips = Vec::new();
        let mut x = xs.shallow_clone();
        for (conv, norm) in &self.downs {
            x = x.apply(conv);
            if let Some(n) = norm {
                x = x.apply(n);
            }
            x = lrelu(&x);
            skips.push(x.shallow_clone());
        }
        skips.pop();
        for (k, (conv, norm)) in self.ups.iter().enumerate() {
            if k > 0 {
                let s = skips.pop().expect("one skip per level");
                x = Tensor::cat(&[&x, &s], 1);
            }
            x = x.apply(conv);
            x = match norm {
                Some(n) => x.apply(n).relu(),
                None => x.tanh(),
            };
        }
        x
    }
}

/// Conditional critic scoring overlapping patches of (condition, image).
#[derive(Debug)]
pub struct PatchCritic {
    convs: Vec<(nn::Conv2D, Option<InstanceNorm>)>,
    head: nn::Conv2D,
}

impl PatchCritic {
    pub fn new(p: &nn::Path, in_channels: i64, width: i64) -> Self {
        let mut convs = Vec::new();
        let mut c_in = in_channels;
        for i in 0..3 {
            let c = width << i;
            let norm = (i > 0).then(|| InstanceNorm::new(p / format!("norm{i}"), c));
            convs.push((down_conv(p / format!("conv{i}"), c_in, c), norm));
            c_in = c;
        }
        let head = same_conv(p / "head", c_in, 1, 3);
        PatchCritic { convs, head }
    }

    /// Logit map, one value per receptive-field patch.
    pub fn forward(&self, condition: &Tensor, image: &Tensor) -> Tensor {
        let mut x = Tensor::cat(&[condition, image], 1);
        for (conv, norm) in &self.convs {
            x = x.apply(conv);
            if let Some(n) = norm {
                x = x.apply(n);
            }
            x = lrelu(&x);
        }
        x.apply(&self.head)
    }
}

#[derive(Debug)]
pub struct BackgroundModel {
    pub config: BackgroundConfig,
    pub epochs_trained: usize,
    pub generator: Net<UNet>,
    pub critic: Net<PatchCritic>,
}

impl BackgroundModel {
    pub fn new(config: BackgroundConfig) -> Result<Self> {
        config.validate()?;
        let (w, r, seed) = (config.width, config.resolution, config.seed);
        Ok(BackgroundModel {
            generator: Net::build("bg_generator", seed, |p| UNet::new(p, 4, 3, w, r)),
            critic: Net::build("bg_critic", seed, |p| PatchCritic::new(p, 7, w)),
            config,
            epochs_trained: 0,
        })
    }

    pub fn resolution(&self) -> usize {
        self.config.resolution
    }

    pub fn to_archive(&self) -> Result<Archive> {
        let mut ar = Archive::new();
        ar.metadata.insert("kind".into(), KIND.into());
        ar.metadata.insert("config".into(), serde_json::to_string(&self.config)?);
        ar.metadata.insert("epochs_trained".into(), self.epochs_trained.to_string());
        ar.insert_store("generator", &self.generator.vs)?;
        ar.insert_store("critic", &self.critic.vs)?;
        Ok(ar)
    }

    pub fn from_archive(ar: &Archive) -> Result<Self> {
        if ar.meta("kind")? != KIND {
            return data(format!("checkpoint kind {:?} is not a background model", ar.meta("kind")?));
        }
        let config: BackgroundConfig = serde_json::from_str(ar.meta("config")?)?;
        let mut model = BackgroundModel::new(config)?;
        model.epochs_trained = ar
            .meta("epochs_trained")?
            .parse()
            .map_err(|_| Error::Data("epochs_trained is not an integer".into()))?;
        ar.restore_store("generator", &model.generator.vs)?;
        ar.restore_store("critic", &model.critic.vs)?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        BackgroundModel::from_archive(&Archive::load(path)?)
    }

    fn check_input(&self, input: &BackgroundInput) -> Result<()> {
        if input.resolution() != self.resolution() {
            return crate::error::input(format!(
                "background input is {0}x{0}, model resolution is {1}x{1}",
                input.resolution(),
                self.resolution()
            ));
        }
        Ok(())
    }

    /// Generator output for a fused `[N, 4, H, W]` batch.
    pub fn forward(&self, fused: &Tensor) -> Tensor {
        self.generator.net.forward(fused)
    }
}

/// Completes the scene in one forward pass.
pub fn generate_background(model: &BackgroundModel, input: &BackgroundInput) -> Result<ColorImage> {
    if model.epochs_trained == 0 {
        return Err(Error::State("background model has not been trained".into()));
    }
    model.check_input(input)?;
    let out = tch::no_grad(|| model.forward(&input.fused()));
    ColorImage::from_tensor(&out)
}

#[derive(Debug, Clone)]
pub struct BackgroundPair {
    pub input: BackgroundInput,
    pub target: ColorImage,
}

/// Mean absolute pixel difference.
pub fn l1_loss(generated: &Tensor, target: &Tensor) -> Tensor {
    (generated - target).abs().mean(Kind::Float)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BackgroundLossRow {
    pub epoch: usize,
    pub step: usize,
    pub critic: f64,
    pub adversarial: f64,
    pub l1: f64,
}

#[derive(Debug)]
pub struct BackgroundOutcome {
    pub model: BackgroundModel,
    pub checkpoints: Vec<PathBuf>,
    pub losses: Vec<BackgroundLossRow>,
}

pub fn background_checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("background-epoch{epoch:04}.safetensors"))
}

fn check_pairs(pairs: &[BackgroundPair], config: &BackgroundConfig) -> Result<()> {
    if pairs.is_empty() {
        return data("background training store is empty");
    }
    for (i, p) in pairs.iter().enumerate() {
        let r = p.input.resolution();
        if r != config.resolution || p.target.height() != r || p.target.width() != r {
            return data(format!(
                "pair {i} is not at the configured {0}x{0} resolution",
                config.resolution
            ));
        }
    }
    Ok(())
}

/// Stacks pairs into `([N, 4, H, W], [N, 3, H, W])`.
pub fn stack_pairs(pairs: &[BackgroundPair]) -> (Tensor, Tensor) {
    let x = Tensor::cat(&pairs.iter().map(|p| p.input.fused()).collect::<Vec<_>>(), 0);
    let y = Tensor::cat(&pairs.iter().map(|p| p.target.to_tensor()).collect::<Vec<_>>(), 0);
    (x, y)
}

/// Mean L1 between model outputs and targets over `pairs`.
pub fn evaluate_l1(model: &BackgroundModel, pairs: &[BackgroundPair]) -> Result<f64> {
    if pairs.is_empty() {
        return input("no pairs to evaluate");
    }
    let mut total = 0.0;
    for chunk in pairs.chunks(16) {
        let (x, y) = stack_pairs(chunk);
        let l = tch::no_grad(|| l1_loss(&model.forward(&x), &y));
        total += l.double_value(&[]) * chunk.len() as f64;
    }
    Ok(total / pairs.len() as f64)
}

pub fn train_background(
    pairs: &[BackgroundPair],
    config: &BackgroundConfig,
    out_dir: Option<&Path>,
) -> Result<BackgroundOutcome> {
    train_background_with(pairs, config, out_dir, |_, _| Ok(()))
}

/// Logistic adversarial loss plus `l1_weight` times the L1 term, Adam with
/// beta1 = 0.5; `on_epoch(epoch, model)` runs after every epoch.
pub fn train_background_with(
    pairs: &[BackgroundPair],
    config: &BackgroundConfig,
    out_dir: Option<&Path>,
    mut on_epoch: impl FnMut(usize, &BackgroundModel) -> Result<()>,
) -> Result<BackgroundOutcome> {
    config.validate()?;
    check_pairs(pairs, config)?;
    let mut model = BackgroundModel::new(config.clone())?;
    let adam = nn::Adam {
        beta1: 0.5,
        ..Default::default()
    };
    let mut opt_g = adam.build(&model.generator.vs, config.learning_rate)?;
    let mut opt_d = adam.build(&model.critic.vs, config.learning_rate)?;
    let (xs, ys) = stack_pairs(pairs);
    let mut order: Vec<i64> = (0..pairs.len() as i64).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(config.seed, "background-order"));
    let mut losses = Vec::new();
    let mut checkpoints = Vec::new();
    let mut step = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut rows = Vec::new();
        for chunk in order.chunks(config.batch_size) {
            let idx = Tensor::from_slice(chunk);
            let (x, y) = (xs.index_select(0, &idx), ys.index_select(0, &idx));
            let fake = model.generator.net.forward(&x);

            let d_real = model.critic.net.forward(&x, &y);
            let d_fake = model.critic.net.forward(&x, &fake.detach());
            let d_loss = (-d_real).softplus().mean(Kind::Float) + d_fake.softplus().mean(Kind::Float);
            opt_d.backward_step(&d_loss);

            model.critic.vs.freeze();
            let adv = (-model.critic.net.forward(&x, &fake)).softplus().mean(Kind::Float);
            let l1 = l1_loss(&fake, &y);
            let g_loss = &adv + &l1 * config.l1_weight;
            opt_g.backward_step(&g_loss);
            model.critic.vs.unfreeze();

            step += 1;
            let row = BackgroundLossRow {
                epoch,
                step,
                critic: d_loss.double_value(&[]),
                adversarial: adv.double_value(&[]),
                l1: l1.double_value(&[]),
            };
            if ![row.critic, row.adversarial, row.l1].iter().all(|v| v.is_finite()) {
                let checkpoint = match out_dir {
                    Some(d) => {
                        let p = d.join(format!("background-diverged-epoch{epoch:04}-step{step}.safetensors"));
                        model.save(&p)?;
                        Some(p)
                    }
                    None => None,
                };
                return Err(Error::NonFinite {
                    epoch,
                    step,
                    detail: format!("{row:?}"),
                    checkpoint,
                });
            }
            rows.push(row);
        }
        model.epochs_trained = epoch;
        if let Some(d) = out_dir {
            append_rows(&d.join("background_losses.csv"), &rows)?;
            let every = config.checkpoint_every;
            if epoch == config.epochs || (every > 0 && epoch % every == 0) {
                let p = background_checkpoint_path(d, epoch);
                model.save(&p)?;
                checkpoints.push(p);
            }
        }
        losses.extend(rows);
        on_epoch(epoch, &model)?;
    }
    if config.epochs == 0 {
        if let Some(d) = out_dir {
            let p = background_checkpoint_path(d, 0);
            model.save(&p)?;
            checkpoints.push(p);
        }
    }
    Ok(BackgroundOutcome {
        model,
        checkpoints,
        losses,
    })
}

fn append_rows(path: &Path, rows: &[BackgroundLossRow]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let fresh = !path.exists();
    let file = std::fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
