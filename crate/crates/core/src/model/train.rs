//! Training of the object model.

use std::fs::OpenOptions;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use tch::nn::{self, OptimizerConfig};
use tch::{Kind, Tensor};

use super::config::{OptimizerKind, TrainConfig};
use super::losses::{
    class_log_likelihood, critic_term, latent_l1, opt_scalar, scalar, CriticTerm, Critics,
    GeneratorTerms, LossReport, RealBatch,
};
use super::object::ObjectModel;
use crate::data::{EdgeStyle, ObjectStore};
use crate::error::{data, input, Error, Result};
use crate::imaging::join_width;
use crate::latent::{codes_to_tensors, LatentCode};
use crate::layers::sub_seed;

/// Every term of the objective for one batch, as differentiable tensors.
#[derive(Debug)]
pub struct LossTerms {
    pub d_j: Option<CriticTerm>,
    pub d_e: Option<CriticTerm>,
    pub d_i: Option<CriticTerm>,
    pub generator: GeneratorTerms,
    /// Classifier loss on real images (negated likelihood), if enabled.
    pub classifier: Option<Tensor>,
    pub latent_l1: Tensor,
    pub fake_edges: Tensor,
    pub fake_images: Tensor,
}

impl LossTerms {
    pub fn report(&self) -> LossReport {
        let total = |t: &Option<CriticTerm>| t.as_ref().map(|t| scalar(&t.total())).unwrap_or(0.0);
        let gp = |t: &Option<CriticTerm>| t.as_ref().map(|t| scalar(&t.penalty)).unwrap_or(0.0);
        LossReport {
            d_j: total(&self.d_j),
            d_e: total(&self.d_e),
            d_i: total(&self.d_i),
            gp_j: gp(&self.d_j),
            gp_e: gp(&self.d_e),
            gp_i: gp(&self.d_i),
            g_dj: opt_scalar(&self.generator.joint),
            g_de: opt_scalar(&self.generator.edge),
            g_di: opt_scalar(&self.generator.image),
            ac_gen: opt_scalar(&self.generator.class_ll),
            g_e: scalar(&self.generator.edge_loss()),
            g_i: scalar(&self.generator.image_loss()),
            classifier: opt_scalar(&self.classifier),
            latent_l1: scalar(&self.latent_l1),
        }
    }
}

/// Evaluates the full objective on one real batch and a batch of codes.
///
/// Fake samples are generated from `codes`; critic terms see them detached,
/// generator terms keep the graph. Ablated terms are absent.
pub fn edgegan_losses<R: Rng + ?Sized>(
    model: &ObjectModel,
    real: &RealBatch,
    codes: &[LatentCode],
    config: &TrainConfig,
    rng: &mut R,
) -> Result<LossTerms> {
    if real.is_empty() || codes.is_empty() {
        return input("edgegan_losses needs a non-empty batch");
    }
    if codes.len() != real.len() {
        return input(format!(
            "{} codes for a real batch of {}",
            codes.len(),
            real.len()
        ));
    }
    let res = model.resolution() as i64;
    let img_dims = real.images.size();
    if img_dims[2..] != [res, res] || real.edges.size()[2..] != [res, res] {
        return input(format!("real batch is {img_dims:?}, model resolution is {res}"));
    }
    let (noise, fake_oh) = codes_to_tensors(codes)?;
    let fake_labels = fake_oh.argmax(1, false);
    let fake_edges = model.g_e.net.forward(&noise, &fake_oh);
    let fake_images = model.g_i.net.forward(&noise, &fake_oh);
    let ab = config.ablation;

    let mut crit = |enabled: bool, critic: &super::nets::Critic, r: &Tensor, f: &Tensor| {
        if !enabled {
            return Ok(None);
        }
        critic_term(critic, r, &real.one_hot, &f.detach(), &fake_oh, config, rng).map(Some)
    };
    let d_j = crit(
        ab.use_dj,
        &model.d_j.net,
        &join_width(&real.edges, &real.images),
        &join_width(&fake_edges, &fake_images),
    )?;
    let d_e = crit(ab.use_de, &model.d_e.net, &real.edges, &fake_edges)?;
    let d_i = crit(ab.use_di, &model.d_i.net, &real.images, &fake_images)?;

    let critics = Critics {
        joint: &model.d_j.net,
        edge: &model.d_e.net,
        image: &model.d_i.net,
    };
    let generator = GeneratorTerms::compute(
        &critics,
        &model.classifier.net,
        &fake_edges,
        &fake_images,
        &fake_oh,
        &fake_labels,
        config,
    );
    let classifier = ab.use_classifier.then(|| {
        -class_log_likelihood(
            &model.classifier.net.logits(&real.images),
            &real.labels,
            config.class_loss,
        )
    });
    let latent = latent_l1(&model.encoder.net, &noise, &fake_edges.detach());
    Ok(LossTerms {
        d_j,
        d_e,
        d_i,
        generator,
        classifier,
        latent_l1: latent,
        fake_edges,
        fake_images,
    })
}

/// One row of the loss-curve log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRow {
    pub epoch: usize,
    pub step: usize,
    pub report: LossReport,
}

/// CSV cannot serialize flattened structs, so rows go through this mirror.
#[derive(Serialize, Deserialize)]
struct CsvRow {
    epoch: usize,
    step: usize,
    d_j: f64,
    d_e: f64,
    d_i: f64,
    gp_j: f64,
    gp_e: f64,
    gp_i: f64,
    g_dj: f64,
    g_de: f64,
    g_di: f64,
    ac_gen: f64,
    g_e: f64,
    g_i: f64,
    classifier: f64,
    latent_l1: f64,
}

impl From<&LossRow> for CsvRow {
    fn from(r: &LossRow) -> Self {
        let LossReport {
            d_j,
            d_e,
            d_i,
            gp_j,
            gp_e,
            gp_i,
            g_dj,
            g_de,
            g_di,
            ac_gen,
            g_e,
            g_i,
            classifier,
            latent_l1,
        } = r.report;
        CsvRow {
            epoch: r.epoch,
            step: r.step,
            d_j,
            d_e,
            d_i,
            gp_j,
            gp_e,
            gp_i,
            g_dj,
            g_de,
            g_di,
            ac_gen,
            g_e,
            g_i,
            classifier,
            latent_l1,
        }
    }
}

impl From<CsvRow> for LossRow {
    fn from(r: CsvRow) -> Self {
        LossRow {
            epoch: r.epoch,
            step: r.step,
            report: LossReport {
                d_j: r.d_j,
                d_e: r.d_e,
                d_i: r.d_i,
                gp_j: r.gp_j,
                gp_e: r.gp_e,
                gp_i: r.gp_i,
                g_dj: r.g_dj,
                g_de: r.g_de,
                g_di: r.g_di,
                ac_gen: r.ac_gen,
                g_e: r.g_e,
                g_i: r.g_i,
                classifier: r.classifier,
                latent_l1: r.latent_l1,
            },
        }
    }
}

/// Appends rows to a CSV loss log, writing the header when the file is new.
pub fn append_loss_rows(path: &Path, rows: &[LossRow]) -> Result<()> {
    let exists = path.exists() && std::fs::metadata(path).map(|m| m.len() > 0).unwrap_or(false);
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(!exists).from_writer(file);
    for row in rows {
        w.serialize(CsvRow::from(row))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_loss_rows(path: &Path) -> Result<Vec<LossRow>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize::<CsvRow>().map(|row| row.map(LossRow::from).map_err(Error::from)).collect()
}

fn make_opt(kind: OptimizerKind, vs: &nn::VarStore, lr: f64) -> Result<nn::Optimizer> {
    Ok(match kind {
        OptimizerKind::AdamDcgan => nn::Adam {
            beta1: 0.5,
            beta2: 0.999,
            wd: 0.0,
            eps: 1e-8,
            amsgrad: false,
        }
        .build(vs, lr)?,
        _ => nn::RmsProp {
            alpha: 0.99,
            eps: 1e-8,
            wd: 0.0,
            momentum: 0.0,
            centered: false,
        }
        .build(vs, lr)?,
    })
}

struct Optimizers {
    g_i: nn::Optimizer,
    g_e: nn::Optimizer,
    d_j: nn::Optimizer,
    d_e: nn::Optimizer,
    d_i: nn::Optimizer,
    encoder: nn::Optimizer,
    classifier: nn::Optimizer,
}

/// Deterministic per-epoch permutation of `0..n`.
pub fn epoch_order(n: usize, seed: u64, epoch: usize) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, &format!("order-{epoch}")));
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx
}

/// Stateful training loop over an in-memory object store.
pub struct ObjectTrainer {
    pub model: ObjectModel,
    opts: Optimizers,
    rng: ChaCha8Rng,
    images: Tensor,
    /// One `[N, 1, H, W]` tensor per available edge style.
    edges: Vec<Tensor>,
    labels: Vec<usize>,
    step: usize,
}

impl ObjectTrainer {
    pub fn new(model: ObjectModel, dataset: &ObjectStore) -> Result<Self> {
        let cfg = model.config.clone();
        check_dataset(dataset, &cfg)?;
        let lr = cfg.learning_rate;
        let kind = cfg.optimizer_kind;
        let opts = Optimizers {
            g_i: make_opt(kind, &model.g_i.vs, lr)?,
            g_e: make_opt(kind, &model.g_e.vs, lr)?,
            d_j: make_opt(kind, &model.d_j.vs, lr)?,
            d_e: make_opt(kind, &model.d_e.vs, lr)?,
            d_i: make_opt(kind, &model.d_i.vs, lr)?,
            encoder: make_opt(kind, &model.encoder.vs, lr)?,
            classifier: make_opt(kind, &model.classifier.vs, lr)?,
        };
        let images = Tensor::cat(
            &dataset.items.iter().map(|t| t.image.to_tensor()).collect::<Vec<_>>(),
            0,
        );
        // Styles present on every item take part in augmentation.
        let styles: Vec<EdgeStyle> = [EdgeStyle::Xdog, EdgeStyle::Standard]
            .into_iter()
            .filter(|&s| dataset.items.iter().all(|t| t.edge(s).is_some()))
            .collect();
        let styles = if styles.is_empty() {
            return data("no edge style is present on every object triplet");
        } else {
            styles
        };
        let edges = styles
            .iter()
            .map(|&s| {
                Tensor::cat(
                    &dataset
                        .items
                        .iter()
                        .map(|t| t.edge(s).expect("filtered above").to_tensor())
                        .collect::<Vec<_>>(),
                    0,
                )
            })
            .collect();
        let labels = dataset.items.iter().map(|t| t.category).collect();
        let rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, "train"));
        Ok(ObjectTrainer {
            model,
            opts,
            rng,
            images,
            edges,
            labels,
            step: 0,
        })
    }

    fn noise(&mut self, n: usize) -> Tensor {
        let nz = self.model.config.noise_dim;
        let v: Vec<f32> = (0..n * nz).map(|_| self.rng.sample(StandardNormal)).collect();
        Tensor::from_slice(&v).view([n as i64, nz as i64])
    }

    fn real_batch(&mut self, idx: &[usize]) -> Result<RealBatch> {
        let index = Tensor::from_slice(&idx.iter().map(|&i| i as i64).collect::<Vec<_>>());
        let images = self.images.index_select(0, &index);
        // Each sample draws one of the available edge styles.
        let styles: Vec<usize> = idx
            .iter()
            .map(|_| self.rng.random_range(0..self.edges.len()))
            .collect();
        let rows: Vec<Tensor> = idx
            .iter()
            .zip(&styles)
            .map(|(&i, &s)| self.edges[s].narrow(0, i as i64, 1))
            .collect();
        let edges = Tensor::cat(&rows, 0);
        let labels: Vec<usize> = idx.iter().map(|&i| self.labels[i]).collect();
        RealBatch::new(edges, images, &labels, self.model.config.num_categories)
    }

    fn clip(vs: &nn::VarStore, c: f64) {
        tch::no_grad(|| {
            for mut v in vs.trainable_variables() {
                let _ = v.clamp_(-c, c);
            }
        });
    }

    /// Runs one pass over the data; returns one report per generator step.
    pub fn train_epoch(&mut self, epoch: usize) -> Result<Vec<LossReport>> {
        let cfg = self.model.config.clone();
        let order = epoch_order(self.labels.len(), cfg.seed, epoch);
        let mut reports = Vec::new();
        for chunk in order.chunks(cfg.batch_size) {
            let report = self.train_batch(chunk, &cfg)?;
            self.step += 1;
            if !report.all_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    step: self.step,
                    detail: format!("{report:?}"),
                    checkpoint: None,
                });
            }
            reports.push(report);
        }
        self.model.epochs_trained = epoch;
        Ok(reports)
    }

    fn train_batch(&mut self, idx: &[usize], cfg: &TrainConfig) -> Result<LossReport> {
        let n = idx.len();
        let real = self.real_batch(idx)?;
        let ab = cfg.ablation;
        let m = &self.model;
        let real_joint = join_width(&real.edges, &real.images);
        let mut report = LossReport::default();

        for _ in 0..cfg.critic_steps_per_gen_step {
            let z = {
                let nz = cfg.noise_dim;
                let v: Vec<f32> = (0..n * nz).map(|_| self.rng.sample(StandardNormal)).collect();
                Tensor::from_slice(&v).view([n as i64, nz as i64])
            };
            let (fe, fi) = tch::no_grad(|| {
                (
                    m.g_e.net.forward(&z, &real.one_hot),
                    m.g_i.net.forward(&z, &real.one_hot),
                )
            });
            // E is not adversarial, so it learns from every draw of fakes
            self.opts.encoder.backward_step(&latent_l1(&m.encoder.net, &z, &fe));
            let parts = [
                (ab.use_dj, &m.d_j, &mut self.opts.d_j, real_joint.shallow_clone(), join_width(&fe, &fi)),
                (ab.use_de, &m.d_e, &mut self.opts.d_e, real.edges.shallow_clone(), fe.shallow_clone()),
                (ab.use_di, &m.d_i, &mut self.opts.d_i, real.images.shallow_clone(), fi.shallow_clone()),
            ];
            let mut values = [(0.0, 0.0); 3];
            for (k, (enabled, critic, opt, r, f)) in parts.into_iter().enumerate() {
                if !enabled {
                    continue;
                }
                let term = critic_term(&critic.net, &r, &real.one_hot, &f, &real.one_hot, cfg, &mut self.rng)?;
                let total = term.total();
                opt.backward_step(&total);
                if cfg.optimizer_kind == OptimizerKind::RmspropWgan {
                    Self::clip(&critic.vs, cfg.clip_value);
                }
                values[k] = (scalar(&total), scalar(&term.penalty));
            }
            (report.d_j, report.gp_j) = values[0];
            (report.d_e, report.gp_e) = values[1];
            (report.d_i, report.gp_i) = values[2];
        }

        if ab.use_classifier {
            let loss = -class_log_likelihood(
                &m.classifier.net.logits(&real.images),
                &real.labels,
                cfg.class_loss,
            );
            self.opts.classifier.backward_step(&loss);
            report.classifier = scalar(&loss);
        }

        let z = self.noise(n);
        let m = &mut self.model;
        for vs in [&mut m.d_j.vs, &mut m.d_e.vs, &mut m.d_i.vs, &mut m.classifier.vs] {
            vs.freeze();
        }
        let fe = m.g_e.net.forward(&z, &real.one_hot);
        let fi = m.g_i.net.forward(&z, &real.one_hot);
        let terms = {
            let critics = Critics {
                joint: &m.d_j.net,
                edge: &m.d_e.net,
                image: &m.d_i.net,
            };
            GeneratorTerms::compute(&critics, &m.classifier.net, &fe, &fi, &real.one_hot, &real.labels, cfg)
        };
        let objective = terms.joint_objective();
        self.opts.g_e.zero_grad();
        self.opts.g_i.zero_grad();
        if objective.requires_grad() {
            objective.backward();
            self.opts.g_e.step();
            self.opts.g_i.step();
        }
        for vs in [&mut m.d_j.vs, &mut m.d_e.vs, &mut m.d_i.vs, &mut m.classifier.vs] {
            vs.unfreeze();
        }
        report.g_dj = opt_scalar(&terms.joint);
        report.g_de = opt_scalar(&terms.edge);
        report.g_di = opt_scalar(&terms.image);
        report.ac_gen = opt_scalar(&terms.class_ll);
        report.g_e = scalar(&terms.edge_loss());
        report.g_i = scalar(&terms.image_loss());

        let l1 = latent_l1(&m.encoder.net, &z, &fe.detach());
        self.opts.encoder.backward_step(&l1);
        report.latent_l1 = scalar(&l1);
        Ok(report)
    }
}

fn check_dataset(dataset: &ObjectStore, cfg: &TrainConfig) -> Result<()> {
    if dataset.categories.len() != cfg.num_categories {
        return Err(Error::Config(format!(
            "dataset has {} categories, config expects {}",
            dataset.categories.len(),
            cfg.num_categories
        )));
    }
    let counts = dataset.count_per_category();
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return data(format!("category {:?} has no training examples", dataset.categories[c]));
    }
    for it in &dataset.items {
        it.validate()?;
        if it.resolution() != cfg.resolution {
            return data(format!(
                "object at {0}x{0}, config resolution is {1}",
                it.resolution(),
                cfg.resolution
            ));
        }
        if it.category >= cfg.num_categories {
            return data(format!("object category index {} out of range", it.category));
        }
    }
    Ok(())
}

/// Where training writes artifacts; `None` keeps everything in memory.
#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub model: ObjectModel,
    pub checkpoints: Vec<PathBuf>,
    pub losses: Vec<LossRow>,
}

pub fn checkpoint_path(dir: &Path, epoch: usize) -> PathBuf {
    dir.join(format!("object-epoch{epoch:04}.safetensors"))
}

pub fn train_object_model(
    dataset: &ObjectStore,
    config: &TrainConfig,
    options: &TrainOptions,
) -> Result<TrainOutcome> {
    train_object_model_with(dataset, config, options, |_, _| Ok(()))
}

/// Trains for `config.epochs` epochs, calling `on_epoch(epoch, model)` after
/// each one. A non-finite loss aborts with a diagnostic checkpoint.
pub fn train_object_model_with(
    dataset: &ObjectStore,
    config: &TrainConfig,
    options: &TrainOptions,
    mut on_epoch: impl FnMut(usize, &ObjectModel) -> Result<()>,
) -> Result<TrainOutcome> {
    let model = ObjectModel::new(config.clone(), dataset.categories.clone())?;
    let mut trainer = ObjectTrainer::new(model, dataset)?;
    let mut checkpoints = Vec::new();
    let mut losses = Vec::new();
    let save = |model: &ObjectModel, epoch: usize, cps: &mut Vec<PathBuf>| -> Result<()> {
        if let Some(dir) = &options.out_dir {
            let p = checkpoint_path(dir, epoch);
            model.save(&p)?;
            cps.push(p);
        }
        Ok(())
    };
    if config.epochs == 0 {
        save(&trainer.model, 0, &mut checkpoints)?;
    }
    for epoch in 1..=config.epochs {
        let reports = match trainer.train_epoch(epoch) {
            Ok(r) => r,
            Err(Error::NonFinite { epoch, step, detail, .. }) => {
                let checkpoint = match &options.out_dir {
                    Some(dir) => {
                        let p = dir.join(format!("diverged-epoch{epoch:04}-step{step}.safetensors"));
                        trainer.model.save(&p)?;
                        Some(p)
                    }
                    None => None,
                };
                return Err(Error::NonFinite { epoch, step, detail, checkpoint });
            }
            Err(e) => return Err(e),
        };
        let base = losses.len();
        let rows: Vec<LossRow> = reports
            .into_iter()
            .enumerate()
            .map(|(i, report)| LossRow {
                epoch,
                step: base + i + 1,
                report,
            })
            .collect();
        if let Some(dir) = &options.out_dir {
            append_loss_rows(&dir.join("losses.csv"), &rows)?;
        }
        losses.extend(rows);
        let every = config.checkpoint_every;
        if epoch == config.epochs || (every > 0 && epoch % every == 0) {
            save(&trainer.model, epoch, &mut checkpoints)?;
        }
        on_epoch(epoch, &trainer.model)?;
    }
    Ok(TrainOutcome {
        model: trainer.model,
        checkpoints,
        losses,
    })
}

/// Mean absolute noise-reconstruction error `|z - E(G_E(z))|` over `n` codes.
pub fn latent_reconstruction_error(model: &ObjectModel, n: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nz = model.config.noise_dim;
    let nc = model.config.num_categories;
    let z: Vec<f32> = (0..n * nz).map(|_| rng.sample(StandardNormal)).collect();
    let z = Tensor::from_slice(&z).view([n as i64, nz as i64]);
    let labels: Vec<i64> = (0..n).map(|i| (i % nc) as i64).collect();
    let oh = Tensor::from_slice(&labels).one_hot(nc as i64).to_kind(Kind::Float);
    Ok(tch::no_grad(|| {
        let edges = model.g_e.net.forward(&z, &oh);
        scalar(&latent_l1(&model.encoder.net, &z, &edges))
    }))
}
