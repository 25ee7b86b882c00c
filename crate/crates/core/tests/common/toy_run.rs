//! Toy-scale object training with per-epoch progress measurements.

use std::path::PathBuf;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sketchscene::data::toy::{self, ShapeKind, ToyObject};
use sketchscene::data::Split;
use sketchscene::eval::{fid, ClassifierConfig, FeatureExtractor, ImageClassifier};
use sketchscene::imaging::ColorImage;
use sketchscene::latent::sample_latent;
use sketchscene::layers::sub_seed;
use sketchscene::model::train::latent_reconstruction_error;
use sketchscene::model::{train_object_model_with, NetWidths, ObjectModel, TrainConfig, TrainOptions};

#[derive(Debug, Clone)]
pub struct ToyRun {
    pub per_category: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub noise_dim: usize,
    pub width: i64,
    /// The encoder needs more capacity than the adversarial nets to read
    /// shape geometry back out of an edge map.
    pub encoder_width: i64,
    pub seed: u64,
    /// Generated and held-out real images per category for FID.
    pub fid_samples: usize,
    pub out_dir: Option<PathBuf>,
}

impl Default for ToyRun {
    fn default() -> Self {
        ToyRun {
            per_category: 500,
            epochs: 30,
            batch_size: 16,
            noise_dim: 3,
            width: 8,
            encoder_width: 32,
            seed: 0,
            fid_samples: 250,
            out_dir: None,
        }
    }
}

impl ToyRun {
    pub fn config(&self) -> TrainConfig {
        TrainConfig {
            noise_dim: self.noise_dim,
            num_categories: 2,
            resolution: 64,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            widths: NetWidths {
                generator: self.width,
                critic: self.width,
                encoder: self.encoder_width,
                ..Default::default()
            },
            ..Default::default()
        }
    }
}

#[derive(Debug)]
pub struct ToyOutcome {
    pub model: ObjectModel,
    /// One value per epoch, starting at epoch 1.
    pub fid: Vec<f64>,
    pub latent_l1: Vec<f64>,
    /// Judge accuracy of outputs for held-out sketches.
    pub accuracy: f64,
    pub held_out: usize,
    pub seconds: f64,
}

fn classifier(images: &[ColorImage], labels: &[usize], cats: &[String], seed: u64) -> ImageClassifier {
    let cfg = ClassifierConfig {
        seed,
        ..Default::default()
    };
    ImageClassifier::train(images, labels, cats.to_vec(), cfg).unwrap()
}

fn real_reference(n: usize, seed: u64) -> Vec<ColorImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .flat_map(|_| [0, 1].map(|c| ToyObject::sample(ShapeKind::from_index(c), &mut rng).render(64)))
        .collect()
}

fn generated(model: &ObjectModel, n: usize, seed: u64) -> Vec<ColorImage> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nz = model.config.noise_dim;
    (0..n)
        .flat_map(|_| [0, 1].map(|c| sample_latent(2, c, nz, &mut rng).unwrap()))
        .map(|code| model.generate_image(&code).unwrap())
        .collect()
}

pub fn run(setup: &ToyRun, mut log: impl FnMut(String)) -> ToyOutcome {
    let start = Instant::now();
    let seed = setup.seed;
    let pool = toy::sketch_pool(60, 64, 32, sub_seed(seed, "pool")).unwrap();
    let store = toy::object_store(setup.per_category, 64, Split::Train, &pool, sub_seed(seed, "objects")).unwrap();
    let images: Vec<ColorImage> = store.items.iter().map(|t| t.image.clone()).collect();
    let labels: Vec<usize> = store.items.iter().map(|t| t.category).collect();
    let extractor = FeatureExtractor::ToyClassifier(classifier(&images, &labels, &store.categories, sub_seed(seed, "extractor")));
    let judge = classifier(&images, &labels, &store.categories, sub_seed(seed, "judge"));
    let reference = extractor.extract(&real_reference(setup.fid_samples, sub_seed(seed, "reference"))).unwrap();
    log(format!("toy corpus ready: {} triplets, {:.0}s", store.items.len(), start.elapsed().as_secs_f64()));

    let cfg = setup.config();
    let options = TrainOptions {
        out_dir: setup.out_dir.clone(),
    };
    let mut fids = Vec::new();
    let mut latents = Vec::new();
    let outcome = train_object_model_with(&store, &cfg, &options, |epoch, m| {
        let fake = extractor.extract(&generated(m, setup.fid_samples, sub_seed(seed, "fid-codes")))?;
        let f = fid(&reference, &fake)?;
        let l = latent_reconstruction_error(m, 256, sub_seed(seed, "latent-codes"))?;
        log(format!(
            "epoch {epoch:>2}: fid {f:.4} latent_l1 {l:.4} ({:.0}s)",
            start.elapsed().as_secs_f64()
        ));
        fids.push(f);
        latents.push(l);
        Ok(())
    })
    .unwrap();
    let model = outcome.model;

    // fresh freehand sketches never seen by retrieval or training
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, "held-out-sketches"));
    let mut outputs = Vec::new();
    let mut wanted = Vec::new();
    for i in 0..100 {
        let c = i % 2;
        let sketch = toy::freehand_sketch(ShapeKind::from_index(c), 64, &mut rng);
        outputs.push(model.infer_object(&sketch, c).unwrap());
        wanted.push(c);
    }
    let pred = judge.predict(&outputs).unwrap();
    let hits = pred.iter().zip(&wanted).filter(|(p, w)| p == w).count();
    ToyOutcome {
        model,
        fid: fids,
        latent_l1: latents,
        accuracy: hits as f64 / wanted.len() as f64,
        held_out: wanted.len(),
        seconds: start.elapsed().as_secs_f64(),
    }
}
