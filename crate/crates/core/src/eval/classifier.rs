//! Independently trained image classifier: accuracy judge and the default
//! FID feature extractor.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tch::nn::{self, OptimizerConfig};
use tch::{Kind, Tensor};

use crate::checkpoint::Archive;
use crate::error::{input, Error, Result};
use crate::imaging::{tensor_to_vec, ColorImage};
use crate::layers::sub_seed;
use crate::model::nets::Classifier;
use crate::model::object::Net;

const KIND: &str = "sketchscene-classifier";
const CHUNK: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    pub width: i64,
    pub feature_dim: i64,
    pub resolution: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            width: 16,
            feature_dim: 64,
            resolution: 64,
            epochs: 4,
            batch_size: 32,
            learning_rate: 1e-3,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct ImageClassifier {
    pub config: ClassifierConfig,
    pub categories: Vec<String>,
    net: Net<Classifier>,
}

impl ImageClassifier {
    pub fn new(config: ClassifierConfig, categories: Vec<String>) -> Result<Self> {
        if categories.is_empty() {
            return input("classifier needs at least one category");
        }
        if !config.resolution.is_power_of_two() || config.resolution < 8 {
            return Err(Error::Config(format!("classifier resolution {} is not a power of two ≥ 8", config.resolution)));
        }
        let nc = categories.len() as i64;
        let net = Net::build("classifier", config.seed, |p| {
            Classifier::new(p, config.width, config.feature_dim, nc, config.resolution)
        });
        Ok(ImageClassifier { config, categories, net })
    }

    /// Cross-entropy training with Adam on `(image, label)` pairs.
    pub fn train(images: &[ColorImage], labels: &[usize], categories: Vec<String>, config: ClassifierConfig) -> Result<Self> {
        if images.is_empty() || images.len() != labels.len() {
            return input("classifier training needs matching, non-empty images and labels");
        }
        if let Some(l) = labels.iter().find(|&&l| l >= categories.len()) {
            return input(format!("label {l} out of range"));
        }
        let model = ImageClassifier::new(config, categories)?;
        let cfg = model.config.clone();
        let mut opt = nn::Adam::default().build(&model.net.vs, cfg.learning_rate)?;
        let x = model.batch_tensor(images);
        let y = Tensor::from_slice(&labels.iter().map(|&l| l as i64).collect::<Vec<_>>());
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, "classifier-order"));
        let mut order: Vec<i64> = (0..images.len() as i64).collect();
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size.max(1)) {
                let idx = Tensor::from_slice(chunk);
                let logits = model.net.net.logits(&x.index_select(0, &idx));
                let loss = logits.cross_entropy_for_logits(&y.index_select(0, &idx));
                opt.backward_step(&loss);
            }
        }
        Ok(model)
    }

    fn batch_tensor(&self, images: &[ColorImage]) -> Tensor {
        let r = self.config.resolution;
        Tensor::cat(&images.iter().map(|im| im.resize(r, r).to_tensor()).collect::<Vec<_>>(), 0)
    }

    fn map_chunks(&self, images: &[ColorImage], f: impl Fn(&Tensor) -> Tensor) -> Result<Vec<Vec<f32>>> {
        let mut out = Vec::with_capacity(images.len());
        for chunk in images.chunks(CHUNK) {
            let t = tch::no_grad(|| f(&self.batch_tensor(chunk)));
            let width = t.size()[1] as usize;
            let flat = tensor_to_vec(&t)?;
            out.extend(flat.chunks(width).map(<[f32]>::to_vec));
        }
        Ok(out)
    }

    pub fn features(&self, images: &[ColorImage]) -> Result<Vec<Vec<f32>>> {
        self.map_chunks(images, |x| self.net.net.features(x))
    }

    pub fn probabilities(&self, images: &[ColorImage]) -> Result<Vec<Vec<f32>>> {
        self.map_chunks(images, |x| self.net.net.logits(x).softmax(1, Kind::Float))
    }

    pub fn predict(&self, images: &[ColorImage]) -> Result<Vec<usize>> {
        Ok(self
            .probabilities(images)?
            .iter()
            .map(|p| {
                p.iter()
                    .enumerate()
                    .fold((0, f32::MIN), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                    .0
            })
            .collect())
    }

    pub fn feature_dim(&self) -> usize {
        self.config.feature_dim as usize
    }

    pub fn to_archive(&self) -> Result<Archive> {
        let mut ar = Archive::new();
        ar.metadata.insert("kind".into(), KIND.into());
        ar.metadata.insert("config".into(), serde_json::to_string(&self.config)?);
        ar.metadata.insert("categories".into(), serde_json::to_string(&self.categories)?);
        ar.insert_store("classifier", &self.net.vs)?;
        Ok(ar)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ar = Archive::load(path)?;
        if ar.meta("kind")? != KIND {
            return Err(Error::Data(format!("{} is not a classifier checkpoint", path.display())));
        }
        let config: ClassifierConfig = serde_json::from_str(ar.meta("config")?)?;
        let categories: Vec<String> = serde_json::from_str(ar.meta("categories")?)?;
        let model = ImageClassifier::new(config, categories)?;
        ar.restore_store("classifier", &model.net.vs)?;
        Ok(model)
    }
}

/// Fraction of generated images whose predicted class is the intended one.
pub fn accuracy(generated: &[(ColorImage, usize)], classifier: &ImageClassifier) -> Result<f64> {
    if generated.is_empty() {
        return input("accuracy needs at least one generated image");
    }
    let images: Vec<ColorImage> = generated.iter().map(|(im, _)| im.clone()).collect();
    let pred = classifier.predict(&images)?;
    let hits = pred.iter().zip(generated).filter(|(p, (_, c))| *p == c).count();
    Ok(hits as f64 / generated.len() as f64)
}
