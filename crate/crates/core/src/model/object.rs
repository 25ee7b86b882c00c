use std::path::Path;

use tch::{nn, Device, Kind, Tensor};

use super::config::TrainConfig;
use super::nets::{Classifier, Critic, Encoder, Generator};
use crate::checkpoint::Archive;
use crate::error::{input, Error, Result};
use crate::imaging::{tensor_to_vec, ColorImage, EdgeImage};
use crate::latent::{codes_to_tensors, one_hot, LatentCode};
use crate::layers::{seeded_init, sub_seed};

/// Encoder output: the shared latent an edge map and an image both map to.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeVector(pub Vec<f32>);

impl AttributeVector {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A network together with the variable store that owns its parameters.
#[derive(Debug)]
pub struct Net<M> {
    pub vs: nn::VarStore,
    pub net: M,
}

impl<M> Net<M> {
    pub(crate) fn build(name: &str, seed: u64, f: impl FnOnce(&nn::Path) -> M) -> Self {
        let vs = nn::VarStore::new(Device::Cpu);
        let net = f(&vs.root());
        seeded_init(&vs, sub_seed(seed, name));
        Net { vs, net }
    }
}

const KIND: &str = "sketchscene-object-model";
const PARTS: [&str; 7] = ["g_i", "g_e", "d_j", "d_e", "d_i", "encoder", "classifier"];

/// All networks of the object stage: image and edge generators, the joint,
/// edge and image critics, the edge encoder and the auxiliary classifier.
#[derive(Debug)]
pub struct ObjectModel {
    pub config: TrainConfig,
    pub categories: Vec<String>,
    pub epochs_trained: usize,
    pub g_i: Net<Generator>,
    pub g_e: Net<Generator>,
    pub d_j: Net<Critic>,
    pub d_e: Net<Critic>,
    pub d_i: Net<Critic>,
    pub encoder: Net<Encoder>,
    pub classifier: Net<Classifier>,
}

impl ObjectModel {
    pub fn new(config: TrainConfig, categories: Vec<String>) -> Result<Self> {
        config.validate()?;
        if categories.len() != config.num_categories {
            return Err(Error::Config(format!(
                "{} category names for num_categories = {}",
                categories.len(),
                config.num_categories
            )));
        }
        let res = config.resolution;
        let nz = config.noise_dim as i64;
        let nc = config.num_categories as i64;
        let w = config.widths;
        let cond = if config.condition_critics { nc } else { 0 };
        let scales = if config.ablation.multiscale { 2 } else { 1 };
        let seed = config.seed;
        Ok(ObjectModel {
            g_i: Net::build("g_i", seed, |p| Generator::new(p, nz + nc, w.generator, 3, res)),
            g_e: Net::build("g_e", seed, |p| Generator::new(p, nz + nc, w.generator, 1, res)),
            d_j: Net::build("d_j", seed, |p| Critic::new(p, 3, res, 2 * res, w.critic, cond, scales)),
            d_e: Net::build("d_e", seed, |p| Critic::new(p, 1, res, res, w.critic, cond, scales)),
            d_i: Net::build("d_i", seed, |p| Critic::new(p, 3, res, res, w.critic, cond, scales)),
            encoder: Net::build("encoder", seed, |p| Encoder::new(p, 1, w.encoder, nz, res)),
            classifier: Net::build("classifier", seed, |p| {
                Classifier::new(p, w.classifier, w.classifier_features, nc, res)
            }),
            config,
            categories,
            epochs_trained: 0,
        })
    }

    pub fn resolution(&self) -> usize {
        self.config.resolution
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == name)
    }

    fn check_code(&self, code: &LatentCode) -> Result<()> {
        if code.noise_dim() != self.config.noise_dim || code.num_categories() != self.config.num_categories {
            return Err(Error::Config(format!(
                "latent code is {}+{}, model expects {}+{}",
                code.noise_dim(),
                code.num_categories(),
                self.config.noise_dim,
                self.config.num_categories
            )));
        }
        Ok(())
    }

    pub fn generate_edge(&self, code: &LatentCode) -> Result<EdgeImage> {
        self.check_code(code)?;
        let (z, oh) = codes_to_tensors(std::slice::from_ref(code))?;
        let out = tch::no_grad(|| self.g_e.net.forward(&z, &oh));
        EdgeImage::from_tensor(&out)
    }

    pub fn generate_image(&self, code: &LatentCode) -> Result<ColorImage> {
        self.check_code(code)?;
        let (z, oh) = codes_to_tensors(std::slice::from_ref(code))?;
        let out = tch::no_grad(|| self.g_i.net.forward(&z, &oh));
        ColorImage::from_tensor(&out)
    }

    fn check_sketch(&self, sketch: &EdgeImage) -> Result<()> {
        if sketch.size() != self.resolution() {
            return input(format!(
                "sketch is {0}x{0}, model resolution is {1}x{1}",
                sketch.size(),
                self.resolution()
            ));
        }
        Ok(())
    }

    pub fn encode_sketch(&self, sketch: &EdgeImage) -> Result<AttributeVector> {
        self.check_sketch(sketch)?;
        let out = tch::no_grad(|| self.encoder.net.forward(&sketch.to_tensor()));
        Ok(AttributeVector(tensor_to_vec(&out)?))
    }

    /// Posterior over categories from the auxiliary classifier.
    pub fn classify_image(&self, image: &ColorImage) -> Result<Vec<f32>> {
        let r = self.resolution();
        if image.height() != r || image.width() != r {
            return input(format!(
                "image is {}x{}, classifier expects {r}x{r}",
                image.height(),
                image.width()
            ));
        }
        let probs = tch::no_grad(|| {
            self.classifier
                .net
                .logits(&image.to_tensor())
                .softmax(1, Kind::Float)
        });
        tensor_to_vec(&probs)
    }

    fn check_trained(&self) -> Result<()> {
        if self.epochs_trained == 0 {
            return Err(Error::State("object model has not been trained".into()));
        }
        Ok(())
    }

    /// Image generator applied to (encoded sketch, one-hot category).
    pub fn infer_object(&self, sketch: &EdgeImage, category_index: usize) -> Result<ColorImage> {
        self.check_trained()?;
        self.check_sketch(sketch)?;
        let oh = one_hot(self.config.num_categories, category_index)?;
        let out = tch::no_grad(|| {
            let attr = self.encoder.net.forward(&sketch.to_tensor());
            let oh = Tensor::from_slice(&oh).view([1, -1]);
            self.g_i.net.forward(&attr, &oh)
        });
        ColorImage::from_tensor(&out)
    }

    /// Batched inference; `sketches` is `[N, 1, H, W]`.
    pub fn infer_batch(&self, sketches: &Tensor, categories: &[usize]) -> Result<Tensor> {
        self.check_trained()?;
        let nc = self.config.num_categories;
        if let Some(c) = categories.iter().find(|&&c| c >= nc) {
            return input(format!("category index {c} out of range"));
        }
        let labels: Vec<i64> = categories.iter().map(|&c| c as i64).collect();
        Ok(tch::no_grad(|| {
            let attr = self.encoder.net.forward(sketches);
            let oh = Tensor::from_slice(&labels).one_hot(nc as i64).to_kind(Kind::Float);
            self.g_i.net.forward(&attr, &oh)
        }))
    }

    fn stores(&self) -> [(&'static str, &nn::VarStore); 7] {
        [
            (PARTS[0], &self.g_i.vs),
            (PARTS[1], &self.g_e.vs),
            (PARTS[2], &self.d_j.vs),
            (PARTS[3], &self.d_e.vs),
            (PARTS[4], &self.d_i.vs),
            (PARTS[5], &self.encoder.vs),
            (PARTS[6], &self.classifier.vs),
        ]
    }

    pub fn to_archive(&self) -> Result<Archive> {
        let mut ar = Archive::new();
        ar.metadata.insert("kind".into(), KIND.into());
        ar.metadata
            .insert("config".into(), serde_json::to_string(&self.config)?);
        ar.metadata
            .insert("categories".into(), serde_json::to_string(&self.categories)?);
        ar.metadata
            .insert("epochs_trained".into(), self.epochs_trained.to_string());
        for (name, vs) in self.stores() {
            ar.insert_store(name, vs)?;
        }
        Ok(ar)
    }

    pub fn from_archive(ar: &Archive) -> Result<Self> {
        if ar.meta("kind")? != KIND {
            return Err(Error::Data(format!(
                "checkpoint kind {:?} is not an object model",
                ar.meta("kind")?
            )));
        }
        let config: TrainConfig = serde_json::from_str(ar.meta("config")?)?;
        let categories: Vec<String> = serde_json::from_str(ar.meta("categories")?)?;
        let epochs_trained = ar
            .meta("epochs_trained")?
            .parse()
            .map_err(|_| Error::Data("epochs_trained is not an integer".into()))?;
        let mut model = ObjectModel::new(config, categories)?;
        model.epochs_trained = epochs_trained;
        for (name, vs) in model.stores() {
            ar.restore_store(name, vs)?;
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_archive()?.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        ObjectModel::from_archive(&Archive::load(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::latent::sample_latent;
    use crate::model::config::NetWidths;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small() -> ObjectModel {
        let cfg = TrainConfig {
            noise_dim: 8,
            widths: NetWidths {
                generator: 4,
                critic: 4,
                encoder: 4,
                classifier: 4,
                classifier_features: 8,
            },
            ..Default::default()
        };
        ObjectModel::new(cfg, vec!["circle".into(), "triangle".into()]).unwrap()
    }

    #[test]
    fn generator_range_and_determinism() {
        let m = small();
        let code = sample_latent(2, 1, 8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let e1 = m.generate_edge(&code).unwrap();
        let e2 = m.generate_edge(&code).unwrap();
        assert_eq!(e1.size(), 64);
        assert!(e1.pixels().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(e1, e2);
        let i1 = m.generate_image(&code).unwrap();
        assert_eq!((i1.height(), i1.width()), (64, 64));
        assert!(i1.pixels().iter().all(|v| (-1.0..=1.0).contains(v)));
        assert_eq!(i1, m.generate_image(&code).unwrap());
    }

    #[test]
    fn mismatched_code_is_config_error() {
        let m = small();
        let code = sample_latent(3, 1, 8, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert!(matches!(m.generate_edge(&code), Err(Error::Config(_))));
    }

    #[test]
    fn encoder_and_classifier_contracts() {
        let m = small();
        let sketch = EdgeImage::blank(64);
        let v = m.encode_sketch(&sketch).unwrap();
        assert_eq!(v.len(), 8);
        assert_eq!(v, m.encode_sketch(&sketch).unwrap());
        assert!(m.encode_sketch(&EdgeImage::blank(32)).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        use rand::Rng;
        let noise = ColorImage::from_fn(64, 64, |_, _| {
            [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]
        });
        let p = m.classify_image(&noise).unwrap();
        assert!(p.iter().all(|v| v.is_finite() && *v >= 0.0));
        assert!((p.iter().sum::<f32>() - 1.0).abs() < 1e-5);
        assert!(m.classify_image(&ColorImage::filled(32, 32, [0.0; 3])).is_err());
    }

    #[test]
    fn untrained_inference_is_state_error() {
        let m = small();
        assert!(matches!(m.infer_object(&EdgeImage::blank(64), 0), Err(Error::State(_))));
    }

    #[test]
    fn same_seed_same_parameters_and_archive_round_trip() {
        let a = small();
        let b = small();
        assert_eq!(a.to_archive().unwrap(), b.to_archive().unwrap());
        let back = ObjectModel::from_archive(&a.to_archive().unwrap()).unwrap();
        assert_eq!(back.to_archive().unwrap(), a.to_archive().unwrap());
    }
}
