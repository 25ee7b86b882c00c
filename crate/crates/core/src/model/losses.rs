//! Objective terms of the object model.
//!
//! Critics minimize `E[D(fake)] - E[D(real)] + λ·GP` (Wasserstein variants) or
//! the logistic loss (DCGAN variant). The edge generator minimizes the sum of
//! the joint and edge adversarial terms, the image generator the sum of the
//! joint and image adversarial terms minus the classification likelihood of
//! its samples. The encoder regresses the noise from generated edge maps.

use rand::Rng;
use serde::{Deserialize, Serialize};
use tch::{Kind, Tensor};

use super::config::{ClassLoss, TrainConfig};
use super::nets::{Classifier, Critic, Encoder};
use crate::error::{input, Result};
use crate::imaging::join_width;

/// A batch of real training data as tensors.
#[derive(Debug)]
pub struct RealBatch {
    /// `[N, 1, H, W]`
    pub edges: Tensor,
    /// `[N, 3, H, W]`
    pub images: Tensor,
    /// `[N]` int64 class indices.
    pub labels: Tensor,
    /// `[N, C]`
    pub one_hot: Tensor,
}

impl RealBatch {
    pub fn new(edges: Tensor, images: Tensor, labels: &[usize], num_categories: usize) -> Result<Self> {
        let n = labels.len() as i64;
        if n == 0 {
            return input("empty batch");
        }
        if edges.size()[0] != n || images.size()[0] != n {
            return input("batch tensors disagree on batch size");
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= num_categories) {
            return input(format!("label {bad} out of range for {num_categories} categories"));
        }
        let idx: Vec<i64> = labels.iter().map(|&l| l as i64).collect();
        let labels = Tensor::from_slice(&idx);
        let one_hot = labels.one_hot(num_categories as i64).to_kind(Kind::Float);
        Ok(RealBatch {
            edges,
            images,
            labels,
            one_hot,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.size()[0] as usize
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Gradient of the summed critic output with respect to its input, kept in
/// the graph so it can itself be differentiated.
pub fn input_gradient(critic: impl Fn(&Tensor) -> Tensor, xs: &Tensor) -> Tensor {
    let xs = xs.detach().set_requires_grad(true);
    let out = critic(&xs).sum(xs.kind());
    let mut grads = Tensor::run_backward(&[&out], &[&xs], true, true);
    grads.pop().expect("one input, one gradient")
}

/// `λ · mean((‖∇ critic(x̂)‖₂ − 1)²)` at `x̂ = ε·real + (1−ε)·fake`, one ε ~ U(0,1) per sample.
pub fn gradient_penalty<R: Rng + ?Sized>(
    critic: impl Fn(&Tensor) -> Tensor,
    real: &Tensor,
    fake: &Tensor,
    lambda: f64,
    rng: &mut R,
) -> Result<Tensor> {
    if real.size() != fake.size() {
        return input(format!(
            "real batch {:?} and fake batch {:?} differ in shape",
            real.size(),
            fake.size()
        ));
    }
    let dims = real.size();
    if dims.is_empty() || dims[0] == 0 {
        return input("gradient penalty needs a non-empty batch");
    }
    let n = dims[0];
    let eps: Vec<f32> = (0..n).map(|_| rng.random::<f32>()).collect();
    if lambda == 0.0 {
        return Ok(Tensor::zeros([], (real.kind(), real.device())));
    }
    let mut shape = vec![n];
    shape.extend(std::iter::repeat_n(1, dims.len() - 1));
    let kind = real.kind();
    let eps = Tensor::from_slice(&eps).to_kind(kind).view(shape.as_slice());
    let interp = &eps * real.detach() + (1.0 - &eps) * fake.detach();
    let grad = input_gradient(critic, &interp);
    let norm = (grad.flatten(1, -1).square().sum_dim_intlist(1, false, kind) + 1e-16).sqrt();
    Ok((norm - 1.0).square().mean(kind) * lambda)
}

/// One critic's objective, split into its adversarial part and its penalty.
#[derive(Debug)]
pub struct CriticTerm {
    pub adversarial: Tensor,
    pub penalty: Tensor,
}

impl CriticTerm {
    pub fn total(&self) -> Tensor {
        &self.adversarial + &self.penalty
    }
}

/// Loss for one critic given real and (detached) fake inputs.
pub fn critic_term<R: Rng + ?Sized>(
    critic: &Critic,
    real: &Tensor,
    real_one_hot: &Tensor,
    fake: &Tensor,
    fake_one_hot: &Tensor,
    config: &TrainConfig,
    rng: &mut R,
) -> Result<CriticTerm> {
    let cond = |oh: &Tensor| config.condition_critics.then(|| oh.shallow_clone());
    let (rc, fc) = (cond(real_one_hot), cond(fake_one_hot));
    let d_real = critic.forward(real, rc.as_ref());
    let d_fake = critic.forward(fake, fc.as_ref());
    if config.optimizer_kind.is_wasserstein() {
        let adversarial = d_fake.mean(Kind::Float) - d_real.mean(Kind::Float);
        let penalty = match config.optimizer_kind {
            super::config::OptimizerKind::RmspropWgangp => gradient_penalty(
                |x| critic.forward(x, rc.as_ref()),
                real,
                fake,
                config.gp_weight,
                rng,
            )?,
            _ => Tensor::zeros([], (Kind::Float, real.device())),
        };
        Ok(CriticTerm {
            adversarial,
            penalty,
        })
    } else {
        let adversarial = (-d_real).softplus().mean(Kind::Float) + d_fake.softplus().mean(Kind::Float);
        Ok(CriticTerm {
            adversarial,
            penalty: Tensor::zeros([], (Kind::Float, real.device())),
        })
    }
}

/// Generator-side adversarial term `E[-D(fake)]` (or its logistic analogue).
pub fn generator_term(critic: &Critic, fake: &Tensor, one_hot: &Tensor, config: &TrainConfig) -> Tensor {
    let cond = config.condition_critics.then(|| one_hot.shallow_clone());
    let d_fake = critic.forward(fake, cond.as_ref());
    if config.optimizer_kind.is_wasserstein() {
        -d_fake.mean(Kind::Float)
    } else {
        (-d_fake).softplus().mean(Kind::Float)
    }
}

/// Per-sample weighted log-likelihood `(1-p)^γ · log p` of the true class,
/// averaged. Plain cross-entropy corresponds to γ = 0. The classifier
/// maximizes this on real images; the image generator on its samples.
pub fn class_log_likelihood(logits: &Tensor, labels: &Tensor, loss: ClassLoss) -> Tensor {
    let log_p = logits
        .log_softmax(1, Kind::Float)
        .gather(1, &labels.unsqueeze(1), false)
        .squeeze_dim(1);
    match loss {
        ClassLoss::CrossEntropy => log_p.mean(Kind::Float),
        ClassLoss::Focal { gamma } => {
            let weight = (-log_p.exp() + 1.0).clamp_min(0.0).pow_tensor_scalar(gamma);
            (weight * log_p).mean(Kind::Float)
        }
    }
}

/// Mean absolute difference between the noise and the encoding of the edges.
pub fn latent_l1(encoder: &Encoder, noise: &Tensor, edges: &Tensor) -> Tensor {
    (encoder.forward(edges) - noise).abs().mean(Kind::Float)
}

/// The critics needed by the objective.
pub struct Critics<'a> {
    pub joint: &'a Critic,
    pub edge: &'a Critic,
    pub image: &'a Critic,
}

/// Generator-side terms for one batch of samples.
#[derive(Debug)]
pub struct GeneratorTerms {
    pub joint: Option<Tensor>,
    pub edge: Option<Tensor>,
    pub image: Option<Tensor>,
    /// Classification likelihood of the samples (subtracted from the image loss).
    pub class_ll: Option<Tensor>,
}

fn zero() -> Tensor {
    Tensor::zeros([], (Kind::Float, tch::Device::Cpu))
}

impl GeneratorTerms {
    pub fn compute(
        critics: &Critics<'_>,
        classifier: &Classifier,
        fake_edges: &Tensor,
        fake_images: &Tensor,
        one_hot: &Tensor,
        labels: &Tensor,
        config: &TrainConfig,
    ) -> Self {
        let ab = config.ablation;
        GeneratorTerms {
            joint: ab.use_dj.then(|| {
                generator_term(critics.joint, &join_width(fake_edges, fake_images), one_hot, config)
            }),
            edge: ab
                .use_de
                .then(|| generator_term(critics.edge, fake_edges, one_hot, config)),
            image: ab
                .use_di
                .then(|| generator_term(critics.image, fake_images, one_hot, config)),
            class_ll: ab.use_classifier.then(|| {
                class_log_likelihood(&classifier.logits(fake_images), labels, config.class_loss)
            }),
        }
    }

    fn or_zero(t: &Option<Tensor>) -> Tensor {
        t.as_ref().map(Tensor::shallow_clone).unwrap_or_else(zero)
    }

    /// Edge generator objective: joint + edge terms.
    pub fn edge_loss(&self) -> Tensor {
        Self::or_zero(&self.joint) + Self::or_zero(&self.edge)
    }

    /// Image generator objective: joint + image terms − classification likelihood.
    pub fn image_loss(&self) -> Tensor {
        Self::or_zero(&self.joint) + Self::or_zero(&self.image) - Self::or_zero(&self.class_ll)
    }

    /// A single scalar whose gradient restricted to each generator's
    /// parameters equals the gradient of that generator's own objective
    /// (the joint term is counted once; each generator only reaches its
    /// own branch of the other terms).
    pub fn joint_objective(&self) -> Tensor {
        Self::or_zero(&self.joint) + Self::or_zero(&self.edge) + Self::or_zero(&self.image)
            - Self::or_zero(&self.class_ll)
    }
}

/// Scalar values of every objective term for one training step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    /// Joint critic loss including its penalty (0 when ablated).
    pub d_j: f64,
    pub d_e: f64,
    pub d_i: f64,
    pub gp_j: f64,
    pub gp_e: f64,
    pub gp_i: f64,
    /// Generator-side adversarial components.
    pub g_dj: f64,
    pub g_de: f64,
    pub g_di: f64,
    /// Classification likelihood of generated images.
    pub ac_gen: f64,
    pub g_e: f64,
    pub g_i: f64,
    /// Loss minimized by the classifier on real images (negated likelihood).
    pub classifier: f64,
    pub latent_l1: f64,
}

impl LossReport {
    pub fn all_finite(&self) -> bool {
        self.fields().iter().all(|(_, v)| v.is_finite())
    }

    pub fn fields(&self) -> [(&'static str, f64); 14] {
        [
            ("d_j", self.d_j),
            ("d_e", self.d_e),
            ("d_i", self.d_i),
            ("gp_j", self.gp_j),
            ("gp_e", self.gp_e),
            ("gp_i", self.gp_i),
            ("g_dj", self.g_dj),
            ("g_de", self.g_de),
            ("g_di", self.g_di),
            ("ac_gen", self.ac_gen),
            ("g_e", self.g_e),
            ("g_i", self.g_i),
            ("classifier", self.classifier),
            ("latent_l1", self.latent_l1),
        ]
    }
}

pub(crate) fn scalar(t: &Tensor) -> f64 {
    t.double_value(&[])
}

pub(crate) fn opt_scalar(t: &Option<Tensor>) -> f64 {
    t.as_ref().map(scalar).unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use tch::Device;

    fn randn(shape: &[i64], seed: i64) -> Tensor {
        tch::manual_seed(seed);
        Tensor::randn(shape, (Kind::Float, Device::Cpu))
    }

    #[test]
    fn unit_linear_critic_has_zero_penalty() {
        let u = Tensor::from_slice(&[0.6f32, 0.8]);
        let real = randn(&[8, 2], 1);
        let fake = randn(&[8, 2], 2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let gp = gradient_penalty(|x| x.matmul(&u), &real, &fake, 10.0, &mut rng).unwrap();
        assert!(scalar(&gp).abs() < 1e-5);
    }

    #[test]
    fn scaled_linear_critic_matches_closed_form() {
        let real = randn(&[6, 3], 4);
        let fake = randn(&[6, 3], 5);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let gp = gradient_penalty(|x| x.select(1, 0) * 2.0, &real, &fake, 10.0, &mut rng).unwrap();
        assert!((scalar(&gp) - 10.0).abs() < 1e-5);
    }

    #[test]
    fn zero_weight_gives_zero() {
        let real = randn(&[4, 3], 6);
        let fake = randn(&[4, 3], 7);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let gp = gradient_penalty(|x| x.square().sum_dim_intlist(1, false, Kind::Float), &real, &fake, 0.0, &mut rng)
            .unwrap();
        assert_eq!(scalar(&gp), 0.0);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = gradient_penalty(|x| x.sum_dim_intlist(1, false, Kind::Float), &randn(&[4, 3], 1), &randn(&[4, 2], 2), 10.0, &mut rng);
        assert!(r.is_err());
    }

    #[test]
    fn focal_reduces_to_cross_entropy_at_gamma_zero() {
        let logits = randn(&[5, 3], 11);
        let labels = Tensor::from_slice(&[0i64, 2, 1, 1, 0]);
        let ce = class_log_likelihood(&logits, &labels, ClassLoss::CrossEntropy);
        let f0 = class_log_likelihood(&logits, &labels, ClassLoss::Focal { gamma: 0.0 });
        assert!((scalar(&ce) - scalar(&f0)).abs() < 1e-6);
        let f2 = class_log_likelihood(&logits, &labels, ClassLoss::Focal { gamma: 2.0 });
        // down-weighting shrinks the magnitude of the (negative) likelihood
        assert!(scalar(&f2) > scalar(&ce));
        assert!(scalar(&f2) <= 0.0);
    }
}
