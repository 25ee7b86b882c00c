use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adversarial objective and the optimizer that goes with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerKind {
    /// Wasserstein critics with gradient penalty, RMSprop.
    RmspropWgangp,
    /// Wasserstein critics with weight clipping, RMSprop.
    RmspropWgan,
    /// Logistic (non-saturating) losses, Adam with beta1 = 0.5.
    AdamDcgan,
}

impl OptimizerKind {
    pub fn is_wasserstein(self) -> bool {
        !matches!(self, OptimizerKind::AdamDcgan)
    }

    pub fn default_critic_steps(self) -> usize {
        match self {
            OptimizerKind::AdamDcgan => 1,
            _ => 5,
        }
    }
}

impl std::str::FromStr for OptimizerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rmsprop-wgangp" | "wgan-gp" => Ok(OptimizerKind::RmspropWgangp),
            "rmsprop-wgan" | "wgan" => Ok(OptimizerKind::RmspropWgan),
            "adam-dcgan" | "dcgan" => Ok(OptimizerKind::AdamDcgan),
            other => Err(Error::Config(format!("unknown optimizer kind {other:?}"))),
        }
    }
}

/// Which adversarial/auxiliary terms take part in training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ablation {
    pub use_dj: bool,
    pub use_di: bool,
    pub use_de: bool,
    pub use_classifier: bool,
    pub multiscale: bool,
}

impl Default for Ablation {
    fn default() -> Self {
        Ablation {
            use_dj: true,
            use_di: true,
            use_de: true,
            use_classifier: true,
            multiscale: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum ClassLoss {
    Focal { gamma: f64 },
    CrossEntropy,
}

/// Base channel counts; each network doubles from its base as it downsamples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetWidths {
    pub generator: i64,
    pub critic: i64,
    pub encoder: i64,
    pub classifier: i64,
    /// Width of the classifier's penultimate layer (the FID feature space).
    pub classifier_features: i64,
}

impl Default for NetWidths {
    fn default() -> Self {
        NetWidths {
            generator: 32,
            critic: 32,
            encoder: 32,
            classifier: 16,
            classifier_features: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub noise_dim: usize,
    pub num_categories: usize,
    pub resolution: usize,
    pub gp_weight: f64,
    pub critic_steps_per_gen_step: usize,
    pub learning_rate: f64,
    pub optimizer_kind: OptimizerKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub ablation: Ablation,
    pub seed: u64,
    pub class_loss: ClassLoss,
    /// Feed the one-hot category to the critics' final layer.
    pub condition_critics: bool,
    pub widths: NetWidths,
    /// Weight-clipping bound for the plain Wasserstein variant.
    pub clip_value: f64,
    /// Checkpoint every N epochs (0 = only the final one).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            noise_dim: 128,
            num_categories: 2,
            resolution: 64,
            gp_weight: 10.0,
            critic_steps_per_gen_step: 5,
            learning_rate: 2e-4,
            optimizer_kind: OptimizerKind::RmspropWgangp,
            epochs: 100,
            batch_size: 64,
            ablation: Ablation::default(),
            seed: 0,
            class_loss: ClassLoss::Focal { gamma: 2.0 },
            condition_critics: true,
            widths: NetWidths::default(),
            clip_value: 0.01,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// Switches the objective and resets the critic schedule to its default.
    pub fn with_optimizer(mut self, kind: OptimizerKind) -> Self {
        self.optimizer_kind = kind;
        self.critic_steps_per_gen_step = kind.default_critic_steps();
        self
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.noise_dim == 0 {
            return fail("noise_dim must be positive".into());
        }
        if self.num_categories == 0 {
            return fail("num_categories must be positive".into());
        }
        if !matches!(self.resolution, 64 | 128) {
            return fail(format!("resolution must be 64 or 128, got {}", self.resolution));
        }
        if !(self.gp_weight >= 0.0) {
            return fail(format!("gp_weight must be >= 0, got {}", self.gp_weight));
        }
        if self.critic_steps_per_gen_step == 0 || self.batch_size == 0 {
            return fail("critic_steps_per_gen_step and batch_size must be positive".into());
        }
        if !(self.learning_rate > 0.0) {
            return fail("learning_rate must be positive".into());
        }
        if self.ablation.multiscale && self.resolution != 128 {
            return fail("multi-scale critics are only available at resolution 128".into());
        }
        if let ClassLoss::Focal { gamma } = self.class_loss {
            if !(gamma >= 0.0) {
                return fail(format!("focal gamma must be >= 0, got {gamma}"));
            }
        }
        let w = self.widths;
        if [w.generator, w.critic, w.encoder, w.classifier, w.classifier_features]
            .iter()
            .any(|&v| v <= 0)
        {
            return fail("network widths must be positive".into());
        }
        Ok(())
    }
}
