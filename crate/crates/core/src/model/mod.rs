//! The attribute-vector bridged object generator: two generators sharing a
//! latent input, three critics, an edge encoder and an auxiliary classifier.

pub mod config;
pub mod losses;
pub mod nets;
pub mod object;
pub mod train;

pub use config::{Ablation, ClassLoss, NetWidths, OptimizerKind, TrainConfig};
pub use losses::{gradient_penalty, input_gradient, LossReport, RealBatch};
pub use object::{AttributeVector, ObjectModel};
pub use train::{edgegan_losses, train_object_model, train_object_model_with, LossRow, ObjectTrainer, TrainOptions, TrainOutcome};
