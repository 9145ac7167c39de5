//! The toy differentiable backbone and the composite interventional objective
//! `L_seg + λ_cf·L_cf + λ_prop·L_prop + wd·‖θ‖²/2`, with analytic gradients,
//! Adam and deterministic minibatch fine-tuning.

mod adam;
mod backbone;
mod features;
mod finetune;
mod loss;

use thiserror::Error;

pub use adam::{adam_step, AdamState};
pub use backbone::{
    decode_checkpoint, encode_checkpoint, forward, hidden_activations, ToyBackboneParams, HIDDEN,
    INPUTS, OUTPUTS, PARAM_COUNT,
};
pub use features::{featurize, FeatureField, FEATURES};
pub(crate) use features::LBP_OFFSETS;
pub use finetune::{finetune, EpochLog, TrainingLog};
pub use loss::{
    grad, loss_cf, loss_prop, loss_seg, loss_total, loss_and_grad, CorrespondenceSet,
    Correspondence, CounterfactualItem, LabeledPixels, LossBreakdown, SupervisionBatch,
    TrainConfig,
};

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("no valid pixels to average over")]
    EmptyValidSet,
    #[error("counterfactual region is empty")]
    EmptyRegion,
    #[error("no supervision: every component of the batch is empty")]
    NoSupervision,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("image index {0} is not in the feature set")]
    UnknownImage(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}
