//! Segmentation metrics, session-log efficiency accounting, and the
//! synthetic bias bench.

pub mod bench;
mod bias;
mod log;
mod metrics;
mod robust;

use thiserror::Error;

pub use bias::{gen_biased_dataset, is_blue, BiasDataset, BiasImage, BiasSpec, CloneRegistry};
pub use log::{effort_stats, event_counts, propagation_gain, BaseMask, EffortStats, MaskSnapshot, SessionEvent, SessionLog};
pub use robust::{predict_mask, relative_reduction, robustness_eval, robustness_from_masks, RobustnessReport};
pub use metrics::{boundary_band, boundary_iou, confusion_matrix, miou, ConfusionMatrix, IouReport};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("dimension mismatch between prediction and ground truth")]
    DimensionMismatch,
    #[error("confusion matrix is empty")]
    EmptyMatrix,
    #[error("session log has no qualifying records")]
    EmptyLog,
    #[error("no bias-violating pixels in the evaluation set")]
    NoViolatingPixels,
    #[error("session log: {0}")]
    Log(String),
}
