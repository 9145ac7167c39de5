//! Selection mechanics and image/mask pre- and post-processing.

mod clahe;
pub mod color;
mod correct;
mod morph;
mod wand;

use thiserror::Error;

pub use clahe::{clahe, ClaheParams};
pub use correct::{apply_correction, undo_correction, CorrectionMeta};
pub(crate) use correct::mask_digest;
pub use morph::{dilate, erode, morph_cleanup, refine_selection, MorphOp, MorphParams, RefineMode};
pub use wand::{grow_region, wand_select, Connectivity, WandParams, MAX_RGB_DISTANCE};

#[derive(Debug, Error)]
pub enum RegionError {
    #[error("seed ({x}, {y}) is outside the {width}x{height} image")]
    SeedOutOfBounds { x: u32, y: u32, width: u32, height: u32 },
    #[error("selection is empty")]
    EmptySelection,
    #[error("class id {0} is out of range")]
    ClassOutOfRange(u8),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("mask digest does not match the record's prior state")]
    DigestMismatch,
}
