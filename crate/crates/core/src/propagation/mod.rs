//! Region descriptors, the train-only retrieval index, cosine top-k queries
//! and the auto-apply/review propagation rule.

mod descriptor;
mod index;
mod persist;
mod propagate;

use thiserror::Error;

pub use descriptor::{
    compute_descriptor, compute_descriptor_with_hidden, cosine, hsv_bin, lbp_code, RegionDescriptor,
    EMBED_LEN, HSV_BINS, LBP_BINS,
};
pub use index::{
    build_index, query, query_excluding, verify_no_leakage, CandidateRegion, IndexImage, IndexParams,
    LeakageViolation, Match, PropagationIndex,
};
pub use persist::{decode_index, encode_index, INDEX_MAGIC};
pub use propagate::{disposition, propagate, propagated_record_id, Disposition, PropagateParams, PropagationOutcome, ProposedCorrection};

use crate::mask::{Digest, MaskError};
use crate::region::RegionError;

#[derive(Debug, Error)]
pub enum PropagationError {
    #[error("region is empty")]
    EmptyRegion,
    #[error("region has no pixel with all 8 neighbors in bounds; LBP is undefined")]
    RegionTooThin,
    #[error("image {hash} is not in the train split")]
    LeakageViolation { hash: Digest },
    #[error("record {0} is not human-authored; propagated records are never re-propagated")]
    NotHumanProvenance(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("index file: {0}")]
    Format(String),
    #[error(transparent)]
    Region(#[from] RegionError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}
