//! Failure detection: uncertainty and disagreement maps, integrated-gradients
//! attribution for the toy backbone, and ranked flagging of suspect regions.

mod attribution;
mod flag;
mod io;
mod scores;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use attribution::{attribution_map, integrated_gradients, DEFAULT_IG_STEPS};
pub use flag::{flag_regions, FlagParams};
pub use io::{decode_score_map, encode_score_map, SCORE_MAGIC};
pub use scores::{disagreement_map, entropy_map};

#[derive(Debug, Error)]
pub enum FailureError {
    #[error("disagreement needs at least two masks, got {0}")]
    FewerThanTwoMasks(usize),
    #[error("dimension mismatch between inputs")]
    DimensionMismatch,
    #[error("score at pixel {index} is {value}; scores must be finite and non-negative")]
    InvalidScore { index: usize, value: f64 },
    #[error("bad magic: expected SEGF")]
    BadMagic,
    #[error("unsupported score map version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// A non-negative per-pixel score, row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreMap {
    width: u32,
    height: u32,
    scores: Vec<f64>,
}

impl ScoreMap {
    pub fn new(width: u32, height: u32, scores: Vec<f64>) -> Result<Self, FailureError> {
        if scores.len() != width as usize * height as usize {
            return Err(FailureError::DimensionMismatch);
        }
        if let Some((index, &value)) = scores.iter().enumerate().find(|(_, v)| !v.is_finite() || **v < 0.0) {
            return Err(FailureError::InvalidScore { index, value });
        }
        Ok(ScoreMap { width, height, scores })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    pub fn get(&self, i: usize) -> f64 {
        self.scores[i]
    }

    pub fn max(&self) -> f64 {
        self.scores.iter().copied().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        if self.scores.is_empty() {
            0.0
        } else {
            self.scores.iter().sum::<f64>() / self.scores.len() as f64
        }
    }
}
