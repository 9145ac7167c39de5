use thiserror::Error;

#[derive(Debug, Error)]
pub enum MaskError {
    #[error("bad magic: expected {expected:?}")]
    BadMagic { expected: &'static str },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: expected {expected} bytes, got {actual}")]
    TruncatedPayload { expected: usize, actual: usize },
    #[error("label {label} at pixel {index} is out of range")]
    LabelOutOfRange { index: usize, label: u8 },
    #[error("png is not palette-indexed (color type {0})")]
    WrongColorType(String),
    #[error("png bit depth {0} is not supported, expected 8")]
    WrongBitDepth(u8),
    #[error("png palette index {0} exceeds the taxonomy")]
    PaletteIndexOutOfRange(u8),
    #[error("png codec: {0}")]
    Png(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid dimensions {width}x{height}")]
    InvalidDimensions { width: u32, height: u32 },
    #[error("need at least 3 sites to split, got {0}")]
    TooFewSites(usize),
    #[error("split ratios must be nonnegative and sum to 1")]
    BadRatios,
    #[error("malformed manifest: {0}")]
    Manifest(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<png::EncodingError> for MaskError {
    fn from(e: png::EncodingError) -> Self {
        MaskError::Png(e.to_string())
    }
}

impl From<png::DecodingError> for MaskError {
    fn from(e: png::DecodingError) -> Self {
        MaskError::Png(e.to_string())
    }
}
