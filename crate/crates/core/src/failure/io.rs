use super::{FailureError, ScoreMap};
use crate::mask::{BIN_HEADER_LEN, BIN_VERSION};

pub const SCORE_MAGIC: &[u8; 4] = b"SEGF";

/// SEGF: the SEGB header with its own magic, then row-major f32 LE scores.
pub fn encode_score_map(map: &ScoreMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(BIN_HEADER_LEN + 4 * map.scores().len());
    out.extend_from_slice(SCORE_MAGIC);
    out.extend_from_slice(&BIN_VERSION.to_le_bytes());
    out.extend_from_slice(&map.width().to_le_bytes());
    out.extend_from_slice(&map.height().to_le_bytes());
    for &v in map.scores() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_score_map(bytes: &[u8]) -> Result<ScoreMap, FailureError> {
    if bytes.len() < 4 || &bytes[..4] != SCORE_MAGIC {
        return Err(FailureError::BadMagic);
    }
    if bytes.len() < BIN_HEADER_LEN {
        return Err(FailureError::TruncatedPayload { expected: BIN_HEADER_LEN, actual: bytes.len() });
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    if word(4) != BIN_VERSION {
        return Err(FailureError::UnsupportedVersion(word(4)));
    }
    let (w, h) = (word(8), word(12));
    let expected = BIN_HEADER_LEN + 4 * w as usize * h as usize;
    if bytes.len() != expected {
        return Err(FailureError::TruncatedPayload { expected, actual: bytes.len() });
    }
    let scores = bytes[BIN_HEADER_LEN..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    ScoreMap::new(w, h, scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_errors() {
        let m = ScoreMap::new(3, 2, vec![0.0, 0.5, 1.25, 2.0, 0.125, 7.0]).unwrap();
        let bytes = encode_score_map(&m);
        assert_eq!(bytes.len(), 16 + 24);
        assert_eq!(decode_score_map(&bytes).unwrap(), m);
        assert!(matches!(decode_score_map(b"SEGBxxxxxxxxxxxx"), Err(FailureError::BadMagic)));
        assert!(matches!(decode_score_map(&bytes[..30]), Err(FailureError::TruncatedPayload { .. })));
        let mut neg = bytes.clone();
        neg[16..20].copy_from_slice(&(-1f32).to_le_bytes());
        assert!(matches!(decode_score_map(&neg), Err(FailureError::InvalidScore { index: 0, .. })));
    }
}
