//! SEGL: external per-pixel class scores. Header is magic, version, width,
//! height and channel count (u32 LE each, channels = 7), then pixel-major
//! f32 LE values.

use super::StoreError;
use crate::mask::{LogitMap, NUM_CLASSES};

pub const LOGITS_MAGIC: &[u8; 4] = b"SEGL";
const LOGITS_VERSION: u32 = 1;
const HEADER: usize = 20;

pub fn encode_logits(map: &LogitMap) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER + 4 * map.values().len());
    out.extend_from_slice(LOGITS_MAGIC);
    for v in [LOGITS_VERSION, map.width(), map.height(), NUM_CLASSES as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &v in map.values() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_logits(bytes: &[u8]) -> Result<LogitMap, StoreError> {
    let bad = |m: String| StoreError::Format(format!("logits: {m}"));
    if bytes.len() < HEADER || &bytes[..4] != LOGITS_MAGIC {
        return Err(bad("bad magic or short header".into()));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"));
    if word(4) != LOGITS_VERSION {
        return Err(bad(format!("unsupported version {}", word(4))));
    }
    if word(16) as usize != NUM_CLASSES {
        return Err(bad(format!("{} channels, expected {NUM_CLASSES}", word(16))));
    }
    let (w, h) = (word(8), word(12));
    let expected = HEADER + 4 * NUM_CLASSES * w as usize * h as usize;
    if bytes.len() != expected {
        return Err(bad(format!("expected {expected} bytes, got {}", bytes.len())));
    }
    let values: Vec<f64> = bytes[HEADER..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")) as f64)
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(bad("non-finite value".into()));
    }
    Ok(LogitMap::new(w, h, values)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = LogitMap::from_fn(3, 2, |i| {
            let mut z = [0.0; 7];
            z[i % 7] = i as f64 * 0.5 - 1.0;
            z
        })
        .unwrap();
        let b = encode_logits(&m);
        assert_eq!(decode_logits(&b).unwrap(), m);
        assert!(decode_logits(&b[..b.len() - 4]).is_err());
        let mut nan = b.clone();
        nan[20..24].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(decode_logits(&nan).is_err());
    }
}
