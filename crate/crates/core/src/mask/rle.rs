//! Run-length encodings for selections and label sequences.

use serde::{Deserialize, Serialize};

/// A run of consecutive row-major pixel indices.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "[u32; 2]", into = "[u32; 2]")]
pub struct Run {
    pub start: u32,
    pub len: u32,
}

impl From<[u32; 2]> for Run {
    fn from([start, len]: [u32; 2]) -> Self {
        Run { start, len }
    }
}

impl From<Run> for [u32; 2] {
    fn from(r: Run) -> Self {
        [r.start, r.len]
    }
}

pub fn runs_from_sorted(indices: impl Iterator<Item = usize>) -> Vec<Run> {
    let mut runs: Vec<Run> = Vec::new();
    for i in indices {
        let i = i as u32;
        match runs.last_mut() {
            Some(r) if r.start + r.len == i => r.len += 1,
            _ => runs.push(Run { start: i, len: 1 }),
        }
    }
    runs
}

/// `(value, count)` runs over a byte sequence.
pub fn encode_values(values: &[u8]) -> Vec<(u8, u32)> {
    let mut out: Vec<(u8, u32)> = Vec::new();
    for &v in values {
        match out.last_mut() {
            Some((last, n)) if *last == v => *n += 1,
            _ => out.push((v, 1)),
        }
    }
    out
}

pub fn decode_values(runs: &[(u8, u32)]) -> Vec<u8> {
    runs.iter().flat_map(|&(v, n)| std::iter::repeat_n(v, n as usize)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn value_runs() {
        let v = [3, 3, 1, 1, 1, 0];
        let r = encode_values(&v);
        assert_eq!(r, vec![(3, 2), (1, 3), (0, 1)]);
        assert_eq!(decode_values(&r), v);
    }

    #[test]
    fn index_runs() {
        let r = runs_from_sorted([0usize, 1, 2, 5, 7, 8].into_iter());
        assert_eq!(r, vec![Run { start: 0, len: 3 }, Run { start: 5, len: 1 }, Run { start: 7, len: 2 }]);
    }
}
