use rayon::prelude::*;

use super::{FailureError, ScoreMap};
use crate::mask::{ProbabilityMap, SegmentationMask, NUM_CLASSES};

/// Per-pixel natural-log entropy with `0·ln 0 = 0`.
pub fn entropy_map(probs: &ProbabilityMap) -> ScoreMap {
    let scores: Vec<f64> = (0..probs.len())
        .into_par_iter()
        .map(|i| {
            let h: f64 = probs.pixel(i).iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum();
            h.max(0.0)
        })
        .collect();
    ScoreMap::new(probs.width(), probs.height(), scores).expect("entropy is finite and non-negative")
}

/// Per-pixel `1 − modal count / n` across `n ≥ 2` masks.
pub fn disagreement_map(masks: &[SegmentationMask]) -> Result<ScoreMap, FailureError> {
    if masks.len() < 2 {
        return Err(FailureError::FewerThanTwoMasks(masks.len()));
    }
    let (w, h) = (masks[0].width(), masks[0].height());
    if masks.iter().any(|m| !m.same_dims(w, h)) {
        return Err(FailureError::DimensionMismatch);
    }
    let n = masks.len() as f64;
    let scores = (0..masks[0].len())
        .map(|i| {
            let mut counts = [0usize; NUM_CLASSES];
            for m in masks {
                counts[m.labels()[i] as usize] += 1;
            }
            let modal = counts.iter().copied().max().unwrap_or(0);
            1.0 - modal as f64 / n
        })
        .collect();
    ScoreMap::new(w, h, scores)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn probs(rows: &[[f64; 7]]) -> ProbabilityMap {
        ProbabilityMap::new(rows.len() as u32, 1, rows.iter().flatten().copied().collect()).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let m = entropy_map(&probs(&[[1.0 / 7.0; 7], [0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0], [0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0]]));
        assert!((m.get(0) - 7f64.ln()).abs() < 1e-12);
        assert_eq!(m.get(1), 0.0);
        assert!((m.get(2) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn disagreement_examples() {
        let mk = |l: u8| SegmentationMask::new(1, 1, vec![l]).unwrap();
        let same = disagreement_map(&[mk(2), mk(2), mk(2)]).unwrap();
        assert_eq!(same.get(0), 0.0);
        let three = disagreement_map(&[mk(1), mk(2), mk(3)]).unwrap();
        assert!((three.get(0) - 2.0 / 3.0).abs() < 1e-12);
        let tie = disagreement_map(&[mk(1), mk(1), mk(2), mk(2)]).unwrap();
        assert_eq!(tie.get(0), 0.5);
        assert!(matches!(disagreement_map(&[mk(1)]), Err(FailureError::FewerThanTwoMasks(1))));
        let other = SegmentationMask::new(2, 1, vec![0, 0]).unwrap();
        assert!(matches!(disagreement_map(&[mk(1), other]), Err(FailureError::DimensionMismatch)));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn entropy_bounded(raw in proptest::collection::vec(proptest::array::uniform7(0.0f64..1.0), 1..20)) {
                let rows: Vec<[f64; 7]> = raw.iter().map(|r| {
                    let s: f64 = r.iter().sum::<f64>() + 1e-9;
                    let mut out = [0.0; 7];
                    for c in 0..7 { out[c] = r[c] / s; }
                    let t: f64 = out.iter().sum();
                    out[0] += 1.0 - t;
                    out[0] = out[0].max(0.0);
                    out
                }).collect();
                if let Ok(p) = ProbabilityMap::new(rows.len() as u32, 1, rows.iter().flatten().copied().collect()) {
                    let m = entropy_map(&p);
                    for &v in m.scores() {
                        prop_assert!((0.0..=7f64.ln() + 1e-12).contains(&v));
                    }
                }
            }

            #[test]
            fn disagreement_bounded(labels in proptest::collection::vec(proptest::collection::vec(0u8..7, 6), 2..6)) {
                let n = labels.len() as f64;
                let masks: Vec<_> = labels.into_iter().map(|l| SegmentationMask::new(3, 2, l).unwrap()).collect();
                let m = disagreement_map(&masks).unwrap();
                for &v in m.scores() {
                    prop_assert!(v >= 0.0 && v <= 1.0 - 1.0 / n + 1e-12);
                }
            }
        }
    }
}
