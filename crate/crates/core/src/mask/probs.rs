use super::{LogitMap, ProbabilityMap, SegmentationMask, NUM_CLASSES};

/// Numerically stable softmax of one pixel's scores.
pub(crate) fn softmax_pixel(logits: &[f64], out: &mut [f64]) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for (o, &l) in out.iter_mut().zip(logits) {
        *o = (l - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Index of the largest score; ties go to the lowest class id.
pub(crate) fn argmax_pixel(logits: &[f64]) -> usize {
    let mut best = 0;
    for c in 1..logits.len() {
        if logits[c] > logits[best] {
            best = c;
        }
    }
    best
}

pub fn softmax(logits: &LogitMap) -> ProbabilityMap {
    let mut values = vec![0.0; logits.len() * NUM_CLASSES];
    for (i, out) in values.chunks_mut(NUM_CLASSES).enumerate() {
        softmax_pixel(logits.pixel(i), out);
    }
    ProbabilityMap::new_unchecked(logits.width(), logits.height(), values)
}

pub fn argmax_mask(logits: &LogitMap) -> SegmentationMask {
    let labels = (0..logits.len()).map(|i| argmax_pixel(logits.pixel(i)) as u8).collect();
    SegmentationMask::new(logits.width(), logits.height(), labels).expect("argmax < 7")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn single(l: [f64; 7]) -> LogitMap {
        LogitMap::new(1, 1, l.to_vec()).unwrap()
    }

    #[test]
    fn uniform_logits() {
        let p = softmax(&single([0.3; 7]));
        for &v in p.pixel(0) {
            assert!((v - 1.0 / 7.0).abs() < 1e-12);
        }
        assert_eq!(argmax_mask(&single([0.3; 7])).labels(), &[0]);
    }

    #[test]
    fn peaked_logit() {
        let p = softmax(&single([10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        let expected = 10f64.exp() / (10f64.exp() + 6.0);
        assert!((p.pixel(0)[0] - expected).abs() < 1e-12);
        assert!((p.pixel(0)[0] - 0.999728).abs() < 1e-6);
    }

    #[test]
    fn one_hot_argmax() {
        for c in 0..7 {
            let mut l = [0.0; 7];
            l[c] = 1.0;
            assert_eq!(argmax_mask(&single(l)).labels(), &[c as u8]);
        }
    }

    proptest! {
        #[test]
        fn softmax_shift_invariant_and_normalized(
            l in proptest::array::uniform7(-30.0f64..30.0),
            c in -100.0f64..100.0,
        ) {
            let a = softmax(&single(l));
            let shifted: Vec<f64> = l.iter().map(|v| v + c).collect();
            let b = softmax(&LogitMap::new(1, 1, shifted).unwrap());
            for (x, y) in a.pixel(0).iter().zip(b.pixel(0)) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert!((a.pixel(0).iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }

        #[test]
        fn argmax_invariant_under_monotone_map(l in proptest::array::uniform7(-5.0f64..5.0)) {
            let m = argmax_mask(&single(l));
            let t: Vec<f64> = l.iter().map(|v| (3.0 * v).exp() + 1.0).collect();
            prop_assert_eq!(argmax_mask(&LogitMap::new(1, 1, t).unwrap()), m);
        }
    }
}
