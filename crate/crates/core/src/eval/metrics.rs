use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::mask::{ClassId, RegionSelection, SegmentationMask, NUM_CLASSES};
use crate::region::erode;

/// Rows are ground truth, columns prediction.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn add(&mut self, other: &ConfusionMatrix) {
        for (r, o) in self.counts.iter_mut().zip(&other.counts) {
            for (a, b) in r.iter_mut().zip(o) {
                *a += b;
            }
        }
    }
}

fn check_dims(pred: &SegmentationMask, gt: &SegmentationMask) -> Result<(), EvalError> {
    if !pred.same_dims(gt.width(), gt.height()) {
        return Err(EvalError::DimensionMismatch);
    }
    Ok(())
}

pub fn confusion_matrix(
    pred: &SegmentationMask,
    gt: &SegmentationMask,
    ignore: Option<&RegionSelection>,
) -> Result<ConfusionMatrix, EvalError> {
    check_dims(pred, gt)?;
    if let Some(ig) = ignore {
        if ig.width() != gt.width() || ig.height() != gt.height() {
            return Err(EvalError::DimensionMismatch);
        }
    }
    let mut cm = ConfusionMatrix::default();
    for (i, (&p, &g)) in pred.labels().iter().zip(gt.labels()).enumerate() {
        if ignore.is_some_and(|ig| ig.contains(i)) {
            continue;
        }
        cm.counts[g as usize][p as usize] += 1;
    }
    Ok(cm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IouReport {
    /// `None` for classes absent from both prediction and ground truth.
    pub per_class: [Option<f64>; NUM_CLASSES],
    pub mean: f64,
}

/// Per-class `TP / (TP + FP + FN)`; zero-union classes are left out of the mean.
pub fn miou(cm: &ConfusionMatrix) -> Result<IouReport, EvalError> {
    if cm.total() == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let mut per_class = [None; NUM_CLASSES];
    for c in 0..NUM_CLASSES {
        let tp = cm.counts[c][c];
        let fn_: u64 = cm.counts[c].iter().sum::<u64>() - tp;
        let fp: u64 = (0..NUM_CLASSES).map(|g| cm.counts[g][c]).sum::<u64>() - tp;
        let union = tp + fp + fn_;
        if union > 0 {
            per_class[c] = Some(tp as f64 / union as f64);
        }
    }
    let present: Vec<f64> = per_class.iter().flatten().copied().collect();
    let mean = present.iter().sum::<f64>() / present.len() as f64;
    Ok(IouReport { per_class, mean })
}

/// `X \ erode(X, d)` with a square structuring element.
pub fn boundary_band(sel: &RegionSelection, d: u32) -> RegionSelection {
    let inner = erode(sel, d);
    RegionSelection::from_indices(sel.width(), sel.height(), sel.iter().filter(|&i| !inner.contains(i)))
}

/// IoU of the boundary bands of class `c`; `None` when both bands are empty.
pub fn boundary_iou(
    pred: &SegmentationMask,
    gt: &SegmentationMask,
    class: ClassId,
    d: u32,
) -> Result<Option<f64>, EvalError> {
    check_dims(pred, gt)?;
    let of = |m: &SegmentationMask| RegionSelection::from_indices(m.width(), m.height(), (0..m.len()).filter(|&i| m.labels()[i] == class.get()));
    let (bp, bg) = (boundary_band(&of(pred), d), boundary_band(&of(gt), d));
    let union = bp.union_count(&bg);
    Ok((union > 0).then(|| bp.intersection_count(&bg) as f64 / union as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask(w: u32, h: u32, l: &[u8]) -> SegmentationMask {
        SegmentationMask::new(w, h, l.to_vec()).unwrap()
    }

    #[test]
    fn confusion_examples() {
        let m = mask(2, 2, &[1, 2, 3, 0]);
        let cm = confusion_matrix(&m, &m, None).unwrap();
        for g in 0..7 {
            for p in 0..7 {
                assert_eq!(cm.counts[g][p] > 0, g == p && g < 4);
            }
        }
        let all = RegionSelection::full(2, 2);
        assert_eq!(confusion_matrix(&m, &m, Some(&all)).unwrap().total(), 0);
        let cm = confusion_matrix(&mask(2, 2, &[1, 1, 0, 0]), &mask(2, 2, &[1, 0, 0, 0]), None).unwrap();
        assert_eq!((cm.counts[1][1], cm.counts[0][1], cm.counts[0][0], cm.total()), (1, 1, 2, 4));
        let r = miou(&cm).unwrap();
        assert_eq!(r.per_class[1], Some(0.5));
        assert!((r.per_class[0].unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.mean - 7.0 / 12.0).abs() < 1e-15);
        assert!(matches!(confusion_matrix(&m, &mask(1, 1, &[0]), None), Err(EvalError::DimensionMismatch)));
    }

    #[test]
    fn miou_edge_cases() {
        let m = mask(3, 1, &[4, 5, 6]);
        assert_eq!(miou(&confusion_matrix(&m, &m, None).unwrap()).unwrap().mean, 1.0);
        let r = miou(&confusion_matrix(&mask(2, 1, &[0, 0]), &mask(2, 1, &[1, 1]), None).unwrap()).unwrap();
        assert_eq!((r.per_class[0], r.per_class[1], r.mean), (Some(0.0), Some(0.0), 0.0));
        assert!(matches!(miou(&ConfusionMatrix::default()), Err(EvalError::EmptyMatrix)));
    }

    #[test]
    fn boundary_examples() {
        let square = |ox: u32| {
            let l: Vec<u8> = (0..144u32).map(|i| (((i % 12) >= 2 + ox && (i % 12) < 10 + ox) && (i / 12) >= 2 && (i / 12) < 10) as u8).collect();
            mask(12, 12, &l)
        };
        let a = square(0);
        assert_eq!(boundary_iou(&a, &a, ClassId::SKY, 2).unwrap(), Some(1.0));
        // Brute-force bands: a pixel is in the band iff some pixel of its clipped
        // 5×5 window lies outside the square.
        let band = |m: &SegmentationMask| -> Vec<usize> {
            (0..144)
                .filter(|&i| {
                    let (x, y) = ((i % 12) as i32, (i / 12) as i32);
                    m.labels()[i] == 1
                        && (-2..=2).any(|dy| {
                            (-2..=2).any(|dx| {
                                let (nx, ny) = (x + dx, y + dy);
                                (0..12).contains(&nx) && (0..12).contains(&ny) && m.labels()[(ny * 12 + nx) as usize] != 1
                            })
                        })
                })
                .collect()
        };
        let b = square(1);
        let (ba, bb) = (band(&a), band(&b));
        let inter = ba.iter().filter(|i| bb.contains(i)).count();
        let union = ba.len() + bb.len() - inter;
        assert_eq!(boundary_iou(&a, &b, ClassId::SKY, 2).unwrap(), Some(inter as f64 / union as f64));
        let left = mask(4, 1, &[1, 0, 0, 0]);
        let right = mask(4, 1, &[0, 0, 0, 1]);
        assert_eq!(boundary_iou(&left, &right, ClassId::SKY, 1).unwrap(), Some(0.0));
        let none = mask(4, 1, &[0; 4]);
        assert_eq!(boundary_iou(&none, &none, ClassId::SKY, 1).unwrap(), None);
    }
}
