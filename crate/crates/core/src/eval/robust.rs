use serde::{Deserialize, Serialize};

use super::bias::{is_blue, BiasImage};
use super::EvalError;
use crate::learn::{featurize, forward, ToyBackboneParams};
use crate::mask::{argmax_mask, ClassId, SegmentationMask};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    /// Error rate over blue pixels whose ground truth is not sky.
    pub violating_error: f64,
    pub violating_pixels: usize,
    /// `(baseline − error) / baseline`, when a baseline was supplied.
    pub relative_reduction: Option<f64>,
}

pub fn relative_reduction(baseline: f64, corrected: f64) -> f64 {
    (baseline - corrected) / baseline
}

pub fn predict_mask(model: &ToyBackboneParams, image: &BiasImage) -> SegmentationMask {
    argmax_mask(&forward(model, &featurize(&image.image)))
}

/// Scores precomputed predictions, aligned with `set`.
pub fn robustness_from_masks(
    preds: &[SegmentationMask],
    set: &[BiasImage],
    baseline: Option<f64>,
) -> Result<RobustnessReport, EvalError> {
    let (mut n, mut wrong) = (0usize, 0usize);
    for (pred, im) in preds.iter().zip(set) {
        if !pred.same_dims(im.gt.width(), im.gt.height()) {
            return Err(EvalError::DimensionMismatch);
        }
        for i in 0..im.gt.len() {
            if im.gt.class_at(i) != ClassId::SKY && is_blue(im.image.at(i)) {
                n += 1;
                wrong += (pred.labels()[i] != im.gt.labels()[i]) as usize;
            }
        }
    }
    if n == 0 {
        return Err(EvalError::NoViolatingPixels);
    }
    let violating_error = wrong as f64 / n as f64;
    Ok(RobustnessReport {
        violating_error,
        violating_pixels: n,
        relative_reduction: baseline.map(|b| relative_reduction(b, violating_error)),
    })
}

pub fn robustness_eval(
    model: &ToyBackboneParams,
    ood: &[BiasImage],
    baseline: Option<f64>,
) -> Result<RobustnessReport, EvalError> {
    let preds: Vec<SegmentationMask> = ood.iter().map(|im| predict_mask(model, im)).collect();
    robustness_from_masks(&preds, ood, baseline)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::{gen_biased_dataset, BiasSpec};

    #[test]
    fn examples() {
        let d = gen_biased_dataset(&BiasSpec { n_train: 0, n_pool: 0, n_ood: 3, ..BiasSpec::default() });
        let perfect: Vec<_> = d.ood.iter().map(|im| im.gt.clone()).collect();
        assert_eq!(robustness_from_masks(&perfect, &d.ood, None).unwrap().violating_error, 0.0);
        let blue_sky: Vec<_> = d
            .ood
            .iter()
            .map(|im| {
                let mut m = im.gt.clone();
                for i in 0..m.len() {
                    if is_blue(im.image.at(i)) {
                        m.set(i, ClassId::SKY);
                    }
                }
                m
            })
            .collect();
        let r = robustness_from_masks(&blue_sky, &d.ood, Some(0.5)).unwrap();
        assert_eq!(r.violating_error, 1.0);
        assert!((relative_reduction(0.50, 0.29) - 0.42).abs() < 1e-12);
        let train_only = gen_biased_dataset(&BiasSpec { n_train: 2, n_pool: 0, n_ood: 0, ..BiasSpec::default() });
        let preds: Vec<_> = train_only.train.iter().map(|im| im.gt.clone()).collect();
        assert!(matches!(robustness_from_masks(&preds, &train_only.train, None), Err(EvalError::NoViolatingPixels)));
    }
}
