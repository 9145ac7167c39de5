use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState};
use super::loss::{evaluate, BatchView, LossBreakdown, SupervisionBatch, TrainConfig};
use super::{FeatureField, LearnError, ToyBackboneParams};

/// Full-data losses after `epoch` epochs; epoch 0 is the starting point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss: LossBreakdown,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub entries: Vec<EpochLog>,
}

impl TrainingLog {
    pub fn initial(&self) -> Option<&LossBreakdown> {
        self.entries.first().map(|e| &e.loss)
    }

    pub fn last(&self) -> Option<&LossBreakdown> {
        self.entries.last().map(|e| &e.loss)
    }
}

/// Splits shuffled item indices round-robin into `nb` groups; a component with
/// fewer items than batches is reused cyclically so every batch sees it.
fn distribute(order: &[usize], nb: usize) -> Vec<Vec<usize>> {
    let mut groups = vec![Vec::new(); nb];
    if order.is_empty() {
        return groups;
    }
    for (j, &i) in order.iter().enumerate() {
        groups[j % nb].push(i);
    }
    for (b, g) in groups.iter_mut().enumerate() {
        if g.is_empty() {
            g.push(order[b % order.len()]);
        }
    }
    groups
}

/// Minibatch Adam on `loss_total`, with a data order fixed by `config.seed`.
pub fn finetune(
    theta0: &ToyBackboneParams,
    images: &[FeatureField],
    supervision: &SupervisionBatch,
    config: &TrainConfig,
) -> Result<(ToyBackboneParams, TrainingLog), LearnError> {
    if supervision.is_empty() {
        return Err(LearnError::NoSupervision);
    }
    let full = BatchView::from(supervision);
    let mut theta = theta0.clone();
    let mut log = TrainingLog::default();
    log.entries.push(EpochLog { epoch: 0, loss: evaluate(&theta, images, &full, config, false)?.0 });

    let bs = config.batch_size.max(1);
    let counts = [supervision.seg.len(), supervision.cf.len(), supervision.prop.entries.len()];
    let nb = counts.iter().map(|n| n.div_ceil(bs)).max().unwrap_or(1).max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut state = AdamState::new(theta.as_slice().len());

    for epoch in 1..=config.epochs {
        let mut orders: Vec<Vec<usize>> = counts.iter().map(|&n| (0..n).collect()).collect();
        for o in &mut orders {
            o.shuffle(&mut rng);
        }
        let seg = distribute(&orders[0], nb);
        let cf = distribute(&orders[1], nb);
        let prop = distribute(&orders[2], nb);
        for b in 0..nb {
            let view = BatchView {
                seg: seg[b].iter().map(|&i| &supervision.seg[i]).collect(),
                cf: cf[b].iter().map(|&i| &supervision.cf[i]).collect(),
                prop: prop[b].iter().map(|&i| &supervision.prop.entries[i]).collect(),
            };
            let (_, g) = evaluate(&theta, images, &view, config, true)?;
            adam_step(theta.as_mut_slice(), &g.expect("gradient requested"), &mut state, config);
        }
        log.entries.push(EpochLog { epoch, loss: evaluate(&theta, images, &full, config, false)?.0 });
    }
    Ok((theta, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{featurize, CounterfactualItem, LabeledPixels};
    use crate::mask::{ClassId, ImageRaster, RegionSelection, SegmentationMask};

    fn setup() -> (Vec<FeatureField>, SupervisionBatch) {
        let images: Vec<FeatureField> = (0..3)
            .map(|k| {
                featurize(&ImageRaster::from_fn(6, 6, |x, y| [(x * 40) as u8, (y * 40) as u8, (k * 80) as u8]).unwrap())
            })
            .collect();
        let seg = (0..3)
            .map(|k| LabeledPixels {
                image: k,
                labels: SegmentationMask::new(6, 6, (0..36).map(|i| if i % 6 < 3 { 1 } else { 3 }).collect()).unwrap(),
                valid: RegionSelection::full(6, 6),
            })
            .collect();
        let cf = vec![CounterfactualItem {
            image: 2,
            region: RegionSelection::from_fn(6, 6, |x, y| x >= 4 && y < 2),
            class: ClassId::SKY,
        }];
        (images, SupervisionBatch { seg, cf, ..Default::default() })
    }

    #[test]
    fn zero_epochs_returns_initial_params() {
        let (images, batch) = setup();
        let theta0 = ToyBackboneParams::init(3);
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let (theta, log) = finetune(&theta0, &images, &batch, &cfg).unwrap();
        assert_eq!(theta, theta0);
        assert_eq!(log.entries.len(), 1);
    }

    #[test]
    fn loss_decreases_and_is_deterministic() {
        let (images, batch) = setup();
        let theta0 = ToyBackboneParams::init(3);
        let cfg = TrainConfig { epochs: 20, batch_size: 2, lr: 1e-2, seed: 9, ..TrainConfig::default() };
        let (a, la) = finetune(&theta0, &images, &batch, &cfg).unwrap();
        let (b, lb) = finetune(&theta0, &images, &batch, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(la, lb);
        assert!(la.last().unwrap().total < la.initial().unwrap().total);
    }

    #[test]
    fn plain_cross_entropy_when_lambdas_zero() {
        let (images, batch) = setup();
        let cfg = TrainConfig {
            epochs: 3,
            lambda_cf: 0.0,
            lambda_prop: 0.0,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let (_, log) = finetune(&ToyBackboneParams::init(1), &images, &batch, &cfg).unwrap();
        for e in &log.entries {
            assert_eq!(e.loss.total, e.loss.seg);
            assert_eq!(e.loss.prop, 0.0);
        }
    }

    #[test]
    fn empty_supervision_is_rejected() {
        let r = finetune(&ToyBackboneParams::zeros(), &[], &SupervisionBatch::default(), &TrainConfig::default());
        assert!(matches!(r, Err(LearnError::NoSupervision)));
    }

    #[test]
    fn distribute_covers_every_batch() {
        let g = distribute(&[4, 1], 3);
        assert_eq!(g, vec![vec![4], vec![1], vec![4]]);
        assert!(distribute(&[], 2).iter().all(Vec::is_empty));
    }
}
