//! Cross-entropy losses and the composite objective with its analytic gradient.
//!
//! Every component reduces to the same per-pixel cross-entropy averaged over
//! a pixel set: labeled pixels for `L_seg`, corrected regions for `L_cf` and
//! retrieved correspondences for `L_prop`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::backbone::{ToyBackboneParams, OUTPUTS, PARAM_COUNT};
use super::{FeatureField, LearnError};
use crate::mask::{ClassId, CounterfactualTriple, LogitMap, RegionSelection, SegmentationMask};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub lambda_cf: f64,
    pub lambda_prop: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub epochs: usize,
    /// Labeled images per minibatch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-4,
            weight_decay: 1e-5,
            lambda_cf: 0.5,
            lambda_prop: 0.2,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            epochs: 10,
            batch_size: 4,
            seed: 0,
        }
    }
}

/// Fully labeled pixels of one image (`L_seg`).
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledPixels {
    pub image: usize,
    pub labels: SegmentationMask,
    pub valid: RegionSelection,
}

/// A corrected region with its class `y*` (`L_cf`).
#[derive(Clone, Debug, PartialEq)]
pub struct CounterfactualItem {
    pub image: usize,
    pub region: RegionSelection,
    pub class: ClassId,
}

impl CounterfactualItem {
    pub fn from_triple(image: usize, triple: &CounterfactualTriple) -> Option<Self> {
        Some(CounterfactualItem {
            image,
            region: triple.region.clone(),
            class: triple.corrected_class()?,
        })
    }
}

/// Pixels of a target image that received a propagated label (`L_prop`).
#[derive(Clone, Debug, PartialEq)]
pub struct Correspondence {
    pub image: usize,
    pub pixels: RegionSelection,
    pub class: ClassId,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CorrespondenceSet {
    pub entries: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn pixel_count(&self) -> usize {
        self.entries.iter().map(|e| e.pixels.count()).sum()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SupervisionBatch {
    pub seg: Vec<LabeledPixels>,
    pub cf: Vec<CounterfactualItem>,
    pub prop: CorrespondenceSet,
}

impl SupervisionBatch {
    pub fn is_empty(&self) -> bool {
        self.seg.is_empty() && self.cf.is_empty() && self.prop.entries.is_empty()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub seg: f64,
    pub cf: f64,
    pub prop: f64,
    pub decay: f64,
    pub total: f64,
}

fn log_sum_exp(z: &[f64]) -> f64 {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub(crate) fn pixel_ce(z: &[f64], label: usize) -> f64 {
    log_sum_exp(z) - z[label]
}

/// Mean cross-entropy over `(pixel, label)` pairs; `None` when there are none.
fn mean_ce(logits: &LogitMap, pairs: impl Iterator<Item = (usize, usize)>) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for (i, label) in pairs {
        sum += pixel_ce(logits.pixel(i), label);
        n += 1;
    }
    (n > 0).then(|| sum / n as f64)
}

fn check_shape(logits: &LogitMap, sel: &RegionSelection) -> Result<(), LearnError> {
    if logits.width() != sel.width() || logits.height() != sel.height() {
        return Err(LearnError::DimensionMismatch("pixel set vs logits".into()));
    }
    Ok(())
}

pub fn loss_seg(
    logits: &LogitMap,
    labels: &SegmentationMask,
    valid: &RegionSelection,
) -> Result<f64, LearnError> {
    check_shape(logits, valid)?;
    if !labels.same_dims(logits.width(), logits.height()) {
        return Err(LearnError::DimensionMismatch("labels vs logits".into()));
    }
    mean_ce(logits, valid.iter().map(|i| (i, labels.class_at(i).index())))
        .ok_or(LearnError::EmptyValidSet)
}

pub fn loss_cf(logits: &LogitMap, region: &RegionSelection, class: ClassId) -> Result<f64, LearnError> {
    check_shape(logits, region)?;
    mean_ce(logits, region.iter().map(|i| (i, class.index()))).ok_or(LearnError::EmptyRegion)
}

/// Mean over every correspondence pixel; an empty set contributes zero.
/// `logits[e.image]` holds the target image of entry `e`.
pub fn loss_prop(logits: &[LogitMap], m: &CorrespondenceSet) -> Result<f64, LearnError> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for e in &m.entries {
        let l = logits.get(e.image).ok_or(LearnError::UnknownImage(e.image))?;
        check_shape(l, &e.pixels)?;
        for i in e.pixels.iter() {
            sum += pixel_ce(l.pixel(i), e.class.index());
            n += 1;
        }
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

#[derive(Clone, Copy)]
enum Component {
    Seg,
    Cf,
    Prop,
}

struct Target {
    pixel: usize,
    label: usize,
    component: Component,
}

/// Borrowed view of a batch, used for minibatches without cloning selections.
pub(crate) struct BatchView<'a> {
    pub seg: Vec<&'a LabeledPixels>,
    pub cf: Vec<&'a CounterfactualItem>,
    pub prop: Vec<&'a Correspondence>,
}

impl<'a> From<&'a SupervisionBatch> for BatchView<'a> {
    fn from(b: &'a SupervisionBatch) -> Self {
        BatchView {
            seg: b.seg.iter().collect(),
            cf: b.cf.iter().collect(),
            prop: b.prop.entries.iter().collect(),
        }
    }
}

fn check_image(images: &[FeatureField], image: usize, sel: &RegionSelection) -> Result<(), LearnError> {
    let f = images.get(image).ok_or(LearnError::UnknownImage(image))?;
    if f.width() != sel.width() || f.height() != sel.height() {
        return Err(LearnError::DimensionMismatch(format!("pixel set vs image {image}")));
    }
    Ok(())
}

pub(crate) fn evaluate(
    params: &ToyBackboneParams,
    images: &[FeatureField],
    batch: &BatchView<'_>,
    config: &TrainConfig,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<Vec<f64>>), LearnError> {
    if batch.seg.is_empty() && batch.cf.is_empty() && batch.prop.is_empty() {
        return Err(LearnError::NoSupervision);
    }
    let mut per_image: Vec<Vec<Target>> = (0..images.len()).map(|_| Vec::new()).collect();
    let (mut n_seg, mut n_cf, mut n_prop) = (0usize, 0usize, 0usize);
    for s in &batch.seg {
        check_image(images, s.image, &s.valid)?;
        if !s.labels.same_dims(s.valid.width(), s.valid.height()) {
            return Err(LearnError::DimensionMismatch("labels vs valid set".into()));
        }
        for i in s.valid.iter() {
            per_image[s.image].push(Target { pixel: i, label: s.labels.class_at(i).index(), component: Component::Seg });
            n_seg += 1;
        }
    }
    if !batch.seg.is_empty() && n_seg == 0 {
        return Err(LearnError::EmptyValidSet);
    }
    for c in &batch.cf {
        check_image(images, c.image, &c.region)?;
        if c.region.is_empty() {
            return Err(LearnError::EmptyRegion);
        }
        for i in c.region.iter() {
            per_image[c.image].push(Target { pixel: i, label: c.class.index(), component: Component::Cf });
            n_cf += 1;
        }
    }
    for p in &batch.prop {
        check_image(images, p.image, &p.pixels)?;
        for i in p.pixels.iter() {
            per_image[p.image].push(Target { pixel: i, label: p.class.index(), component: Component::Prop });
            n_prop += 1;
        }
    }

    let weight = |c: Component| match c {
        Component::Seg => 1.0 / n_seg as f64,
        Component::Cf => config.lambda_cf / n_cf as f64,
        Component::Prop => config.lambda_prop / n_prop as f64,
    };

    // Per-image partial sums, reduced below in image order for determinism.
    let partials: Vec<([f64; 3], Option<Vec<f64>>)> = per_image
        .par_iter()
        .enumerate()
        .filter(|(_, t)| !t.is_empty())
        .map(|(img, targets)| {
            let feats = &images[img];
            let mut sums = [0.0; 3];
            let mut g = want_grad.then(|| vec![0.0; PARAM_COUNT]);
            for t in targets {
                let phi = feats.pixel(t.pixel);
                let h = params.hidden(phi);
                let z = params.output(&h);
                let lse = log_sum_exp(&z);
                sums[t.component as usize] += lse - z[t.label];
                if let Some(g) = g.as_mut() {
                    let w = weight(t.component);
                    if w == 0.0 {
                        continue;
                    }
                    let mut dz = [0.0; OUTPUTS];
                    for c in 0..OUTPUTS {
                        dz[c] = w * ((z[c] - lse).exp() - if c == t.label { 1.0 } else { 0.0 });
                    }
                    params.backward_pixel(phi, &h, &dz, g);
                }
            }
            (sums, g)
        })
        .collect();

    let mut sums = [0.0; 3];
    let mut grad = want_grad.then(|| vec![0.0; PARAM_COUNT]);
    for (s, g) in partials {
        for k in 0..3 {
            sums[k] += s[k];
        }
        if let (Some(acc), Some(g)) = (grad.as_mut(), g) {
            for (a, b) in acc.iter_mut().zip(g) {
                *a += b;
            }
        }
    }
    let mean = |sum: f64, n: usize| if n == 0 { 0.0 } else { sum / n as f64 };
    let seg = mean(sums[0], n_seg);
    let cf = mean(sums[1], n_cf);
    let prop = mean(sums[2], n_prop);
    let decay = 0.5 * config.weight_decay * params.squared_norm();
    let total = seg + config.lambda_cf * cf + config.lambda_prop * prop + decay;
    if let Some(g) = grad.as_mut() {
        for (gi, &p) in g.iter_mut().zip(params.as_slice()) {
            *gi += config.weight_decay * p;
        }
    }
    Ok((LossBreakdown { seg, cf, prop, decay, total }, grad))
}

/// `L_seg + λ_cf·L_cf + λ_prop·L_prop + wd·‖θ‖²/2`; absent components add zero.
pub fn loss_total(
    batch: &SupervisionBatch,
    params: &ToyBackboneParams,
    images: &[FeatureField],
    config: &TrainConfig,
) -> Result<LossBreakdown, LearnError> {
    Ok(evaluate(params, images, &batch.into(), config, false)?.0)
}

/// Analytic gradient of [`loss_total`] with respect to every parameter.
pub fn grad(
    params: &ToyBackboneParams,
    batch: &SupervisionBatch,
    images: &[FeatureField],
    config: &TrainConfig,
) -> Result<Vec<f64>, LearnError> {
    Ok(evaluate(params, images, &batch.into(), config, true)?.1.expect("gradient requested"))
}

pub fn loss_and_grad(
    params: &ToyBackboneParams,
    batch: &SupervisionBatch,
    images: &[FeatureField],
    config: &TrainConfig,
) -> Result<(LossBreakdown, Vec<f64>), LearnError> {
    let (l, g) = evaluate(params, images, &batch.into(), config, true)?;
    Ok((l, g.expect("gradient requested")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::{featurize, forward};
    use crate::mask::ImageRaster;

    const LN7: f64 = 1.945_910_149_055_313_3;

    fn uniform(w: u32, h: u32) -> LogitMap {
        LogitMap::new(w, h, vec![0.25; (w * h) as usize * 7]).unwrap()
    }

    fn margin(w: u32, h: u32, class: usize, m: f64) -> LogitMap {
        LogitMap::from_fn(w, h, |_| {
            let mut z = [0.0; 7];
            z[class] = m;
            z
        })
        .unwrap()
    }

    #[test]
    fn seg_examples() {
        let labels = SegmentationMask::new(2, 2, vec![0, 3, 6, 1]).unwrap();
        let all = RegionSelection::full(2, 2);
        assert!((loss_seg(&uniform(2, 2), &labels, &all).unwrap() - LN7).abs() < 1e-15);

        let l = LogitMap::from_fn(2, 2, |i| {
            let mut z = [0.0; 7];
            z[labels.labels()[i] as usize] = 20.0;
            z
        })
        .unwrap();
        let v = loss_seg(&l, &labels, &all).unwrap();
        let expected = (1.0 + 6.0 * (-20f64).exp()).ln();
        assert!((v - expected).abs() < 1e-15 && v < 1e-6);

        assert!(matches!(
            loss_seg(&uniform(2, 2), &labels, &RegionSelection::empty(2, 2)),
            Err(LearnError::EmptyValidSet)
        ));
    }

    #[test]
    fn cf_examples() {
        let one = RegionSelection::from_indices(3, 3, [4]);
        assert!((loss_cf(&uniform(3, 3), &one, ClassId::SKY).unwrap() - LN7).abs() < 1e-15);
        let r = RegionSelection::from_indices(3, 3, [0, 1, 5]);
        assert!(loss_cf(&margin(3, 3, 3, 20.0), &r, ClassId::BUILDINGS).unwrap() < 1e-6);
        assert!(matches!(
            loss_cf(&uniform(3, 3), &RegionSelection::empty(3, 3), ClassId::SKY),
            Err(LearnError::EmptyRegion)
        ));
    }

    #[test]
    fn cf_equals_seg_with_constant_labels() {
        let img = ImageRaster::from_fn(5, 4, |x, y| [x as u8 * 50, y as u8 * 60, 77]).unwrap();
        let logits = forward(&ToyBackboneParams::init(2), &featurize(&img));
        let r = RegionSelection::from_indices(5, 4, [1, 2, 7, 8, 13, 19]);
        let labels = SegmentationMask::filled(5, 4, ClassId::TREES).unwrap();
        let a = loss_cf(&logits, &r, ClassId::TREES).unwrap();
        let b = loss_seg(&logits, &labels, &r).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn prop_examples() {
        assert_eq!(loss_prop(&[], &CorrespondenceSet::default()).unwrap(), 0.0);
        let e = Correspondence { image: 0, pixels: RegionSelection::from_indices(2, 2, [0, 3]), class: ClassId::SKY };
        let m = CorrespondenceSet { entries: vec![e.clone()] };
        let l = [uniform(2, 2)];
        assert!((loss_prop(&l, &m).unwrap() - LN7).abs() < 1e-15);
        let img = ImageRaster::from_fn(2, 2, |x, y| [x as u8 * 90, y as u8 * 90, 10]).unwrap();
        let l = [forward(&ToyBackboneParams::init(4), &featurize(&img))];
        let dup = CorrespondenceSet { entries: vec![e.clone(), e] };
        assert!((loss_prop(&l, &m).unwrap() - loss_prop(&l, &dup).unwrap()).abs() < 1e-15);
    }

    fn components_config(wd: f64) -> TrainConfig {
        TrainConfig { weight_decay: wd, ..TrainConfig::default() }
    }

    #[test]
    fn total_weighting_arithmetic() {
        // Weighting only, with the default lambdas: 1.0 + 0.5*0.4 + 0.2*0.3.
        let c = components_config(0.0);
        let total = 1.0 + c.lambda_cf * 0.4 + c.lambda_prop * 0.3;
        assert!((total - 1.26).abs() < 1e-12);
    }

    fn constant_model(class: usize, m: f64) -> ToyBackboneParams {
        let mut p = ToyBackboneParams::zeros();
        p.b2_mut()[class] = m;
        p
    }

    fn perfect_batch() -> (Vec<FeatureField>, SupervisionBatch) {
        let img = ImageRaster::from_fn(4, 4, |x, y| [x as u8 * 60, 30, y as u8 * 60]).unwrap();
        let images = vec![featurize(&img), featurize(&img)];
        let batch = SupervisionBatch {
            seg: vec![LabeledPixels {
                image: 0,
                labels: SegmentationMask::filled(4, 4, ClassId::SKY).unwrap(),
                valid: RegionSelection::full(4, 4),
            }],
            cf: vec![CounterfactualItem { image: 1, region: RegionSelection::from_indices(4, 4, [0, 5]), class: ClassId::SKY }],
            prop: CorrespondenceSet {
                entries: vec![Correspondence { image: 0, pixels: RegionSelection::from_indices(4, 4, [3]), class: ClassId::SKY }],
            },
        };
        (images, batch)
    }

    #[test]
    fn total_perfect_predictions() {
        let (images, batch) = perfect_batch();
        let l = loss_total(&batch, &constant_model(1, 20.0), &images, &components_config(0.0)).unwrap();
        assert!(l.total < 1e-6);
        let g = grad(&constant_model(1, 20.0), &batch, &images, &components_config(0.0)).unwrap();
        assert!(g.iter().map(|v| v * v).sum::<f64>().sqrt() < 1e-6);
    }

    #[test]
    fn total_uniform_is_ln7_per_component() {
        let (images, batch) = perfect_batch();
        let l = loss_total(&batch, &ToyBackboneParams::zeros(), &images, &components_config(0.0)).unwrap();
        assert!((l.seg - LN7).abs() < 1e-12 && (l.cf - LN7).abs() < 1e-12 && (l.prop - LN7).abs() < 1e-12);
        let c = TrainConfig { lambda_cf: 0.0, lambda_prop: 0.0, weight_decay: 0.0, ..TrainConfig::default() };
        let l = loss_total(&batch, &ToyBackboneParams::init(1), &images, &c).unwrap();
        assert_eq!(l.total, l.seg);
    }

    #[test]
    fn decay_gradient_is_wd_theta() {
        let (images, batch) = perfect_batch();
        let theta = ToyBackboneParams::init(8);
        let wd = 0.3;
        let with = grad(&theta, &batch, &images, &components_config(wd)).unwrap();
        let without = grad(&theta, &batch, &images, &components_config(0.0)).unwrap();
        for ((a, b), p) in with.iter().zip(&without).zip(theta.as_slice()) {
            assert!((a - b - wd * p).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_batch_is_an_error() {
        let r = loss_total(&SupervisionBatch::default(), &ToyBackboneParams::zeros(), &[], &TrainConfig::default());
        assert!(matches!(r, Err(LearnError::NoSupervision)));
    }

    #[test]
    fn gradient_matches_central_differences() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for draw in 0..3u64 {
            let img = ImageRaster::from_fn(8, 8, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap();
            let images = vec![featurize(&img)];
            let labels: Vec<u8> = (0..64).map(|_| rng.random_range(0..7)).collect();
            let batch = SupervisionBatch {
                seg: vec![LabeledPixels {
                    image: 0,
                    labels: SegmentationMask::new(8, 8, labels).unwrap(),
                    valid: RegionSelection::from_fn(8, 8, |_, _| rng.random_bool(0.7)),
                }],
                cf: vec![CounterfactualItem { image: 0, region: RegionSelection::from_indices(8, 8, [9, 10, 17]), class: ClassId::SKY }],
                prop: CorrespondenceSet {
                    entries: vec![Correspondence { image: 0, pixels: RegionSelection::from_indices(8, 8, [40, 41]), class: ClassId::BUILDINGS }],
                },
            };
            let config = TrainConfig::default();
            let theta = ToyBackboneParams::init(draw);
            let g = grad(&theta, &batch, &images, &config).unwrap();
            let h = 1e-5;
            for i in (0..PARAM_COUNT).step_by(7) {
                let mut p = theta.clone();
                p.as_mut_slice()[i] += h;
                let up = loss_total(&batch, &p, &images, &config).unwrap().total;
                p.as_mut_slice()[i] -= 2.0 * h;
                let down = loss_total(&batch, &p, &images, &config).unwrap().total;
                let fd = (up - down) / (2.0 * h);
                let rel = (g[i] - fd).abs() / g[i].abs().max(fd.abs()).max(1e-6);
                assert!(rel < 1e-4, "param {i}: analytic {} fd {fd}", g[i]);
            }
        }
    }
}
