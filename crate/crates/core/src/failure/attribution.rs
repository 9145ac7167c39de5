use rayon::prelude::*;

use super::ScoreMap;
use crate::learn::{featurize, FeatureField, ToyBackboneParams, FEATURES};
use crate::mask::{ClassId, ImageRaster};

pub const DEFAULT_IG_STEPS: usize = 32;

/// Signed integrated-gradients attributions of the `class` logit, one
/// `FEATURES`-vector per pixel. The straight-line path runs in feature space
/// from the featurized black baseline to the featurized image, integrated
/// with the midpoint rule.
pub fn integrated_gradients(
    model: &ToyBackboneParams,
    image: &ImageRaster,
    class: ClassId,
    steps: usize,
) -> Vec<[f64; FEATURES]> {
    let steps = steps.max(1);
    let target = featurize(image);
    let baseline = featurize(&ImageRaster::filled(image.width(), image.height(), [0, 0, 0]).expect("same dims"));
    ig_features(model, &baseline, &target, class.index(), steps)
}

fn ig_features(
    model: &ToyBackboneParams,
    baseline: &FeatureField,
    target: &FeatureField,
    class: usize,
    steps: usize,
) -> Vec<[f64; FEATURES]> {
    (0..target.len())
        .into_par_iter()
        .map(|i| {
            let (b, x) = (baseline.pixel(i), target.pixel(i));
            let mut acc = [0.0; FEATURES];
            for s in 0..steps {
                let alpha = (s as f64 + 0.5) / steps as f64;
                let mut phi = [0.0; FEATURES];
                for k in 0..FEATURES {
                    phi[k] = b[k] + alpha * (x[k] - b[k]);
                }
                let g = model.input_gradient(&phi, class);
                for k in 0..FEATURES {
                    acc[k] += g[k];
                }
            }
            let mut out = [0.0; FEATURES];
            for k in 0..FEATURES {
                out[k] = (x[k] - b[k]) * acc[k] / steps as f64;
            }
            out
        })
        .collect()
}

/// Per-pixel L1 norm of the integrated-gradients attribution.
pub fn attribution_map(model: &ToyBackboneParams, image: &ImageRaster, class: ClassId, steps: usize) -> ScoreMap {
    let scores = integrated_gradients(model, image, class, steps)
        .iter()
        .map(|a| a.iter().map(|v| v.abs()).sum())
        .collect();
    ScoreMap::new(image.width(), image.height(), scores).expect("finite attribution")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::forward;
    use rand::{Rng, SeedableRng};

    fn random_image(seed: u64) -> ImageRaster {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        ImageRaster::from_fn(6, 5, |_, _| [rng.random(), rng.random(), rng.random()]).unwrap()
    }

    /// Σ_i f(x)_c − f(baseline)_c over all pixels, evaluated directly.
    fn logit_gap(model: &ToyBackboneParams, image: &ImageRaster, class: usize) -> f64 {
        let black = ImageRaster::filled(image.width(), image.height(), [0, 0, 0]).unwrap();
        let (fx, fb) = (forward(model, &featurize(image)), forward(model, &featurize(&black)));
        (0..fx.len()).map(|i| fx.pixel(i)[class] - fb.pixel(i)[class]).sum()
    }

    fn completeness_error(model: &ToyBackboneParams, image: &ImageRaster, steps: usize) -> f64 {
        let ig: f64 = integrated_gradients(model, image, ClassId::SKY, steps).iter().flatten().sum();
        let gap = logit_gap(model, image, 1);
        (ig - gap).abs() / gap.abs().max(1e-12)
    }

    #[test]
    fn baseline_image_gives_zero() {
        let black = ImageRaster::filled(4, 4, [0, 0, 0]).unwrap();
        let m = attribution_map(&ToyBackboneParams::init(1), &black, ClassId::SKY, 32);
        assert!(m.scores().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_model_gives_zero() {
        let m = attribution_map(&ToyBackboneParams::zeros(), &random_image(2), ClassId::BUILDINGS, 32);
        assert!(m.scores().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn completeness_at_256_steps() {
        for seed in 0..3 {
            let model = ToyBackboneParams::init(seed + 10);
            assert!(completeness_error(&model, &random_image(seed), 256) < 0.01);
        }
    }

    #[test]
    fn completeness_improves_with_steps() {
        let mut scaled = ToyBackboneParams::init(5).as_slice().to_vec();
        for v in &mut scaled {
            *v *= 20.0;
        }
        let model = ToyBackboneParams::from_vec(scaled).unwrap();
        let img = random_image(7);
        let e: Vec<f64> = [8, 32, 256].iter().map(|&m| completeness_error(&model, &img, m)).collect();
        assert!(e[0] >= e[1] && e[1] >= e[2], "{e:?}");
    }
}
