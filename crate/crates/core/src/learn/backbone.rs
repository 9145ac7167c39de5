//! One-hidden-layer per-pixel network `W2·tanh(W1·φ + b1) + b2`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{FeatureField, LearnError, FEATURES};
use crate::mask::{LogitMap, NUM_CLASSES};

pub const INPUTS: usize = FEATURES;
pub const HIDDEN: usize = 32;
pub const OUTPUTS: usize = NUM_CLASSES;

const W1: usize = 0;
const B1: usize = W1 + HIDDEN * INPUTS;
const W2: usize = B1 + HIDDEN;
const B2: usize = W2 + OUTPUTS * HIDDEN;
pub const PARAM_COUNT: usize = B2 + OUTPUTS;

const CHECKPOINT_MAGIC: &[u8; 4] = b"SEGW";
const CHECKPOINT_VERSION: u32 = 1;
const CHECKPOINT_HEADER: usize = 20;

/// Parameters stored flat in declaration order: W1 (32x11, row-major), b1,
/// W2 (7x32), b2.
#[derive(Clone, Debug, PartialEq)]
pub struct ToyBackboneParams {
    data: Vec<f64>,
}

impl ToyBackboneParams {
    pub fn zeros() -> Self {
        ToyBackboneParams { data: vec![0.0; PARAM_COUNT] }
    }

    /// Seeded uniform(-0.1, 0.1) initialization. Values are drawn as f32 so
    /// that a freshly initialized model survives a checkpoint round trip.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..PARAM_COUNT).map(|_| rng.random_range(-0.1f32..0.1) as f64).collect();
        ToyBackboneParams { data }
    }

    pub fn from_vec(data: Vec<f64>) -> Result<Self, LearnError> {
        if data.len() != PARAM_COUNT {
            return Err(LearnError::DimensionMismatch(format!(
                "expected {PARAM_COUNT} parameters, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(LearnError::Checkpoint("non-finite parameter".into()));
        }
        Ok(ToyBackboneParams { data })
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn w1(&self, j: usize, k: usize) -> f64 {
        self.data[W1 + j * INPUTS + k]
    }

    pub fn b1(&self, j: usize) -> f64 {
        self.data[B1 + j]
    }

    pub fn w2(&self, c: usize, j: usize) -> f64 {
        self.data[W2 + c * HIDDEN + j]
    }

    pub fn b2(&self, c: usize) -> f64 {
        self.data[B2 + c]
    }

    pub fn b2_mut(&mut self) -> &mut [f64] {
        &mut self.data[B2..]
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub(crate) fn hidden(&self, phi: &[f64; INPUTS]) -> [f64; HIDDEN] {
        let mut h = [0.0; HIDDEN];
        for (j, hj) in h.iter_mut().enumerate() {
            let row = &self.data[W1 + j * INPUTS..W1 + (j + 1) * INPUTS];
            let a: f64 = row.iter().zip(phi).map(|(w, x)| w * x).sum::<f64>() + self.data[B1 + j];
            *hj = a.tanh();
        }
        h
    }

    pub(crate) fn output(&self, h: &[f64; HIDDEN]) -> [f64; OUTPUTS] {
        let mut z = [0.0; OUTPUTS];
        for (c, zc) in z.iter_mut().enumerate() {
            let row = &self.data[W2 + c * HIDDEN..W2 + (c + 1) * HIDDEN];
            *zc = row.iter().zip(h).map(|(w, x)| w * x).sum::<f64>() + self.data[B2 + c];
        }
        z
    }

    pub(crate) fn logits(&self, phi: &[f64; INPUTS]) -> [f64; OUTPUTS] {
        self.output(&self.hidden(phi))
    }

    /// Accumulate `dL/dθ` for one pixel given `dL/dz` on its logits.
    pub(crate) fn backward_pixel(
        &self,
        phi: &[f64; INPUTS],
        h: &[f64; HIDDEN],
        dz: &[f64; OUTPUTS],
        grad: &mut [f64],
    ) {
        let mut dh = [0.0; HIDDEN];
        for c in 0..OUTPUTS {
            if dz[c] == 0.0 {
                continue;
            }
            grad[B2 + c] += dz[c];
            for j in 0..HIDDEN {
                grad[W2 + c * HIDDEN + j] += dz[c] * h[j];
                dh[j] += dz[c] * self.data[W2 + c * HIDDEN + j];
            }
        }
        for j in 0..HIDDEN {
            let da = dh[j] * (1.0 - h[j] * h[j]);
            grad[B1 + j] += da;
            for k in 0..INPUTS {
                grad[W1 + j * INPUTS + k] += da * phi[k];
            }
        }
    }

    /// `d logit_c / d φ` for one pixel.
    pub(crate) fn input_gradient(&self, phi: &[f64; INPUTS], class: usize) -> [f64; INPUTS] {
        let h = self.hidden(phi);
        let mut g = [0.0; INPUTS];
        for j in 0..HIDDEN {
            let da = self.w2(class, j) * (1.0 - h[j] * h[j]);
            for (k, gk) in g.iter_mut().enumerate() {
                *gk += da * self.w1(j, k);
            }
        }
        g
    }
}

pub fn forward(params: &ToyBackboneParams, features: &FeatureField) -> LogitMap {
    let values = features.pixels().iter().flat_map(|phi| params.logits(phi)).collect();
    LogitMap::new(features.width(), features.height(), values).expect("finite logits")
}

/// Hidden-layer activations per pixel.
pub fn hidden_activations(params: &ToyBackboneParams, features: &FeatureField) -> Vec<[f64; HIDDEN]> {
    features.pixels().iter().map(|phi| params.hidden(phi)).collect()
}

/// SEGW checkpoint: magic, version, input/hidden/output dims (u32 LE), then
/// every parameter as an f32 LE in declaration order.
pub fn encode_checkpoint(params: &ToyBackboneParams) -> Vec<u8> {
    let mut out = Vec::with_capacity(CHECKPOINT_HEADER + 4 * PARAM_COUNT);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    for v in [CHECKPOINT_VERSION, INPUTS as u32, HIDDEN as u32, OUTPUTS as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for &p in &params.data {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<ToyBackboneParams, LearnError> {
    if bytes.len() < CHECKPOINT_HEADER || &bytes[..4] != CHECKPOINT_MAGIC {
        return Err(LearnError::Checkpoint("bad magic, expected SEGW".into()));
    }
    let word = |i: usize| u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap());
    if word(0) != CHECKPOINT_VERSION {
        return Err(LearnError::Checkpoint(format!("unsupported version {}", word(0))));
    }
    let dims = (word(1) as usize, word(2) as usize, word(3) as usize);
    if dims != (INPUTS, HIDDEN, OUTPUTS) {
        return Err(LearnError::Checkpoint(format!("unsupported layer dims {dims:?}")));
    }
    let payload = &bytes[CHECKPOINT_HEADER..];
    if payload.len() != 4 * PARAM_COUNT {
        return Err(LearnError::Checkpoint(format!(
            "expected {} payload bytes, got {}",
            4 * PARAM_COUNT,
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    ToyBackboneParams::from_vec(data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::learn::featurize;
    use crate::mask::{argmax_mask, softmax, ImageRaster};

    fn features() -> FeatureField {
        featurize(&ImageRaster::from_fn(6, 5, |x, y| [x as u8 * 40, y as u8 * 50, 128]).unwrap())
    }

    #[test]
    fn zero_model_gives_uniform_softmax() {
        let logits = forward(&ToyBackboneParams::zeros(), &features());
        assert!(logits.values().iter().all(|&v| v == 0.0));
        let p = softmax(&logits);
        assert!((p.pixel(3)[5] - 1.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn bias_only_model_picks_class_zero() {
        let mut m = ToyBackboneParams::init(1);
        for v in &mut m.as_mut_slice()[W2..B2] {
            *v = 0.0;
        }
        m.b2_mut().copy_from_slice(&[5.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(argmax_mask(&forward(&m, &features())).labels().iter().all(|&l| l == 0));
    }

    #[test]
    fn init_is_seeded_and_bounded() {
        let a = ToyBackboneParams::init(5);
        assert_eq!(a, ToyBackboneParams::init(5));
        assert_ne!(a, ToyBackboneParams::init(6));
        assert!(a.as_slice().iter().all(|v| v.abs() < 0.1));
        assert_eq!(forward(&a, &features()), forward(&a, &features()));
    }

    #[test]
    fn checkpoint_round_trip_and_errors() {
        let m = ToyBackboneParams::init(3);
        let bytes = encode_checkpoint(&m);
        assert_eq!(bytes.len(), 20 + 4 * PARAM_COUNT);
        assert_eq!(decode_checkpoint(&bytes).unwrap(), m);
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[12] = 64;
        assert!(decode_checkpoint(&bad).is_err());
    }

    #[test]
    fn input_gradient_matches_difference() {
        let m = ToyBackboneParams::init(9);
        let phi = *features().pixel(7);
        let g = m.input_gradient(&phi, 2);
        for k in 0..INPUTS {
            let h = 1e-6;
            let mut a = phi;
            let mut b = phi;
            a[k] += h;
            b[k] -= h;
            let fd = (m.logits(&a)[2] - m.logits(&b)[2]) / (2.0 * h);
            assert!((fd - g[k]).abs() < 1e-8);
        }
    }
}
