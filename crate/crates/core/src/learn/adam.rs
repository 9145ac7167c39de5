use serde::{Deserialize, Serialize};

use super::TrainConfig;

/// First and second moment estimates plus the step counter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        AdamState { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

/// One bias-corrected Adam update in place. Weight decay is expected to be
/// part of `grads` already.
pub fn adam_step(theta: &mut [f64], grads: &[f64], state: &mut AdamState, config: &TrainConfig) {
    assert_eq!(theta.len(), grads.len(), "parameter and gradient lengths differ");
    assert_eq!(theta.len(), state.m.len(), "optimizer state length differs");
    state.t += 1;
    let (b1, b2) = (config.beta1, config.beta2);
    let c1 = 1.0 - b1.powi(state.t as i32);
    let c2 = 1.0 - b2.powi(state.t as i32);
    for i in 0..theta.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        theta[i] -= config.lr * m_hat / (v_hat.sqrt() + config.eps);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_theta() {
        let mut theta = vec![0.3, -1.2, 4.0];
        let before = theta.clone();
        let mut s = AdamState::new(3);
        adam_step(&mut theta, &[0.0; 3], &mut s, &TrainConfig::default());
        assert_eq!(theta, before);
    }

    #[test]
    fn constant_gradient_step_tends_to_lr() {
        // Oracle: with constant g, m_hat → g and v_hat → g², so the step → lr·g/(|g|+ε).
        let c = TrainConfig::default();
        let g = [0.7, -3.0, 1e-2];
        let mut theta = vec![0.0; 3];
        let mut s = AdamState::new(3);
        let mut prev = theta.clone();
        for _ in 0..10_000 {
            prev.copy_from_slice(&theta);
            adam_step(&mut theta, &g, &mut s, &c);
        }
        for i in 0..3 {
            let step = (theta[i] - prev[i]).abs();
            assert!((step - c.lr).abs() / c.lr < 1e-3, "step {step}");
        }
    }

    #[test]
    fn deterministic_trajectory() {
        let c = TrainConfig::default();
        let run = || {
            let mut theta = vec![1.0, 2.0];
            let mut s = AdamState::new(2);
            for k in 0..50 {
                let g = [theta[0] * 0.1 + k as f64, -theta[1]];
                adam_step(&mut theta, &g, &mut s, &c);
            }
            theta
        };
        assert_eq!(run(), run());
    }
}
