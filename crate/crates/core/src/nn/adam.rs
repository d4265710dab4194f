use serde::{Deserialize, Serialize};

use super::ParamVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..AdamConfig::default() }
    }
}

/// Adam moments for one learner. The gradient passed to [`AdamState::step`]
/// is a descent direction's negative (a loss gradient); the returned delta is
/// added to the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub m: ParamVector,
    pub v: ParamVector,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        AdamState { config, m: ParamVector::zeros(len), v: ParamVector::zeros(len), t: 0 }
    }

    /// Bias-corrected update `-lr * m_hat / (sqrt(v_hat) + eps)`.
    pub fn step(&mut self, grad: &ParamVector) -> ParamVector {
        assert_eq!(grad.len(), self.m.len(), "gradient length does not match Adam state");
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        self.t += 1;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let mut delta = ParamVector::zeros(grad.len());
        for i in 0..grad.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / c1;
            let v_hat = self.v[i] / c2;
            delta[i] = -lr * m_hat / (v_hat.sqrt() + eps);
        }
        delta
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_is_lr_sized() {
        let mut s = AdamState::new(1, AdamConfig::with_lr(1e-3));
        let d = s.step(&ParamVector::from(vec![1.0]));
        assert!((d[0] + 1e-3).abs() < 1e-10);
    }

    #[test]
    fn zero_gradients_zero_deltas() {
        let mut s = AdamState::new(3, AdamConfig::default());
        for _ in 0..50 {
            assert_eq!(s.step(&ParamVector::zeros(3)), ParamVector::zeros(3));
        }
    }

    #[test]
    fn first_step_scale_invariant() {
        for c in [1e-3, 0.5, 7.0, 1e4] {
            let mut a = AdamState::new(2, AdamConfig::with_lr(1e-4));
            let mut b = AdamState::new(2, AdamConfig::with_lr(1e-4));
            let g = ParamVector::from(vec![0.3, -2.0]);
            let mut gc = g.clone();
            gc.scale(c);
            let (da, db) = (a.step(&g), b.step(&gc));
            for i in 0..2 {
                assert!((da[i] - db[i]).abs() < 1e-4 * 1e-4);
            }
        }
    }

    #[test]
    fn second_moment_nonnegative() {
        let mut s = AdamState::new(2, AdamConfig::default());
        for i in 0..20 {
            s.step(&ParamVector::from(vec![(i as f64).sin(), -(i as f64)]));
            assert!(s.v.iter().all(|&v| v >= 0.0));
        }
    }
}
