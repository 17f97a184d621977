//! Adam with bias-corrected moment estimates.
//!
//! For each parameter, step `t` (starting at 1) applies
//!
//! ```text
//! m_t = b1 * m_{t-1} + (1 - b1) * g
//! v_t = b2 * v_{t-1} + (1 - b2) * g^2
//! m_hat = m_t / (1 - b1^t)
//! v_hat = v_t / (1 - b2^t)
//! theta -= alpha * m_hat / (sqrt(v_hat) + delta)
//! ```

use serde::{Deserialize, Serialize};

use super::{ParamSet, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub delta: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { alpha: 1e-3, beta1: 0.9, beta2: 0.999, delta: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        Self { alpha, ..Self::default() }
    }
}

/// Moment estimates for one parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
    pub config: AdamConfig,
}

impl AdamState {
    pub fn new(len: usize, config: AdamConfig) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0, config }
    }

    /// One update of `param` in place from `grad`.
    pub fn step(&mut self, param: &mut [f64], grad: &[f64]) -> Result<(), TensorError> {
        if param.len() != self.m.len() || grad.len() != self.m.len() {
            return Err(TensorError::ShapeMismatch {
                op: "adam_step",
                left: vec![param.len(), self.m.len()],
                right: vec![grad.len()],
            });
        }
        self.t += 1;
        let AdamConfig { alpha, beta1, beta2, delta } = self.config;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..param.len() {
            let g = grad[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            param[i] -= alpha * m_hat / (v_hat.sqrt() + delta);
        }
        Ok(())
    }
}

/// Adam over every tensor of a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Adam {
    states: Vec<AdamState>,
}

impl Adam {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        Self { states: params.tensors().iter().map(|t| AdamState::new(t.len(), config)).collect() }
    }

    pub fn alpha(&self) -> f64 {
        self.states.first().map_or(0.0, |s| s.config.alpha)
    }

    pub fn set_alpha(&mut self, alpha: f64) {
        self.states.iter_mut().for_each(|s| s.config.alpha = alpha);
    }

    pub fn steps(&self) -> u64 {
        self.states.first().map_or(0, |s| s.t)
    }

    /// Applies one step to every tensor using its stored `grad`, then clears it.
    /// Tensors without a gradient are treated as having a zero gradient.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<(), TensorError> {
        if params.len() != self.states.len() {
            return Err(TensorError::ShapeMismatch { op: "Adam::step", left: vec![params.len()], right: vec![self.states.len()] });
        }
        for (state, tensor) in self.states.iter_mut().zip(params.tensors_mut()) {
            let grad = tensor.grad.take().unwrap_or_else(|| vec![0.0; tensor.len()]);
            state.step(tensor.values_mut(), &grad)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut s = AdamState::new(2, AdamConfig::default());
        let mut p = vec![0.3, -1.2];
        for _ in 0..50 {
            s.step(&mut p, &[0.0, 0.0]).unwrap();
        }
        assert_eq!(p, vec![0.3, -1.2]);
        assert_eq!(s.t, 50);
    }

    #[test]
    fn first_and_second_step_unit_gradient() {
        let cfg = AdamConfig { alpha: 0.001, beta1: 0.9, beta2: 0.999, delta: 1e-8 };
        let mut s = AdamState::new(1, cfg);
        let mut p = vec![1.0];
        s.step(&mut p, &[1.0]).unwrap();
        // m_hat = v_hat = 1, so the update is alpha / (1 + delta).
        let per_step = 0.001 / (1.0 + 1e-8);
        assert!((1.0 - p[0] - per_step).abs() < 1e-15);
        s.step(&mut p, &[1.0]).unwrap();
        assert!((1.0 - p[0] - 2.0 * per_step).abs() < 1e-15);
    }

    #[test]
    fn update_magnitude_approaches_alpha() {
        let alpha = 0.01;
        let mut s = AdamState::new(1, AdamConfig::with_alpha(alpha));
        let mut p = vec![0.0];
        for t in 1..=200 {
            let before = p[0];
            s.step(&mut p, &[0.37]).unwrap();
            let upd = (before - p[0]).abs();
            if t >= 10 {
                assert!(upd >= 0.9 * alpha && upd <= alpha, "t={t} upd={upd}");
            }
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::new(2, AdamConfig::default());
        let mut p = vec![0.0; 2];
        assert!(s.step(&mut p, &[1.0]).is_err());
        assert_eq!(s.t, 0);
    }
}
