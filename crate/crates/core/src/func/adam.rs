//! Adaptive-moment gradient descent over flat parameter vectors.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// L2 regularization rate added to the gradient.
    pub l2: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, beta1: 0.9, beta2: 0.999, epsilon: 1e-8, l2: 0.0 }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    m: Array1<f64>,
    v: Array1<f64>,
    t: i32,
}

impl Adam {
    pub fn new(dim: usize, cfg: AdamConfig) -> Self {
        Self { cfg, m: Array1::zeros(dim), v: Array1::zeros(dim), t: 0 }
    }

    pub fn step(&mut self, params: &mut Array1<f64>, grad: &Array1<f64>) {
        self.t += 1;
        let c = &self.cfg;
        let bias1 = 1.0 - c.beta1.powi(self.t);
        let bias2 = 1.0 - c.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i] + c.l2 * params[i];
            self.m[i] = c.beta1 * self.m[i] + (1.0 - c.beta1) * g;
            self.v[i] = c.beta2 * self.v[i] + (1.0 - c.beta2) * g * g;
            let m_hat = self.m[i] / bias1;
            let v_hat = self.v[i] / bias2;
            params[i] -= c.learning_rate * m_hat / (v_hat.sqrt() + c.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    #[test]
    fn descends_a_quadratic() {
        let cfg = AdamConfig { learning_rate: 0.05, ..Default::default() };
        let mut adam = Adam::new(2, cfg);
        let mut x = arr1(&[3.0, -2.0]);
        for _ in 0..500 {
            let grad = x.mapv(|v| 2.0 * v);
            adam.step(&mut x, &grad);
        }
        assert!(x.iter().all(|v| v.abs() < 1e-2), "x = {x:?}");
    }
}
