use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    learning_rate: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    step: i32,
}

impl Adam {
    pub fn new(len: usize, learning_rate: f64, config: AdamConfig) -> Self {
        Adam {
            config,
            learning_rate,
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), grads.len());
        self.step += 1;
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        let c1 = 1.0 - beta1.powi(self.step);
        let c2 = 1.0 - beta2.powi(self.step);
        let lr = self.learning_rate;
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![1.0, -1.0, 0.0];
        let mut opt = Adam::new(3, 0.1, AdamConfig::default());
        opt.step(&mut p, &[2.0, -0.5, 0.0]);
        assert!((p[0] - 0.9).abs() < 1e-6);
        assert!((p[1] + 0.9).abs() < 1e-6);
        assert_eq!(p[2], 0.0);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut p = vec![3.0];
        let mut opt = Adam::new(1, 0.05, AdamConfig::default());
        for _ in 0..2000 {
            let g = [2.0 * (p[0] - 1.0)];
            opt.step(&mut p, &g);
        }
        assert!((p[0] - 1.0).abs() < 1e-3);
    }
}
