use serde::{Deserialize, Serialize};

use super::net::{DenseNet, Gradients};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }
}

/// ADAM moments for a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

pub type Adam = AdamState;

impl AdamState {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn for_net(config: AdamConfig, net: &DenseNet) -> Self {
        Self::new(config, net.param_count())
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected update in place.
    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len(), "parameter count");
        assert_eq!(grads.len(), self.m.len(), "gradient count");
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }

    pub fn step_net(&mut self, net: &mut DenseNet, grads: &Gradients) {
        let mut flat = net.to_flat();
        self.step_flat(&mut flat, &grads.flat);
        net.set_flat(&flat);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = AdamState::new(AdamConfig::default(), 3);
        let mut p = vec![1.0, -2.0, 0.5];
        adam.step_flat(&mut p, &[0.0; 3]);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let cfg = AdamConfig::default();
        let mut adam = AdamState::new(cfg, 3);
        let mut p = vec![0.0; 3];
        adam.step_flat(&mut p, &[3.0, -0.01, 250.0]);
        for (pi, g) in p.iter().zip([3.0f64, -0.01, 250.0]) {
            assert!((pi + cfg.lr * g.signum()).abs() < 1e-9, "{pi}");
        }
    }

    #[test]
    fn quadratic_bowl_descends() {
        let c = [1.0, 4.0, 0.5];
        let loss = |p: &[f64]| p.iter().zip(&c).map(|(x, k)| k * x * x).sum::<f64>();
        let mut p = vec![3.0, -2.0, 5.0];
        let mut adam = AdamState::new(AdamConfig::with_lr(1e-2), 3);
        let mut prev = loss(&p);
        for step in 0..100 {
            let g: Vec<f64> = p.iter().zip(&c).map(|(x, k)| 2.0 * k * x).collect();
            adam.step_flat(&mut p, &g);
            let cur = loss(&p);
            if step >= 5 {
                assert!(cur < prev, "step {step}: {cur} >= {prev}");
            }
            prev = cur;
        }
        assert_eq!(adam.steps(), 100);
    }
}
