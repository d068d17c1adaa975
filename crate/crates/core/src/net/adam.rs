use serde::{Deserialize, Serialize};

use crate::error::{FamlError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    /// L2 coefficient, added to the gradient as `weight_decay · θ`.
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            weight_decay: 1e-5,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam with bias correction and classic (gradient-additive) L2 regularization.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub config: AdamConfig,
    step: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl OptimizerState {
    pub fn new(config: AdamConfig, num_parameters: usize) -> Self {
        Self {
            config,
            step: 0,
            first_moment: vec![0.0; num_parameters],
            second_moment: vec![0.0; num_parameters],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        let n = self.first_moment.len();
        if params.len() != n {
            return Err(FamlError::dim("optimizer parameters", n, params.len()));
        }
        if grads.len() != n {
            return Err(FamlError::dim("optimizer gradients", n, grads.len()));
        }
        let AdamConfig {
            learning_rate,
            weight_decay,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        self.step += 1;
        let t = self.step as i32;
        let correction1 = 1.0 - beta1.powi(t);
        let correction2 = 1.0 - beta2.powi(t);
        for i in 0..n {
            let g = grads[i] + weight_decay * params[i];
            let m = &mut self.first_moment[i];
            let v = &mut self.second_moment[i];
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / correction1;
            let v_hat = *v / correction2;
            params[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn zero_gradient_no_decay_is_identity() {
        let mut opt = OptimizerState::new(AdamConfig { weight_decay: 0.0, ..Default::default() }, 3);
        let mut p = vec![1.0, -2.0, 0.5];
        for _ in 0..10 {
            opt.step(&mut p, &[0.0; 3]).unwrap();
        }
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
        assert_eq!(opt.step_count(), 10);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let lr = 0.01;
        let mut opt = OptimizerState::new(
            AdamConfig { learning_rate: lr, weight_decay: 0.0, ..Default::default() },
            3,
        );
        let mut p = vec![0.0, 0.0, 0.0];
        opt.step(&mut p, &[3.0, -0.2, 1e-3]).unwrap();
        assert_relative_eq!(p[0], -lr, max_relative = 1e-6);
        assert_relative_eq!(p[1], lr, max_relative = 1e-6);
        assert_relative_eq!(p[2], -lr, max_relative = 1e-4);
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        let mut opt = OptimizerState::new(
            AdamConfig { learning_rate: 1e-2, weight_decay: 0.0, ..Default::default() },
            4,
        );
        let mut p = vec![1.0, -0.5, 0.8, 0.3];
        for _ in 0..2000 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            opt.step(&mut p, &g).unwrap();
        }
        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(norm <= 1e-3, "norm {norm}");
    }

    #[test]
    fn weight_decay_shrinks_parameters() {
        let mut opt = OptimizerState::new(AdamConfig { weight_decay: 0.1, ..Default::default() }, 1);
        let mut p = vec![2.0];
        opt.step(&mut p, &[0.0]).unwrap();
        assert!(p[0] < 2.0);
    }

    #[test]
    fn shape_mismatch() {
        let mut opt = OptimizerState::new(AdamConfig::default(), 2);
        assert!(opt.step(&mut [0.0; 3], &[0.0; 3]).is_err());
        assert!(opt.step(&mut [0.0; 2], &[0.0; 1]).is_err());
    }
}
