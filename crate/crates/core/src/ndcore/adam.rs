use serde::{Deserialize, Serialize};

use super::{Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    shapes: Vec<Vec<usize>>,
}

impl Adam {
    pub fn new(config: AdamConfig, params: &[Tensor]) -> Self {
        Self {
            config,
            step: 0,
            first_moment: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            second_moment: params.iter().map(|p| vec![0.0; p.len()]).collect(),
            shapes: params.iter().map(|p| p.shape().to_vec()).collect(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<(), TensorError> {
        if params.len() != self.shapes.len() || grads.len() != self.shapes.len() {
            return Err(TensorError::ParamCount {
                expected: self.shapes.len(),
                actual: params.len().min(grads.len()),
            });
        }
        for ((p, g), shape) in params.iter().zip(grads).zip(&self.shapes) {
            if p.shape() != shape.as_slice() || g.shape() != shape.as_slice() {
                return Err(TensorError::ShapeMismatch {
                    op: "adam_step",
                    lhs: p.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
        }

        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let bias1 = 1.0 - beta1.powi(t);
        let bias2 = 1.0 - beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let (m, v) = (&mut self.first_moment[i], &mut self.second_moment[i]);
            for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                *w -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut params = vec![Tensor::vector(vec![0.3, -1.2])];
        let before = params.clone();
        let mut adam = Adam::new(AdamConfig::default(), &params);
        for _ in 0..5 {
            adam.step(&mut params, &[Tensor::zeros(&[2])]).unwrap();
        }
        assert_eq!(params, before);
        assert_eq!(adam.steps_taken(), 5);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let lr = 0.01;
        let mut params = vec![Tensor::vector(vec![1.0, 1.0, 1.0])];
        let mut adam = Adam::new(AdamConfig::with_learning_rate(lr), &params);
        adam.step(&mut params, &[Tensor::vector(vec![3.0, -0.5, 1e-3])])
            .unwrap();
        let moved: Vec<f64> = params[0].data().iter().map(|w| w - 1.0).collect();
        assert!((moved[0] + lr).abs() < 1e-8);
        assert!((moved[1] - lr).abs() < 1e-8);
        assert!((moved[2] + lr).abs() < 1e-6);
    }

    #[test]
    fn descends_on_quadratic() {
        let mut params = vec![Tensor::scalar(1.0)];
        let mut adam = Adam::new(AdamConfig::with_learning_rate(0.1), &params);
        let mut last = 1.0_f64;
        for _ in 0..10 {
            let x = params[0].data()[0];
            adam.step(&mut params, &[Tensor::scalar(2.0 * x)]).unwrap();
            let now = params[0].data()[0].abs();
            assert!(now < last, "|x| went from {last} to {now}");
            last = now;
        }
    }

    #[test]
    fn rejects_shape_mismatch() {
        let mut params = vec![Tensor::vector(vec![0.0, 0.0])];
        let mut adam = Adam::new(AdamConfig::default(), &params);
        let err = adam.step(&mut params, &[Tensor::zeros(&[3])]).unwrap_err();
        assert!(err.to_string().contains("adam_step"));
    }
}
