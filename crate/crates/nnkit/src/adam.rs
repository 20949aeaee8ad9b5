use crate::{Matrix, NnError, Parameters, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled weight decay applied as `w -= lr * weight_decay * w`.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with bias correction. Moment buffers are allocated lazily on the
/// first step and keyed by the parameters' visit order.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Self {
        Self {
            config,
            step: 0,
            first: Vec::new(),
            second: Vec::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step<P: Parameters>(&mut self, params: &mut P, grads: &P) -> Result<()> {
        let grad_tensors: Vec<&Matrix> = {
            let mut v = Vec::new();
            grads.visit(&mut |_, m| v.push(m));
            v
        };
        if self.first.is_empty() {
            self.first = grad_tensors.iter().map(|g| vec![0.0; g.len()]).collect();
            self.second = self.first.clone();
        }
        let mut shapes_ok = grad_tensors.len() == self.first.len();
        let mut count = 0;
        params.visit(&mut |_, m| {
            if count < grad_tensors.len() && grad_tensors[count].shape() != m.shape() {
                shapes_ok = false;
            }
            count += 1;
        });
        if !shapes_ok || count != grad_tensors.len() {
            return Err(NnError::shape("adam_step", "parameter and gradient layouts differ"));
        }

        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
            weight_decay,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        let mut idx = 0;
        let first = &mut self.first;
        let second = &mut self.second;
        params.visit_mut(&mut |_, p| {
            let g = grad_tensors[idx].as_slice();
            let m = &mut first[idx];
            let v = &mut second[idx];
            for (((w, &gi), mi), vi) in p.as_mut_slice().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *w -= lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * *w);
            }
            idx += 1;
        });
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradients_leave_parameters_unchanged() {
        let mut p = Matrix::row_vector(vec![1.0, -2.0, 3.0]);
        let before = p.clone();
        let mut adam = Adam::new(AdamConfig::default());
        for _ in 0..10 {
            adam.step(&mut p, &Matrix::zeros(1, 3)).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn constant_gradient_steps_approach_lr_sign() {
        let mut p = Matrix::row_vector(vec![0.0, 0.0]);
        let g = Matrix::row_vector(vec![0.5, -3.0]);
        let mut adam = Adam::new(AdamConfig { lr: 0.01, ..Default::default() });
        let mut prev = p.clone();
        for _ in 0..2000 {
            prev = p.clone();
            adam.step(&mut p, &g).unwrap();
        }
        let step0 = p.get(0, 0) - prev.get(0, 0);
        let step1 = p.get(0, 1) - prev.get(0, 1);
        assert!((step0 + 0.01).abs() < 1e-6, "{step0}");
        assert!((step1 - 0.01).abs() < 1e-6, "{step1}");
    }

    #[test]
    fn convex_quadratic_loss_decreases() {
        // f(w) = 0.5 * sum(a_i w_i^2)
        let a = [1.0, 4.0, 0.25];
        let mut p = Matrix::row_vector(vec![2.0, -1.5, 3.0]);
        let loss = |p: &Matrix| 0.5 * p.as_slice().iter().zip(&a).map(|(w, a)| a * w * w).sum::<f64>();
        let mut adam = Adam::new(AdamConfig { lr: 0.05, ..Default::default() });
        let mut history = vec![loss(&p)];
        for _ in 0..100 {
            let g = Matrix::row_vector(p.as_slice().iter().zip(&a).map(|(w, a)| a * w).collect());
            adam.step(&mut p, &g).unwrap();
            history.push(loss(&p));
        }
        // Strictly decreasing over the first steps, and far lower at the end.
        assert!(history.windows(2).take(20).all(|w| w[1] < w[0]));
        assert!(history[100] < 0.05 * history[0]);
    }

    #[test]
    fn mismatched_layout_is_rejected() {
        let mut p = Matrix::zeros(1, 3);
        let mut adam = Adam::new(AdamConfig::default());
        assert!(adam.step(&mut p, &Matrix::zeros(3, 1)).is_err());
    }
}
