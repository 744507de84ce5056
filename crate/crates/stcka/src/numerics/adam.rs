//! Adam optimizer with bias-corrected first and second moments.

use super::{NumericsError, Tensor};

/// Optimizer state: one pair of moment buffers per parameter tensor, plus a
/// shared step counter. The caller must pass the same tensors in the same
/// order on every step; sizes are checked.
#[derive(Debug, Clone)]
pub struct AdamState {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl AdamState {
    /// Standard coefficients: `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(lr: f64, sizes: &[usize]) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            v: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update to every tensor. A tensor without a gradient
    /// buffer is treated as having gradient zero (its moments still decay).
    pub fn step(&mut self, params: &mut [&mut Tensor]) -> Result<(), NumericsError> {
        if params.len() != self.m.len() {
            return Err(NumericsError::StateMismatch {
                index: params.len().min(self.m.len()),
                expected: self.m.len(),
                got: params.len(),
            });
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (idx, p) in params.iter_mut().enumerate() {
            let n = p.numel();
            if self.m[idx].len() != n {
                return Err(NumericsError::StateMismatch {
                    index: idx,
                    expected: self.m[idx].len(),
                    got: n,
                });
            }
            let zero;
            let g: &[f64] = match p.grad() {
                Some(g) => g,
                None => {
                    zero = vec![0.0; n];
                    &zero
                }
            };
            // Borrow the gradient by copy so the data can be mutated.
            let g = g.to_vec();
            let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
            let data = p.data_mut();
            for j in 0..n {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                data[j] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}
