//! Dense row-major f64 tensors.
//!
//! Everything in the training stack is f64: the gradient checks compare
//! against central finite differences at `h = 1e-5`, which f32 cannot
//! resolve. Data is a flat contiguous buffer; shape is metadata only.

use rand::Rng;

use super::NumericsError;

/// Dense row-major tensor with an optional gradient buffer.
///
/// The gradient, when present, always has the same length as `data`.
/// Gradients accumulate additively: repeated backward passes (or repeated
/// uses of the same leaf inside one tape) add into the same buffer until
/// [`Tensor::zero_grad`] is called.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

impl Tensor {
    /// Builds a tensor from a flat buffer, checking the element count.
    pub fn new(data: Vec<f64>, shape: &[usize]) -> Result<Self, NumericsError> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(NumericsError::LengthMismatch {
                op: "Tensor::new",
                expected,
                got: data.len(),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
            requires_grad: false,
        })
    }

    /// All-zero tensor of the given shape.
    pub fn zeros(shape: &[usize]) -> Self {
        let n: usize = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
            grad: None,
            requires_grad: false,
        }
    }

    /// Tensor filled with draws from `uniform(lo, hi)`.
    ///
    /// Draws happen in flat index order, so a fixed rng yields a
    /// reproducible tensor.
    pub fn uniform<R: Rng>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(lo..hi)).collect();
        Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
            requires_grad: false,
        }
    }

    /// Scalar helper: shape `[1]`.
    pub fn scalar(value: f64) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    /// Marks the tensor trainable (builder style).
    pub fn trainable(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated zeroed on first access.
    pub fn grad_mut(&mut self) -> &mut [f64] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    /// Adds `delta` into the gradient buffer.
    pub fn accumulate_grad(&mut self, delta: &[f64]) -> Result<(), NumericsError> {
        if delta.len() != self.data.len() {
            return Err(NumericsError::LengthMismatch {
                op: "accumulate_grad",
                expected: self.data.len(),
                got: delta.len(),
            });
        }
        let g = self.grad_mut();
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
        Ok(())
    }

    /// Drops the gradient buffer entirely.
    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Row `r` of a rank-2 tensor, as a slice.
    pub fn row(&self, r: usize) -> &[f64] {
        debug_assert_eq!(self.shape.len(), 2);
        let cols = self.shape[1];
        &self.data[r * cols..(r + 1) * cols]
    }

    /// Mutable row `r` of a rank-2 tensor.
    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        debug_assert_eq!(self.shape.len(), 2);
        let cols = self.shape[1];
        &mut self.data[r * cols..(r + 1) * cols]
    }
}
