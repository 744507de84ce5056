//! Minimal dense-tensor engine: f64 tensors, a replayable gradient tape,
//! and Adam. Just enough machinery to train the classifier while staying
//! small enough to verify against finite differences.

mod adam;
mod tensor;
mod tape;

pub use adam::AdamState;
pub use tape::{softmax_masked_kernel, NodeId, Tape, PROB_FLOOR};
pub use tensor::Tensor;

use thiserror::Error;

/// Errors from tensor construction, tape operations, and the optimizer.
#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected {expected} elements, got {got}")]
    LengthMismatch {
        op: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("{op}: mask excludes every position")]
    EmptySupport { op: &'static str },
    #[error("conv1d: sequence of {len} rows is shorter than the filter width {width}")]
    SequenceTooShort { len: usize, width: usize },
    #[error("cross_entropy: label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("backward: loss must be a scalar, got shape {shape:?}")]
    LossNotScalar { shape: Vec<usize> },
    #[error("adam: parameter {index} does not match optimizer state ({expected} vs {got})")]
    StateMismatch {
        index: usize,
        expected: usize,
        got: usize,
    },
}
