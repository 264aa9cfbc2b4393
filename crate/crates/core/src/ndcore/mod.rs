//! Dense `f64` tensors, tape-based reverse-mode differentiation and Adam.

mod adam;
mod tape;
mod tensor;

pub use adam::{Adam, AdamConfig};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

pub(crate) use tape::sigmoid;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: invalid shape {shape:?}: {reason}")]
    InvalidShape {
        op: &'static str,
        shape: Vec<usize>,
        reason: &'static str,
    },
    #[error("{op}: axis {axis} out of range for rank {rank}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        rank: usize,
    },
    #[error("{op}: input {value} outside the domain (clamp to a positive value first)")]
    Domain { op: &'static str, value: f64 },
    #[error("{op}: no inputs")]
    Empty { op: &'static str },
    #[error("backward: loss must be a scalar, got shape {shape:?}")]
    NotScalar { shape: Vec<usize> },
    #[error("expected {expected} parameter tensors, got {actual}")]
    ParamCount { expected: usize, actual: usize },
}
