//! Dense tensors, a reverse-mode tape, and real DFT primitives.
//!
//! Everything the forecaster computes is expressed as operations on a
//! [`Tape`]. Forward kernels live in [`ops`] and can also be used
//! without a tape.

pub mod fft;
pub mod ops;
mod scalar;
mod tape;
mod tensor;

pub use fft::ComplexTensor;
pub use scalar::{Precision, Scalar};
pub use tape::{Tape, Var};
pub use tensor::Tensor;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    Axis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("{op}: non-finite input")]
    NonFinite { op: &'static str },
    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, NumError>;
