//! Dense tensors with tape-based reverse-mode differentiation.
//!
//! The engine is generic over [`Real`] so the same model code runs in `f32`
//! for training and `f64` for finite-difference verification. Broadcasting
//! is limited to leading (batch) dims; everything else needs an explicit
//! reshape.

mod gradcheck;
mod param;
mod real;
mod tape;
mod tensor;

pub use gradcheck::{central_difference, max_relative_error, GradCheck};
pub use param::Parameter;
pub use real::Real;
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;

#[allow(unused_imports)]
pub(crate) use tape::gelu_scalar;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum TensorError {
    #[error("invalid shape {0:?}: dims must be non-empty and positive")]
    InvalidShape(Vec<usize>),
    #[error("shape {shape:?} holds {} elements, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("cannot reshape {from:?} into {to:?}")]
    Reshape { from: Vec<usize>, to: Vec<usize> },
    #[error("matmul shape mismatch: {left:?} x {right:?}")]
    MatMul { left: Vec<usize>, right: Vec<usize> },
    #[error("{op}: incompatible shapes {left:?} and {right:?}")]
    Mismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("{op}: axis {axis} out of range for shape {shape:?}")]
    InvalidAxis {
        op: &'static str,
        axis: usize,
        shape: Vec<usize>,
    },
    #[error("slice [{start}, {start}+{len}) out of range for dim {dim}")]
    SliceRange { start: usize, len: usize, dim: usize },
    #[error("concat of zero tensors")]
    EmptyConcat,
    #[error("dropout rate {0} outside [0, 1)")]
    DropoutRate(f64),
    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
}
