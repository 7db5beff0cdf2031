//! Dense tensors and reverse-mode automatic differentiation.
//!
//! [`Tensor`] is a plain value: a shape of rank 1 to 3 over a contiguous
//! buffer. All differentiable work goes through a [`Tape`], which records
//! every operation in execution order and replays the chain rule backwards
//! in one pass. Forward kernels live in [`ops`] and are shared by the tape
//! and by the tape-free inference path.

pub mod adam;
pub mod init;
pub mod ops;
pub mod tape;

pub use adam::{Adam, AdamConfig};
pub use tape::{Mode, Tape, VarId};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::Scalar;

/// Errors raised by tensor construction and the layer operations.
#[derive(Debug, Error)]
pub enum TensorError {
    #[error("shape {shape:?} implies {expected} elements, data has {got}")]
    ShapeData {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("{context}: rank {got} unsupported, tensors are rank 1 to 3")]
    Rank { context: &'static str, got: usize },
    #[error("{context}: zero-length axis in shape {shape:?}")]
    ZeroAxis {
        context: &'static str,
        shape: Vec<usize>,
    },
    #[error("{context}: {detail}")]
    Shape { context: &'static str, detail: String },
    #[error("{context}: {detail}")]
    Geometry { context: &'static str, detail: String },
    #[error("label {label} out of range for {classes} classes")]
    Label { classes: usize, label: usize },
    #[error("{context}: non-finite value produced")]
    NonFinite { context: &'static str },
}

/// Dense row-major tensor of rank 1 to 3.
///
/// Feature maps use the layout `batch x channels x length`; weights use
/// `out_channels x in_channels x kernel` for convolutions and
/// `units x inputs` for dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor<F> {
    shape: Vec<usize>,
    data: Vec<F>,
}

impl<F: Scalar> Tensor<F> {
    /// Builds a tensor, validating rank and element count.
    pub fn new(shape: Vec<usize>, data: Vec<F>) -> Result<Self, TensorError> {
        if shape.is_empty() || shape.len() > 3 {
            return Err(TensorError::Rank {
                context: "Tensor::new",
                got: shape.len(),
            });
        }
        if shape.iter().any(|&d| d == 0) {
            return Err(TensorError::ZeroAxis {
                context: "Tensor::new",
                shape,
            });
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(TensorError::ShapeData {
                expected,
                got: data.len(),
                shape,
            });
        }
        Ok(Self { shape, data })
    }

    /// Zero-filled tensor of the given shape.
    pub fn zeros(shape: &[usize]) -> Result<Self, TensorError> {
        let n: usize = shape.iter().product();
        Self::new(shape.to_vec(), vec![F::zero(); n])
    }

    /// Tensor filled with one value.
    pub fn full(shape: &[usize], value: F) -> Result<Self, TensorError> {
        let n: usize = shape.iter().product();
        Self::new(shape.to_vec(), vec![value; n])
    }

    /// Rank-1 tensor over a sample buffer.
    pub fn from_vec(data: Vec<F>) -> Result<Self, TensorError> {
        let n = data.len();
        Self::new(vec![n], data)
    }

    /// Single-element tensor holding a scalar value.
    pub fn scalar(value: F) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<F> {
        self.data
    }

    /// The value of a single-element tensor.
    pub fn item(&self) -> F {
        debug_assert_eq!(self.data.len(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    /// Reinterprets the buffer under a new shape with the same element count.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self, TensorError> {
        Self::new(shape, self.data.clone())
    }

    /// True when every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Interprets the tensor as a batch of channel-by-length feature maps.
    ///
    /// Rank 3 maps to `(n, c, l)` directly; rank 2 is promoted to a batch
    /// of one. Rank 1 is rejected.
    pub fn as_batch(&self) -> Result<(usize, usize, usize), TensorError> {
        match *self.shape.as_slice() {
            [n, c, l] => Ok((n, c, l)),
            [c, l] => Ok((1, c, l)),
            _ => Err(TensorError::Rank {
                context: "feature map",
                got: self.rank(),
            }),
        }
    }

    /// Interprets the tensor as a batch of flat rows `(n, d)`.
    pub fn as_rows(&self) -> Result<(usize, usize), TensorError> {
        match *self.shape.as_slice() {
            [n, d] => Ok((n, d)),
            [d] => Ok((1, d)),
            _ => Err(TensorError::Rank {
                context: "row batch",
                got: self.rank(),
            }),
        }
    }
}
