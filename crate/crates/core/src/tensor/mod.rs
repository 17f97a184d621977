//! Dense `f64` tensors, a reverse-mode gradient tape, Adam, and checkpoints.
//!
//! Everything the models need is a matrix, so tape operations work on
//! row-major 2-D values; a rank-1 tensor of length `n` binds as `1 x n`.

pub mod adam;
pub mod checkpoint;
pub mod gradcheck;
pub mod init;
pub mod params;
pub mod tape;

use thiserror::Error;

pub use adam::{Adam, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CheckpointError};
pub use gradcheck::finite_diff_check;
pub use params::{Bound, ParamId, ParamSet};
pub use tape::{Gradients, LossKind, Tape, Var, MASKED_LOGIT};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch { op: &'static str, left: Vec<usize>, right: Vec<usize> },

    #[error("backward requires a 1x1 loss, got {0:?}")]
    NotScalar(Vec<usize>),

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("tensors of rank {0} are not supported on the tape")]
    UnsupportedRank(usize),
}

/// A dense row-major tensor with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    values: Vec<f64>,
    pub requires_grad: bool,
    pub grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, values: Vec<f64>) -> Result<Self, TensorError> {
        let n: usize = shape.iter().product();
        if shape.is_empty() || shape.contains(&0) || n != values.len() {
            return Err(TensorError::ShapeMismatch { op: "Tensor::new", left: shape, right: vec![values.len()] });
        }
        Ok(Self { shape, values, requires_grad: false, grad: None })
    }

    pub fn matrix(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self, TensorError> {
        Self::new(vec![rows, cols], values)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let n = shape.iter().product();
        Self::new(shape, vec![0.0; n]).expect("positive dimensions")
    }

    pub fn scalar(v: f64) -> Self {
        Self::new(vec![1], vec![v]).expect("scalar")
    }

    pub fn param(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `(rows, cols)` view used on the tape.
    pub fn dims2(&self) -> Result<(usize, usize), TensorError> {
        match self.shape.as_slice() {
            [n] => Ok((1, *n)),
            [r, c] => Ok((*r, *c)),
            other => Err(TensorError::UnsupportedRank(other.len())),
        }
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }
}
