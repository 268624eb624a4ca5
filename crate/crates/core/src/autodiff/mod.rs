//! Minimal reverse-mode automatic differentiation over dense row-major
//! matrices.
//!
//! Every value is a 2-D [`Tensor`] (scalars are `1x1`, vectors are `1xn`).
//! Operations run eagerly and record a backward rule on the result node.
//! [`backward`] accumulates gradients into leaf tensors, while
//! [`grad_wrt`] runs an isolated pass and returns the gradient of any
//! reachable node without touching leaf accumulators.
//!
//! ```
//! use contrastive_workbench::autodiff::{backward, Tensor};
//!
//! let v = Tensor::param_vec(&[3.0, 4.0]);
//! let norm = v.l2_norm();
//! backward(&norm).unwrap();
//! assert_eq!(norm.item(), 5.0);
//! assert_eq!(v.grad(), vec![0.6, 0.8]);
//! ```

mod engine;
mod kernels;
mod ops;
mod tensor;

use std::fmt;

pub use engine::{backward, grad_wrt, Gradients};
pub use ops::Axis;
pub use tensor::Tensor;

/// Rows x columns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    pub rows: usize,
    pub cols: usize,
}

impl Shape {
    pub const SCALAR: Shape = Shape { rows: 1, cols: 1 };

    pub fn new(rows: usize, cols: usize) -> Self {
        Self { rows, cols }
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: shape mismatch between {left} and {right}")]
    ShapeMismatch {
        op: &'static str,
        left: Shape,
        right: Shape,
    },
    #[error("{op}: {reason}")]
    InvalidArgument { op: &'static str, reason: String },
    #[error("backward requires a scalar root, got shape {0}")]
    NonScalarRoot(Shape),
    #[error("target tensor is not reachable from the root")]
    Unreachable,
}

pub type Result<T> = std::result::Result<T, AutodiffError>;

/// Cosine similarity between every pair of rows: `normalize(a) · normalize(a)ᵀ`.
pub fn cosine_similarity_matrix(a: &Tensor) -> Result<Tensor> {
    let unit = a.normalize_rows();
    unit.matmul(&unit.transpose())
}
