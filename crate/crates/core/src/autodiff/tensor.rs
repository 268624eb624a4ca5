use std::cell::{Ref, RefCell};
use std::fmt;
use std::rc::Rc;

use super::ops::Op;
use super::{AutodiffError, Result, Shape};

/// A matrix value plus its place in the computation graph.
///
/// Cloning is cheap and yields a handle to the same node.
#[derive(Clone)]
pub struct Tensor(pub(crate) Rc<Node>);

pub(crate) struct Node {
    pub(crate) shape: Shape,
    pub(crate) value: RefCell<Vec<f64>>,
    // Only leaves that require grad own an accumulator; everything else
    // reports zeros.
    pub(crate) grad: RefCell<Vec<f64>>,
    pub(crate) op: Op,
    pub(crate) parents: Vec<Tensor>,
    pub(crate) requires_grad: bool,
}

impl Tensor {
    fn leaf(shape: Shape, values: Vec<f64>, requires_grad: bool) -> Self {
        debug_assert_eq!(shape.len(), values.len());
        let grad = if requires_grad {
            vec![0.0; values.len()]
        } else {
            Vec::new()
        };
        Tensor(Rc::new(Node {
            shape,
            value: RefCell::new(values),
            grad: RefCell::new(grad),
            op: Op::Leaf,
            parents: Vec::new(),
            requires_grad,
        }))
    }

    pub(crate) fn from_op(shape: Shape, values: Vec<f64>, op: Op, parents: Vec<Tensor>) -> Self {
        debug_assert_eq!(shape.len(), values.len());
        let requires_grad = parents.iter().any(|p| p.requires_grad());
        Tensor(Rc::new(Node {
            shape,
            value: RefCell::new(values),
            grad: RefCell::new(Vec::new()),
            op: if requires_grad { op } else { Op::Leaf },
            parents: if requires_grad { parents } else { Vec::new() },
            requires_grad,
        }))
    }

    fn check_len(op: &'static str, shape: Shape, len: usize) -> Result<()> {
        if shape.len() != len {
            return Err(AutodiffError::InvalidArgument {
                op,
                reason: format!("shape {shape} needs {} values, got {len}", shape.len()),
            });
        }
        Ok(())
    }

    /// Trainable leaf.
    pub fn param(shape: Shape, values: Vec<f64>) -> Result<Self> {
        Self::check_len("param", shape, values.len())?;
        Ok(Self::leaf(shape, values, true))
    }

    /// Non-differentiable leaf.
    pub fn constant(shape: Shape, values: Vec<f64>) -> Result<Self> {
        Self::check_len("constant", shape, values.len())?;
        Ok(Self::leaf(shape, values, false))
    }

    pub fn param_vec(values: &[f64]) -> Self {
        Self::leaf(Shape::new(1, values.len()), values.to_vec(), true)
    }

    pub fn constant_vec(values: &[f64]) -> Self {
        Self::leaf(Shape::new(1, values.len()), values.to_vec(), false)
    }

    pub fn scalar(value: f64) -> Self {
        Self::leaf(Shape::SCALAR, vec![value], false)
    }

    pub fn zeros(shape: Shape) -> Self {
        Self::leaf(shape, vec![0.0; shape.len()], false)
    }

    /// Builds a constant from equal-length rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(AutodiffError::ShapeMismatch {
                op: "from_rows",
                left: Shape::new(1, cols),
                right: Shape::new(1, bad.len()),
            });
        }
        let values = rows.iter().flatten().copied().collect();
        Self::constant(Shape::new(rows.len(), cols), values)
    }

    pub fn shape(&self) -> Shape {
        self.0.shape
    }

    pub fn rows(&self) -> usize {
        self.0.shape.rows
    }

    pub fn cols(&self) -> usize {
        self.0.shape.cols
    }

    pub fn len(&self) -> usize {
        self.0.shape.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self.0.op, Op::Leaf)
    }

    pub fn values(&self) -> Ref<'_, Vec<f64>> {
        self.0.value.borrow()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.value.borrow().clone()
    }

    pub fn row(&self, r: usize) -> Vec<f64> {
        let c = self.cols();
        self.0.value.borrow()[r * c..(r + 1) * c].to_vec()
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows()).map(|r| self.row(r)).collect()
    }

    /// Value of a `1x1` tensor.
    pub fn item(&self) -> f64 {
        debug_assert!(self.shape().is_scalar(), "item() on {}", self.shape());
        self.0.value.borrow()[0]
    }

    /// Accumulated gradient (zeros for tensors without an accumulator).
    pub fn grad(&self) -> Vec<f64> {
        let g = self.0.grad.borrow();
        if g.is_empty() {
            vec![0.0; self.len()]
        } else {
            g.clone()
        }
    }

    pub fn zero_grad(&self) {
        self.0.grad.borrow_mut().iter_mut().for_each(|g| *g = 0.0);
    }

    pub(crate) fn accumulate_grad(&self, delta: &[f64]) {
        let mut g = self.0.grad.borrow_mut();
        for (a, d) in g.iter_mut().zip(delta) {
            *a += d;
        }
    }

    /// Overwrites the values of a leaf in place (optimizer updates, checkpoint loads).
    pub fn set_values(&self, values: &[f64]) -> Result<()> {
        if !self.is_leaf() {
            return Err(AutodiffError::InvalidArgument {
                op: "set_values",
                reason: "only leaf tensors can be overwritten".into(),
            });
        }
        Self::check_len("set_values", self.shape(), values.len())?;
        self.0.value.borrow_mut().copy_from_slice(values);
        Ok(())
    }

    pub(crate) fn values_mut(&self) -> std::cell::RefMut<'_, Vec<f64>> {
        self.0.value.borrow_mut()
    }

    /// Constant copy with no graph history.
    pub fn detach(&self) -> Tensor {
        Self::leaf(self.shape(), self.to_vec(), false)
    }

    pub fn ptr_eq(&self, other: &Tensor) -> bool {
        Rc::ptr_eq(&self.0, &other.0)
    }

    pub(crate) fn node_id(&self) -> usize {
        Rc::as_ptr(&self.0) as usize
    }
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape())
            .field("op", &self.0.op.name())
            .field("requires_grad", &self.requires_grad())
            .finish()
    }
}
