//! Forward operations and their local gradient rules.

use rand::Rng;

use super::kernels;
use super::tensor::{Node, Tensor};
use super::{AutodiffError, Result, Shape};

/// Axis reduced by [`Tensor::mean_axis`] and [`Tensor::sum_axis`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Collapse rows, producing `1 x cols`.
    Rows,
    /// Collapse columns, producing `rows x 1`.
    Cols,
}

pub(crate) enum Op {
    Leaf,
    MatMul,
    MatMulNt,
    Transpose,
    Add,
    Sub,
    Mul,
    Div,
    AddRow,
    MulRow,
    Scale(f64),
    AddScalar,
    Exp,
    Log,
    LogClamped(f64),
    Tanh,
    Relu,
    SoftmaxRows,
    LogSoftmaxMasked(Vec<bool>),
    Dropout(Vec<f64>),
    ConcatRows,
    ConcatCols,
    SliceRows(usize),
    SliceCols(usize),
    Sum,
    Mean,
    SumAxis(Axis),
    MeanAxis(Axis),
    L2Norm,
    NormalizeRows(f64),
    LayerNormRows(Vec<f64>),
    GatherRows(Vec<usize>),
    Pick(Vec<usize>),
}

impl Op {
    pub(crate) fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul => "matmul",
            Op::MatMulNt => "matmul_nt",
            Op::Transpose => "transpose",
            Op::Add => "add",
            Op::Sub => "sub",
            Op::Mul => "mul",
            Op::Div => "div",
            Op::AddRow => "add_row",
            Op::MulRow => "mul_row",
            Op::Scale(_) => "scale",
            Op::AddScalar => "add_scalar",
            Op::Exp => "exp",
            Op::Log => "log",
            Op::LogClamped(_) => "log_clamped",
            Op::Tanh => "tanh",
            Op::Relu => "relu",
            Op::SoftmaxRows => "softmax_rows",
            Op::LogSoftmaxMasked(_) => "log_softmax_masked",
            Op::Dropout(_) => "dropout",
            Op::ConcatRows => "concat_rows",
            Op::ConcatCols => "concat_cols",
            Op::SliceRows(_) => "slice_rows",
            Op::SliceCols(_) => "slice_cols",
            Op::Sum => "sum",
            Op::Mean => "mean",
            Op::SumAxis(_) => "sum_axis",
            Op::MeanAxis(_) => "mean_axis",
            Op::L2Norm => "l2_norm",
            Op::NormalizeRows(_) => "normalize_rows",
            Op::LayerNormRows(_) => "layer_norm_rows",
            Op::GatherRows(_) => "gather_rows",
            Op::Pick(_) => "pick",
        }
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(AutodiffError::ShapeMismatch {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

fn map(t: &Tensor, op: Op, f: impl Fn(f64) -> f64) -> Tensor {
    let values = t.values().iter().map(|&v| f(v)).collect();
    Tensor::from_op(t.shape(), values, op, vec![t.clone()])
}

fn zip(op: Op, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let values = a
        .values()
        .iter()
        .zip(b.values().iter())
        .map(|(&x, &y)| f(x, y))
        .collect();
    Tensor::from_op(a.shape(), values, op, vec![a.clone(), b.clone()])
}

fn row_broadcast(
    op: Op,
    name: &'static str,
    a: &Tensor,
    row: &Tensor,
    f: impl Fn(f64, f64) -> f64,
) -> Result<Tensor> {
    if row.rows() != 1 || row.cols() != a.cols() {
        return Err(AutodiffError::ShapeMismatch {
            op: name,
            left: a.shape(),
            right: row.shape(),
        });
    }
    let cols = a.cols();
    let r = row.values();
    let values = a
        .values()
        .iter()
        .enumerate()
        .map(|(i, &x)| f(x, r[i % cols]))
        .collect();
    drop(r);
    Ok(Tensor::from_op(a.shape(), values, op, vec![a.clone(), row.clone()]))
}

impl Tensor {
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols() != other.rows() {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, k, n) = (self.rows(), self.cols(), other.cols());
        let values = kernels::matmul(&self.values(), &other.values(), m, k, n);
        Ok(Tensor::from_op(
            Shape::new(m, n),
            values,
            Op::MatMul,
            vec![self.clone(), other.clone()],
        ))
    }

    /// `self · otherᵀ`, used for weights stored as `out x in`.
    pub fn matmul_nt(&self, other: &Tensor) -> Result<Tensor> {
        if self.cols() != other.cols() {
            return Err(AutodiffError::ShapeMismatch {
                op: "matmul_nt",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let (m, k, n) = (self.rows(), self.cols(), other.rows());
        let values = kernels::matmul_nt(&self.values(), &other.values(), m, k, n);
        Ok(Tensor::from_op(
            Shape::new(m, n),
            values,
            Op::MatMulNt,
            vec![self.clone(), other.clone()],
        ))
    }

    pub fn transpose(&self) -> Tensor {
        let values = kernels::transpose(&self.values(), self.rows(), self.cols());
        Tensor::from_op(
            Shape::new(self.cols(), self.rows()),
            values,
            Op::Transpose,
            vec![self.clone()],
        )
    }

    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("add", self, other)?;
        Ok(zip(Op::Add, self, other, |x, y| x + y))
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("sub", self, other)?;
        Ok(zip(Op::Sub, self, other, |x, y| x - y))
    }

    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("mul", self, other)?;
        Ok(zip(Op::Mul, self, other, |x, y| x * y))
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        same_shape("div", self, other)?;
        Ok(zip(Op::Div, self, other, |x, y| x / y))
    }

    /// Adds a `1 x cols` row to every row.
    pub fn add_row(&self, row: &Tensor) -> Result<Tensor> {
        row_broadcast(Op::AddRow, "add_row", self, row, |x, r| x + r)
    }

    /// Multiplies every row elementwise by a `1 x cols` row.
    pub fn mul_row(&self, row: &Tensor) -> Result<Tensor> {
        row_broadcast(Op::MulRow, "mul_row", self, row, |x, r| x * r)
    }

    pub fn scale(&self, c: f64) -> Tensor {
        map(self, Op::Scale(c), |v| v * c)
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn add_scalar(&self, c: f64) -> Tensor {
        map(self, Op::AddScalar, |v| v + c)
    }

    pub fn exp(&self) -> Tensor {
        map(self, Op::Exp, f64::exp)
    }

    pub fn log(&self) -> Tensor {
        map(self, Op::Log, f64::ln)
    }

    /// `ln(max(x, floor))`; clamped entries receive no gradient.
    pub fn log_clamped(&self, floor: f64) -> Tensor {
        map(self, Op::LogClamped(floor), move |v| v.max(floor).ln())
    }

    pub fn tanh(&self) -> Tensor {
        map(self, Op::Tanh, f64::tanh)
    }

    pub fn relu(&self) -> Tensor {
        map(self, Op::Relu, |v| v.max(0.0))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&self) -> Tensor {
        let (rows, cols) = (self.rows(), self.cols());
        let x = self.values();
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let row = &x[r * cols..(r + 1) * cols];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let dst = &mut out[r * cols..(r + 1) * cols];
            let mut total = 0.0;
            for (d, &v) in dst.iter_mut().zip(row) {
                *d = (v - max).exp();
                total += *d;
            }
            dst.iter_mut().for_each(|d| *d /= total);
        }
        drop(x);
        Tensor::from_op(self.shape(), out, Op::SoftmaxRows, vec![self.clone()])
    }

    pub fn log_softmax_rows(&self) -> Tensor {
        let mask = vec![true; self.len()];
        self.log_softmax_masked(&mask)
            .expect("mask length matches by construction")
    }

    /// Row-wise log-softmax over the entries where `include` is true.
    ///
    /// Excluded entries output `0` and take no gradient; a row with no
    /// included entries is all zeros.
    pub fn log_softmax_masked(&self, include: &[bool]) -> Result<Tensor> {
        if include.len() != self.len() {
            return Err(AutodiffError::ShapeMismatch {
                op: "log_softmax_masked",
                left: self.shape(),
                right: Shape::new(1, include.len()),
            });
        }
        let (rows, cols) = (self.rows(), self.cols());
        let x = self.values();
        let mut out = vec![0.0; rows * cols];
        for r in 0..rows {
            let span = r * cols..(r + 1) * cols;
            let row = &x[span.clone()];
            let mask = &include[span.clone()];
            let max = row
                .iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v)
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                continue;
            }
            let total: f64 = row
                .iter()
                .zip(mask)
                .filter(|(_, &m)| m)
                .map(|(&v, _)| (v - max).exp())
                .sum();
            let lse = max + total.ln();
            for (c, (&v, &m)) in row.iter().zip(mask).enumerate() {
                if m {
                    out[r * cols + c] = v - lse;
                }
            }
        }
        drop(x);
        Ok(Tensor::from_op(
            self.shape(),
            out,
            Op::LogSoftmaxMasked(include.to_vec()),
            vec![self.clone()],
        ))
    }

    /// Inverted dropout. `keep_prob == 1` returns `self` unchanged and
    /// draws nothing from `rng`.
    pub fn dropout<R: Rng + ?Sized>(&self, keep_prob: f64, rng: &mut R) -> Result<Tensor> {
        if !(keep_prob > 0.0 && keep_prob <= 1.0) {
            return Err(AutodiffError::InvalidArgument {
                op: "dropout",
                reason: format!("keep probability {keep_prob} outside (0, 1]"),
            });
        }
        if keep_prob == 1.0 {
            return Ok(self.clone());
        }
        let inv = 1.0 / keep_prob;
        let mask: Vec<f64> = (0..self.len())
            .map(|_| if rng.random::<f64>() < keep_prob { inv } else { 0.0 })
            .collect();
        let values = self
            .values()
            .iter()
            .zip(&mask)
            .map(|(v, m)| v * m)
            .collect();
        Ok(Tensor::from_op(
            self.shape(),
            values,
            Op::Dropout(mask),
            vec![self.clone()],
        ))
    }

    pub fn concat_rows(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| AutodiffError::InvalidArgument {
            op: "concat_rows",
            reason: "no inputs".into(),
        })?;
        let cols = first.cols();
        let mut values = Vec::new();
        let mut rows = 0;
        for p in parts {
            if p.cols() != cols {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat_rows",
                    left: first.shape(),
                    right: p.shape(),
                });
            }
            values.extend_from_slice(&p.values());
            rows += p.rows();
        }
        Ok(Tensor::from_op(
            Shape::new(rows, cols),
            values,
            Op::ConcatRows,
            parts.to_vec(),
        ))
    }

    pub fn concat_cols(parts: &[Tensor]) -> Result<Tensor> {
        let first = parts.first().ok_or_else(|| AutodiffError::InvalidArgument {
            op: "concat_cols",
            reason: "no inputs".into(),
        })?;
        let rows = first.rows();
        if let Some(bad) = parts.iter().find(|p| p.rows() != rows) {
            return Err(AutodiffError::ShapeMismatch {
                op: "concat_cols",
                left: first.shape(),
                right: bad.shape(),
            });
        }
        let cols: usize = parts.iter().map(Tensor::cols).sum();
        let mut values = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                let c = p.cols();
                values.extend_from_slice(&p.values()[r * c..(r + 1) * c]);
            }
        }
        Ok(Tensor::from_op(
            Shape::new(rows, cols),
            values,
            Op::ConcatCols,
            parts.to_vec(),
        ))
    }

    /// Rows `start..end`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Result<Tensor> {
        if start >= end || end > self.rows() {
            return Err(AutodiffError::InvalidArgument {
                op: "slice_rows",
                reason: format!("range {start}..{end} invalid for shape {}", self.shape()),
            });
        }
        let c = self.cols();
        let values = self.values()[start * c..end * c].to_vec();
        Ok(Tensor::from_op(
            Shape::new(end - start, c),
            values,
            Op::SliceRows(start),
            vec![self.clone()],
        ))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<Tensor> {
        if start >= end || end > self.cols() {
            return Err(AutodiffError::InvalidArgument {
                op: "slice_cols",
                reason: format!("range {start}..{end} invalid for shape {}", self.shape()),
            });
        }
        let c = self.cols();
        let x = self.values();
        let values = (0..self.rows())
            .flat_map(|r| x[r * c + start..r * c + end].iter().copied())
            .collect();
        drop(x);
        Ok(Tensor::from_op(
            Shape::new(self.rows(), end - start),
            values,
            Op::SliceCols(start),
            vec![self.clone()],
        ))
    }

    pub fn sum(&self) -> Tensor {
        let total = self.values().iter().sum();
        Tensor::from_op(Shape::SCALAR, vec![total], Op::Sum, vec![self.clone()])
    }

    pub fn mean(&self) -> Tensor {
        let total: f64 = self.values().iter().sum();
        let mean = total / self.len() as f64;
        Tensor::from_op(Shape::SCALAR, vec![mean], Op::Mean, vec![self.clone()])
    }

    pub fn sum_axis(&self, axis: Axis) -> Tensor {
        let (shape, values) = reduce_axis(self, axis, 1.0);
        Tensor::from_op(shape, values, Op::SumAxis(axis), vec![self.clone()])
    }

    pub fn mean_axis(&self, axis: Axis) -> Tensor {
        let n = match axis {
            Axis::Rows => self.rows(),
            Axis::Cols => self.cols(),
        };
        let (shape, values) = reduce_axis(self, axis, 1.0 / n as f64);
        Tensor::from_op(shape, values, Op::MeanAxis(axis), vec![self.clone()])
    }

    /// Frobenius / Euclidean norm of all entries.
    pub fn l2_norm(&self) -> Tensor {
        let norm = kernels::l2(&self.values());
        Tensor::from_op(Shape::SCALAR, vec![norm], Op::L2Norm, vec![self.clone()])
    }

    /// Scales each row to unit length; rows shorter than `1e-12` are divided by `1e-12`.
    pub fn normalize_rows(&self) -> Tensor {
        const EPS: f64 = 1e-12;
        let c = self.cols();
        let x = self.values();
        let mut out = vec![0.0; x.len()];
        for r in 0..self.rows() {
            let row = &x[r * c..(r + 1) * c];
            let norm = kernels::l2(row).max(EPS);
            for (o, v) in out[r * c..(r + 1) * c].iter_mut().zip(row) {
                *o = v / norm;
            }
        }
        drop(x);
        Tensor::from_op(self.shape(), out, Op::NormalizeRows(EPS), vec![self.clone()])
    }

    /// Zero-mean, unit-variance rows (no affine part).
    pub fn layer_norm_rows(&self, eps: f64) -> Tensor {
        let c = self.cols();
        let x = self.values();
        let mut out = vec![0.0; x.len()];
        let mut inv_std = Vec::with_capacity(self.rows());
        for r in 0..self.rows() {
            let row = &x[r * c..(r + 1) * c];
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / c as f64;
            let is = 1.0 / (var + eps).sqrt();
            for (o, v) in out[r * c..(r + 1) * c].iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
            inv_std.push(is);
        }
        drop(x);
        Tensor::from_op(
            self.shape(),
            out,
            Op::LayerNormRows(inv_std),
            vec![self.clone()],
        )
    }

    /// Selects rows of a lookup table (embedding lookup).
    pub fn gather_rows(&self, ids: &[usize]) -> Result<Tensor> {
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.rows()) {
            return Err(AutodiffError::InvalidArgument {
                op: "gather_rows",
                reason: format!("row {bad} out of range for shape {}", self.shape()),
            });
        }
        let c = self.cols();
        let x = self.values();
        let values = ids
            .iter()
            .flat_map(|&i| x[i * c..(i + 1) * c].iter().copied())
            .collect();
        drop(x);
        Ok(Tensor::from_op(
            Shape::new(ids.len(), c),
            values,
            Op::GatherRows(ids.to_vec()),
            vec![self.clone()],
        ))
    }

    /// Picks column `cols[r]` from each row `r`, giving `rows x 1`.
    pub fn pick(&self, cols: &[usize]) -> Result<Tensor> {
        if cols.len() != self.rows() {
            return Err(AutodiffError::ShapeMismatch {
                op: "pick",
                left: self.shape(),
                right: Shape::new(cols.len(), 1),
            });
        }
        if let Some(&bad) = cols.iter().find(|&&c| c >= self.cols()) {
            return Err(AutodiffError::InvalidArgument {
                op: "pick",
                reason: format!("column {bad} out of range for shape {}", self.shape()),
            });
        }
        let c = self.cols();
        let x = self.values();
        let values = cols.iter().enumerate().map(|(r, &k)| x[r * c + k]).collect();
        drop(x);
        Ok(Tensor::from_op(
            Shape::new(self.rows(), 1),
            values,
            Op::Pick(cols.to_vec()),
            vec![self.clone()],
        ))
    }
}

fn reduce_axis(t: &Tensor, axis: Axis, factor: f64) -> (Shape, Vec<f64>) {
    let (rows, cols) = (t.rows(), t.cols());
    let x = t.values();
    match axis {
        Axis::Rows => {
            let mut out = vec![0.0; cols];
            for r in 0..rows {
                for (o, v) in out.iter_mut().zip(&x[r * cols..(r + 1) * cols]) {
                    *o += v;
                }
            }
            out.iter_mut().for_each(|o| *o *= factor);
            (Shape::new(1, cols), out)
        }
        Axis::Cols => {
            let out = (0..rows)
                .map(|r| x[r * cols..(r + 1) * cols].iter().sum::<f64>() * factor)
                .collect();
            (Shape::new(rows, 1), out)
        }
    }
}

/// Local gradient rule: given the output gradient `g`, returns one
/// gradient per parent (`None` for parents that need none).
pub(crate) fn backward_rule(node: &Node, g: &[f64]) -> Vec<Option<Vec<f64>>> {
    let parents = &node.parents;
    let wants = |i: usize| parents[i].requires_grad();
    let out = node.value.borrow();
    let shape = node.shape;
    let elementwise = |f: &dyn Fn(usize) -> f64| -> Vec<f64> { (0..g.len()).map(f).collect() };

    match &node.op {
        Op::Leaf => Vec::new(),
        Op::MatMul => {
            let (a, b) = (&parents[0], &parents[1]);
            let (m, k, n) = (a.rows(), a.cols(), b.cols());
            let da = wants(0).then(|| kernels::matmul_nt(g, &b.values(), m, n, k));
            let db = wants(1).then(|| kernels::matmul_tn(&a.values(), g, m, k, n));
            vec![da, db]
        }
        Op::MatMulNt => {
            // out = a · bᵀ with a: m x k, b: n x k
            let (a, b) = (&parents[0], &parents[1]);
            let (m, k, n) = (a.rows(), a.cols(), b.rows());
            let da = wants(0).then(|| kernels::matmul(g, &b.values(), m, n, k));
            let db = wants(1).then(|| kernels::matmul_tn(g, &a.values(), m, n, k));
            vec![da, db]
        }
        Op::Transpose => vec![Some(kernels::transpose(g, shape.rows, shape.cols))],
        Op::Add => vec![wants(0).then(|| g.to_vec()), wants(1).then(|| g.to_vec())],
        Op::Sub => vec![
            wants(0).then(|| g.to_vec()),
            wants(1).then(|| g.iter().map(|v| -v).collect()),
        ],
        Op::Mul => {
            let (a, b) = (parents[0].values(), parents[1].values());
            vec![
                wants(0).then(|| elementwise(&|i| g[i] * b[i])),
                wants(1).then(|| elementwise(&|i| g[i] * a[i])),
            ]
        }
        Op::Div => {
            let (a, b) = (parents[0].values(), parents[1].values());
            vec![
                wants(0).then(|| elementwise(&|i| g[i] / b[i])),
                wants(1).then(|| elementwise(&|i| -g[i] * a[i] / (b[i] * b[i]))),
            ]
        }
        Op::AddRow => {
            let cols = shape.cols;
            let drow = wants(1).then(|| {
                let mut acc = vec![0.0; cols];
                for (i, v) in g.iter().enumerate() {
                    acc[i % cols] += v;
                }
                acc
            });
            vec![wants(0).then(|| g.to_vec()), drow]
        }
        Op::MulRow => {
            let cols = shape.cols;
            let (a, row) = (parents[0].values(), parents[1].values());
            let da = wants(0).then(|| elementwise(&|i| g[i] * row[i % cols]));
            let drow = wants(1).then(|| {
                let mut acc = vec![0.0; cols];
                for (i, v) in g.iter().enumerate() {
                    acc[i % cols] += v * a[i];
                }
                acc
            });
            vec![da, drow]
        }
        Op::Scale(c) => vec![Some(g.iter().map(|v| v * c).collect())],
        Op::AddScalar => vec![Some(g.to_vec())],
        Op::Exp => vec![Some(elementwise(&|i| g[i] * out[i]))],
        Op::Log => {
            let x = parents[0].values();
            vec![Some(elementwise(&|i| g[i] / x[i]))]
        }
        Op::LogClamped(floor) => {
            let x = parents[0].values();
            vec![Some(elementwise(&|i| if x[i] > *floor { g[i] / x[i] } else { 0.0 }))]
        }
        Op::Tanh => vec![Some(elementwise(&|i| g[i] * (1.0 - out[i] * out[i])))],
        Op::Relu => {
            let x = parents[0].values();
            vec![Some(elementwise(&|i| if x[i] > 0.0 { g[i] } else { 0.0 }))]
        }
        Op::SoftmaxRows => {
            let cols = shape.cols;
            let mut dx = vec![0.0; g.len()];
            for r in 0..shape.rows {
                let span = r * cols..(r + 1) * cols;
                let dot: f64 = g[span.clone()]
                    .iter()
                    .zip(&out[span.clone()])
                    .map(|(a, b)| a * b)
                    .sum();
                for i in span {
                    dx[i] = out[i] * (g[i] - dot);
                }
            }
            vec![Some(dx)]
        }
        Op::LogSoftmaxMasked(mask) => {
            let cols = shape.cols;
            let mut dx = vec![0.0; g.len()];
            for r in 0..shape.rows {
                let span = r * cols..(r + 1) * cols;
                let total: f64 = span.clone().filter(|&i| mask[i]).map(|i| g[i]).sum();
                for i in span.filter(|&i| mask[i]) {
                    dx[i] = g[i] - out[i].exp() * total;
                }
            }
            vec![Some(dx)]
        }
        Op::Dropout(mask) => vec![Some(elementwise(&|i| g[i] * mask[i]))],
        Op::ConcatRows => {
            let mut offset = 0;
            parents
                .iter()
                .map(|p| {
                    let len = p.len();
                    let part = p.requires_grad().then(|| g[offset..offset + len].to_vec());
                    offset += len;
                    part
                })
                .collect()
        }
        Op::ConcatCols => {
            let total_cols = shape.cols;
            let mut offset = 0;
            parents
                .iter()
                .map(|p| {
                    let c = p.cols();
                    let part = p.requires_grad().then(|| {
                        (0..shape.rows)
                            .flat_map(|r| g[r * total_cols + offset..r * total_cols + offset + c].iter().copied())
                            .collect()
                    });
                    offset += c;
                    part
                })
                .collect()
        }
        Op::SliceRows(start) => {
            let p = &parents[0];
            let mut dx = vec![0.0; p.len()];
            let c = p.cols();
            dx[start * c..start * c + g.len()].copy_from_slice(g);
            vec![Some(dx)]
        }
        Op::SliceCols(start) => {
            let p = &parents[0];
            let pc = p.cols();
            let mut dx = vec![0.0; p.len()];
            for r in 0..shape.rows {
                for c in 0..shape.cols {
                    dx[r * pc + start + c] = g[r * shape.cols + c];
                }
            }
            vec![Some(dx)]
        }
        Op::Sum => vec![Some(vec![g[0]; parents[0].len()])],
        Op::Mean => {
            let n = parents[0].len();
            vec![Some(vec![g[0] / n as f64; n])]
        }
        Op::SumAxis(axis) | Op::MeanAxis(axis) => {
            let p = &parents[0];
            let (rows, cols) = (p.rows(), p.cols());
            let factor = match (&node.op, axis) {
                (Op::MeanAxis(_), Axis::Rows) => 1.0 / rows as f64,
                (Op::MeanAxis(_), Axis::Cols) => 1.0 / cols as f64,
                _ => 1.0,
            };
            let dx = (0..rows * cols)
                .map(|i| {
                    let src = match axis {
                        Axis::Rows => i % cols,
                        Axis::Cols => i / cols,
                    };
                    g[src] * factor
                })
                .collect();
            vec![Some(dx)]
        }
        Op::L2Norm => {
            let x = parents[0].values();
            let norm = out[0];
            if norm == 0.0 {
                vec![Some(vec![0.0; x.len()])]
            } else {
                vec![Some(x.iter().map(|v| g[0] * v / norm).collect())]
            }
        }
        Op::NormalizeRows(eps) => {
            let x = parents[0].values();
            let c = shape.cols;
            let mut dx = vec![0.0; g.len()];
            for r in 0..shape.rows {
                let span = r * c..(r + 1) * c;
                let norm = kernels::l2(&x[span.clone()]);
                if norm > *eps {
                    let dot: f64 = span.clone().map(|i| out[i] * g[i]).sum();
                    for i in span {
                        dx[i] = (g[i] - out[i] * dot) / norm;
                    }
                } else {
                    for i in span {
                        dx[i] = g[i] / eps;
                    }
                }
            }
            vec![Some(dx)]
        }
        Op::LayerNormRows(inv_std) => {
            let c = shape.cols;
            let mut dx = vec![0.0; g.len()];
            for (r, is) in inv_std.iter().enumerate() {
                let span = r * c..(r + 1) * c;
                let mean_g = span.clone().map(|i| g[i]).sum::<f64>() / c as f64;
                let mean_gy = span.clone().map(|i| g[i] * out[i]).sum::<f64>() / c as f64;
                for i in span {
                    dx[i] = is * (g[i] - mean_g - out[i] * mean_gy);
                }
            }
            vec![Some(dx)]
        }
        Op::GatherRows(ids) => {
            let table = &parents[0];
            let c = table.cols();
            let mut dx = vec![0.0; table.len()];
            for (r, &id) in ids.iter().enumerate() {
                for k in 0..c {
                    dx[id * c + k] += g[r * c + k];
                }
            }
            vec![Some(dx)]
        }
        Op::Pick(cols) => {
            let p = &parents[0];
            let pc = p.cols();
            let mut dx = vec![0.0; p.len()];
            for (r, &k) in cols.iter().enumerate() {
                dx[r * pc + k] = g[r];
            }
            vec![Some(dx)]
        }
    }
}
