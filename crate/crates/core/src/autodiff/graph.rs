//! Define-by-run reverse-mode differentiation over [`Tensor`]s.
//!
//! A [`Graph`] is an append-only arena of nodes. Every operation pushes a new
//! node recording its inputs, so node indices are already a topological order
//! and [`Graph::backward`] is a single reverse sweep. A fresh graph is built
//! for every forward pass; nothing is shared between graphs.
//!
//! Shapes never broadcast. Row-vector/matrix combinations that would normally
//! broadcast go through explicit ops such as [`Graph::tile_rows`].

use super::tensor::Tensor;
use crate::error::{Result, SrbError};

/// Norm below which [`Graph::cosine`] treats an argument as the zero vector.
pub const COSINE_DEGENERATE_NORM: f64 = 1e-12;

/// Handle to a node of a [`Graph`]. Only meaningful for the graph that issued it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    /// Position of the node in its graph; unique within that graph.
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Tanh(Var),
    Sigmoid(Var),
    Scale(Var, f64),
    MulScalar(Var, Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    ConcatCols(Vec<Var>),
    StackRows(Vec<Var>),
    SliceCols(Var, usize),
    Transpose(Var),
    TileRows(Var),
    GatherRow(Var, usize),
    Sum(Var),
    Pick(Var, usize),
    Cosine { u: Var, v: Var, degenerate: bool },
}

#[derive(Clone, Debug)]
struct Node {
    value: Tensor,
    grad: Tensor,
    op: Op,
    trainable: bool,
}

/// Computation graph for one forward pass.
#[derive(Clone, Debug, Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> Var {
        let (r, c) = value.shape();
        self.nodes.push(Node {
            value,
            grad: Tensor::zeros(r, c),
            op,
            trainable: false,
        });
        Var(self.nodes.len() - 1)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        let v = self.push(value, Op::Leaf);
        self.nodes[v.0].trainable = true;
        v
    }

    /// A non-trainable leaf. It still receives a gradient, which callers may
    /// read (finite-difference tests use this), but it is not a parameter.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn grad(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].grad
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn is_trainable(&self, v: Var) -> bool {
        self.nodes[v.0].trainable
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad.scale_in_place(0.0);
        }
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(SrbError::Dimension {
                op,
                left: sa,
                right: sb,
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.1 != sb.0 {
            return Err(SrbError::Dimension {
                op: "matmul",
                left: sa,
                right: sb,
            });
        }
        let mut out = Tensor::zeros(sa.0, sb.1);
        self.value(a).matmul_into(self.value(b), &mut out);
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x + y);
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x - y);
        Ok(self.push(out, Op::Sub(a, b)))
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.value(a).zip_map(self.value(b), |x, y| x * y);
        Ok(self.push(out, Op::Mul(a, b)))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let out = self.value(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let out = self.value(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    /// Multiplication by a fixed (non-differentiable) constant.
    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        let out = self.value(a).map(|x| x * k);
        self.push(out, Op::Scale(a, k))
    }

    /// Multiplies every element of `a` by the `1×1` node `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if !self.value(s).is_scalar() {
            return Err(SrbError::Dimension {
                op: "mul_scalar",
                left: self.shape(a),
                right: self.shape(s),
            });
        }
        let k = self.value(s).item();
        let out = self.value(a).map(|x| x * k);
        Ok(self.push(out, Op::MulScalar(a, s)))
    }

    /// Row-wise softmax with max subtraction.
    pub fn softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.cols() == 0 {
            return Err(SrbError::argument("softmax over an empty row"));
        }
        let out = softmax_rows(x);
        Ok(self.push(out, Op::SoftmaxRows(a)))
    }

    /// Row-wise log-softmax, `x - logsumexp(x)`.
    pub fn log_softmax_rows(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if x.cols() == 0 {
            return Err(SrbError::argument("log-softmax over an empty row"));
        }
        let out = log_softmax_rows(x);
        Ok(self.push(out, Op::LogSoftmaxRows(a)))
    }

    /// Concatenates along columns. All parts must have the same row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| SrbError::argument("concat of an empty list"))?;
        let rows = self.shape(first).0;
        for &p in parts {
            if self.shape(p).0 != rows {
                return Err(SrbError::Dimension {
                    op: "concat",
                    left: self.shape(first),
                    right: self.shape(p),
                });
            }
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for &p in parts {
                data.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let out = Tensor::new(rows, cols, data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    /// Stacks parts vertically. All parts must have the same column count.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| SrbError::argument("stack of an empty list"))?;
        let cols = self.shape(first).1;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            if self.shape(p).1 != cols {
                return Err(SrbError::Dimension {
                    op: "stack_rows",
                    left: self.shape(first),
                    right: self.shape(p),
                });
            }
            rows += self.shape(p).0;
            data.extend_from_slice(self.value(p).data());
        }
        let out = Tensor::new(rows, cols, data)?;
        Ok(self.push(out, Op::StackRows(parts.to_vec())))
    }

    /// Columns `start..start + len` of `a`.
    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let x = self.value(a);
        if start + len > x.cols() || len == 0 {
            return Err(SrbError::argument(format!(
                "column slice {start}..{} out of range for {:?}",
                start + len,
                x.shape()
            )));
        }
        let mut data = Vec::with_capacity(x.rows() * len);
        for r in 0..x.rows() {
            data.extend_from_slice(&x.row_slice(r)[start..start + len]);
        }
        let out = Tensor::new(x.rows(), len, data)?;
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let out = self.value(a).transposed();
        self.push(out, Op::Transpose(a))
    }

    /// Repeats the row vector `a` to form an `n×cols` matrix.
    pub fn tile_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let x = self.value(a);
        if x.rows() != 1 || n == 0 {
            return Err(SrbError::argument(format!(
                "tile_rows needs a row vector and n >= 1, got {:?} x {n}",
                x.shape()
            )));
        }
        let data = x.data().repeat(n);
        let out = Tensor::new(n, x.cols(), data)?;
        Ok(self.push(out, Op::TileRows(a)))
    }

    /// Row `row` of `a` as a `1×cols` vector (embedding lookup).
    pub fn gather_row(&mut self, a: Var, row: usize) -> Result<Var> {
        let x = self.value(a);
        if row >= x.rows() {
            return Err(SrbError::argument(format!(
                "row {row} out of range for {:?}",
                x.shape()
            )));
        }
        let out = Tensor::row(x.row_slice(row).to_vec());
        Ok(self.push(out, Op::GatherRow(a, row)))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let out = Tensor::scalar(self.value(a).sum());
        self.push(out, Op::Sum(a))
    }

    /// Element `index` (row-major) of `a` as a scalar.
    pub fn pick(&mut self, a: Var, index: usize) -> Result<Var> {
        let x = self.value(a);
        if index >= x.len() {
            return Err(SrbError::argument(format!(
                "index {index} out of range for {:?}",
                x.shape()
            )));
        }
        let out = Tensor::scalar(x.data()[index]);
        Ok(self.push(out, Op::Pick(a, index)))
    }

    /// Cosine similarity `u·v / (‖u‖‖v‖)`.
    ///
    /// If either norm is below [`COSINE_DEGENERATE_NORM`] the result is `0`
    /// and no gradient flows to either argument.
    pub fn cosine(&mut self, u: Var, v: Var) -> Result<Var> {
        self.same_shape("cosine", u, v)?;
        let (a, b) = (self.value(u), self.value(v));
        let nu = a.squared_norm().sqrt();
        let nv = b.squared_norm().sqrt();
        let degenerate = nu < COSINE_DEGENERATE_NORM || nv < COSINE_DEGENERATE_NORM;
        let value = if degenerate {
            0.0
        } else {
            let dot: f64 = a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum();
            dot / (nu * nv)
        };
        Ok(self.push(Tensor::scalar(value), Op::Cosine { u, v, degenerate }))
    }

    /// Backpropagates from the scalar `loss`, adding `∂loss/∂node` into the
    /// gradient of every node it depends on. Gradients accumulate across
    /// calls until [`Graph::zero_grads`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(SrbError::argument(format!(
                "backward needs a scalar loss, got {:?}",
                self.shape(loss)
            )));
        }
        let end = loss.0 + 1;
        let mut pending: Vec<Option<Tensor>> = vec![None; end];
        pending[loss.0] = Some(Tensor::scalar(1.0));

        for idx in (0..end).rev() {
            let Some(g) = pending[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut pending);
            self.nodes[idx].grad.add_assign(&g);
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &Tensor, pending: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let y = &node.value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                accumulate_with(pending, *a, va.shape(), |ga| g.matmul_t_into(vb, ga));
                accumulate_with(pending, *b, vb.shape(), |gb| va.t_matmul_into(g, gb));
            }
            Op::Add(a, b) => {
                accumulate(pending, *a, g);
                accumulate(pending, *b, g);
            }
            Op::Sub(a, b) => {
                accumulate(pending, *a, g);
                accumulate(pending, *b, &g.map(|x| -x));
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a), self.value(*b));
                accumulate(pending, *a, &g.zip_map(vb, |g, b| g * b));
                accumulate(pending, *b, &g.zip_map(va, |g, a| g * a));
            }
            Op::Tanh(a) => {
                accumulate(pending, *a, &g.zip_map(y, |g, y| g * (1.0 - y * y)));
            }
            Op::Sigmoid(a) => {
                accumulate(pending, *a, &g.zip_map(y, |g, y| g * y * (1.0 - y)));
            }
            Op::Scale(a, k) => {
                let k = *k;
                accumulate(pending, *a, &g.map(|g| g * k));
            }
            Op::MulScalar(a, s) => {
                let k = self.value(*s).item();
                let va = self.value(*a);
                accumulate(pending, *a, &g.map(|g| g * k));
                let ds: f64 = g.data().iter().zip(va.data()).map(|(g, a)| g * a).sum();
                accumulate(pending, *s, &Tensor::scalar(ds));
            }
            Op::SoftmaxRows(a) => {
                let mut ga = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                    let dot: f64 = yr.iter().zip(gr).map(|(y, g)| y * g).sum();
                    let out = &mut ga.data_mut()[r * y.cols()..(r + 1) * y.cols()];
                    for ((o, &yv), &gv) in out.iter_mut().zip(yr).zip(gr) {
                        *o = yv * (gv - dot);
                    }
                }
                accumulate(pending, *a, &ga);
            }
            Op::LogSoftmaxRows(a) => {
                let mut ga = Tensor::zeros(y.rows(), y.cols());
                for r in 0..y.rows() {
                    let (yr, gr) = (y.row_slice(r), g.row_slice(r));
                    let total: f64 = gr.iter().sum();
                    let out = &mut ga.data_mut()[r * y.cols()..(r + 1) * y.cols()];
                    for ((o, &yv), &gv) in out.iter_mut().zip(yr).zip(gr) {
                        *o = gv - yv.exp() * total;
                    }
                }
                accumulate(pending, *a, &ga);
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let (rows, cols) = self.shape(p);
                    let mut data = Vec::with_capacity(rows * cols);
                    for r in 0..rows {
                        data.extend_from_slice(&g.row_slice(r)[offset..offset + cols]);
                    }
                    offset += cols;
                    accumulate_owned(pending, p, Tensor::new(rows, cols, data).unwrap());
                }
            }
            Op::StackRows(parts) => {
                let mut start = 0;
                for &p in parts {
                    let (rows, cols) = self.shape(p);
                    let data = g.data()[start * cols..(start + rows) * cols].to_vec();
                    start += rows;
                    accumulate_owned(pending, p, Tensor::new(rows, cols, data).unwrap());
                }
            }
            Op::SliceCols(a, start) => {
                let (rows, cols) = self.shape(*a);
                let start = *start;
                accumulate_with(pending, *a, (rows, cols), |ga| {
                    for r in 0..rows {
                        let src = g.row_slice(r);
                        let dst = &mut ga.data_mut()[r * cols + start..r * cols + start + src.len()];
                        for (d, s) in dst.iter_mut().zip(src) {
                            *d += s;
                        }
                    }
                });
            }
            Op::Transpose(a) => {
                accumulate_owned(pending, *a, g.transposed());
            }
            Op::TileRows(a) => {
                let cols = g.cols();
                let mut ga = vec![0.0; cols];
                for r in 0..g.rows() {
                    for (acc, v) in ga.iter_mut().zip(g.row_slice(r)) {
                        *acc += v;
                    }
                }
                accumulate_owned(pending, *a, Tensor::row(ga));
            }
            Op::GatherRow(a, row) => {
                let shape = self.shape(*a);
                let row = *row;
                accumulate_with(pending, *a, shape, |ga| {
                    let cols = shape.1;
                    for (d, s) in ga.data_mut()[row * cols..(row + 1) * cols]
                        .iter_mut()
                        .zip(g.data())
                    {
                        *d += s;
                    }
                });
            }
            Op::Sum(a) => {
                let (rows, cols) = self.shape(*a);
                accumulate_owned(pending, *a, Tensor::filled(rows, cols, g.item()));
            }
            Op::Pick(a, index) => {
                let shape = self.shape(*a);
                let index = *index;
                accumulate_with(pending, *a, shape, |ga| ga.data_mut()[index] += g.item());
            }
            Op::Cosine { u, v, degenerate } => {
                if *degenerate {
                    return;
                }
                let (vu, vv) = (self.value(*u), self.value(*v));
                let nu2 = vu.squared_norm();
                let nv2 = vv.squared_norm();
                let denom = (nu2 * nv2).sqrt();
                let cos = y.item();
                let gs = g.item();
                let gu = vu.zip_map(vv, |a, b| gs * (b / denom - cos * a / nu2));
                let gv = vv.zip_map(vu, |b, a| gs * (a / denom - cos * b / nv2));
                accumulate_owned(pending, *u, gu);
                accumulate_owned(pending, *v, gv);
            }
        }
    }
}

fn accumulate(pending: &mut [Option<Tensor>], target: Var, g: &Tensor) {
    match &mut pending[target.0] {
        Some(existing) => existing.add_assign(g),
        slot @ None => *slot = Some(g.clone()),
    }
}

fn accumulate_owned(pending: &mut [Option<Tensor>], target: Var, g: Tensor) {
    match &mut pending[target.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn accumulate_with(
    pending: &mut [Option<Tensor>],
    target: Var,
    shape: (usize, usize),
    f: impl FnOnce(&mut Tensor),
) {
    let slot = pending[target.0].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1));
    f(slot);
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

pub(crate) fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let cols = x.cols();
    for row in out.data_mut().chunks_mut(cols.max(1)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            total += *v;
        }
        for v in row.iter_mut() {
            *v /= total;
        }
    }
    out
}

pub(crate) fn log_softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let cols = x.cols();
    for row in out.data_mut().chunks_mut(cols.max(1)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= lse;
        }
    }
    out
}
