//! Dense `f64` tensors and a tape-based reverse-mode autodiff engine.
//!
//! Every differentiable computation is recorded on a [`Tape`] as a sequence
//! of nodes in creation order, which is also a valid topological order.
//! [`Tape::backward`] walks the nodes in reverse and accumulates gradients.
//!
//! Gradient accumulation is additive: calling `backward` twice on the same
//! tape without [`Tape::zero_grad`] doubles every stored gradient. Callers
//! that want fresh gradients must zero them explicitly.

use ndarray::linalg::general_mat_mul;
use ndarray::{ArrayView2, ArrayViewMut2, ShapeBuilder};
use rand::Rng;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("ShapeMismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("AllMaskedRow: row {row} has no unmasked entry")]
    AllMaskedRow { row: usize },
    #[error("EmptyAxis: axis {axis} of shape {shape:?} has length zero")]
    EmptyAxis { axis: usize, shape: Vec<usize> },
    #[error("InvalidAxis: axis {axis} out of range for shape {shape:?}")]
    InvalidAxis { axis: usize, shape: Vec<usize> },
    #[error("NonScalarOutput: backward requires one element, got shape {shape:?}")]
    NonScalarOutput { shape: Vec<usize> },
    #[error("IndexOutOfRange: index {index} >= {len}")]
    IndexOutOfRange { index: usize, len: usize },
}

pub type Result<T> = std::result::Result<T, TensorError>;

/// A dense row-major array with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(TensorError::ShapeMismatch {
                op: "new",
                left: shape.to_vec(),
                right: vec![data.len()],
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
            grad: None,
            requires_grad: false,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![0.0; numel],
            grad: None,
            requires_grad: false,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
            grad: None,
            requires_grad: false,
        }
    }

    /// Uniform(-bound, bound) entries drawn from `rng`.
    pub fn uniform<R: Rng + ?Sized>(shape: &[usize], bound: f64, rng: &mut R) -> Self {
        let numel: usize = shape.iter().product();
        let data = (0..numel)
            .map(|_| rng.random_range(-bound..=bound))
            .collect();
        Self {
            shape: shape.to_vec(),
            data,
            grad: None,
            requires_grad: false,
        }
    }

    pub fn with_grad(mut self) -> Self {
        self.requires_grad = true;
        self
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn set_requires_grad(&mut self, flag: bool) {
        self.requires_grad = flag;
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        self.grad = None;
    }

    /// Adds `g` into the gradient buffer, allocating it on first use.
    pub fn accumulate_grad(&mut self, g: &[f64]) {
        debug_assert_eq!(g.len(), self.data.len());
        match &mut self.grad {
            Some(buf) => buf.iter_mut().zip(g).for_each(|(b, x)| *b += x),
            None => self.grad = Some(g.to_vec()),
        }
    }

    /// Rows and columns for 2-D tensors; vectors are treated as `1 × n`.
    fn as_matrix(&self) -> Option<(usize, usize)> {
        match self.shape.as_slice() {
            [n] => Some((1, *n)),
            [m, n] => Some((*m, *n)),
            _ => None,
        }
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceMode {
    Sum,
    Mean,
    Max,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddBias(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    LeakyRelu(Var, f64),
    Elu(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    SoftmaxRows(Var),
    Reduce {
        input: Var,
        mode: ReduceMode,
        outer: usize,
        len: usize,
        inner: usize,
        argmax: Vec<usize>,
    },
    Reshape(Var),
    Transpose(Var),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols {
        input: Var,
        start: usize,
    },
    SliceRows {
        input: Var,
        start: usize,
    },
    OuterAdd(Var, Var),
    Embedding {
        table: Var,
        ids: Vec<usize>,
        pad: Option<usize>,
    },
    Im2Col {
        input: Var,
        kernel: usize,
    },
    Dropout {
        input: Var,
        mask: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
}

/// Records operations for reverse-mode differentiation.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// `c = op(a) · op(b) (+ c if accumulate)` with `a: m×k`, `b: k×n`.
///
/// When `trans_a` is set, `a` is stored as `k×m`; likewise `trans_b` means
/// `b` is stored as `n×k`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    c: &mut [f64],
    accumulate: bool,
) {
    let av = if trans_a {
        ArrayView2::from_shape((m, k).strides((1, m)), a)
    } else {
        ArrayView2::from_shape((m, k), a)
    }
    .expect("gemm lhs shape");
    let bv = if trans_b {
        ArrayView2::from_shape((k, n).strides((1, k)), b)
    } else {
        ArrayView2::from_shape((k, n), b)
    }
    .expect("gemm rhs shape");
    let mut cv = ArrayViewMut2::from_shape((m, n), c).expect("gemm output shape");
    let beta = if accumulate { 1.0 } else { 0.0 };
    general_mat_mul(1.0, &av, &bv, beta, &mut cv);
}

fn add_into(dst: &mut Option<Vec<f64>>, src: &[f64]) {
    match dst {
        Some(buf) => buf.iter_mut().zip(src).for_each(|(d, s)| *d += s),
        None => *dst = Some(src.to_vec()),
    }
}

fn zeros_if_none(dst: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    dst.get_or_insert_with(|| vec![0.0; len])
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, data: Vec<f64>, requires_grad: bool, op: Op) -> Var {
        let value = Tensor {
            shape,
            data,
            grad: None,
            requires_grad,
        };
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].value.requires_grad
    }

    /// Records a leaf. Its `requires_grad` flag decides whether gradients
    /// are stored for it.
    pub fn leaf(&mut self, t: Tensor) -> Var {
        let Tensor {
            shape,
            data,
            requires_grad,
            ..
        } = t;
        self.push(shape, data, requires_grad, Op::Leaf)
    }

    pub fn constant(&mut self, shape: &[usize], data: Vec<f64>) -> Result<Var> {
        let t = Tensor::new(shape, data)?;
        Ok(self.leaf(t))
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value.data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].value.shape
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.value.grad = None;
        }
    }

    fn matrix_dims(&self, v: Var, op: &'static str) -> Result<(usize, usize)> {
        self.value(v)
            .as_matrix()
            .ok_or_else(|| TensorError::ShapeMismatch {
                op,
                left: self.shape(v).to_vec(),
                right: vec![],
            })
    }

    fn same_shape(&self, a: Var, b: Var, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::ShapeMismatch {
                op,
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        Ok(())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.matrix_dims(a, "matmul")?;
        let (k2, n) = self.matrix_dims(b, "matmul")?;
        if k != k2 || self.shape(a).len() != 2 || self.shape(b).len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                left: self.shape(a).to_vec(),
                right: self.shape(b).to_vec(),
            });
        }
        let mut out = vec![0.0; m * n];
        gemm(m, k, n, self.data(a), false, self.data(b), false, &mut out, false);
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(vec![m, n], out, rg, Op::MatMul(a, b)))
    }

    fn binary(&mut self, a: Var, b: Var, name: &'static str, f: fn(f64, f64) -> f64) -> Result<(Vec<f64>, bool)> {
        self.same_shape(a, b, name)?;
        let out = self
            .data(a)
            .iter()
            .zip(self.data(b))
            .map(|(&x, &y)| f(x, y))
            .collect();
        Ok((out, self.rg(a) || self.rg(b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, rg) = self.binary(a, b, "add", |x, y| x + y)?;
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, rg, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, rg) = self.binary(a, b, "sub", |x, y| x - y)?;
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, rg, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (out, rg) = self.binary(a, b, "mul", |x, y| x * y)?;
        let shape = self.shape(a).to_vec();
        Ok(self.push(shape, out, rg, Op::Mul(a, b)))
    }

    /// Adds a bias vector of length `n` to every row of `x` (`[.., n]`).
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let n = *self.shape(x).last().unwrap_or(&0);
        if self.shape(bias) != [n] {
            return Err(TensorError::ShapeMismatch {
                op: "add_bias",
                left: self.shape(x).to_vec(),
                right: self.shape(bias).to_vec(),
            });
        }
        let b = self.data(bias);
        let out = self
            .data(x)
            .chunks(n)
            .flat_map(|row| row.iter().zip(b).map(|(r, b)| r + b))
            .collect();
        let rg = self.rg(x) || self.rg(bias);
        let shape = self.shape(x).to_vec();
        Ok(self.push(shape, out, rg, Op::AddBias(x, bias)))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.data(x).iter().map(|v| v * factor).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, out, rg, Op::Scale(x, factor))
    }

    fn unary(&mut self, x: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let out = self.data(x).iter().map(|&v| f(v)).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, out, rg, op)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.max(0.0), Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: Var, slope: f64) -> Var {
        self.unary(x, |v| if v > 0.0 { v } else { slope * v }, Op::LeakyRelu(x, slope))
    }

    pub fn elu(&mut self, x: Var, alpha: f64) -> Var {
        self.unary(
            x,
            |v| if v > 0.0 { v } else { alpha * (v.exp() - 1.0) },
            Op::Elu(x, alpha),
        )
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        self.unary(x, f64::tanh, Op::Tanh(x))
    }

    /// Row-wise softmax. Entries where `mask` is `false` get weight zero.
    pub fn softmax_rows(&mut self, x: Var, mask: Option<&[bool]>) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "softmax_rows")?;
        if let Some(mask) = mask {
            if mask.len() != m * n {
                return Err(TensorError::ShapeMismatch {
                    op: "softmax_rows",
                    left: vec![m, n],
                    right: vec![mask.len()],
                });
            }
        }
        let xs = self.data(x);
        let mut out = vec![0.0; m * n];
        for r in 0..m {
            let row = &xs[r * n..(r + 1) * n];
            let keep = |j: usize| mask.is_none_or(|mk| mk[r * n + j]);
            let max = (0..n)
                .filter(|&j| keep(j))
                .map(|j| row[j])
                .fold(f64::NEG_INFINITY, f64::max);
            if max == f64::NEG_INFINITY {
                return Err(TensorError::AllMaskedRow { row: r });
            }
            let mut total = 0.0;
            for j in 0..n {
                if keep(j) {
                    let e = (row[j] - max).exp();
                    out[r * n + j] = e;
                    total += e;
                }
            }
            out[r * n..(r + 1) * n].iter_mut().for_each(|v| *v /= total);
        }
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(shape, out, rg, Op::SoftmaxRows(x)))
    }

    /// Reduces along `axis`, removing it from the shape. Reducing the only
    /// axis of a vector yields shape `[1]`.
    pub fn reduce(&mut self, x: Var, mode: ReduceMode, axis: usize) -> Result<Var> {
        let shape = self.shape(x).to_vec();
        if axis >= shape.len() {
            return Err(TensorError::InvalidAxis { axis, shape });
        }
        let len = shape[axis];
        if len == 0 {
            return Err(TensorError::EmptyAxis { axis, shape });
        }
        let outer: usize = shape[..axis].iter().product();
        let inner: usize = shape[axis + 1..].iter().product();
        let xs = self.data(x);
        let mut out = vec![0.0; outer * inner];
        let mut argmax = Vec::new();
        match mode {
            ReduceMode::Sum | ReduceMode::Mean => {
                for o in 0..outer {
                    for l in 0..len {
                        let base = (o * len + l) * inner;
                        for i in 0..inner {
                            out[o * inner + i] += xs[base + i];
                        }
                    }
                }
                if mode == ReduceMode::Mean {
                    out.iter_mut().for_each(|v| *v /= len as f64);
                }
            }
            ReduceMode::Max => {
                argmax = vec![0; outer * inner];
                for o in 0..outer {
                    for i in 0..inner {
                        let mut best = 0;
                        let mut best_val = xs[o * len * inner + i];
                        for l in 1..len {
                            let v = xs[(o * len + l) * inner + i];
                            // strict > keeps the first maximal entry on ties
                            if v > best_val {
                                best = l;
                                best_val = v;
                            }
                        }
                        out[o * inner + i] = best_val;
                        argmax[o * inner + i] = best;
                    }
                }
            }
        }
        let mut out_shape: Vec<usize> = shape[..axis].iter().chain(&shape[axis + 1..]).copied().collect();
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        let rg = self.rg(x);
        Ok(self.push(
            out_shape,
            out,
            rg,
            Op::Reduce {
                input: x,
                mode,
                outer,
                len,
                inner,
                argmax,
            },
        ))
    }

    /// Sum of every element, as a `[1]` tensor.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).numel();
        let flat = self.reshape(x, &[n])?;
        self.reduce(flat, ReduceMode::Sum, 0)
    }

    /// Mean of every element, as a `[1]` tensor.
    pub fn mean_all(&mut self, x: Var) -> Result<Var> {
        let n = self.value(x).numel();
        let flat = self.reshape(x, &[n])?;
        self.reduce(flat, ReduceMode::Mean, 0)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let numel: usize = shape.iter().product();
        if numel != self.value(x).numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                left: self.shape(x).to_vec(),
                right: shape.to_vec(),
            });
        }
        let data = self.data(x).to_vec();
        let rg = self.rg(x);
        Ok(self.push(shape.to_vec(), data, rg, Op::Reshape(x)))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "transpose")?;
        let xs = self.data(x);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = xs[i * n + j];
            }
        }
        let rg = self.rg(x);
        Ok(self.push(vec![n, m], out, rg, Op::Transpose(x)))
    }

    /// Concatenates 2-D tensors with equal row counts side by side.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let dims: Vec<(usize, usize)> = parts
            .iter()
            .map(|&p| self.matrix_dims(p, "concat_cols"))
            .collect::<Result<_>>()?;
        let rows = dims.first().map(|d| d.0).unwrap_or(0);
        if let Some((i, _)) = dims.iter().enumerate().find(|(_, d)| d.0 != rows) {
            return Err(TensorError::ShapeMismatch {
                op: "concat_cols",
                left: self.shape(parts[0]).to_vec(),
                right: self.shape(parts[i]).to_vec(),
            });
        }
        let cols: usize = dims.iter().map(|d| d.1).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for (&p, &(_, c)) in parts.iter().zip(&dims) {
                out.extend_from_slice(&self.data(p)[r * c..(r + 1) * c]);
            }
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(vec![rows, cols], out, rg, Op::ConcatCols(parts.to_vec())))
    }

    /// Stacks 2-D tensors with equal column counts vertically.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let dims: Vec<(usize, usize)> = parts
            .iter()
            .map(|&p| self.matrix_dims(p, "concat_rows"))
            .collect::<Result<_>>()?;
        let cols = dims.first().map(|d| d.1).unwrap_or(0);
        if let Some((i, _)) = dims.iter().enumerate().find(|(_, d)| d.1 != cols) {
            return Err(TensorError::ShapeMismatch {
                op: "concat_rows",
                left: self.shape(parts[0]).to_vec(),
                right: self.shape(parts[i]).to_vec(),
            });
        }
        let rows: usize = dims.iter().map(|d| d.0).sum();
        let mut out = Vec::with_capacity(rows * cols);
        for &p in parts {
            out.extend_from_slice(self.data(p));
        }
        let rg = parts.iter().any(|&p| self.rg(p));
        Ok(self.push(vec![rows, cols], out, rg, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "slice_cols")?;
        if start + len > n || self.shape(x).len() != 2 {
            return Err(TensorError::IndexOutOfRange { index: start + len, len: n });
        }
        let xs = self.data(x);
        let out = (0..m)
            .flat_map(|r| xs[r * n + start..r * n + start + len].iter().copied())
            .collect();
        let rg = self.rg(x);
        Ok(self.push(vec![m, len], out, rg, Op::SliceCols { input: x, start }))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.matrix_dims(x, "slice_rows")?;
        if start + len > m || self.shape(x).len() != 2 {
            return Err(TensorError::IndexOutOfRange { index: start + len, len: m });
        }
        let out = self.data(x)[start * n..(start + len) * n].to_vec();
        let rg = self.rg(x);
        Ok(self.push(vec![len, n], out, rg, Op::SliceRows { input: x, start }))
    }

    /// `out[i][j] = u[i] + v[j]` for column vectors `u: m×1`, `v: n×1`.
    pub fn outer_add(&mut self, u: Var, v: Var) -> Result<Var> {
        let (m, c1) = self.matrix_dims(u, "outer_add")?;
        let (n, c2) = self.matrix_dims(v, "outer_add")?;
        if c1 != 1 || c2 != 1 || self.shape(u).len() != 2 || self.shape(v).len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "outer_add",
                left: self.shape(u).to_vec(),
                right: self.shape(v).to_vec(),
            });
        }
        let (us, vs) = (self.data(u), self.data(v));
        let out = (0..m).flat_map(|i| vs.iter().map(move |&vj| us[i] + vj)).collect();
        let rg = self.rg(u) || self.rg(v);
        Ok(self.push(vec![m, n], out, rg, Op::OuterAdd(u, v)))
    }

    /// Gathers rows of `table` (`vocab × d`). Rows for the `pad` id are zero
    /// and receive no gradient.
    pub fn embedding(&mut self, table: Var, ids: &[usize], pad: Option<usize>) -> Result<Var> {
        let (vocab, d) = self.matrix_dims(table, "embedding")?;
        let t = self.data(table);
        let mut out = vec![0.0; ids.len() * d];
        for (r, &id) in ids.iter().enumerate() {
            if id >= vocab {
                return Err(TensorError::IndexOutOfRange { index: id, len: vocab });
            }
            if Some(id) != pad {
                out[r * d..(r + 1) * d].copy_from_slice(&t[id * d..(id + 1) * d]);
            }
        }
        let rg = self.rg(table);
        Ok(self.push(
            vec![ids.len(), d],
            out,
            rg,
            Op::Embedding {
                table,
                ids: ids.to_vec(),
                pad,
            },
        ))
    }

    /// Unrolls sliding windows of `kernel` rows: `L×C → (L-k+1)×(k·C)`.
    /// A 1-D valid convolution is then `im2col(x) · W + b`.
    pub fn im2col(&mut self, x: Var, kernel: usize) -> Result<Var> {
        let (l, c) = self.matrix_dims(x, "im2col")?;
        if kernel == 0 || kernel > l {
            return Err(TensorError::ShapeMismatch {
                op: "im2col",
                left: vec![l, c],
                right: vec![kernel],
            });
        }
        let out_len = l - kernel + 1;
        let xs = self.data(x);
        let mut out = Vec::with_capacity(out_len * kernel * c);
        for p in 0..out_len {
            out.extend_from_slice(&xs[p * c..(p + kernel) * c]);
        }
        let rg = self.rg(x);
        Ok(self.push(vec![out_len, kernel * c], out, rg, Op::Im2Col { input: x, kernel }))
    }

    /// Inverted dropout: entries are zeroed with probability `p` and the
    /// survivors scaled by `1/(1-p)`.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: &mut R) -> Var {
        if p <= 0.0 {
            return x;
        }
        let keep = 1.0 / (1.0 - p);
        let mask: Vec<f64> = (0..self.value(x).numel())
            .map(|_| if rng.random::<f64>() < p { 0.0 } else { keep })
            .collect();
        let out = self.data(x).iter().zip(&mask).map(|(v, m)| v * m).collect();
        let shape = self.shape(x).to_vec();
        let rg = self.rg(x);
        self.push(shape, out, rg, Op::Dropout { input: x, mask })
    }

    /// Back-propagates from a single-element output, adding into the stored
    /// gradient of every `requires_grad` node reachable from it.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        if self.value(output).numel() != 1 {
            return Err(TensorError::NonScalarOutput {
                shape: self.shape(output).to_vec(),
            });
        }
        if !self.rg(output) {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; output.0 + 1];
        grads[output.0] = Some(vec![1.0]);
        for idx in (0..=output.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            self.nodes[idx].value.accumulate_grad(&g);
        }
        Ok(())
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        let y = &node.value.data;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.value(*a).as_matrix().unwrap();
                let n = self.shape(*b)[1];
                if self.rg(*a) {
                    let buf = zeros_if_none(&mut grads[a.0], m * k);
                    gemm(m, n, k, g, false, self.data(*b), true, buf, true);
                }
                if self.rg(*b) {
                    let buf = zeros_if_none(&mut grads[b.0], k * n);
                    gemm(k, m, n, self.data(*a), true, g, false, buf, true);
                }
            }
            Op::Add(a, b) => {
                if self.rg(*a) {
                    add_into(&mut grads[a.0], g);
                }
                if self.rg(*b) {
                    add_into(&mut grads[b.0], g);
                }
            }
            Op::Sub(a, b) => {
                if self.rg(*a) {
                    add_into(&mut grads[a.0], g);
                }
                if self.rg(*b) {
                    let neg: Vec<f64> = g.iter().map(|v| -v).collect();
                    add_into(&mut grads[b.0], &neg);
                }
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    let ga: Vec<f64> = g.iter().zip(self.data(*b)).map(|(g, b)| g * b).collect();
                    add_into(&mut grads[a.0], &ga);
                }
                if self.rg(*b) {
                    let gb: Vec<f64> = g.iter().zip(self.data(*a)).map(|(g, a)| g * a).collect();
                    add_into(&mut grads[b.0], &gb);
                }
            }
            Op::AddBias(x, bias) => {
                if self.rg(*x) {
                    add_into(&mut grads[x.0], g);
                }
                if self.rg(*bias) {
                    let n = self.value(*bias).numel();
                    let buf = zeros_if_none(&mut grads[bias.0], n);
                    for row in g.chunks(n) {
                        buf.iter_mut().zip(row).for_each(|(b, r)| *b += r);
                    }
                }
            }
            Op::Scale(x, f) => {
                let gx: Vec<f64> = g.iter().map(|v| v * f).collect();
                add_into(&mut grads[x.0], &gx);
            }
            Op::Relu(x) => {
                let gx: Vec<f64> = g
                    .iter()
                    .zip(self.data(*x))
                    .map(|(g, &v)| if v > 0.0 { *g } else { 0.0 })
                    .collect();
                add_into(&mut grads[x.0], &gx);
            }
            Op::LeakyRelu(x, slope) => {
                let gx: Vec<f64> = g
                    .iter()
                    .zip(self.data(*x))
                    .map(|(g, &v)| if v > 0.0 { *g } else { g * slope })
                    .collect();
                add_into(&mut grads[x.0], &gx);
            }
            Op::Elu(x, alpha) => {
                let gx: Vec<f64> = g
                    .iter()
                    .zip(self.data(*x))
                    .zip(y)
                    .map(|((g, &v), &out)| if v > 0.0 { *g } else { g * (out + alpha) })
                    .collect();
                add_into(&mut grads[x.0], &gx);
            }
            Op::Sigmoid(x) => {
                let gx: Vec<f64> = g.iter().zip(y).map(|(g, s)| g * s * (1.0 - s)).collect();
                add_into(&mut grads[x.0], &gx);
            }
            Op::Tanh(x) => {
                let gx: Vec<f64> = g.iter().zip(y).map(|(g, t)| g * (1.0 - t * t)).collect();
                add_into(&mut grads[x.0], &gx);
            }
            Op::SoftmaxRows(x) => {
                let (_, n) = node.value.as_matrix().unwrap();
                let mut gx = vec![0.0; y.len()];
                for ((gr, yr), out) in g.chunks(n).zip(y.chunks(n)).zip(gx.chunks_mut(n)) {
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for j in 0..n {
                        out[j] = yr[j] * (gr[j] - dot);
                    }
                }
                add_into(&mut grads[x.0], &gx);
            }
            Op::Reduce {
                input,
                mode,
                outer,
                len,
                inner,
                argmax,
            } => {
                let (outer, len, inner) = (*outer, *len, *inner);
                let buf = zeros_if_none(&mut grads[input.0], outer * len * inner);
                for o in 0..outer {
                    for i in 0..inner {
                        let gv = g[o * inner + i];
                        match mode {
                            ReduceMode::Sum => (0..len).for_each(|l| buf[(o * len + l) * inner + i] += gv),
                            ReduceMode::Mean => {
                                let share = gv / len as f64;
                                (0..len).for_each(|l| buf[(o * len + l) * inner + i] += share)
                            }
                            ReduceMode::Max => {
                                buf[(o * len + argmax[o * inner + i]) * inner + i] += gv;
                            }
                        }
                    }
                }
            }
            Op::Reshape(x) => add_into(&mut grads[x.0], g),
            Op::Transpose(x) => {
                let (n, m) = node.value.as_matrix().unwrap();
                let buf = zeros_if_none(&mut grads[x.0], m * n);
                for i in 0..n {
                    for j in 0..m {
                        buf[j * n + i] += g[i * m + j];
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let (rows, cols) = node.value.as_matrix().unwrap();
                let mut offset = 0;
                for &p in parts {
                    let c = self.value(p).as_matrix().unwrap().1;
                    if self.rg(p) {
                        let buf = zeros_if_none(&mut grads[p.0], rows * c);
                        for r in 0..rows {
                            let src = &g[r * cols + offset..r * cols + offset + c];
                            buf[r * c..(r + 1) * c].iter_mut().zip(src).for_each(|(b, s)| *b += s);
                        }
                    }
                    offset += c;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).numel();
                    if self.rg(p) {
                        add_into(&mut grads[p.0], &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::SliceCols { input, start } => {
                let (m, n) = self.value(*input).as_matrix().unwrap();
                let len = node.value.shape[1];
                let buf = zeros_if_none(&mut grads[input.0], m * n);
                for r in 0..m {
                    let dst = &mut buf[r * n + start..r * n + start + len];
                    dst.iter_mut().zip(&g[r * len..(r + 1) * len]).for_each(|(d, s)| *d += s);
                }
            }
            Op::SliceRows { input, start } => {
                let total = self.value(*input).numel();
                let n = node.value.shape[1];
                let buf = zeros_if_none(&mut grads[input.0], total);
                let dst = &mut buf[start * n..start * n + g.len()];
                dst.iter_mut().zip(g).for_each(|(d, s)| *d += s);
            }
            Op::OuterAdd(u, v) => {
                let (m, n) = node.value.as_matrix().unwrap();
                if self.rg(*u) {
                    let gu: Vec<f64> = g.chunks(n).map(|row| row.iter().sum()).collect();
                    add_into(&mut grads[u.0], &gu);
                }
                if self.rg(*v) {
                    let mut gv = vec![0.0; n];
                    for i in 0..m {
                        gv.iter_mut().zip(&g[i * n..(i + 1) * n]).for_each(|(a, b)| *a += b);
                    }
                    add_into(&mut grads[v.0], &gv);
                }
            }
            Op::Embedding { table, ids, pad } => {
                let (vocab, d) = self.value(*table).as_matrix().unwrap();
                let buf = zeros_if_none(&mut grads[table.0], vocab * d);
                for (r, &id) in ids.iter().enumerate() {
                    if Some(id) != *pad {
                        let dst = &mut buf[id * d..(id + 1) * d];
                        dst.iter_mut().zip(&g[r * d..(r + 1) * d]).for_each(|(a, b)| *a += b);
                    }
                }
            }
            Op::Im2Col { input, kernel } => {
                let (l, c) = self.value(*input).as_matrix().unwrap();
                let width = kernel * c;
                let buf = zeros_if_none(&mut grads[input.0], l * c);
                for (p, row) in g.chunks(width).enumerate() {
                    let dst = &mut buf[p * c..p * c + width];
                    dst.iter_mut().zip(row).for_each(|(a, b)| *a += b);
                }
            }
            Op::Dropout { input, mask } => {
                let gx: Vec<f64> = g.iter().zip(mask).map(|(g, m)| g * m).collect();
                add_into(&mut grads[input.0], &gx);
            }
        }
    }
}
