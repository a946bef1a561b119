//! Dense 2-D tensors and a reverse-mode gradient tape.
//!
//! A [`Tensor`] is a plain row-major matrix of `f64`. Differentiable
//! computation happens on a [`Tape`]: leaves are pushed with
//! [`Tape::param`] or [`Tape::constant`], every primitive appends one
//! record, and [`Tape::backward`] walks the records once in reverse,
//! accumulating adjoints into every node that requires a gradient.
//!
//! The tape is meant to be rebuilt each optimisation step: call
//! [`Tape::reset`], rebind the parameters, run the forward pass again.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: shape mismatch ({left:?} vs {right:?})")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{op}: data length {len} does not match shape {rows}x{cols}")]
    Length {
        op: &'static str,
        rows: usize,
        cols: usize,
        len: usize,
    },
    #[error("{op}: argument outside the function domain")]
    Domain { op: &'static str },
    #[error("{op}: produced a non-finite value")]
    NonFinite { op: &'static str },
    #[error("backward() needs a 1x1 loss, got {rows}x{cols}")]
    NonScalar { rows: usize, cols: usize },
    #[error("{op}: column range {start}..{end} out of bounds for {cols} columns")]
    ColumnRange {
        op: &'static str,
        start: usize,
        end: usize,
        cols: usize,
    },
}

pub type TensorResult<T> = std::result::Result<T, TensorError>;

/// Row-major dense matrix.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor[{}x{}]", self.rows, self.cols)?;
        if self.data.len() <= 16 {
            write!(f, "{:?}", self.data)?;
        }
        Ok(())
    }
}

impl Tensor {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> TensorResult<Self> {
        if data.len() != rows * cols {
            return Err(TensorError::Length {
                op: "Tensor::new",
                rows,
                cols,
                len: data.len(),
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn ones(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 1.0)
    }

    pub fn scalar(value: f64) -> Self {
        Self::filled(1, 1, value)
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { 1.0 } else { 0.0 })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
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

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.cols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.cols + col] = value;
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.data[row * self.cols..(row + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn transpose(&self) -> Tensor {
        Tensor::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    /// Rows selected by index, in the given order.
    pub fn gather_rows(&self, indices: &[usize]) -> Tensor {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Tensor {
            rows: indices.len(),
            cols: self.cols,
            data,
        }
    }

    /// Plain matrix product without touching a tape.
    pub fn matmul(&self, other: &Tensor) -> TensorResult<Tensor> {
        if self.cols != other.rows {
            return Err(TensorError::Shape {
                op: "matmul",
                left: self.shape(),
                right: other.shape(),
            });
        }
        let mut out = Tensor::zeros(self.rows, other.cols);
        gemm(
            Operand::plain(self),
            Operand::plain(other),
            &mut out,
            false,
        );
        Ok(out)
    }

    fn add_assign(&mut self, other: &Tensor) {
        debug_assert_eq!(self.shape(), other.shape());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }
}

/// Matrix operand with an optional transpose, expressed through strides.
struct Operand<'a> {
    t: &'a Tensor,
    transposed: bool,
}

impl<'a> Operand<'a> {
    fn plain(t: &'a Tensor) -> Self {
        Self {
            t,
            transposed: false,
        }
    }

    fn transposed(t: &'a Tensor) -> Self {
        Self {
            t,
            transposed: true,
        }
    }

    fn rows(&self) -> usize {
        if self.transposed {
            self.t.cols
        } else {
            self.t.rows
        }
    }

    fn cols(&self) -> usize {
        if self.transposed {
            self.t.rows
        } else {
            self.t.cols
        }
    }

    fn strides(&self) -> (isize, isize) {
        let c = self.t.cols as isize;
        if self.transposed {
            (1, c)
        } else {
            (c, 1)
        }
    }
}

/// `out (+)= a · b`. Single-threaded, so the reduction order is fixed.
fn gemm(a: Operand<'_>, b: Operand<'_>, out: &mut Tensor, accumulate: bool) {
    let (m, k, n) = (a.rows(), a.cols(), b.cols());
    debug_assert_eq!(k, b.rows());
    debug_assert_eq!(out.shape(), (m, n));
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        if !accumulate {
            out.data.fill(0.0);
        }
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: the pointers come from live tensors whose lengths cover every
    // index reachable through the given dimensions and strides, and `out`
    // does not alias either input.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.t.data.as_ptr(),
            rsa,
            csa,
            b.t.data.as_ptr(),
            rsb,
            csb,
            beta,
            out.data.as_mut_ptr(),
            out.cols as isize,
            1,
        );
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Pointwise primitives.
#[derive(Copy, Clone, Debug, PartialEq)]
pub enum Unary {
    Sin,
    Cos,
    Exp,
    Log,
    Relu,
    Neg,
    Scale(f64),
    AddConst(f64),
    Square,
}

impl Unary {
    fn name(self) -> &'static str {
        match self {
            Unary::Sin => "sin",
            Unary::Cos => "cos",
            Unary::Exp => "exp",
            Unary::Log => "log",
            Unary::Relu => "relu",
            Unary::Neg => "neg",
            Unary::Scale(_) => "scale",
            Unary::AddConst(_) => "add_const",
            Unary::Square => "square",
        }
    }

    fn apply(self, x: f64) -> f64 {
        match self {
            Unary::Sin => x.sin(),
            Unary::Cos => x.cos(),
            Unary::Exp => x.exp(),
            Unary::Log => x.ln(),
            Unary::Relu => {
                if x > 0.0 {
                    x
                } else {
                    0.0
                }
            }
            Unary::Neg => -x,
            Unary::Scale(c) => c * x,
            Unary::AddConst(c) => x + c,
            Unary::Square => x * x,
        }
    }

    /// d(output)/d(input), given the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Unary::Sin => x.cos(),
            Unary::Cos => -x.sin(),
            Unary::Exp => y,
            Unary::Log => 1.0 / x,
            Unary::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Unary::Neg => -1.0,
            Unary::Scale(c) => c,
            Unary::AddConst(_) => 1.0,
            Unary::Square => 2.0 * x,
        }
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Unary(Var, Unary),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    ExpandCols(Var),
    Columns(Var, usize),
    ConcatCols(Var, Var),
    Sum(Var),
    Mean(Var),
    SoftmaxRows(Var),
    ModulatedSine(Modulation),
}

/// Inputs of a fused `p·sin(q·ω·x + r) + s`.
#[derive(Copy, Clone, Debug)]
struct Modulation {
    x: Var,
    p: Var,
    q: Var,
    r: Var,
    s: Var,
    omega: f64,
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
    grad: Option<Tensor>,
    /// Forward intermediates an op wants back in the reverse sweep.
    cache: Vec<f64>,
}

/// Append-only record of primitive operations.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops every record. Handles from before the reset become invalid.
    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    /// Trainable leaf: receives a gradient on [`Tape::backward`].
    pub fn param(&mut self, value: &Tensor) -> Var {
        self.leaf(value.clone(), true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated adjoint, present once `backward` reached the node.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.nodes[v.0].grad.as_ref()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            grad: None,
            cache: Vec::new(),
        });
        Var(self.nodes.len() - 1)
    }

    fn push_checked(
        &mut self,
        name: &'static str,
        value: Tensor,
        op: Op,
        inputs: &[Var],
    ) -> TensorResult<Var> {
        if !value.is_finite() {
            return Err(TensorError::NonFinite { op: name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        Ok(self.push(value, op, requires_grad))
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        let out = self.value(a).matmul(self.value(b))?;
        self.push_checked("matmul", out, Op::MatMul(a, b), &[a, b])
    }

    /// `x + bias` with the 1×n bias repeated down every row.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> TensorResult<Var> {
        let (rows, cols) = self.shape(x);
        if self.shape(bias) != (1, cols) {
            return Err(TensorError::Shape {
                op: "add_bias",
                left: (rows, cols),
                right: self.shape(bias),
            });
        }
        let mut out = self.value(x).clone();
        let b = self.value(bias).data();
        for row in out.data.chunks_exact_mut(cols.max(1)) {
            for (o, &bv) in row.iter_mut().zip(b) {
                *o += bv;
            }
        }
        self.push_checked("add_bias", out, Op::AddBias(x, bias), &[x, bias])
    }

    pub fn unary(&mut self, x: Var, f: Unary) -> TensorResult<Var> {
        let input = self.value(x);
        if f == Unary::Log && input.data.iter().any(|&v| v <= 0.0) {
            return Err(TensorError::Domain { op: "log" });
        }
        let out = input.map(|v| f.apply(v));
        self.push_checked(f.name(), out, Op::Unary(x, f), &[x])
    }

    pub fn sin(&mut self, x: Var) -> TensorResult<Var> {
        self.unary(x, Unary::Sin)
    }

    pub fn cos(&mut self, x: Var) -> TensorResult<Var> {
        self.unary(x, Unary::Cos)
    }

    pub fn exp(&mut self, x: Var) -> TensorResult<Var> {
        self.unary(x, Unary::Exp)
    }

    pub fn log(&mut self, x: Var) -> TensorResult<Var> {
        self.unary(x, Unary::Log)
    }

    pub fn relu(&mut self, x: Var) -> TensorResult<Var> {
        self.unary(x, Unary::Relu)
    }

    pub fn neg(&mut self, x: Var) -> TensorResult<Var> {
        self.unary(x, Unary::Neg)
    }

    pub fn scale(&mut self, x: Var, c: f64) -> TensorResult<Var> {
        self.unary(x, Unary::Scale(c))
    }

    pub fn add_const(&mut self, x: Var, c: f64) -> TensorResult<Var> {
        self.unary(x, Unary::AddConst(c))
    }

    pub fn square(&mut self, x: Var) -> TensorResult<Var> {
        self.unary(x, Unary::Square)
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> TensorResult<()> {
        if self.shape(a) != self.shape(b) {
            return Err(TensorError::Shape {
                op,
                left: self.shape(a),
                right: self.shape(b),
            });
        }
        Ok(())
    }

    fn zip_with(&self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (ta, tb) = (self.value(a), self.value(b));
        Tensor {
            rows: ta.rows,
            cols: ta.cols,
            data: ta.data.iter().zip(&tb.data).map(|(&x, &y)| f(x, y)).collect(),
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        self.same_shape("add", a, b)?;
        let out = self.zip_with(a, b, |x, y| x + y);
        self.push_checked("add", out, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        self.same_shape("sub", a, b)?;
        let out = self.zip_with(a, b, |x, y| x - y);
        self.push_checked("sub", out, Op::Sub(a, b), &[a, b])
    }

    /// Elementwise (Hadamard) product.
    pub fn mul(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        self.same_shape("mul", a, b)?;
        let out = self.zip_with(a, b, |x, y| x * y);
        self.push_checked("mul", out, Op::Mul(a, b), &[a, b])
    }

    /// Repeats an n×1 column `cols` times, giving n×cols.
    pub fn expand_cols(&mut self, x: Var, cols: usize) -> TensorResult<Var> {
        let (rows, c) = self.shape(x);
        if c != 1 {
            return Err(TensorError::Shape {
                op: "expand_cols",
                left: (rows, c),
                right: (rows, 1),
            });
        }
        let src = self.value(x);
        let mut data = Vec::with_capacity(rows * cols);
        for &v in &src.data {
            data.extend(std::iter::repeat_n(v, cols));
        }
        let out = Tensor { rows, cols, data };
        self.push_checked("expand_cols", out, Op::ExpandCols(x), &[x])
    }

    /// Columns `start..start + count` of `x`.
    pub fn columns(&mut self, x: Var, start: usize, count: usize) -> TensorResult<Var> {
        let (rows, cols) = self.shape(x);
        if start + count > cols {
            return Err(TensorError::ColumnRange {
                op: "columns",
                start,
                end: start + count,
                cols,
            });
        }
        let src = self.value(x);
        let mut data = Vec::with_capacity(rows * count);
        for r in 0..rows {
            data.extend_from_slice(&src.row(r)[start..start + count]);
        }
        let out = Tensor {
            rows,
            cols: count,
            data,
        };
        self.push_checked("columns", out, Op::Columns(x, start), &[x])
    }

    /// `[a | b]` side by side.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> TensorResult<Var> {
        let (ra, ca) = self.shape(a);
        let (rb, cb) = self.shape(b);
        if ra != rb {
            return Err(TensorError::Shape {
                op: "concat_cols",
                left: (ra, ca),
                right: (rb, cb),
            });
        }
        let (ta, tb) = (self.value(a), self.value(b));
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for r in 0..ra {
            data.extend_from_slice(ta.row(r));
            data.extend_from_slice(tb.row(r));
        }
        let out = Tensor {
            rows: ra,
            cols: ca + cb,
            data,
        };
        self.push_checked("concat_cols", out, Op::ConcatCols(a, b), &[a, b])
    }

    pub fn sum(&mut self, x: Var) -> TensorResult<Var> {
        let out = Tensor::scalar(self.value(x).sum());
        self.push_checked("sum", out, Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> TensorResult<Var> {
        let t = self.value(x);
        let n = t.len().max(1) as f64;
        let out = Tensor::scalar(t.sum() / n);
        self.push_checked("mean", out, Op::Mean(x), &[x])
    }

    /// `p·sin(q·(ω·x) + r) + s` for an n×m `x`, with each of `p, q, r, s`
    /// an n×1 column applied across its row. With `(p, q, r, s) = (1, 1, 0, 0)`
    /// the result is bit-identical to `sin(scale(x, ω))`.
    pub fn modulated_sine(&mut self, x: Var, omega: f64, p: Var, q: Var, r: Var, s: Var) -> TensorResult<Var> {
        let (rows, cols) = self.shape(x);
        for v in [p, q, r, s] {
            if self.shape(v) != (rows, 1) {
                return Err(TensorError::Shape {
                    op: "modulated_sine",
                    left: (rows, cols),
                    right: self.shape(v),
                });
            }
        }
        let (pv, qv, rv, sv) = (self.value(p), self.value(q), self.value(r), self.value(s));
        let mut out = self.value(x).clone();
        // sin θ and cos θ, interleaved, for the backward pass.
        let mut cache = Vec::with_capacity(2 * out.data.len());
        if cols > 0 {
            for (i, row) in out.data.chunks_exact_mut(cols).enumerate() {
                let (pi, qi, ri, si) = (pv.data[i], qv.data[i], rv.data[i], sv.data[i]);
                for v in row.iter_mut() {
                    let (sin, cos) = ((omega * *v) * qi + ri).sin_cos();
                    cache.push(sin);
                    cache.push(cos);
                    *v = pi * sin + si;
                }
            }
        }
        let m = Modulation { x, p, q, r, s, omega };
        let out = self.push_checked("modulated_sine", out, Op::ModulatedSine(m), &[x, p, q, r, s])?;
        self.nodes[out.0].cache = cache;
        Ok(out)
    }

    /// Numerically stable softmax along each row.
    pub fn softmax_rows(&mut self, x: Var) -> TensorResult<Var> {
        let mut out = self.value(x).clone();
        let cols = out.cols;
        if cols > 0 {
            for row in out.data.chunks_exact_mut(cols) {
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
        }
        self.push_checked("softmax_rows", out, Op::SoftmaxRows(x), &[x])
    }

    /// Reverse sweep from a scalar loss. Adjoints accumulate, so a node
    /// feeding several consumers receives the sum of their contributions.
    pub fn backward(&mut self, loss: Var) -> TensorResult<()> {
        let (rows, cols) = self.shape(loss);
        if (rows, cols) != (1, 1) {
            return Err(TensorError::NonScalar { rows, cols });
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        if !self.nodes[loss.0].requires_grad {
            return Ok(());
        }
        self.nodes[loss.0].grad = Some(Tensor::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(upstream) = self.nodes[idx].grad.take() else {
                continue;
            };
            if !upstream.is_finite() {
                return Err(TensorError::NonFinite { op: "backward" });
            }
            let op = self.nodes[idx].op.clone();
            self.propagate(idx, &op, &upstream);
            self.nodes[idx].grad = Some(upstream);
        }
        Ok(())
    }

    fn accumulate(&mut self, target: Var, contribution: Tensor) {
        let node = &mut self.nodes[target.0];
        if !node.requires_grad {
            return;
        }
        match &mut node.grad {
            Some(g) => g.add_assign(&contribution),
            None => node.grad = Some(contribution),
        }
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&mut self, idx: usize, op: &Op, up: &Tensor) {
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.wants(a) {
                    let bv = self.value(b);
                    let mut da = Tensor::zeros(up.rows, bv.rows);
                    gemm(Operand::plain(up), Operand::transposed(bv), &mut da, false);
                    self.accumulate(a, da);
                }
                if self.wants(b) {
                    let av = self.value(a);
                    let mut db = Tensor::zeros(av.cols, up.cols);
                    gemm(Operand::transposed(av), Operand::plain(up), &mut db, false);
                    self.accumulate(b, db);
                }
            }
            Op::AddBias(x, bias) => {
                if self.wants(bias) {
                    let mut db = Tensor::zeros(1, up.cols);
                    for row in up.data.chunks_exact(up.cols.max(1)) {
                        for (d, &u) in db.data.iter_mut().zip(row) {
                            *d += u;
                        }
                    }
                    self.accumulate(bias, db);
                }
                self.accumulate(x, up.clone());
            }
            Op::Unary(x, f) => {
                if self.wants(x) {
                    let input = &self.nodes[x.0].value;
                    let output = &self.nodes[idx].value;
                    let data = input
                        .data
                        .iter()
                        .zip(&output.data)
                        .zip(&up.data)
                        .map(|((&xi, &yi), &u)| u * f.derivative(xi, yi))
                        .collect();
                    let dx = Tensor {
                        rows: up.rows,
                        cols: up.cols,
                        data,
                    };
                    self.accumulate(x, dx);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(a, up.clone());
                self.accumulate(b, up.clone());
            }
            Op::Sub(a, b) => {
                self.accumulate(a, up.clone());
                if self.wants(b) {
                    self.accumulate(b, up.map(|v| -v));
                }
            }
            Op::Mul(a, b) => {
                if self.wants(a) {
                    let other = self.value(b);
                    let da = Tensor {
                        rows: up.rows,
                        cols: up.cols,
                        data: up.data.iter().zip(&other.data).map(|(u, o)| u * o).collect(),
                    };
                    self.accumulate(a, da);
                }
                if self.wants(b) {
                    let other = self.value(a);
                    let db = Tensor {
                        rows: up.rows,
                        cols: up.cols,
                        data: up.data.iter().zip(&other.data).map(|(u, o)| u * o).collect(),
                    };
                    self.accumulate(b, db);
                }
            }
            Op::ExpandCols(x) => {
                if self.wants(x) {
                    let data = up
                        .data
                        .chunks_exact(up.cols.max(1))
                        .map(|row| row.iter().sum())
                        .take(up.rows)
                        .collect::<Vec<f64>>();
                    let dx = Tensor {
                        rows: up.rows,
                        cols: 1,
                        data: if up.cols == 0 {
                            vec![0.0; up.rows]
                        } else {
                            data
                        },
                    };
                    self.accumulate(x, dx);
                }
            }
            Op::Columns(x, start) => {
                if self.wants(x) {
                    let (rows, cols) = self.shape(x);
                    let mut dx = Tensor::zeros(rows, cols);
                    for r in 0..rows {
                        let dst = &mut dx.data[r * cols + start..r * cols + start + up.cols];
                        dst.copy_from_slice(up.row(r));
                    }
                    self.accumulate(x, dx);
                }
            }
            Op::ConcatCols(a, b) => {
                let ca = self.shape(a).1;
                let cb = self.shape(b).1;
                if self.wants(a) {
                    let mut data = Vec::with_capacity(up.rows * ca);
                    for r in 0..up.rows {
                        data.extend_from_slice(&up.row(r)[..ca]);
                    }
                    self.accumulate(
                        a,
                        Tensor {
                            rows: up.rows,
                            cols: ca,
                            data,
                        },
                    );
                }
                if self.wants(b) {
                    let mut data = Vec::with_capacity(up.rows * cb);
                    for r in 0..up.rows {
                        data.extend_from_slice(&up.row(r)[ca..]);
                    }
                    self.accumulate(
                        b,
                        Tensor {
                            rows: up.rows,
                            cols: cb,
                            data,
                        },
                    );
                }
            }
            Op::Sum(x) => {
                if self.wants(x) {
                    let (rows, cols) = self.shape(x);
                    self.accumulate(x, Tensor::filled(rows, cols, up.data[0]));
                }
            }
            Op::Mean(x) => {
                if self.wants(x) {
                    let (rows, cols) = self.shape(x);
                    let n = (rows * cols).max(1) as f64;
                    self.accumulate(x, Tensor::filled(rows, cols, up.data[0] / n));
                }
            }
            Op::SoftmaxRows(x) => {
                if self.wants(x) {
                    // dx = y ⊙ (dy − Σ_j dy_j y_j) per row
                    let y = &self.nodes[idx].value;
                    let cols = y.cols.max(1);
                    let mut data = Vec::with_capacity(y.data.len());
                    for (yr, ur) in y.data.chunks_exact(cols).zip(up.data.chunks_exact(cols)) {
                        let dot: f64 = yr.iter().zip(ur).map(|(a, b)| a * b).sum();
                        data.extend(yr.iter().zip(ur).map(|(yi, ui)| yi * (ui - dot)));
                    }
                    let dx = Tensor {
                        rows: y.rows,
                        cols: y.cols,
                        data,
                    };
                    self.accumulate(x, dx);
                }
            }
            Op::ModulatedSine(m) => {
                let cache = std::mem::take(&mut self.nodes[idx].cache);
                self.propagate_modulated_sine(m, &cache, up);
                self.nodes[idx].cache = cache;
            }
        }
    }

    fn propagate_modulated_sine(&mut self, m: Modulation, trig: &[f64], up: &Tensor) {
        let xv = self.value(m.x);
        let (rows, cols) = xv.shape();
        let (pv, qv) = (self.value(m.p), self.value(m.q));
        let want_x = self.wants(m.x);
        let mut dx = Vec::with_capacity(if want_x { rows * cols } else { 0 });
        let mut dp = vec![0.0; rows];
        let mut dq = vec![0.0; rows];
        let mut dr = vec![0.0; rows];
        let mut ds = vec![0.0; rows];
        for i in 0..rows {
            let (pi, qi) = (pv.data[i], qv.data[i]);
            let (xr, ur) = (&xv.data[i * cols..(i + 1) * cols], &up.data[i * cols..(i + 1) * cols]);
            let tr = &trig[2 * i * cols..2 * (i + 1) * cols];
            let (mut sp, mut sq, mut sr, mut ss) = (0.0, 0.0, 0.0, 0.0);
            for ((&xj, &uj), sc) in xr.iter().zip(ur).zip(tr.chunks_exact(2)) {
                let scaled = m.omega * xj;
                let (sin, cos) = (sc[0], sc[1]);
                let g = uj * pi * cos;
                sp += uj * sin;
                sq += g * scaled;
                sr += g;
                ss += uj;
                if want_x {
                    dx.push(g * qi * m.omega);
                }
            }
            dp[i] = sp;
            dq[i] = sq;
            dr[i] = sr;
            ds[i] = ss;
        }
        if want_x {
            self.accumulate(m.x, Tensor { rows, cols, data: dx });
        }
        for (v, d) in [(m.p, dp), (m.q, dq), (m.r, dr), (m.s, ds)] {
            self.accumulate(v, Tensor { rows, cols: 1, data: d });
        }
    }
}
