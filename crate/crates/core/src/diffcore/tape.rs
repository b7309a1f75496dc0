use super::scalar::{log_sigmoid, sigmoid, sigmoid_bce, softplus};
use super::tensor::{matmul_nt_into, matmul_tn_into};
use super::{DiffError, Scalar, Tensor};

/// Probability bounds applied before the inverse logistic.
pub const LOGIT_CLAMP: f64 = 1e-6;

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum UnaryOp {
    Neg,
    Exp,
    /// Natural log; non-positive input is a domain error.
    Log,
    Sigmoid,
    Softplus,
    Square,
    Sqrt,
    /// Inverse logistic. Inputs in `[0, 1]` are clamped to `[1e-6, 1 - 1e-6]`.
    Logit,
    LogSigmoid,
    Elu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceOp {
    Sum,
    Mean,
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Unary(UnaryOp, Var),
    Binary(BinaryOp, Var, Var),
    MatMul(Var, Var),
    AddRow(Var, Var),
    Clamp(Var, T, T),
    Reduce(ReduceOp, Var, Option<usize>),
    StopGradient,
    SigmoidBce(Var, Var),
    ConcatCols(Vec<Var>),
}

#[derive(Clone, Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Dynamic reverse-mode tape.
///
/// Nodes are appended in evaluation order, so the node vector is already a
/// topological order and `backward` walks it from the loss down to index 0.
#[derive(Clone, Debug, Default)]
pub struct Tape<T = f64> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        self.grads.push(None);
        Var(self.nodes.len() - 1)
    }

    /// A leaf that receives gradients.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn scalar(&mut self, value: T) -> Var {
        self.constant(Tensor::scalar(value))
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Accumulated gradient of `v`, if any backward pass reached it.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads[v.0].as_ref()
    }

    /// Accumulated gradient of `v`, or zeros shaped like its value.
    pub fn grad_or_zeros(&self, v: Var) -> Tensor<T> {
        self.grads[v.0]
            .clone()
            .unwrap_or_else(|| Tensor::zeros(self.value(v).shape()))
    }

    pub fn zero_grad(&mut self) {
        self.grads.iter_mut().for_each(|g| *g = None);
    }

    // ---- forward ops ---------------------------------------------------

    pub fn unary(&mut self, op: UnaryOp, x: Var) -> Result<Var, DiffError> {
        let xv = self.value(x);
        let lo = T::lit(LOGIT_CLAMP);
        let hi = T::one() - lo;
        match op {
            UnaryOp::Log if xv.data().iter().any(|&v| !(v > T::zero())) => {
                return Err(DiffError::Domain("log of non-positive value".into()));
            }
            UnaryOp::Sqrt if xv.data().iter().any(|&v| !(v >= T::zero())) => {
                return Err(DiffError::Domain("sqrt of negative value".into()));
            }
            UnaryOp::Logit
                if xv
                    .data()
                    .iter()
                    .any(|&v| !(v >= T::zero() && v <= T::one())) =>
            {
                return Err(DiffError::Domain("logit input outside [0, 1]".into()));
            }
            _ => {}
        }
        let f: fn(T, T, T) -> T = match op {
            UnaryOp::Neg => |v, _, _| -v,
            UnaryOp::Exp => |v, _, _| v.exp(),
            UnaryOp::Log => |v, _, _| v.ln(),
            UnaryOp::Sigmoid => |v, _, _| sigmoid(v),
            UnaryOp::Softplus => |v, _, _| softplus(v),
            UnaryOp::Square => |v, _, _| v * v,
            UnaryOp::Sqrt => |v, _, _| v.sqrt(),
            UnaryOp::Logit => |v, lo, hi| {
                let p = v.max(lo).min(hi);
                (p / (T::one() - p)).ln()
            },
            UnaryOp::LogSigmoid => |v, _, _| log_sigmoid(v),
            UnaryOp::Elu => |v, _, _| if v > T::zero() { v } else { v.exp_m1() },
        };
        let out = xv.map(|v| f(v, lo, hi));
        let rg = self.requires_grad(x);
        Ok(self.push(out, Op::Unary(op, x), rg))
    }

    pub fn binary(&mut self, op: BinaryOp, a: Var, b: Var) -> Result<Var, DiffError> {
        let (av, bv) = (self.value(a), self.value(b));
        let shape = broadcast_shape(av, bv).ok_or_else(|| {
            DiffError::Dimension(format!(
                "cannot broadcast {:?} with {:?} (only equal shapes or scalars)",
                av.shape(),
                bv.shape()
            ))
        })?;
        if op == BinaryOp::Div && bv.data().iter().any(|&v| v == T::zero()) {
            return Err(DiffError::Domain("division by zero".into()));
        }
        let n: usize = shape.iter().product();
        let (ad, bd) = (av.data(), bv.data());
        let (sa, sb) = (ad.len() == 1, bd.len() == 1);
        let mut data = Vec::with_capacity(n);
        for i in 0..n {
            let x = ad[if sa { 0 } else { i }];
            let y = bd[if sb { 0 } else { i }];
            data.push(match op {
                BinaryOp::Add => x + y,
                BinaryOp::Sub => x - y,
                BinaryOp::Mul => x * y,
                BinaryOp::Div => x / y,
            });
        }
        let rg = self.requires_grad(a) || self.requires_grad(b);
        let out = Tensor::new(shape, data)?;
        Ok(self.push(out, Op::Binary(op, a, b), rg))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        let out = self.value(a).matmul(self.value(b))?;
        let rg = self.requires_grad(a) || self.requires_grad(b);
        Ok(self.push(out, Op::MatMul(a, b), rg))
    }

    /// Adds a row vector (`[m]` or `[1×m]`) to every row of an `[n×m]` matrix.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var, DiffError> {
        let (xv, rv) = (self.value(x), self.value(row));
        let ok_row = match rv.shape() {
            [m] => *m == xv.cols(),
            [1, m] => *m == xv.cols(),
            _ => false,
        };
        if xv.shape().len() != 2 || !ok_row {
            return Err(DiffError::Dimension(format!(
                "add_row {:?} + {:?}",
                xv.shape(),
                rv.shape()
            )));
        }
        let m = xv.cols();
        let mut data = xv.data().to_vec();
        if m > 0 {
            for chunk in data.chunks_mut(m) {
                for (o, &r) in chunk.iter_mut().zip(rv.data()) {
                    *o += r;
                }
            }
        }
        let out = Tensor::new(xv.shape().to_vec(), data)?;
        let rg = self.requires_grad(x) || self.requires_grad(row);
        Ok(self.push(out, Op::AddRow(x, row), rg))
    }

    /// Clamps into `[lo, hi]`; the gradient is zero wherever the bound is active.
    pub fn clamp(&mut self, x: Var, lo: T, hi: T) -> Var {
        let out = self.value(x).map(|v| v.max(lo).min(hi));
        let rg = self.requires_grad(x);
        self.push(out, Op::Clamp(x, lo, hi), rg)
    }

    /// Sum or mean over `axis`, or over everything when `axis` is `None`.
    pub fn reduce(&mut self, op: ReduceOp, x: Var, axis: Option<usize>) -> Result<Var, DiffError> {
        let xv = self.value(x);
        let out = match axis {
            None => {
                let s = xv.sum();
                let v = match op {
                    ReduceOp::Sum => s,
                    ReduceOp::Mean => s / T::from_usize(xv.len().max(1)).unwrap_or_else(T::one),
                };
                Tensor::scalar(v)
            }
            Some(ax) => {
                let shape = xv.shape();
                if ax >= shape.len() {
                    return Err(DiffError::Dimension(format!(
                        "axis {ax} out of range for shape {shape:?}"
                    )));
                }
                let (outer, dim, inner) = split_axis(shape, ax);
                let mut data = vec![T::zero(); outer * inner];
                let xd = xv.data();
                for o in 0..outer {
                    for d in 0..dim {
                        let base = (o * dim + d) * inner;
                        for i in 0..inner {
                            data[o * inner + i] += xd[base + i];
                        }
                    }
                }
                if op == ReduceOp::Mean && dim > 0 {
                    let inv = T::one() / T::from_usize(dim).unwrap_or_else(T::one);
                    data.iter_mut().for_each(|v| *v *= inv);
                }
                let mut oshape = shape.to_vec();
                oshape.remove(ax);
                Tensor::new(oshape, data)?
            }
        };
        let rg = self.requires_grad(x);
        Ok(self.push(out, Op::Reduce(op, x, axis), rg))
    }

    /// Identity on values; blocks all gradient flow into `x`.
    pub fn stop_gradient(&mut self, x: Var) -> Var {
        let out = self.value(x).clone();
        self.push(out, Op::StopGradient, false)
    }

    /// Elementwise binary cross-entropy from logits, stable for large `|logit|`.
    /// Targets may be any value in `[0, 1]`.
    pub fn sigmoid_bce(&mut self, logits: Var, targets: Var) -> Result<Var, DiffError> {
        let (lv, tv) = (self.value(logits), self.value(targets));
        if lv.shape() != tv.shape() {
            return Err(DiffError::Dimension(format!(
                "sigmoid_bce {:?} vs {:?}",
                lv.shape(),
                tv.shape()
            )));
        }
        let data = lv
            .data()
            .iter()
            .zip(tv.data())
            .map(|(&l, &y)| sigmoid_bce(l, y))
            .collect();
        let out = Tensor::new(lv.shape().to_vec(), data)?;
        let rg = self.requires_grad(logits) || self.requires_grad(targets);
        Ok(self.push(out, Op::SigmoidBce(logits, targets), rg))
    }

    /// Horizontal concatenation of matrices with equal row counts.
    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var, DiffError> {
        let first = parts
            .first()
            .ok_or_else(|| DiffError::Contract("concat_cols of nothing".into()))?;
        let n = self.value(*first).rows();
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let v = self.value(p);
            if v.shape().len() != 2 || v.rows() != n {
                return Err(DiffError::Dimension(format!(
                    "concat_cols part {:?} with {} rows expected",
                    v.shape(),
                    n
                )));
            }
            widths.push(v.cols());
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(n * total);
        for r in 0..n {
            for &p in parts {
                data.extend_from_slice(self.value(p).row(r));
            }
        }
        let rg = parts.iter().any(|&p| self.requires_grad(p));
        let out = Tensor::new(vec![n, total], data)?;
        Ok(self.push(out, Op::ConcatCols(parts.to_vec()), rg))
    }

    // ---- convenience wrappers -----------------------------------------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary(BinaryOp::Add, a, b)
    }
    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary(BinaryOp::Sub, a, b)
    }
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary(BinaryOp::Mul, a, b)
    }
    pub fn div(&mut self, a: Var, b: Var) -> Result<Var, DiffError> {
        self.binary(BinaryOp::Div, a, b)
    }
    pub fn scale(&mut self, x: Var, k: T) -> Result<Var, DiffError> {
        let c = self.scalar(k);
        self.mul(x, c)
    }
    pub fn neg(&mut self, x: Var) -> Result<Var, DiffError> {
        self.unary(UnaryOp::Neg, x)
    }
    pub fn exp(&mut self, x: Var) -> Result<Var, DiffError> {
        self.unary(UnaryOp::Exp, x)
    }
    pub fn log(&mut self, x: Var) -> Result<Var, DiffError> {
        self.unary(UnaryOp::Log, x)
    }
    pub fn sigmoid(&mut self, x: Var) -> Result<Var, DiffError> {
        self.unary(UnaryOp::Sigmoid, x)
    }
    pub fn softplus(&mut self, x: Var) -> Result<Var, DiffError> {
        self.unary(UnaryOp::Softplus, x)
    }
    pub fn square(&mut self, x: Var) -> Result<Var, DiffError> {
        self.unary(UnaryOp::Square, x)
    }
    pub fn sqrt(&mut self, x: Var) -> Result<Var, DiffError> {
        self.unary(UnaryOp::Sqrt, x)
    }
    pub fn logit(&mut self, x: Var) -> Result<Var, DiffError> {
        self.unary(UnaryOp::Logit, x)
    }
    pub fn log_sigmoid(&mut self, x: Var) -> Result<Var, DiffError> {
        self.unary(UnaryOp::LogSigmoid, x)
    }
    pub fn elu(&mut self, x: Var) -> Result<Var, DiffError> {
        self.unary(UnaryOp::Elu, x)
    }
    pub fn sum(&mut self, x: Var, axis: Option<usize>) -> Result<Var, DiffError> {
        self.reduce(ReduceOp::Sum, x, axis)
    }
    pub fn mean(&mut self, x: Var, axis: Option<usize>) -> Result<Var, DiffError> {
        self.reduce(ReduceOp::Mean, x, axis)
    }

    // ---- reverse pass -------------------------------------------------

    /// Accumulates `d loss / d v` into every node that requires a gradient.
    /// Calling it again without [`Tape::zero_grad`] adds to the stored values.
    pub fn backward(&mut self, loss: Var) -> Result<(), DiffError> {
        let lv = self.value(loss);
        if lv.len() != 1 {
            return Err(DiffError::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lv.shape()
            )));
        }
        let mut local: Vec<Option<Tensor<T>>> = vec![None; loss.0 + 1];
        local[loss.0] = Some(Tensor::ones(lv.shape()));
        for i in (0..=loss.0).rev() {
            let Some(g) = local[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut local)?;
            match &mut self.grads[i] {
                Some(acc) => acc.add_assign(&g),
                slot => *slot = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(
        &self,
        i: usize,
        g: &Tensor<T>,
        local: &mut [Option<Tensor<T>>],
    ) -> Result<(), DiffError> {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf | Op::StopGradient => {}
            Op::Unary(op, x) => {
                if !self.requires_grad(*x) {
                    return Ok(());
                }
                let xv = self.value(*x);
                let lo = T::lit(LOGIT_CLAMP);
                let hi = T::one() - lo;
                let half = T::lit(0.5);
                let two = T::lit(2.0);
                let data: Vec<T> = xv
                    .data()
                    .iter()
                    .zip(out.data())
                    .zip(g.data())
                    .map(|((&xi, &yi), &gi)| {
                        let d = match op {
                            UnaryOp::Neg => -T::one(),
                            UnaryOp::Exp => yi,
                            UnaryOp::Log => T::one() / xi,
                            UnaryOp::Sigmoid => yi * (T::one() - yi),
                            UnaryOp::Softplus => sigmoid(xi),
                            UnaryOp::Square => two * xi,
                            UnaryOp::Sqrt => {
                                if yi > T::zero() {
                                    half / yi
                                } else {
                                    T::zero()
                                }
                            }
                            UnaryOp::Logit => {
                                if xi < lo || xi > hi {
                                    T::zero()
                                } else {
                                    T::one() / (xi * (T::one() - xi))
                                }
                            }
                            UnaryOp::LogSigmoid => sigmoid(-xi),
                            UnaryOp::Elu => {
                                if xi > T::zero() {
                                    T::one()
                                } else {
                                    xi.exp()
                                }
                            }
                        };
                        gi * d
                    })
                    .collect();
                accumulate(local, *x, Tensor::new(xv.shape().to_vec(), data)?);
            }
            Op::Binary(op, a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (ad, bd) = (av.data(), bv.data());
                let (sa, sb) = (ad.len() == 1, bd.len() == 1);
                let n = g.len();
                if self.requires_grad(*a) {
                    let mut da = vec![T::zero(); ad.len()];
                    for k in 0..n {
                        let y = bd[if sb { 0 } else { k }];
                        let c = match op {
                            BinaryOp::Add | BinaryOp::Sub => g.data()[k],
                            BinaryOp::Mul => g.data()[k] * y,
                            BinaryOp::Div => g.data()[k] / y,
                        };
                        da[if sa { 0 } else { k }] += c;
                    }
                    accumulate(local, *a, Tensor::new(av.shape().to_vec(), da)?);
                }
                if self.requires_grad(*b) {
                    let mut db = vec![T::zero(); bd.len()];
                    for k in 0..n {
                        let x = ad[if sa { 0 } else { k }];
                        let y = bd[if sb { 0 } else { k }];
                        let c = match op {
                            BinaryOp::Add => g.data()[k],
                            BinaryOp::Sub => -g.data()[k],
                            BinaryOp::Mul => g.data()[k] * x,
                            BinaryOp::Div => -g.data()[k] * x / (y * y),
                        };
                        db[if sb { 0 } else { k }] += c;
                    }
                    accumulate(local, *b, Tensor::new(bv.shape().to_vec(), db)?);
                }
            }
            Op::MatMul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                let (n, k) = (av.shape()[0], av.shape()[1]);
                let m = bv.shape()[1];
                if self.requires_grad(*a) {
                    // dA = G · Bᵀ
                    let mut da = vec![T::zero(); n * k];
                    matmul_nt_into(g.data(), bv.data(), &mut da, n, m, k);
                    accumulate(local, *a, Tensor::new(vec![n, k], da)?);
                }
                if self.requires_grad(*b) {
                    // dB = Aᵀ · G
                    let mut db = vec![T::zero(); k * m];
                    matmul_tn_into(av.data(), g.data(), &mut db, n, k, m);
                    accumulate(local, *b, Tensor::new(vec![k, m], db)?);
                }
            }
            Op::AddRow(x, row) => {
                if self.requires_grad(*x) {
                    accumulate(local, *x, g.clone());
                }
                if self.requires_grad(*row) {
                    let rv = self.value(*row);
                    let m = rv.len();
                    let mut dr = vec![T::zero(); m];
                    if m > 0 {
                        for chunk in g.data().chunks(m) {
                            for (d, &gv) in dr.iter_mut().zip(chunk) {
                                *d += gv;
                            }
                        }
                    }
                    accumulate(local, *row, Tensor::new(rv.shape().to_vec(), dr)?);
                }
            }
            Op::Clamp(x, lo, hi) => {
                if self.requires_grad(*x) {
                    let xv = self.value(*x);
                    let data = xv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&v, &gv)| if v >= *lo && v <= *hi { gv } else { T::zero() })
                        .collect();
                    accumulate(local, *x, Tensor::new(xv.shape().to_vec(), data)?);
                }
            }
            Op::Reduce(op, x, axis) => {
                if !self.requires_grad(*x) {
                    return Ok(());
                }
                let xv = self.value(*x);
                let shape = xv.shape();
                let data = match axis {
                    None => {
                        let mut v = g.data()[0];
                        if *op == ReduceOp::Mean {
                            v /= T::from_usize(xv.len().max(1)).unwrap_or_else(T::one);
                        }
                        vec![v; xv.len()]
                    }
                    Some(ax) => {
                        let (outer, dim, inner) = split_axis(shape, *ax);
                        let scale = if *op == ReduceOp::Mean && dim > 0 {
                            T::one() / T::from_usize(dim).unwrap_or_else(T::one)
                        } else {
                            T::one()
                        };
                        let mut d = vec![T::zero(); xv.len()];
                        for o in 0..outer {
                            for j in 0..dim {
                                let base = (o * dim + j) * inner;
                                for i in 0..inner {
                                    d[base + i] = g.data()[o * inner + i] * scale;
                                }
                            }
                        }
                        d
                    }
                };
                accumulate(local, *x, Tensor::new(shape.to_vec(), data)?);
            }
            Op::SigmoidBce(l, t) => {
                let (lv, tv) = (self.value(*l), self.value(*t));
                if self.requires_grad(*l) {
                    let data = lv
                        .data()
                        .iter()
                        .zip(tv.data())
                        .zip(g.data())
                        .map(|((&li, &ti), &gi)| gi * (sigmoid(li) - ti))
                        .collect();
                    accumulate(local, *l, Tensor::new(lv.shape().to_vec(), data)?);
                }
                if self.requires_grad(*t) {
                    let data = lv
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&li, &gi)| -gi * li)
                        .collect();
                    accumulate(local, *t, Tensor::new(tv.shape().to_vec(), data)?);
                }
            }
            Op::ConcatCols(parts) => {
                let n = out.rows();
                let total = out.cols();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    if self.requires_grad(p) {
                        let mut d = Vec::with_capacity(n * w);
                        for r in 0..n {
                            let row = &g.data()[r * total..(r + 1) * total];
                            d.extend_from_slice(&row[offset..offset + w]);
                        }
                        accumulate(local, p, Tensor::new(vec![n, w], d)?);
                    }
                    offset += w;
                }
            }
        }
        Ok(())
    }
}

fn accumulate<T: Scalar>(local: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut local[v.0] {
        Some(acc) => acc.add_assign(&g),
        slot => *slot = Some(g),
    }
}

fn broadcast_shape<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Option<Vec<usize>> {
    if a.shape() == b.shape() {
        Some(a.shape().to_vec())
    } else if b.len() == 1 {
        Some(a.shape().to_vec())
    } else if a.len() == 1 {
        Some(b.shape().to_vec())
    } else {
        None
    }
}

fn split_axis(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: &[Vec<f64>]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn square_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let y = tape.square(x).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::scalar(0.0));
        let y = tape.sigmoid(x).unwrap();
        assert_eq!(tape.value(y).data(), &[0.5]);
    }

    #[test]
    fn log_exp_inverse() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(Tensor::scalar(1.7));
        let e = tape.exp(x).unwrap();
        let l = tape.log(e).unwrap();
        approx::assert_abs_diff_eq!(tape.value(l).data()[0], 1.7, epsilon = 1e-15);
    }

    #[test]
    fn domain_errors() {
        let mut tape = Tape::<f64>::new();
        let z = tape.constant(Tensor::scalar(0.0));
        assert!(matches!(tape.log(z), Err(DiffError::Domain(_))));
        let p = tape.constant(Tensor::scalar(1.5));
        assert!(matches!(tape.logit(p), Err(DiffError::Domain(_))));
        let one = tape.scalar(1.0);
        assert!(matches!(tape.div(one, z), Err(DiffError::Domain(_))));
    }

    #[test]
    fn logit_clamps_boundary() {
        let mut tape = Tape::<f64>::new();
        let p = tape.constant(Tensor::column(vec![0.0, 1.0]));
        let l = tape.logit(p).unwrap();
        let v = tape.value(l).data();
        approx::assert_relative_eq!(v[0], (1e-6f64 / (1.0 - 1e-6)).ln(), max_relative = 1e-12);
        approx::assert_relative_eq!(v[1], -v[0], max_relative = 1e-9);
    }

    #[test]
    fn reductions() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::new(vec![3], vec![1.0, 2.0, 3.0]).unwrap());
        let s = tape.sum(x, None).unwrap();
        assert_eq!(tape.value(s).data(), &[6.0]);
        let m = tape.mean(x, None).unwrap();
        tape.backward(m).unwrap();
        for &g in tape.grad(x).unwrap().data() {
            approx::assert_abs_diff_eq!(g, 1.0 / 3.0, epsilon = 1e-15);
        }
        let c = tape.constant(Tensor::full(&[4, 2], 2.5));
        let mc = tape.mean(c, None).unwrap();
        assert_eq!(tape.value(mc).data(), &[2.5]);
        assert!(matches!(tape.sum(c, Some(2)), Err(DiffError::Dimension(_))));
    }

    #[test]
    fn axis_reduction_shapes() {
        let mut tape = Tape::<f64>::new();
        let x = tape.constant(t(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]));
        let s0 = tape.sum(x, Some(0)).unwrap();
        let s1 = tape.mean(x, Some(1)).unwrap();
        assert_eq!(tape.value(s0).data(), &[5.0, 7.0, 9.0]);
        assert_eq!(tape.value(s1).data(), &[2.0, 5.0]);
    }

    #[test]
    fn broadcasting_is_restricted() {
        let mut tape = Tape::<f64>::new();
        let a = tape.constant(Tensor::zeros(&[2, 3]));
        let b = tape.constant(Tensor::zeros(&[3, 2]));
        assert!(matches!(tape.add(a, b), Err(DiffError::Dimension(_))));
        let s = tape.scalar(1.0);
        assert!(tape.add(a, s).is_ok());
    }

    #[test]
    fn non_scalar_loss_rejected() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::<f64>::zeros(&[2]));
        assert!(matches!(tape.backward(x), Err(DiffError::Contract(_))));
    }

    #[test]
    fn disconnected_param_has_no_gradient() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(2.0));
        let unused = tape.param(Tensor::scalar(5.0));
        let y = tape.square(x).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad_or_zeros(unused).data(), &[0.0]);
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(3.0));
        let y = tape.square(x).unwrap();
        tape.backward(y).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[12.0]);
        tape.zero_grad();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[6.0]);
    }

    #[test]
    fn stop_gradient_freezes_factor() {
        // d/dθ [sg(θ²)·θ] = θ² (no 2θ·θ term)
        let mut tape = Tape::new();
        let th = tape.param(Tensor::scalar(1.5));
        let f = tape.square(th).unwrap();
        let frozen = tape.stop_gradient(f);
        assert_eq!(tape.value(frozen), tape.value(f));
        let y = tape.mul(frozen, th).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(th).unwrap().data(), &[2.25]);
    }

    #[test]
    fn shared_subexpression_accumulates() {
        // y = (x·x) + (x·x) with a shared product node: dy/dx = 4x
        let mut tape = Tape::new();
        let x = tape.param(Tensor::scalar(1.25));
        let p = tape.mul(x, x).unwrap();
        let y = tape.add(p, p).unwrap();
        tape.backward(y).unwrap();
        assert_eq!(tape.grad(x).unwrap().data(), &[5.0]);
    }

    #[test]
    fn f32_tape_works() {
        let mut tape = Tape::<f32>::new();
        let x = tape.param(Tensor::scalar(0.0f32));
        let y = tape.softplus(x).unwrap();
        tape.backward(y).unwrap();
        assert!((tape.grad(x).unwrap().data()[0] - 0.5).abs() < 1e-7);
    }
}
