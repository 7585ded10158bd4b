use crate::linalg::CMatrix;
use crate::scalar::{lit, Scalar};

use super::complex::{CVar, ComplexTensor};
use super::optim::{ParamId, ParamStore};
use super::{shape_err, Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op<T> {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Relu(Var),
    Exp(Var),
    Log1p(Var),
    Recip(Var),
    Sqrt(Var),
    Cos(Var),
    Sin(Var),
    MaxPair(Var, Var),
    Sum(Var),
    GroupMean(Var, Vec<Vec<usize>>),
    GroupMax(Var, Vec<usize>),
    MaxOverSet(Vec<Var>, Vec<usize>),
    GatherRows(Var, Vec<usize>),
    GatherCols(Var, Vec<usize>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Reshape(Var),
    Transpose(Var),
    QuadInv {
        d: CVar,
        v: Option<CVar>,
        x: ComplexTensor<T>,
        c: Option<ComplexTensor<T>>,
    },
}

#[derive(Debug, Clone)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
}

/// Linear record of primitive operations.
///
/// Nodes are appended after their inputs, so walking the node list backward
/// is a reverse topological order.
#[derive(Debug, Clone, Default)]
pub struct Tape<T> {
    nodes: Vec<Node<T>>,
}

/// Gradients of one scalar output with respect to every recorded node.
#[derive(Debug, Clone)]
pub struct Grads<T> {
    grads: Vec<Option<Tensor<T>>>,
    params: Vec<(usize, ParamId)>,
}

impl<T: Scalar> Grads<T> {
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Adds the gradient of every parameter node into the store's `grad`.
    pub fn accumulate_into(&self, store: &mut ParamStore<T>) {
        for &(node, id) in &self.params {
            if let Some(g) = &self.grads[node] {
                store.get_mut(id).grad.add_assign(g);
            }
        }
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn unary(&mut self, x: Var, value: Tensor<T>, op: Op<T>) -> Var {
        let rg = self.rg(x);
        self.push(value, op, rg)
    }

    /// A value that never receives a gradient.
    pub fn constant(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// A free input that receives a gradient (used for gradient checks).
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Leaf, true)
    }

    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> Var {
        let value = store.get(id).value.clone();
        self.push(value, Op::Param(id), true)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    fn broadcast_binary(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() == tb.shape() {
            ta.zip_map(tb, op, f)
        } else if tb.len() == 1 {
            let s = tb.data()[0];
            Ok(ta.map(|x| f(x, s)))
        } else if ta.len() == 1 {
            let s = ta.data()[0];
            Ok(tb.map(|x| f(s, x)))
        } else {
            Err(shape_err(op, ta, tb))
        }
    }

    /// Elementwise sum; either operand may be a 1-element scalar.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.broadcast_binary(a, b, "add", |x, y| x + y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Add(a, b), rg))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.broadcast_binary(a, b, "sub", |x, y| x - y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Sub(a, b), rg))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.broadcast_binary(a, b, "mul", |x, y| x * y)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Mul(a, b), rg))
    }

    /// Adds a `1 x c` bias row to each row of `x`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let value = self.value(x).add_row(self.value(row))?;
        let rg = self.rg(x) || self.rg(row);
        Ok(self.push(value, Op::AddRow(x, row), rg))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v * c);
        self.unary(x, value, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: T) -> Var {
        let value = self.value(x).map(|v| v + c);
        self.unary(x, value, Op::AddScalar(x))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -T::one())
    }

    /// ReLU with `relu'(0) = 0`.
    pub fn relu(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| if v > T::zero() { v } else { T::zero() });
        self.unary(x, value, Op::Relu(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.exp());
        self.unary(x, value, Op::Exp(x))
    }

    pub fn log1p(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if let Some(bad) = t.data().iter().find(|&&v| !(v > -T::one())) {
            return Err(TensorError::Domain {
                op: "log1p",
                detail: format!("argument {bad} <= -1"),
            });
        }
        let value = t.map(|v| v.ln_1p());
        Ok(self.unary(x, value, Op::Log1p(x)))
    }

    pub fn reciprocal(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.data().iter().any(|&v| v == T::zero()) {
            return Err(TensorError::Domain {
                op: "reciprocal",
                detail: "division by zero".into(),
            });
        }
        let value = t.map(|v| v.recip());
        Ok(self.unary(x, value, Op::Recip(x)))
    }

    pub fn sqrt(&mut self, x: Var) -> Result<Var> {
        let t = self.value(x);
        if t.data().iter().any(|&v| v < T::zero()) {
            return Err(TensorError::Domain {
                op: "sqrt",
                detail: "negative argument".into(),
            });
        }
        let value = t.map(|v| v.sqrt());
        Ok(self.unary(x, value, Op::Sqrt(x)))
    }

    pub fn cos(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.cos());
        self.unary(x, value, Op::Cos(x))
    }

    pub fn sin(&mut self, x: Var) -> Var {
        let value = self.value(x).map(|v| v.sin());
        self.unary(x, value, Op::Sin(x))
    }

    /// Elementwise max of two tensors; ties route the gradient to `a`.
    pub fn max_pair(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).zip_map(self.value(b), "max_pair", |x, y| if y > x { y } else { x })?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MaxPair(a, b), rg))
    }

    /// Sum of all elements as a 1x1 tensor.
    pub fn sum(&mut self, x: Var) -> Var {
        let value = Tensor::scalar(self.value(x).sum());
        self.unary(x, value, Op::Sum(x))
    }

    pub fn mean_rows(&mut self, x: Var) -> Result<Var> {
        let (r, _) = self.value(x).dims2()?;
        self.group_mean_rows(x, vec![(0..r).collect()])
    }

    pub fn group_mean_rows(&mut self, x: Var, groups: Vec<Vec<usize>>) -> Result<Var> {
        let value = self.value(x).group_mean_rows(&groups)?;
        Ok(self.unary(x, value, Op::GroupMean(x, groups)))
    }

    /// Per-group elementwise max over rows of `x` (see [`Tensor::group_max_rows`]).
    pub fn group_max_rows(&mut self, x: Var, groups: &[Vec<usize>]) -> Result<Var> {
        let (value, arg) = self.value(x).group_max_rows(groups)?;
        Ok(self.unary(x, value, Op::GroupMax(x, arg)))
    }

    /// Elementwise max over a nonempty set of equal-shape tensors.
    pub fn max_over_set(&mut self, set: &[Var]) -> Result<Var> {
        let refs: Vec<&Tensor<T>> = set.iter().map(|&v| self.value(v)).collect();
        let (value, arg) = Tensor::max_over_set(&refs)?;
        let rg = set.iter().any(|&v| self.rg(v));
        Ok(self.push(value, Op::MaxOverSet(set.to_vec(), arg), rg))
    }

    pub fn gather_rows(&mut self, x: Var, idx: Vec<usize>) -> Result<Var> {
        let value = self.value(x).gather_rows(&idx)?;
        Ok(self.unary(x, value, Op::GatherRows(x, idx)))
    }

    pub fn gather_cols(&mut self, x: Var, idx: Vec<usize>) -> Result<Var> {
        let value = self.value(x).gather_cols(&idx)?;
        Ok(self.unary(x, value, Op::GatherCols(x, idx)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let refs: Vec<&Tensor<T>> = parts.iter().map(|&v| self.value(v)).collect();
        let value = Tensor::concat_rows(&refs)?;
        let rg = parts.iter().any(|&v| self.rg(v));
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let refs: Vec<&Tensor<T>> = parts.iter().map(|&v| self.value(v)).collect();
        let value = Tensor::concat_cols(&refs)?;
        let rg = parts.iter().any(|&v| self.rg(v));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let value = self.value(x).reshape(shape)?;
        Ok(self.unary(x, value, Op::Reshape(x)))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let value = self.value(x).transpose()?;
        Ok(self.unary(x, value, Op::Transpose(x)))
    }

    /// Hermitian quadratic form `Re{d^H (sigma2 I + V V^H)^{-1} d}`.
    ///
    /// `d` is a complex `n x 1` column and `v` an optional complex `n x k`
    /// matrix of interference columns. This is the MMSE-receiver SINR of a
    /// multi-antenna user.
    pub fn quad_inv(&mut self, d: CVar, v: Option<CVar>, sigma2: T) -> Result<Var> {
        let dm = CMatrix::from_parts(self.value(d.re), self.value(d.im))?;
        let vm = match v {
            Some(v) => Some(CMatrix::from_parts(self.value(v.re), self.value(v.im))?),
            None => None,
        };
        let (gamma, x) = crate::linalg::quad_inv_form(&dm, vm.as_ref(), sigma2)
            .map_err(|e| TensorError::Precondition(format!("quad_inv: {e}")))?;
        let c = vm.as_ref().map(|vm| ComplexTensor::from(&vm.hermitian().matmul(&x).expect("conformant")));
        let rg = self.rg(d.re) || self.rg(d.im) || v.is_some_and(|v| self.rg(v.re) || self.rg(v.im));
        let op = Op::QuadInv {
            d,
            v,
            x: ComplexTensor::from(&x),
            c,
        };
        Ok(self.push(Tensor::scalar(gamma), op, rg))
    }

    /// Reverse sweep from a 1-element output.
    pub fn backward(&self, out: Var) -> Result<Grads<T>> {
        let out_value = self.value(out);
        if out_value.len() != 1 {
            return Err(TensorError::Precondition(format!(
                "backward requires a scalar output, got shape {:?}",
                out_value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; self.nodes.len()];
        grads[out.0] = Some(Tensor::ones(out_value.shape()));
        for idx in (0..=out.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads)?;
            grads[idx] = Some(g);
        }
        let params = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| match n.op {
                Op::Param(id) => Some((i, id)),
                _ => None,
            })
            .collect();
        Ok(Grads { grads, params })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
        if !self.rg(v) {
            return;
        }
        let shape = self.value(v).shape();
        debug_assert_eq!(shape, g.shape(), "gradient shape mismatch");
        match &mut grads[v.0] {
            Some(acc) => acc.add_assign(&g),
            slot @ None => *slot = Some(g),
        }
    }

    /// Reduces a broadcast gradient back to the operand's shape.
    fn unbroadcast(&self, v: Var, g: &Tensor<T>) -> Tensor<T> {
        let shape = self.value(v).shape();
        if shape == g.shape() {
            g.clone()
        } else {
            Tensor::filled(shape, g.sum())
        }
    }

    fn propagate(&self, idx: usize, g: &Tensor<T>, grads: &mut [Option<Tensor<T>>]) -> Result<()> {
        let node = &self.nodes[idx];
        let y = &node.value;
        match &node.op {
            Op::Leaf | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    self.accumulate(grads, *a, g.matmul_nt(self.value(*b))?);
                }
                if self.rg(*b) {
                    self.accumulate(grads, *b, self.value(*a).matmul_tn(g)?);
                }
            }
            Op::Add(a, b) => {
                self.accumulate(grads, *a, self.unbroadcast(*a, g));
                self.accumulate(grads, *b, self.unbroadcast(*b, g));
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, self.unbroadcast(*a, g));
                let gb = self.unbroadcast(*b, g).map(|x| -x);
                self.accumulate(grads, *b, gb);
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                if self.rg(*a) {
                    let full = mul_broadcast(g, tb);
                    self.accumulate(grads, *a, self.unbroadcast(*a, &full));
                }
                if self.rg(*b) {
                    let full = mul_broadcast(g, ta);
                    self.accumulate(grads, *b, self.unbroadcast(*b, &full));
                }
            }
            Op::AddRow(x, row) => {
                self.accumulate(grads, *x, g.clone());
                if self.rg(*row) {
                    self.accumulate(grads, *row, g.sum_rows()?);
                }
            }
            Op::Scale(x, c) => self.accumulate(grads, *x, g.map(|v| v * *c)),
            Op::AddScalar(x) => self.accumulate(grads, *x, g.clone()),
            Op::Relu(x) => {
                let gx = g.zip_map(self.value(*x), "relu", |gv, xv| if xv > T::zero() { gv } else { T::zero() })?;
                self.accumulate(grads, *x, gx);
            }
            Op::Exp(x) => self.accumulate(grads, *x, g.zip_map(y, "exp", |gv, yv| gv * yv)?),
            Op::Log1p(x) => {
                let gx = g.zip_map(self.value(*x), "log1p", |gv, xv| gv / (T::one() + xv))?;
                self.accumulate(grads, *x, gx);
            }
            Op::Recip(x) => self.accumulate(grads, *x, g.zip_map(y, "reciprocal", |gv, yv| -gv * yv * yv)?),
            Op::Sqrt(x) => {
                let half: T = lit(0.5);
                let gx = g.zip_map(y, "sqrt", |gv, yv| if yv > T::zero() { gv * half / yv } else { T::zero() })?;
                self.accumulate(grads, *x, gx);
            }
            Op::Cos(x) => self.accumulate(grads, *x, g.zip_map(self.value(*x), "cos", |gv, xv| -gv * xv.sin())?),
            Op::Sin(x) => self.accumulate(grads, *x, g.zip_map(self.value(*x), "sin", |gv, xv| gv * xv.cos())?),
            Op::MaxPair(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let mut ga = Tensor::zeros(ta.shape());
                let mut gb = Tensor::zeros(tb.shape());
                for e in 0..g.len() {
                    if tb.data()[e] > ta.data()[e] {
                        gb.data_mut()[e] = g.data()[e];
                    } else {
                        ga.data_mut()[e] = g.data()[e];
                    }
                }
                self.accumulate(grads, *a, ga);
                self.accumulate(grads, *b, gb);
            }
            Op::Sum(x) => {
                let s = g.data()[0];
                self.accumulate(grads, *x, Tensor::filled(self.value(*x).shape(), s));
            }
            Op::GroupMean(x, groups) => {
                let tx = self.value(*x);
                let (_, c) = tx.dims2()?;
                let mut gx = Tensor::zeros(tx.shape());
                for (gi, group) in groups.iter().enumerate() {
                    let n: T = T::from_usize(group.len()).expect("group size");
                    for &r in group {
                        for j in 0..c {
                            gx.data_mut()[r * c + j] += g.data()[gi * c + j] / n;
                        }
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::GroupMax(x, arg) => {
                let tx = self.value(*x);
                let (_, c) = tx.dims2()?;
                let mut gx = Tensor::zeros(tx.shape());
                for (e, &src) in arg.iter().enumerate() {
                    gx.data_mut()[src * c + e % c] += g.data()[e];
                }
                self.accumulate(grads, *x, gx);
            }
            Op::MaxOverSet(set, arg) => {
                for (k, &v) in set.iter().enumerate() {
                    if !self.rg(v) {
                        continue;
                    }
                    let mut gv = Tensor::zeros(self.value(v).shape());
                    for (e, &src) in arg.iter().enumerate() {
                        if src == k {
                            gv.data_mut()[e] = g.data()[e];
                        }
                    }
                    self.accumulate(grads, v, gv);
                }
            }
            Op::GatherRows(x, idx) => {
                let tx = self.value(*x);
                let (_, c) = tx.dims2()?;
                let mut gx = Tensor::zeros(tx.shape());
                for (o, &i) in idx.iter().enumerate() {
                    for j in 0..c {
                        gx.data_mut()[i * c + j] += g.data()[o * c + j];
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::GatherCols(x, idx) => {
                let tx = self.value(*x);
                let (r, c) = tx.dims2()?;
                let k = idx.len();
                let mut gx = Tensor::zeros(tx.shape());
                for i in 0..r {
                    for (o, &j) in idx.iter().enumerate() {
                        gx.data_mut()[i * c + j] += g.data()[i * k + o];
                    }
                }
                self.accumulate(grads, *x, gx);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let n = self.value(p).len();
                    let gp = Tensor::new(self.value(p).shape().to_vec(), g.data()[offset..offset + n].to_vec())?;
                    offset += n;
                    self.accumulate(grads, p, gp);
                }
            }
            Op::ConcatCols(parts) => {
                let (r, total) = g.dims2()?;
                let mut offset = 0;
                for &p in parts {
                    let (_, pc) = self.value(p).dims2()?;
                    let mut data = Vec::with_capacity(r * pc);
                    for i in 0..r {
                        data.extend_from_slice(&g.data()[i * total + offset..i * total + offset + pc]);
                    }
                    offset += pc;
                    self.accumulate(grads, p, Tensor::matrix(r, pc, data)?);
                }
            }
            Op::Reshape(x) => {
                let gx = g.reshape(self.value(*x).shape())?;
                self.accumulate(grads, *x, gx);
            }
            Op::Transpose(x) => self.accumulate(grads, *x, g.transpose()?),
            Op::QuadInv { d, v, x, c } => {
                // d gamma = 2 Re{x^H dd} - 2 Re{x^H dV V^H x}, with x = R^{-1} d.
                let s = g.data()[0];
                let two: T = lit(2.0);
                self.accumulate(grads, d.re, x.re.map(|e| two * s * e));
                self.accumulate(grads, d.im, x.im.map(|e| two * s * e));
                if let (Some(v), Some(c)) = (v, c) {
                    let n = x.re.len();
                    let k = c.re.len();
                    let mut gre = Vec::with_capacity(n * k);
                    let mut gim = Vec::with_capacity(n * k);
                    for r in 0..n {
                        let (xr, xi) = (x.re.data()[r], x.im.data()[r]);
                        for col in 0..k {
                            let (cr, ci) = (c.re.data()[col], c.im.data()[col]);
                            // -2 s * x_r * conj(c_col)
                            gre.push(-two * s * (xr * cr + xi * ci));
                            gim.push(-two * s * (xi * cr - xr * ci));
                        }
                    }
                    self.accumulate(grads, v.re, Tensor::matrix(n, k, gre)?);
                    self.accumulate(grads, v.im, Tensor::matrix(n, k, gim)?);
                }
            }
        }
        Ok(())
    }
}

fn mul_broadcast<T: Scalar>(g: &Tensor<T>, other: &Tensor<T>) -> Tensor<T> {
    if other.len() == 1 {
        let s = other.data()[0];
        g.map(|x| x * s)
    } else if g.shape() == other.shape() {
        g.zip_map(other, "mul", |a, b| a * b).expect("same shape")
    } else {
        // g is the 1-element side broadcast against `other`
        let s = g.data()[0];
        other.map(|x| x * s)
    }
}
