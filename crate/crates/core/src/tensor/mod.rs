//! Dense row-major tensors with a reverse-mode autodiff tape.
//!
//! [`Tensor`] carries the forward kernels. [`Tape`] records them for the
//! backward pass, and [`Eager`] runs the same kernels without recording, so
//! model code written against [`Graph`] serves both training and inference.

mod complex;
mod graph;
mod optim;
mod tape;

pub use complex::{CVar, ComplexTensor};
pub use graph::{Eager, Graph};
pub use optim::{AdamConfig, OptimizerKind, Optimizer, ParamId, ParamStore, Parameter};
pub use tape::{Grads, Tape, Var};

use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TensorError {
    #[error("{op}: dimension mismatch between {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("shape {shape:?} does not describe {len} elements (all dimensions must be >= 1)")]
    InvalidShape { shape: Vec<usize>, len: usize },
    #[error("{op}: domain error: {detail}")]
    Domain { op: &'static str, detail: String },
    #[error("{op}: index {index} out of range for extent {extent}")]
    Index {
        op: &'static str,
        index: usize,
        extent: usize,
    },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("non-finite gradient for parameter `{name}` (id {id})")]
    NonFinite { id: usize, name: String },
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// Row-major dense tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn new(shape: Vec<usize>, data: Vec<T>) -> Result<Self> {
        if shape.is_empty() || shape.contains(&0) || shape.iter().product::<usize>() != data.len() {
            return Err(TensorError::InvalidShape { shape, len: data.len() });
        }
        Ok(Self { shape, data })
    }

    /// `rows x cols` matrix from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        Self::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, T::zero())
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::filled(shape, T::one())
    }

    pub fn filled(shape: &[usize], value: T) -> Self {
        let len = shape.iter().product();
        assert!(len > 0, "tensor dimensions must be >= 1, got {shape:?}");
        Self {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    /// 1x1 tensor.
    pub fn scalar(value: T) -> Self {
        Self {
            shape: vec![1, 1],
            data: vec![value],
        }
    }

    pub fn eye(n: usize) -> Self {
        let mut t = Self::zeros(&[n, n]);
        for i in 0..n {
            t.data[i * n + i] = T::one();
        }
        t
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        assert!(rows > 0 && cols > 0, "tensor dimensions must be >= 1");
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self {
            shape: vec![rows, cols],
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [r, c] => Ok((*r, *c)),
            _ => Err(TensorError::Precondition(format!(
                "expected a rank-2 tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn get(&self, r: usize, c: usize) -> T {
        let cols = self.shape[self.shape.len() - 1];
        self.data[r * cols + c]
    }

    /// The single element of a 1-element tensor.
    pub fn item(&self) -> Result<T> {
        if self.data.len() == 1 {
            Ok(self.data[0])
        } else {
            Err(TensorError::Precondition(format!(
                "item() on tensor of shape {:?}",
                self.shape
            )))
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn sum(&self) -> T {
        self.data.iter().copied().sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, x| m.max(x.abs()))
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| crate::scalar::lit(crate::scalar::to_f64(v))).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Self> {
        if self.shape != other.shape {
            return Err(shape_err(op, self, other));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.shape, other.shape, "add_assign shape mismatch");
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape.to_vec(), self.data.clone())
    }

    pub fn transpose(&self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        let mut out = Vec::with_capacity(r * c);
        for j in 0..c {
            for i in 0..r {
                out.push(self.data[i * c + j]);
            }
        }
        Ok(Self {
            shape: vec![c, r],
            data: out,
        })
    }

    /// Standard matrix product.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let (r, k) = self.dims2()?;
        let (k2, c) = other.dims2()?;
        if k != k2 {
            return Err(shape_err("matmul", self, other));
        }
        let mut out = vec![T::zero(); r * c];
        T::gemm(r, k, c, T::one(), &self.data, k as isize, 1, &other.data, c as isize, 1, T::zero(), &mut out, c as isize, 1);
        Ok(Self {
            shape: vec![r, c],
            data: out,
        })
    }

    /// `self^T * other` without materializing the transpose.
    pub fn matmul_tn(&self, other: &Self) -> Result<Self> {
        let (k, r) = self.dims2()?;
        let (k2, c) = other.dims2()?;
        if k != k2 {
            return Err(shape_err("matmul_tn", self, other));
        }
        let mut out = vec![T::zero(); r * c];
        T::gemm(r, k, c, T::one(), &self.data, 1, r as isize, &other.data, c as isize, 1, T::zero(), &mut out, c as isize, 1);
        Ok(Self {
            shape: vec![r, c],
            data: out,
        })
    }

    /// `self * other^T` without materializing the transpose.
    pub fn matmul_nt(&self, other: &Self) -> Result<Self> {
        let (r, k) = self.dims2()?;
        let (c, k2) = other.dims2()?;
        if k != k2 {
            return Err(shape_err("matmul_nt", self, other));
        }
        let mut out = vec![T::zero(); r * c];
        T::gemm(r, k, c, T::one(), &self.data, k as isize, 1, &other.data, 1, k as isize, T::zero(), &mut out, c as isize, 1);
        Ok(Self {
            shape: vec![r, c],
            data: out,
        })
    }

    /// Adds a `1 x c` row to every row of an `r x c` matrix.
    pub fn add_row(&self, row: &Self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        if row.shape != [1, c] {
            return Err(shape_err("add_row", self, row));
        }
        let mut out = self.data.clone();
        for i in 0..r {
            for (o, &b) in out[i * c..(i + 1) * c].iter_mut().zip(&row.data) {
                *o += b;
            }
        }
        Ok(Self {
            shape: vec![r, c],
            data: out,
        })
    }

    /// Column sums as a `1 x c` row.
    pub fn sum_rows(&self) -> Result<Self> {
        let (r, c) = self.dims2()?;
        let mut out = vec![T::zero(); c];
        for i in 0..r {
            for (o, &x) in out.iter_mut().zip(&self.data[i * c..(i + 1) * c]) {
                *o += x;
            }
        }
        Ok(Self {
            shape: vec![1, c],
            data: out,
        })
    }

    /// Row mean as a `1 x c` row.
    pub fn mean_rows(&self) -> Result<Self> {
        let (r, _) = self.dims2()?;
        self.group_mean_rows(&[(0..r).collect()])
    }

    /// One output row per group: the elementwise mean of the listed rows.
    ///
    /// Each column is summed in ascending value order, so the result is
    /// bitwise independent of the order of rows within a group.
    pub fn group_mean_rows(&self, groups: &[Vec<usize>]) -> Result<Self> {
        let (r, c) = self.dims2()?;
        let mut out = Vec::with_capacity(groups.len() * c);
        let mut column = Vec::new();
        for g in groups {
            if g.is_empty() {
                return Err(TensorError::Precondition("group_mean_rows: empty group".into()));
            }
            check_indices("group_mean_rows", g, r)?;
            let n = T::from_usize(g.len()).expect("group size representable");
            for j in 0..c {
                column.clear();
                column.extend(g.iter().map(|&i| self.data[i * c + j]));
                column.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                let s: T = column.iter().copied().sum();
                out.push(s / n);
            }
        }
        Ok(Self {
            shape: vec![groups.len(), c],
            data: out,
        })
    }

    /// One output row per group: the elementwise max of the listed rows.
    ///
    /// Also returns, per output element, the source row of the first
    /// maximum encountered in group order.
    pub fn group_max_rows(&self, groups: &[Vec<usize>]) -> Result<(Self, Vec<usize>)> {
        let (r, c) = self.dims2()?;
        let mut out = Vec::with_capacity(groups.len() * c);
        let mut arg = Vec::with_capacity(groups.len() * c);
        for g in groups {
            if g.is_empty() {
                return Err(TensorError::Precondition("max over an empty set".into()));
            }
            check_indices("group_max_rows", g, r)?;
            for j in 0..c {
                let mut best = g[0];
                let mut best_v = self.data[best * c + j];
                for &i in &g[1..] {
                    let v = self.data[i * c + j];
                    if v > best_v {
                        best = i;
                        best_v = v;
                    }
                }
                out.push(best_v);
                arg.push(best);
            }
        }
        Ok((
            Self {
                shape: vec![groups.len(), c],
                data: out,
            },
            arg,
        ))
    }

    pub fn gather_rows(&self, idx: &[usize]) -> Result<Self> {
        let (r, c) = self.dims2()?;
        check_indices("gather_rows", idx, r)?;
        if idx.is_empty() {
            return Err(TensorError::Precondition("gather_rows: empty index list".into()));
        }
        let mut out = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            out.extend_from_slice(&self.data[i * c..(i + 1) * c]);
        }
        Ok(Self {
            shape: vec![idx.len(), c],
            data: out,
        })
    }

    pub fn gather_cols(&self, idx: &[usize]) -> Result<Self> {
        let (r, c) = self.dims2()?;
        check_indices("gather_cols", idx, c)?;
        if idx.is_empty() {
            return Err(TensorError::Precondition("gather_cols: empty index list".into()));
        }
        let mut out = Vec::with_capacity(idx.len() * r);
        for i in 0..r {
            for &j in idx {
                out.push(self.data[i * c + j]);
            }
        }
        Ok(Self {
            shape: vec![r, idx.len()],
            data: out,
        })
    }

    pub fn concat_rows(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Precondition("concat_rows: no inputs".into()))?;
        let (_, c) = first.dims2()?;
        let mut rows = 0;
        let mut data = Vec::new();
        for p in parts {
            let (pr, pc) = p.dims2()?;
            if pc != c {
                return Err(shape_err("concat_rows", first, p));
            }
            rows += pr;
            data.extend_from_slice(&p.data);
        }
        Ok(Self {
            shape: vec![rows, c],
            data,
        })
    }

    pub fn concat_cols(parts: &[&Self]) -> Result<Self> {
        let first = parts
            .first()
            .ok_or_else(|| TensorError::Precondition("concat_cols: no inputs".into()))?;
        let (r, _) = first.dims2()?;
        let mut cols = 0;
        for p in parts {
            let (pr, pc) = p.dims2()?;
            if pr != r {
                return Err(shape_err("concat_cols", first, p));
            }
            cols += pc;
        }
        let mut data = Vec::with_capacity(r * cols);
        for i in 0..r {
            for p in parts {
                let pc = p.shape[1];
                data.extend_from_slice(&p.data[i * pc..(i + 1) * pc]);
            }
        }
        Ok(Self {
            shape: vec![r, cols],
            data,
        })
    }

    /// Elementwise max over a nonempty set of equal-shape tensors, with the
    /// index of the first maximizing member per element.
    pub fn max_over_set(set: &[&Self]) -> Result<(Self, Vec<usize>)> {
        let first = set
            .first()
            .ok_or_else(|| TensorError::Precondition("max over an empty set".into()))?;
        let mut out = first.data.clone();
        let mut arg = vec![0usize; out.len()];
        for (k, t) in set.iter().enumerate().skip(1) {
            if t.shape != first.shape {
                return Err(shape_err("max_over_set", first, t));
            }
            for (e, &v) in t.data.iter().enumerate() {
                if v > out[e] {
                    out[e] = v;
                    arg[e] = k;
                }
            }
        }
        Ok((
            Self {
                shape: first.shape.clone(),
                data: out,
            },
            arg,
        ))
    }
}

fn check_indices(op: &'static str, idx: &[usize], extent: usize) -> Result<()> {
    match idx.iter().find(|&&i| i >= extent) {
        Some(&index) => Err(TensorError::Index { op, index, extent }),
        None => Ok(()),
    }
}

pub(crate) fn shape_err<T>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> TensorError {
    TensorError::Shape {
        op,
        lhs: a.shape.clone(),
        rhs: b.shape.clone(),
    }
}
