use std::borrow::Cow;

use crate::scalar::Scalar;

use super::{ParamId, ParamStore, Result, Tape, Tensor, TensorError, Var};

/// The subset of tensor operations the beamformer network is built from.
///
/// [`Tape`] records every call for differentiation; [`Eager`] only computes
/// values. Both run the same [`Tensor`] kernels, so the two paths agree
/// bitwise.
pub trait Graph<'s, T: Scalar> {
    type Node: Clone;

    fn constant(&mut self, t: Tensor<T>) -> Self::Node;
    fn param(&mut self, store: &'s ParamStore<T>, id: ParamId) -> Self::Node;
    fn value<'a>(&'a self, n: &'a Self::Node) -> &'a Tensor<T>;

    fn matmul(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn add(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn sub(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn mul(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node>;
    fn add_row(&mut self, x: &Self::Node, row: &Self::Node) -> Result<Self::Node>;
    fn scale(&mut self, x: &Self::Node, c: T) -> Self::Node;
    fn relu(&mut self, x: &Self::Node) -> Self::Node;
    fn cos(&mut self, x: &Self::Node) -> Self::Node;
    fn sin(&mut self, x: &Self::Node) -> Self::Node;
    fn sqrt(&mut self, x: &Self::Node) -> Result<Self::Node>;
    fn reciprocal(&mut self, x: &Self::Node) -> Result<Self::Node>;
    fn sum(&mut self, x: &Self::Node) -> Self::Node;
    fn gather_rows(&mut self, x: &Self::Node, idx: Vec<usize>) -> Result<Self::Node>;
    fn gather_cols(&mut self, x: &Self::Node, idx: Vec<usize>) -> Result<Self::Node>;
    fn concat_rows(&mut self, parts: &[Self::Node]) -> Result<Self::Node>;
    fn concat_cols(&mut self, parts: &[Self::Node]) -> Result<Self::Node>;
    fn reshape(&mut self, x: &Self::Node, shape: &[usize]) -> Result<Self::Node>;
    fn transpose(&mut self, x: &Self::Node) -> Result<Self::Node>;
    fn group_mean_rows(&mut self, x: &Self::Node, groups: Vec<Vec<usize>>) -> Result<Self::Node>;
    fn group_max_rows(&mut self, x: &Self::Node, groups: &[Vec<usize>]) -> Result<Self::Node>;
}

impl<'s, T: Scalar> Graph<'s, T> for Tape<T> {
    type Node = Var;

    fn constant(&mut self, t: Tensor<T>) -> Var {
        Tape::constant(self, t)
    }
    fn param(&mut self, store: &'s ParamStore<T>, id: ParamId) -> Var {
        Tape::param(self, store, id)
    }
    fn value<'a>(&'a self, n: &'a Var) -> &'a Tensor<T> {
        Tape::value(self, *n)
    }
    fn matmul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::matmul(self, *a, *b)
    }
    fn add(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::add(self, *a, *b)
    }
    fn sub(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::sub(self, *a, *b)
    }
    fn mul(&mut self, a: &Var, b: &Var) -> Result<Var> {
        Tape::mul(self, *a, *b)
    }
    fn add_row(&mut self, x: &Var, row: &Var) -> Result<Var> {
        Tape::add_row(self, *x, *row)
    }
    fn scale(&mut self, x: &Var, c: T) -> Var {
        Tape::scale(self, *x, c)
    }
    fn relu(&mut self, x: &Var) -> Var {
        Tape::relu(self, *x)
    }
    fn cos(&mut self, x: &Var) -> Var {
        Tape::cos(self, *x)
    }
    fn sin(&mut self, x: &Var) -> Var {
        Tape::sin(self, *x)
    }
    fn sqrt(&mut self, x: &Var) -> Result<Var> {
        Tape::sqrt(self, *x)
    }
    fn reciprocal(&mut self, x: &Var) -> Result<Var> {
        Tape::reciprocal(self, *x)
    }
    fn sum(&mut self, x: &Var) -> Var {
        Tape::sum(self, *x)
    }
    fn gather_rows(&mut self, x: &Var, idx: Vec<usize>) -> Result<Var> {
        Tape::gather_rows(self, *x, idx)
    }
    fn gather_cols(&mut self, x: &Var, idx: Vec<usize>) -> Result<Var> {
        Tape::gather_cols(self, *x, idx)
    }
    fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        Tape::concat_rows(self, parts)
    }
    fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        Tape::concat_cols(self, parts)
    }
    fn reshape(&mut self, x: &Var, shape: &[usize]) -> Result<Var> {
        Tape::reshape(self, *x, shape)
    }
    fn transpose(&mut self, x: &Var) -> Result<Var> {
        Tape::transpose(self, *x)
    }
    fn group_mean_rows(&mut self, x: &Var, groups: Vec<Vec<usize>>) -> Result<Var> {
        Tape::group_mean_rows(self, *x, groups)
    }
    fn group_max_rows(&mut self, x: &Var, groups: &[Vec<usize>]) -> Result<Var> {
        Tape::group_max_rows(self, *x, groups)
    }
}

/// Value-only evaluation; parameters are borrowed, never copied.
#[derive(Debug, Default, Clone, Copy)]
pub struct Eager;

type Node<'s, T> = Cow<'s, Tensor<T>>;

fn bin<'s, T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, op: &'static str, f: impl Fn(T, T) -> T) -> Result<Node<'s, T>> {
    let out = if a.shape() == b.shape() {
        a.zip_map(b, op, f)?
    } else if b.len() == 1 {
        let s = b.data()[0];
        a.map(|x| f(x, s))
    } else if a.len() == 1 {
        let s = a.data()[0];
        b.map(|x| f(s, x))
    } else {
        return Err(super::shape_err(op, a, b));
    };
    Ok(Cow::Owned(out))
}

impl<'s, T: Scalar> Graph<'s, T> for Eager {
    type Node = Cow<'s, Tensor<T>>;

    fn constant(&mut self, t: Tensor<T>) -> Self::Node {
        Cow::Owned(t)
    }
    fn param(&mut self, store: &'s ParamStore<T>, id: ParamId) -> Self::Node {
        Cow::Borrowed(&store.get(id).value)
    }
    fn value<'a>(&'a self, n: &'a Self::Node) -> &'a Tensor<T> {
        n.as_ref()
    }
    fn matmul(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        Ok(Cow::Owned(a.matmul(b)?))
    }
    fn add(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        bin(a, b, "add", |x, y| x + y)
    }
    fn sub(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        bin(a, b, "sub", |x, y| x - y)
    }
    fn mul(&mut self, a: &Self::Node, b: &Self::Node) -> Result<Self::Node> {
        bin(a, b, "mul", |x, y| x * y)
    }
    fn add_row(&mut self, x: &Self::Node, row: &Self::Node) -> Result<Self::Node> {
        Ok(Cow::Owned(x.add_row(row)?))
    }
    fn scale(&mut self, x: &Self::Node, c: T) -> Self::Node {
        Cow::Owned(x.map(|v| v * c))
    }
    fn relu(&mut self, x: &Self::Node) -> Self::Node {
        Cow::Owned(x.map(|v| if v > T::zero() { v } else { T::zero() }))
    }
    fn cos(&mut self, x: &Self::Node) -> Self::Node {
        Cow::Owned(x.map(|v| v.cos()))
    }
    fn sin(&mut self, x: &Self::Node) -> Self::Node {
        Cow::Owned(x.map(|v| v.sin()))
    }
    fn sqrt(&mut self, x: &Self::Node) -> Result<Self::Node> {
        if x.data().iter().any(|&v| v < T::zero()) {
            return Err(TensorError::Domain {
                op: "sqrt",
                detail: "negative argument".into(),
            });
        }
        Ok(Cow::Owned(x.map(|v| v.sqrt())))
    }
    fn reciprocal(&mut self, x: &Self::Node) -> Result<Self::Node> {
        if x.data().iter().any(|&v| v == T::zero()) {
            return Err(TensorError::Domain {
                op: "reciprocal",
                detail: "division by zero".into(),
            });
        }
        Ok(Cow::Owned(x.map(|v| v.recip())))
    }
    fn sum(&mut self, x: &Self::Node) -> Self::Node {
        Cow::Owned(Tensor::scalar(x.sum()))
    }
    fn gather_rows(&mut self, x: &Self::Node, idx: Vec<usize>) -> Result<Self::Node> {
        Ok(Cow::Owned(x.gather_rows(&idx)?))
    }
    fn gather_cols(&mut self, x: &Self::Node, idx: Vec<usize>) -> Result<Self::Node> {
        Ok(Cow::Owned(x.gather_cols(&idx)?))
    }
    fn concat_rows(&mut self, parts: &[Self::Node]) -> Result<Self::Node> {
        let refs: Vec<&Tensor<T>> = parts.iter().map(|p| p.as_ref()).collect();
        Ok(Cow::Owned(Tensor::concat_rows(&refs)?))
    }
    fn concat_cols(&mut self, parts: &[Self::Node]) -> Result<Self::Node> {
        let refs: Vec<&Tensor<T>> = parts.iter().map(|p| p.as_ref()).collect();
        Ok(Cow::Owned(Tensor::concat_cols(&refs)?))
    }
    fn reshape(&mut self, x: &Self::Node, shape: &[usize]) -> Result<Self::Node> {
        Ok(Cow::Owned(x.reshape(shape)?))
    }
    fn transpose(&mut self, x: &Self::Node) -> Result<Self::Node> {
        Ok(Cow::Owned(x.transpose()?))
    }
    fn group_mean_rows(&mut self, x: &Self::Node, groups: Vec<Vec<usize>>) -> Result<Self::Node> {
        Ok(Cow::Owned(x.group_mean_rows(&groups)?))
    }
    fn group_max_rows(&mut self, x: &Self::Node, groups: &[Vec<usize>]) -> Result<Self::Node> {
        Ok(Cow::Owned(x.group_max_rows(groups)?.0))
    }
}
