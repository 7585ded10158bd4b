use crate::scalar::Scalar;

use super::{shape_err, Result, Tape, Tensor, Var};

/// Complex tensor stored as separate real and imaginary parts.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor<T> {
    pub re: Tensor<T>,
    pub im: Tensor<T>,
}

impl<T: Scalar> ComplexTensor<T> {
    pub fn new(re: Tensor<T>, im: Tensor<T>) -> Result<Self> {
        if re.shape() != im.shape() {
            return Err(shape_err("complex", &re, &im));
        }
        Ok(Self { re, im })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            re: Tensor::zeros(shape),
            im: Tensor::zeros(shape),
        }
    }

    pub fn eye(n: usize) -> Self {
        Self {
            re: Tensor::eye(n),
            im: Tensor::zeros(&[n, n]),
        }
    }

    pub fn shape(&self) -> &[usize] {
        self.re.shape()
    }

    /// `(a.re b.re - a.im b.im) + j (a.re b.im + a.im b.re)`.
    pub fn matmul(&self, other: &Self) -> Result<Self> {
        let rr = self.re.matmul(&other.re)?;
        let ii = self.im.matmul(&other.im)?;
        let ri = self.re.matmul(&other.im)?;
        let ir = self.im.matmul(&other.re)?;
        Ok(Self {
            re: rr.zip_map(&ii, "complex_matmul", |a, b| a - b)?,
            im: ri.zip_map(&ir, "complex_matmul", |a, b| a + b)?,
        })
    }

    /// Elementwise `|x|^2`.
    pub fn abs2(&self) -> Tensor<T> {
        self.re.zip_map(&self.im, "abs2", |a, b| a * a + b * b).expect("parts share a shape")
    }
}

/// A complex value on the tape as a pair of real handles.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CVar {
    pub re: Var,
    pub im: Var,
}

impl<T: Scalar> Tape<T> {
    pub fn complex_constant(&mut self, c: ComplexTensor<T>) -> CVar {
        CVar {
            re: self.constant(c.re),
            im: self.constant(c.im),
        }
    }

    pub fn complex_leaf(&mut self, c: ComplexTensor<T>) -> CVar {
        CVar {
            re: self.leaf(c.re),
            im: self.leaf(c.im),
        }
    }

    pub fn complex_value(&self, c: CVar) -> ComplexTensor<T> {
        ComplexTensor {
            re: self.value(c.re).clone(),
            im: self.value(c.im).clone(),
        }
    }

    pub fn complex_matmul(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        let rr = self.matmul(a.re, b.re)?;
        let ii = self.matmul(a.im, b.im)?;
        let ri = self.matmul(a.re, b.im)?;
        let ir = self.matmul(a.im, b.re)?;
        Ok(CVar {
            re: self.sub(rr, ii)?,
            im: self.add(ri, ir)?,
        })
    }

    pub fn complex_add(&mut self, a: CVar, b: CVar) -> Result<CVar> {
        Ok(CVar {
            re: self.add(a.re, b.re)?,
            im: self.add(a.im, b.im)?,
        })
    }

    /// Multiplies both parts by a real (possibly 1-element) factor.
    pub fn complex_scale_by(&mut self, a: CVar, s: Var) -> Result<CVar> {
        Ok(CVar {
            re: self.mul(a.re, s)?,
            im: self.mul(a.im, s)?,
        })
    }

    pub fn abs2(&mut self, x: CVar) -> Result<Var> {
        let rr = self.mul(x.re, x.re)?;
        let ii = self.mul(x.im, x.im)?;
        self.add(rr, ii)
    }

    pub fn complex_gather_cols(&mut self, x: CVar, idx: Vec<usize>) -> Result<CVar> {
        Ok(CVar {
            re: self.gather_cols(x.re, idx.clone())?,
            im: self.gather_cols(x.im, idx)?,
        })
    }

    pub fn complex_concat_cols(&mut self, parts: &[CVar]) -> Result<CVar> {
        let re: Vec<Var> = parts.iter().map(|p| p.re).collect();
        let im: Vec<Var> = parts.iter().map(|p| p.im).collect();
        Ok(CVar {
            re: self.concat_cols(&re)?,
            im: self.concat_cols(&im)?,
        })
    }
}
