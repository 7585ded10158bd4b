//! Small dense complex linear algebra: products, solves, Hermitian
//! eigendecomposition and dominant singular vectors.
//!
//! Matrices here are at most a few dozen wide (antenna and RF-chain counts),
//! so straightforward O(n^3) routines are used throughout.

use num_complex::Complex;
use thiserror::Error;

use crate::scalar::{lit, Scalar};
use crate::tensor::{ComplexTensor, Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("{op}: dimension mismatch {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("{0}: matrix is singular to working precision")]
    Singular(&'static str),
    #[error("quadratic form has imaginary residue {residue:e} (value {value:e})")]
    ImaginaryResidue { value: f64, residue: f64 },
}

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> CMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::new(T::zero(), T::zero()); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Complex::new(T::one(), T::zero());
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Self {
        assert_eq!(rows * cols, data.len(), "CMatrix::from_vec length mismatch");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    /// Column vector from entries.
    pub fn column(entries: Vec<Complex<T>>) -> Self {
        let n = entries.len();
        Self::from_vec(n, 1, entries)
    }

    /// Builds from separate real and imaginary rank-2 tensors.
    pub fn from_parts(re: &Tensor<T>, im: &Tensor<T>) -> Result<Self, TensorError> {
        if re.shape() != im.shape() {
            return Err(crate::tensor::shape_err("complex", re, im));
        }
        let (rows, cols) = re.dims2()?;
        let data = re.data().iter().zip(im.data()).map(|(&a, &b)| Complex::new(a, b)).collect();
        Ok(Self { rows, cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn data(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [Complex<T>] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> Complex<T> {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: Complex<T>) {
        self.data[r * self.cols + c] = v;
    }

    pub fn col(&self, c: usize) -> Self {
        Self::from_fn(self.rows, 1, |r, _| self.get(r, c))
    }

    pub fn set_col(&mut self, c: usize, v: &Self) {
        assert_eq!(v.rows, self.rows);
        for r in 0..self.rows {
            self.set(r, c, v.get(r, 0));
        }
    }

    /// Horizontal concatenation of equal-height matrices.
    pub fn hstack(parts: &[&Self]) -> Self {
        let rows = parts.first().map_or(0, |p| p.rows);
        let cols = parts.iter().map(|p| p.cols).sum();
        let mut out = Self::zeros(rows, cols);
        let mut offset = 0;
        for p in parts {
            assert_eq!(p.rows, rows, "hstack height mismatch");
            for r in 0..rows {
                for c in 0..p.cols {
                    out.set(r, offset + c, p.get(r, c));
                }
            }
            offset += p.cols;
        }
        out
    }

    /// Vertical concatenation of equal-width matrices.
    pub fn vstack(parts: &[&Self]) -> Self {
        let cols = parts.first().map_or(0, |p| p.cols);
        let mut data = Vec::new();
        for p in parts {
            assert_eq!(p.cols, cols, "vstack width mismatch");
            data.extend_from_slice(&p.data);
        }
        let rows = parts.iter().map(|p| p.rows).sum();
        Self { rows, cols, data }
    }

    pub fn re(&self) -> Tensor<T> {
        Tensor::matrix(self.rows, self.cols, self.data.iter().map(|z| z.re).collect()).expect("nonempty matrix")
    }

    pub fn im(&self) -> Tensor<T> {
        Tensor::matrix(self.rows, self.cols, self.data.iter().map(|z| z.im).collect()).expect("nonempty matrix")
    }

    pub fn cast<U: Scalar>(&self) -> CMatrix<U> {
        CMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self
                .data
                .iter()
                .map(|z| Complex::new(lit::<U>(z.re.to_f64().unwrap()), lit::<U>(z.im.to_f64().unwrap())))
                .collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Result<Self, LinalgError> {
        if self.cols != other.rows {
            return Err(LinalgError::Shape {
                op: "matmul",
                lhs: self.dims(),
                rhs: other.dims(),
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a.re == T::zero() && a.im == T::zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let o = &mut out.data[i * other.cols + j];
                    *o += a * other.data[k * other.cols + j];
                }
            }
        }
        Ok(out)
    }

    /// Conjugate transpose.
    pub fn hermitian(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r).conj())
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self.get(c, r))
    }

    pub fn conj(&self) -> Self {
        self.map(|z| z.conj())
    }

    pub fn map(&self, f: impl Fn(Complex<T>) -> Complex<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| f(z)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self, LinalgError> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LinalgError> {
        self.zip(other, "sub", |a, b| a - b)
    }

    fn zip(&self, other: &Self, op: &'static str, f: impl Fn(Complex<T>, Complex<T>) -> Complex<T>) -> Result<Self, LinalgError> {
        if self.dims() != other.dims() {
            return Err(LinalgError::Shape {
                op,
                lhs: self.dims(),
                rhs: other.dims(),
            });
        }
        Ok(Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
        })
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        self.map(|z| z * s)
    }

    pub fn scale_real(&self, s: T) -> Self {
        self.map(|z| Complex::new(z.re * s, z.im * s))
    }

    pub fn frob_norm_sq(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|z| z.re == T::zero() && z.im == T::zero())
    }

    /// Solves `self * x = b` by Gaussian elimination with partial pivoting.
    pub fn solve(&self, b: &Self) -> Result<Self, LinalgError> {
        let n = self.rows;
        if self.cols != n || b.rows != n {
            return Err(LinalgError::Shape {
                op: "solve",
                lhs: self.dims(),
                rhs: b.dims(),
            });
        }
        let m = b.cols;
        let mut a = self.data.clone();
        let mut x = b.data.clone();
        let scale = self.max_abs();
        let tiny = scale * T::epsilon() * lit(n as f64);
        for k in 0..n {
            let (p, pv) = (k..n)
                .map(|r| (r, a[r * n + k].norm()))
                .fold((k, -T::one()), |best, cur| if cur.1 > best.1 { cur } else { best });
            if !(pv > tiny) {
                return Err(LinalgError::Singular("solve"));
            }
            if p != k {
                for c in 0..n {
                    a.swap(k * n + c, p * n + c);
                }
                for c in 0..m {
                    x.swap(k * m + c, p * m + c);
                }
            }
            let inv = Complex::new(T::one(), T::zero()) / a[k * n + k];
            for r in (k + 1)..n {
                let f = a[r * n + k] * inv;
                if f.re == T::zero() && f.im == T::zero() {
                    continue;
                }
                for c in k..n {
                    let t = a[k * n + c];
                    a[r * n + c] -= f * t;
                }
                for c in 0..m {
                    let t = x[k * m + c];
                    x[r * m + c] -= f * t;
                }
            }
        }
        for k in (0..n).rev() {
            let inv = Complex::new(T::one(), T::zero()) / a[k * n + k];
            for c in 0..m {
                let mut s = x[k * m + c];
                for j in (k + 1)..n {
                    s -= a[k * n + j] * x[j * m + c];
                }
                x[k * m + c] = s * inv;
            }
        }
        Ok(Self { rows: n, cols: m, data: x })
    }

    pub fn inverse(&self) -> Result<Self, LinalgError> {
        self.solve(&Self::identity(self.rows))
    }

    /// Eigendecomposition of a Hermitian matrix.
    ///
    /// Returns eigenvalues in descending order and the matching orthonormal
    /// eigenvectors as columns. Each eigenvector is phase-normalized so that
    /// its first entry with at least half the maximum magnitude is real and
    /// positive.
    pub fn hermitian_eigen(&self) -> Result<(Vec<T>, Self), LinalgError> {
        let n = self.rows;
        if self.cols != n {
            return Err(LinalgError::Shape {
                op: "hermitian_eigen",
                lhs: self.dims(),
                rhs: self.dims(),
            });
        }
        // Real symmetric embedding [[A_re, -A_im], [A_im, A_re]].
        let m = 2 * n;
        let mut s = vec![T::zero(); m * m];
        for r in 0..n {
            for c in 0..n {
                let z = self.get(r, c);
                s[r * m + c] = z.re;
                s[(r + n) * m + (c + n)] = z.re;
                s[r * m + (c + n)] = -z.im;
                s[(r + n) * m + c] = z.im;
            }
        }
        let (vals, vecs) = jacobi_symmetric(&mut s, m);
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| vals[b].partial_cmp(&vals[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));

        let mut out_vals = Vec::with_capacity(n);
        let mut out_vecs: Vec<Vec<Complex<T>>> = Vec::with_capacity(n);
        let half: T = lit(0.5);
        for &k in &order {
            if out_vecs.len() == n {
                break;
            }
            let mut z: Vec<Complex<T>> = (0..n).map(|r| Complex::new(vecs[r * m + k], vecs[(r + n) * m + k])).collect();
            for q in &out_vecs {
                let proj: Complex<T> = q.iter().zip(&z).map(|(a, b)| a.conj() * b).fold(Complex::new(T::zero(), T::zero()), |s, v| s + v);
                for (zi, qi) in z.iter_mut().zip(q) {
                    *zi -= proj * qi;
                }
            }
            let norm = z.iter().map(|v| v.norm_sqr()).sum::<T>().sqrt();
            if norm < half {
                continue;
            }
            for v in &mut z {
                *v /= norm;
            }
            normalize_phase(&mut z);
            out_vals.push(vals[k]);
            out_vecs.push(z);
        }
        let mut v = Self::zeros(n, n);
        for (c, col) in out_vecs.iter().enumerate() {
            for (r, &z) in col.iter().enumerate() {
                v.set(r, c, z);
            }
        }
        Ok((out_vals, v))
    }

    /// Dominant right singular vector (`n x 1`) and its squared singular value.
    pub fn dominant_right_singular(&self) -> Result<(T, Self), LinalgError> {
        let gram = self.hermitian().matmul(self)?;
        let (vals, vecs) = gram.hermitian_eigen()?;
        Ok((vals[0].max(T::zero()), vecs.col(0)))
    }

    /// Dominant left singular vector (`m x 1`) and its squared singular value.
    pub fn dominant_left_singular(&self) -> Result<(T, Self), LinalgError> {
        let gram = self.matmul(&self.hermitian())?;
        let (vals, vecs) = gram.hermitian_eigen()?;
        Ok((vals[0].max(T::zero()), vecs.col(0)))
    }

    /// Pseudo-inverse of a Hermitian positive semidefinite matrix, discarding
    /// eigenvalues below `rel_tol * max eigenvalue`. Also reports whether any
    /// eigenvalue was discarded.
    pub fn hermitian_pinv(&self, rel_tol: T) -> Result<(Self, bool), LinalgError> {
        let (vals, vecs) = self.hermitian_eigen()?;
        let n = self.rows;
        let top = vals.first().copied().unwrap_or(T::zero()).max(T::zero());
        let mut out = Self::zeros(n, n);
        let mut truncated = false;
        for (k, &lam) in vals.iter().enumerate() {
            if !(lam > rel_tol * top) {
                truncated = true;
                continue;
            }
            for r in 0..n {
                for c in 0..n {
                    let v = out.get(r, c) + vecs.get(r, k) * vecs.get(c, k).conj() / lam;
                    out.set(r, c, v);
                }
            }
        }
        Ok((out, truncated))
    }
}

impl<T: Scalar> From<&CMatrix<T>> for ComplexTensor<T> {
    fn from(m: &CMatrix<T>) -> Self {
        ComplexTensor { re: m.re(), im: m.im() }
    }
}

fn normalize_phase<T: Scalar>(z: &mut [Complex<T>]) {
    let max = z.iter().fold(T::zero(), |m, v| m.max(v.norm()));
    if max == T::zero() {
        return;
    }
    let half: T = lit(0.5);
    let pivot = z.iter().position(|v| v.norm() >= half * max).unwrap_or(0);
    let p = z[pivot];
    let rot = p.conj() / p.norm();
    for v in z.iter_mut() {
        *v *= rot;
    }
    z[pivot] = Complex::new(z[pivot].norm(), T::zero());
}

/// Cyclic Jacobi eigenvalue iteration on a dense symmetric `m x m` matrix.
/// Returns eigenvalues and column eigenvectors (row-major `m x m`).
fn jacobi_symmetric<T: Scalar>(a: &mut [T], m: usize) -> (Vec<T>, Vec<T>) {
    let mut v = vec![T::zero(); m * m];
    for i in 0..m {
        v[i * m + i] = T::one();
    }
    let total: T = a.iter().map(|x| *x * *x).sum::<T>().sqrt();
    if total == T::zero() {
        return (vec![T::zero(); m], v);
    }
    let tol = total * T::epsilon() * lit(0.5);
    for _sweep in 0..100 {
        let off: T = (0..m)
            .flat_map(|p| ((p + 1)..m).map(move |q| (p, q)))
            .map(|(p, q)| a[p * m + q] * a[p * m + q])
            .sum::<T>()
            .sqrt();
        if off <= tol {
            break;
        }
        for p in 0..m {
            for q in (p + 1)..m {
                let apq = a[p * m + q];
                if apq.abs() <= tol * lit(1e-3) {
                    continue;
                }
                let app = a[p * m + p];
                let aqq = a[q * m + q];
                let theta = (aqq - app) / (lit::<T>(2.0) * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
                for k in 0..m {
                    let vkp = v[k * m + p];
                    let vkq = v[k * m + q];
                    v[k * m + p] = c * vkp - s * vkq;
                    v[k * m + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    ((0..m).map(|i| a[i * m + i]).collect(), v)
}

/// `Re{d^H (sigma2 I + V V^H)^{-1} d}` and the solution `x = R^{-1} d`.
pub fn quad_inv_form<T: Scalar>(
    d: &CMatrix<T>,
    v: Option<&CMatrix<T>>,
    sigma2: T,
) -> Result<(T, CMatrix<T>), LinalgError> {
    let n = d.rows();
    let mut r = CMatrix::identity(n).scale_real(sigma2);
    if let Some(v) = v {
        if v.rows() != n {
            return Err(LinalgError::Shape {
                op: "quad_inv_form",
                lhs: d.dims(),
                rhs: v.dims(),
            });
        }
        r = r.add(&v.matmul(&v.hermitian())?)?;
    }
    let x = r.solve(d)?;
    let q = d.hermitian().matmul(&x)?.get(0, 0);
    let tol = lit::<T>(1e-10).max(T::epsilon() * lit(1e3));
    if q.im.abs() > tol * q.re.abs().max(T::one()) {
        return Err(LinalgError::ImaginaryResidue {
            value: q.re.to_f64().unwrap_or(f64::NAN),
            residue: q.im.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok((q.re, x))
}

#[cfg(test)]
mod tests {
    use super::*;

    type C = Complex<f64>;

    fn c(re: f64, im: f64) -> C {
        Complex::new(re, im)
    }

    fn sample(rows: usize, cols: usize, seed: u64) -> CMatrix<f64> {
        let mut s = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        let mut next = move || {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        CMatrix::from_fn(rows, cols, |_, _| c(next(), next()))
    }

    #[test]
    fn i_squared_is_minus_one() {
        let i = CMatrix::from_vec(1, 1, vec![c(0.0, 1.0)]);
        assert_eq!(i.matmul(&i).unwrap().get(0, 0), c(-1.0, 0.0));
    }

    #[test]
    fn solve_inverts() {
        let a = sample(4, 4, 3).add(&CMatrix::identity(4).scale_real(2.0)).unwrap();
        let inv = a.inverse().unwrap();
        let prod = a.matmul(&inv).unwrap();
        let err = prod.sub(&CMatrix::identity(4)).unwrap().max_abs();
        assert!(err < 1e-12, "{err}");
    }

    #[test]
    fn singular_matrix_rejected() {
        let a = CMatrix::<f64>::zeros(2, 2);
        assert_eq!(a.inverse().unwrap_err(), LinalgError::Singular("solve"));
    }

    #[test]
    fn hermitian_eigen_reconstructs() {
        let b = sample(5, 5, 9);
        let h = b.matmul(&b.hermitian()).unwrap();
        let (vals, vecs) = h.hermitian_eigen().unwrap();
        assert!(vals.windows(2).all(|w| w[0] >= w[1]));
        for k in 0..5 {
            let v = vecs.col(k);
            let hv = h.matmul(&v).unwrap();
            let err = hv.sub(&v.scale_real(vals[k])).unwrap().max_abs();
            assert!(err < 1e-10, "eigpair {k}: {err}");
        }
        let gram = vecs.hermitian().matmul(&vecs).unwrap();
        assert!(gram.sub(&CMatrix::identity(5)).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn dominant_singular_vector_of_rank_one() {
        let a = sample(4, 1, 1);
        let b = sample(1, 3, 2);
        let h = a.matmul(&b).unwrap();
        let (s2, v) = h.dominant_right_singular().unwrap();
        assert!((s2 - a.frob_norm_sq() * b.frob_norm_sq()).abs() < 1e-12);
        // v is proportional to conj(b)^T
        let bt = b.hermitian();
        let ratio = v.get(0, 0) / bt.get(0, 0);
        for k in 0..3 {
            let err = (v.get(k, 0) - bt.get(k, 0) * ratio).norm();
            assert!(err < 1e-10);
        }
    }

    #[test]
    fn quad_form_scalar_case() {
        let d = CMatrix::column(vec![c(3.0, 4.0)]);
        let (q, _) = quad_inv_form(&d, None, 2.0).unwrap();
        assert!((q - 12.5).abs() < 1e-14);
    }

    #[test]
    fn pinv_flags_rank_deficiency() {
        let a = sample(3, 1, 5);
        let h = a.matmul(&a.hermitian()).unwrap();
        let (p, truncated) = h.hermitian_pinv(1e-10).unwrap();
        assert!(truncated);
        // H P H = H
        let hph = h.matmul(&p).unwrap().matmul(&h).unwrap();
        assert!(hph.sub(&h).unwrap().max_abs() < 1e-10);
    }
}
