//! MRT, ZF and MMSE hybrid precoders used as comparison schemes.
//!
//! Each BS builds its analog precoder from the phases of every stream's
//! dominant transmit direction, reduces each multi-antenna receiver to one
//! effective row through that precoder, then applies a textbook linear
//! digital precoder with an equal power split.

use std::fmt;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::channel::Channels;
use crate::linalg::{CMatrix, LinalgError};
use crate::metrics::{bs_power, evaluate, BeamformerSet, MetricError, Noise, ObjectiveWeights, ReceiveMode, SinrReport};
use crate::scalar::{lit, Scalar};

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// Relative eigenvalue threshold of the ZF pseudo-inverse fallback.
pub const ZF_PINV_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineKind {
    Mrt,
    Zf,
    Mmse,
}

impl BaselineKind {
    pub const ALL: [BaselineKind; 3] = [BaselineKind::Mmse, BaselineKind::Zf, BaselineKind::Mrt];
}

impl fmt::Display for BaselineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BaselineKind::Mrt => "mrt",
            BaselineKind::Zf => "zf",
            BaselineKind::Mmse => "mmse",
        })
    }
}

/// Conditions met while building a baseline; none of them is an error.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BaselineFlags {
    /// `(bs, stream)` pairs whose effective channel was all zero.
    pub zero_effective: Vec<(usize, usize)>,
    /// BSs where ZF fell back to the pseudo-inverse.
    pub pinv_fallback: Vec<usize>,
    /// BSs whose beams were all zero, so no power scaling was possible.
    pub degenerate: Vec<usize>,
}

fn phases<T: Scalar>(v: &CMatrix<T>) -> CMatrix<T> {
    v.map(|z| {
        let n = z.norm();
        if n > T::zero() {
            z / n
        } else {
            Complex::new(T::one(), T::zero())
        }
    })
}

/// Analog precoder of BS `m`: column `k < streams` holds the phases of
/// stream `k`'s dominant right singular vector (the direction that
/// maximizes `||H x||`, `conj(a)` for `H = b a^T`); remaining columns hold
/// the phases of the dominant direction of the summed Gram matrix.
pub fn baseline_analog<T: Scalar>(ch: &Channels<T>, m: usize, n_rf: usize) -> Result<CMatrix<T>> {
    let links: Vec<&CMatrix<T>> = ch.com[m].iter().chain(ch.sen[m].iter()).collect();
    if links.len() > n_rf {
        return Err(MetricError::Shape(format!("{} streams exceed {n_rf} RF chains", links.len())));
    }
    let n_t = links.first().map(|h| h.cols()).ok_or_else(|| MetricError::Shape("no streams".into()))?;
    let mut f = CMatrix::zeros(n_t, n_rf);
    for (k, h) in links.iter().enumerate() {
        let (_, v) = h.dominant_right_singular()?;
        f.set_col(k, &phases(&v));
    }
    if links.len() < n_rf {
        let mut gram = CMatrix::zeros(n_t, n_t);
        for h in &links {
            gram = gram.add(&h.hermitian().matmul(h)?)?;
        }
        let (_, vecs) = gram.hermitian_eigen()?;
        let filler = phases(&vecs.col(0));
        for k in links.len()..n_rf {
            f.set_col(k, &filler);
        }
    }
    Ok(f)
}

/// `v^H H F` for the dominant left singular vector `v` of `H F`; with a
/// single receive antenna this is `H F` itself. The flag is set when `H F`
/// is all zero.
pub fn effective_channel<T: Scalar>(h: &CMatrix<T>, f: &CMatrix<T>) -> Result<(CMatrix<T>, bool)> {
    let hf = h.matmul(f)?;
    if hf.is_zero() {
        return Ok((CMatrix::zeros(1, f.cols()), true));
    }
    if hf.rows() == 1 {
        return Ok((hf, false));
    }
    let (_, v) = hf.dominant_left_singular()?;
    Ok((v.hermitian().matmul(&hf)?, false))
}

/// Digital precoder (`N x streams`) for stacked effective rows `a`
/// (`streams x N`). Columns are split to equal power `P / streams` through
/// `f`, then scaled jointly so the BS power is exactly `power`. Returns the
/// precoder and whether ZF fell back to the pseudo-inverse.
pub fn baseline_digital<T: Scalar>(
    kind: BaselineKind,
    a: &CMatrix<T>,
    f: &CMatrix<T>,
    sigma2: T,
    power: T,
) -> Result<(CMatrix<T>, bool)> {
    let s = a.rows();
    let ah = a.hermitian();
    let mut fallback = false;
    let raw = match kind {
        BaselineKind::Mrt => ah,
        BaselineKind::Zf => {
            let gram = a.matmul(&ah)?;
            match gram.inverse() {
                Ok(inv) if inv.is_finite() => ah.matmul(&inv)?,
                Ok(_) | Err(LinalgError::Singular(_)) => {
                    fallback = true;
                    ah.matmul(&gram.hermitian_pinv(lit(ZF_PINV_TOL))?.0)?
                }
                Err(e) => return Err(e.into()),
            }
        }
        BaselineKind::Mmse => {
            let reg = sigma2 * lit::<T>(s as f64) / power;
            let gram = a.matmul(&ah)?.add(&CMatrix::identity(s).scale_real(reg))?;
            ah.matmul(&gram.inverse()?)?
        }
    };
    let per_stream: T = power / lit(s as f64);
    let mut w = CMatrix::zeros(raw.rows(), s);
    for k in 0..s {
        let col = raw.col(k);
        let p = f.matmul(&col)?.frob_norm_sq();
        if p > T::zero() {
            w.set_col(k, &col.scale_real((per_stream / p).sqrt()));
        }
    }
    let total = bs_power(f, &w)?;
    if total > T::zero() {
        w = w.scale_real((power / total).sqrt());
    }
    Ok((w, fallback))
}

/// Builds the baseline at every BS from the given channels.
pub fn baseline_beamformers<T: Scalar>(
    kind: BaselineKind,
    ch: &Channels<T>,
    n_rf: usize,
    noise: &Noise,
) -> Result<(BeamformerSet<T>, BaselineFlags)> {
    let mut flags = BaselineFlags::default();
    let mut bf = BeamformerSet {
        analog: Vec::with_capacity(ch.bs()),
        digital: Vec::with_capacity(ch.bs()),
    };
    let power: T = lit(noise.power);
    for m in 0..ch.bs() {
        let f = baseline_analog(ch, m, n_rf)?;
        let mut rows = Vec::new();
        for (k, h) in ch.com[m].iter().chain(ch.sen[m].iter()).enumerate() {
            let (row, zero) = effective_channel(h, &f)?;
            if zero {
                flags.zero_effective.push((m, k));
            }
            rows.push(row);
        }
        let refs: Vec<&CMatrix<T>> = rows.iter().collect();
        let a = CMatrix::vstack(&refs);
        let (w, fallback) = baseline_digital(kind, &a, &f, lit(noise.user), power)?;
        if fallback {
            flags.pinv_fallback.push(m);
        }
        if w.is_zero() {
            flags.degenerate.push(m);
        }
        bf.analog.push(f);
        bf.digital.push(w);
    }
    Ok((bf, flags))
}

/// Baseline construction followed by exact metric evaluation.
pub fn run_baseline<T: Scalar>(
    kind: BaselineKind,
    ch: &Channels<T>,
    n_rf: usize,
    weights: &ObjectiveWeights,
    noise: &Noise,
    mode: ReceiveMode,
) -> Result<(BeamformerSet<T>, SinrReport, BaselineFlags)> {
    let (bf, flags) = baseline_beamformers(kind, ch, n_rf, noise)?;
    let report = evaluate(ch, None, &bf, weights, noise, mode)?;
    Ok((bf, report, flags))
}
