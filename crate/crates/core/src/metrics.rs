//! User and radar SINRs, the weighted sum capacity objective, and the
//! power and constant-modulus constraint checks.
//!
//! Two routes compute the same quantities: plain dense evaluation over
//! [`CMatrix`], and a differentiable route recorded on a [`Tape`] for
//! training. Receive beamformers are always computed on the plain route and
//! enter the tape as constants.

use num_complex::Complex;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{perturb_estimate, ChannelError, Channels, CsiErrorSpec};
use crate::linalg::{quad_inv_form, CMatrix, LinalgError};
use crate::scalar::{lit, to_f64, Scalar};
use crate::tensor::{CVar, ComplexTensor, Tape, Tensor, TensorError, Var};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("dimension mismatch: {0}")]
    Shape(String),
    #[error("target {0} has an all-zero echo signature")]
    DegenerateTarget(usize),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
}

pub type Result<T, E = MetricError> = std::result::Result<T, E>;

/// Analog precoder `F_m` (`n_t x n_rf`) and digital precoder `W_m`
/// (`n_rf x (users + targets)`, user columns first) for every BS.
#[derive(Clone, Debug, PartialEq)]
pub struct BeamformerSet<T> {
    pub analog: Vec<CMatrix<T>>,
    pub digital: Vec<CMatrix<T>>,
}

impl<T: Scalar> BeamformerSet<T> {
    pub fn bs(&self) -> usize {
        self.analog.len()
    }

    pub fn streams(&self) -> usize {
        self.digital.first().map_or(0, |w| w.cols())
    }

    /// Digital vector of stream `s` at BS `m`.
    pub fn w(&self, m: usize, s: usize) -> CMatrix<T> {
        self.digital[m].col(s)
    }

    /// `F_m W_m`, the per-antenna transmit signatures.
    pub fn precoded(&self, m: usize) -> Result<CMatrix<T>> {
        Ok(self.analog[m].matmul(&self.digital[m])?)
    }

    /// Largest deviation of any analog entry modulus from one.
    pub fn modulus_violation(&self) -> T {
        self.analog
            .iter()
            .flat_map(|f| f.data().iter())
            .fold(T::zero(), |m, z| m.max((z.norm() - T::one()).abs()))
    }

    pub fn cast<U: Scalar>(&self) -> BeamformerSet<U> {
        BeamformerSet {
            analog: self.analog.iter().map(|f| f.cast()).collect(),
            digital: self.digital.iter().map(|w| w.cast()).collect(),
        }
    }

    fn check(&self, ch: &Channels<T>) -> Result<()> {
        let s = ch.users() + ch.targets();
        if self.bs() != ch.bs() || self.digital.len() != ch.bs() {
            return Err(MetricError::Shape(format!(
                "{} analog / {} digital precoders for {} BSs",
                self.bs(),
                self.digital.len(),
                ch.bs()
            )));
        }
        for m in 0..self.bs() {
            let (f, w) = (&self.analog[m], &self.digital[m]);
            let n_t = ch.com[m].first().or(ch.sen[m].first()).map_or(f.rows(), |h| h.cols());
            if f.rows() != n_t || f.cols() != w.rows() || w.cols() != s {
                return Err(MetricError::Shape(format!(
                    "BS {m}: F {:?}, W {:?}, expected n_t={n_t} and {s} streams",
                    f.dims(),
                    w.dims()
                )));
            }
        }
        Ok(())
    }
}

/// Sum of values in ascending order, so the result does not depend on the
/// order the values were produced in.
pub fn ordered_sum<T: Scalar>(mut v: Vec<T>) -> T {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    v.into_iter().fold(T::zero(), |s, x| s + x)
}

/// Transmit power of one BS: the sum over streams of `||F w_s||^2`.
pub fn bs_power<T: Scalar>(f: &CMatrix<T>, w: &CMatrix<T>) -> Result<T> {
    let x = f.matmul(w)?;
    let per_stream = (0..x.cols())
        .map(|s| (0..x.rows()).map(|r| x.get(r, s).norm_sqr()).fold(T::zero(), |a, b| a + b))
        .collect();
    Ok(ordered_sum(per_stream))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ObjectiveWeights {
    pub alpha_com: f64,
    pub alpha_sen: f64,
    /// Gain applied to radar SINR inside the sensing capacity term.
    pub eta: f64,
    /// Keep `eta` in the sensing term under imperfect CSI as well.
    pub eta_under_error: bool,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            alpha_com: 0.5,
            alpha_sen: 0.5,
            eta: 5e6,
            eta_under_error: true,
        }
    }
}

/// Noise powers and the per-BS power budget, all linear (mW).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    pub user: f64,
    pub radar: f64,
    pub power: f64,
}

impl Default for Noise {
    fn default() -> Self {
        Self {
            user: 1e-9,
            radar: 1e-9,
            power: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReceiveMode {
    Matched,
    #[default]
    Mvdr,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SinrReport {
    pub gamma_user: Vec<f64>,
    pub gamma_target: Vec<f64>,
    pub scc: f64,
    pub ssc: f64,
    pub wscsc: f64,
}

/// Received signatures at user `i`: column `s` is `sum_m H_{m,i} F_m w_{m,s}`.
pub fn user_signatures<T: Scalar>(ch: &Channels<T>, x: &[CMatrix<T>], i: usize) -> Result<CMatrix<T>> {
    let mut g: Option<CMatrix<T>> = None;
    for (m, xm) in x.iter().enumerate() {
        let t = ch.com[m][i].matmul(xm)?;
        g = Some(match g {
            None => t,
            Some(acc) => acc.add(&t)?,
        });
    }
    g.ok_or_else(|| MetricError::Shape("no base stations".into()))
}

/// Echo signatures of target `j` at the radar receiver.
pub fn target_signatures<T: Scalar>(ch: &Channels<T>, x: &[CMatrix<T>], j: usize) -> Result<CMatrix<T>> {
    let mut g: Option<CMatrix<T>> = None;
    for (m, xm) in x.iter().enumerate() {
        let t = ch.sen[m][j].matmul(xm)?;
        g = Some(match g {
            None => t,
            Some(acc) => acc.add(&t)?,
        });
    }
    g.ok_or_else(|| MetricError::Shape("no base stations".into()))
}

fn columns_except<T: Scalar>(g: &CMatrix<T>, skip: usize) -> Option<CMatrix<T>> {
    let keep: Vec<CMatrix<T>> = (0..g.cols()).filter(|&s| s != skip).map(|s| g.col(s)).collect();
    if keep.is_empty() {
        return None;
    }
    let refs: Vec<&CMatrix<T>> = keep.iter().collect();
    Some(CMatrix::hstack(&refs))
}

fn precoded_all<T: Scalar>(bf: &BeamformerSet<T>) -> Result<Vec<CMatrix<T>>> {
    (0..bf.bs()).map(|m| bf.precoded(m)).collect()
}

fn user_gamma<T: Scalar>(g: &CMatrix<T>, ge: Option<&CMatrix<T>>, i: usize, sigma2: T) -> Result<T> {
    let d = g.col(i);
    let mut v = columns_except(g, i);
    if let Some(ge) = ge {
        v = Some(match v {
            None => ge.clone(),
            Some(v) => CMatrix::hstack(&[&v, ge]),
        });
    }
    Ok(quad_inv_form(&d, v.as_ref(), sigma2)?.0)
}

/// Perfect-CSI user SINR: `d^H (sigma2 I + V V^H)^{-1} d` with `d` the
/// user's own signature and `V` every other stream's signature.
pub fn user_sinr<T: Scalar>(ch: &Channels<T>, bf: &BeamformerSet<T>, sigma2: T, i: usize) -> Result<T> {
    bf.check(ch)?;
    let x = precoded_all(bf)?;
    user_gamma(&user_signatures(ch, &x, i)?, None, i, sigma2)
}

/// Imperfect-CSI user SINR: the desired term uses the estimated channel and
/// the interference covariance adds every error-channel signature, including
/// the user's own.
pub fn user_sinr_imperfect<T: Scalar>(
    estimated: &Channels<T>,
    error: &Channels<T>,
    bf: &BeamformerSet<T>,
    sigma2: T,
    i: usize,
) -> Result<T> {
    bf.check(estimated)?;
    let x = precoded_all(bf)?;
    let g = user_signatures(estimated, &x, i)?;
    let ge = user_signatures(error, &x, i)?;
    user_gamma(&g, Some(&ge), i, sigma2)
}

fn receive_from_signatures<T: Scalar>(g: &CMatrix<T>, desired: usize, sigma2: T, mode: ReceiveMode, j: usize) -> Result<CMatrix<T>> {
    let h = g.col(desired);
    if h.is_zero() {
        return Err(MetricError::DegenerateTarget(j));
    }
    let dir = match mode {
        ReceiveMode::Matched => h,
        ReceiveMode::Mvdr => {
            let n = h.rows();
            let mut r = CMatrix::identity(n).scale_real(sigma2);
            if let Some(v) = columns_except(g, desired) {
                r = r.add(&v.matmul(&v.hermitian())?)?;
            }
            r.solve(&h)?
        }
    };
    let norm = dir.frob_norm_sq().sqrt();
    Ok(dir.hermitian().scale_real(T::one() / norm))
}

/// Unit-norm `1 x n_r` receive beamformer for target `j`.
///
/// Matched filter: `h^H / ||h||`. MVDR: `h^H R^{-1}` normalized, with `R` the
/// noise plus interference covariance of the target's echo.
pub fn receive_beamformer<T: Scalar>(
    ch: &Channels<T>,
    bf: &BeamformerSet<T>,
    sigma2: T,
    j: usize,
    mode: ReceiveMode,
) -> Result<CMatrix<T>> {
    bf.check(ch)?;
    let x = precoded_all(bf)?;
    let g = target_signatures(ch, &x, j)?;
    receive_from_signatures(&g, ch.users() + j, sigma2, mode, j)
}

fn radar_gamma<T: Scalar>(g: &CMatrix<T>, ge: Option<&CMatrix<T>>, u: &CMatrix<T>, desired: usize, sigma2: T) -> Result<T> {
    let ug = u.matmul(g)?;
    let num = ug.get(0, desired).norm_sqr();
    let mut den = sigma2 * u.frob_norm_sq();
    for s in (0..ug.cols()).filter(|&s| s != desired) {
        den += ug.get(0, s).norm_sqr();
    }
    if let Some(ge) = ge {
        let ue = u.matmul(ge)?;
        for s in 0..ue.cols() {
            den += ue.get(0, s).norm_sqr();
        }
    }
    Ok(num / den)
}

/// Perfect-CSI radar SINR of target `j` for a given receive beamformer.
pub fn radar_sinr<T: Scalar>(ch: &Channels<T>, bf: &BeamformerSet<T>, u: &CMatrix<T>, sigma2: T, j: usize) -> Result<T> {
    bf.check(ch)?;
    let x = precoded_all(bf)?;
    radar_gamma(&target_signatures(ch, &x, j)?, None, u, ch.users() + j, sigma2)
}

/// Imperfect-CSI radar SINR: error-channel echoes of every stream, the
/// target's own included, join the denominator.
pub fn radar_sinr_imperfect<T: Scalar>(
    estimated: &Channels<T>,
    error: &Channels<T>,
    bf: &BeamformerSet<T>,
    u: &CMatrix<T>,
    sigma2: T,
    j: usize,
) -> Result<T> {
    bf.check(estimated)?;
    let x = precoded_all(bf)?;
    let g = target_signatures(estimated, &x, j)?;
    let ge = target_signatures(error, &x, j)?;
    radar_gamma(&g, Some(&ge), u, estimated.users() + j, sigma2)
}

fn all_zero<T: Scalar>(c: &Channels<T>) -> bool {
    c.com.iter().chain(&c.sen).flatten().all(|h| h.is_zero())
}

/// Every SINR and the objective. With `error` given, imperfect-CSI SINRs
/// are used with `ch` as the estimate; an all-zero error is treated as
/// perfect CSI so the two paths agree exactly.
pub fn evaluate<T: Scalar>(
    ch: &Channels<T>,
    error: Option<&Channels<T>>,
    bf: &BeamformerSet<T>,
    weights: &ObjectiveWeights,
    noise: &Noise,
    mode: ReceiveMode,
) -> Result<SinrReport> {
    bf.check(ch)?;
    let error = error.filter(|e| !all_zero(e));
    let x = precoded_all(bf)?;
    let s_user: T = lit(noise.user);
    let s_radar: T = lit(noise.radar);
    let mut gamma_user = Vec::with_capacity(ch.users());
    for i in 0..ch.users() {
        let g = user_signatures(ch, &x, i)?;
        let ge = error.map(|e| user_signatures(e, &x, i)).transpose()?;
        gamma_user.push(to_f64(user_gamma(&g, ge.as_ref(), i, s_user)?));
    }
    let mut gamma_target = Vec::with_capacity(ch.targets());
    for j in 0..ch.targets() {
        let desired = ch.users() + j;
        let g = target_signatures(ch, &x, j)?;
        let gamma = match receive_from_signatures(&g, desired, s_radar, mode, j) {
            Ok(u) => {
                let ge = error.map(|e| target_signatures(e, &x, j)).transpose()?;
                to_f64(radar_gamma(&g, ge.as_ref(), &u, desired, s_radar)?)
            }
            Err(MetricError::DegenerateTarget(_)) => 0.0,
            Err(e) => return Err(e),
        };
        gamma_target.push(gamma);
    }
    let eta = if error.is_some() && !weights.eta_under_error { 1.0 } else { weights.eta };
    Ok(report(gamma_user, gamma_target, weights, eta))
}

fn report(gamma_user: Vec<f64>, gamma_target: Vec<f64>, weights: &ObjectiveWeights, eta: f64) -> SinrReport {
    let scc: f64 = gamma_user.iter().map(|g| g.ln_1p()).sum();
    let ssc: f64 = gamma_target.iter().map(|g| (eta * g).ln_1p()).sum();
    SinrReport {
        wscsc: weights.alpha_com * scc + weights.alpha_sen * ssc,
        gamma_user,
        gamma_target,
        scc,
        ssc,
    }
}

/// Perfect-CSI report.
pub fn wscsc<T: Scalar>(
    ch: &Channels<T>,
    bf: &BeamformerSet<T>,
    weights: &ObjectiveWeights,
    noise: &Noise,
    mode: ReceiveMode,
) -> Result<SinrReport> {
    evaluate(ch, None, bf, weights, noise, mode)
}

/// Monte Carlo mean of the imperfect-CSI objective over `n_draws` error
/// draws around a fixed estimate.
#[allow(clippy::too_many_arguments)]
pub fn wscsc_expected<R: Rng + ?Sized>(
    estimate: &Channels<f64>,
    spec: &CsiErrorSpec,
    rng: &mut R,
    bf: &BeamformerSet<f64>,
    weights: &ObjectiveWeights,
    noise: &Noise,
    mode: ReceiveMode,
    n_draws: usize,
) -> Result<f64> {
    if n_draws == 0 {
        return Err(MetricError::Shape("n_draws must be at least 1".into()));
    }
    if spec.is_trivial() {
        return Ok(evaluate(estimate, None, bf, weights, noise, mode)?.wscsc);
    }
    let mut total = 0.0;
    for _ in 0..n_draws {
        let real = perturb_estimate(estimate, spec, rng)?;
        total += evaluate(&real.estimated, Some(&real.error), bf, weights, noise, mode)?.wscsc;
    }
    Ok(total / n_draws as f64)
}

/// Channels staged on a tape as constants: per BS, all users' channels
/// stacked vertically (`users*n_u x n_t`) and likewise for targets.
pub struct TapeChannels {
    com: Vec<CVar>,
    sen: Vec<CVar>,
    err_com: Option<Vec<CVar>>,
    err_sen: Option<Vec<CVar>>,
    users: usize,
    targets: usize,
    n_u: usize,
    n_r: usize,
}

fn stack_on<T: Scalar>(tape: &mut Tape<T>, rows: &[Vec<CMatrix<T>>]) -> Vec<CVar> {
    rows.iter()
        .map(|links| {
            let refs: Vec<&CMatrix<T>> = links.iter().collect();
            tape.complex_constant(ComplexTensor::from(&CMatrix::vstack(&refs)))
        })
        .collect()
}

impl TapeChannels {
    pub fn new<T: Scalar>(tape: &mut Tape<T>, ch: &Channels<T>, error: Option<&Channels<T>>) -> Self {
        let error = error.filter(|e| !all_zero(e));
        Self {
            com: stack_on(tape, &ch.com),
            sen: stack_on(tape, &ch.sen),
            err_com: error.map(|e| stack_on(tape, &e.com)),
            err_sen: error.map(|e| stack_on(tape, &e.sen)),
            users: ch.users(),
            targets: ch.targets(),
            n_u: ch.com.first().and_then(|r| r.first()).map_or(0, |h| h.rows()),
            n_r: ch.sen.first().and_then(|r| r.first()).map_or(0, |h| h.rows()),
        }
    }

    pub fn has_error(&self) -> bool {
        self.err_com.is_some()
    }
}

fn stacked_signatures<T: Scalar>(tape: &mut Tape<T>, h: &[CVar], x: &[CVar]) -> Result<CVar> {
    let mut acc: Option<CVar> = None;
    for (hm, xm) in h.iter().zip(x) {
        let t = tape.complex_matmul(*hm, *xm)?;
        acc = Some(match acc {
            None => t,
            Some(a) => tape.complex_add(a, t)?,
        });
    }
    acc.ok_or_else(|| MetricError::Shape("no base stations".into()))
}

fn row_block<T: Scalar>(tape: &mut Tape<T>, g: CVar, k: usize, rows: usize) -> Result<CVar> {
    let idx: Vec<usize> = (k * rows..(k + 1) * rows).collect();
    Ok(CVar {
        re: tape.gather_rows(g.re, idx.clone())?,
        im: tape.gather_rows(g.im, idx)?,
    })
}

fn cmatrix_of<T: Scalar>(tape: &Tape<T>, v: CVar) -> Result<CMatrix<T>> {
    Ok(CMatrix::from_parts(tape.value(v.re), tape.value(v.im))?)
}

/// Differentiable objective for one sample.
///
/// `x[m]` is the recorded `F_m W_m` (`n_t x streams`). Returns the WSCSC
/// node; radar receive beamformers are computed from current values and
/// held constant.
pub fn wscsc_on_tape<T: Scalar>(
    tape: &mut Tape<T>,
    ch: &TapeChannels,
    x: &[CVar],
    weights: &ObjectiveWeights,
    noise: &Noise,
    mode: ReceiveMode,
) -> Result<Var> {
    let s = ch.users + ch.targets;
    let s_user: T = lit(noise.user);
    let s_radar: T = lit(noise.radar);
    let mut terms: Vec<Var> = Vec::new();

    if ch.users > 0 {
        let g_all = stacked_signatures(tape, &ch.com, x)?;
        let ge_all = match &ch.err_com {
            Some(e) => Some(stacked_signatures(tape, e, x)?),
            None => None,
        };
        let mut caps = Vec::with_capacity(ch.users);
        for i in 0..ch.users {
            let g = row_block(tape, g_all, i, ch.n_u)?;
            let d = tape.complex_gather_cols(g, vec![i])?;
            let others: Vec<usize> = (0..s).filter(|&k| k != i).collect();
            let mut parts = Vec::new();
            if !others.is_empty() {
                parts.push(tape.complex_gather_cols(g, others)?);
            }
            if let Some(ge_all) = ge_all {
                parts.push(row_block(tape, ge_all, i, ch.n_u)?);
            }
            let v = match parts.len() {
                0 => None,
                1 => Some(parts[0]),
                _ => Some(tape.complex_concat_cols(&parts)?),
            };
            let gamma = tape.quad_inv(d, v, s_user)?;
            caps.push(tape.log1p(gamma)?);
        }
        let scc = sum_vars(tape, &caps)?;
        terms.push(tape.scale(scc, lit(weights.alpha_com)));
    }

    if ch.targets > 0 {
        let eta = if ch.has_error() && !weights.eta_under_error { 1.0 } else { weights.eta };
        let g_all = stacked_signatures(tape, &ch.sen, x)?;
        let ge_all = match &ch.err_sen {
            Some(e) => Some(stacked_signatures(tape, e, x)?),
            None => None,
        };
        let mut caps = Vec::with_capacity(ch.targets);
        for j in 0..ch.targets {
            let desired = ch.users + j;
            let g = row_block(tape, g_all, j, ch.n_r)?;
            let gv = cmatrix_of(tape, g)?;
            let u = match receive_from_signatures(&gv, desired, s_radar, mode, j) {
                Ok(u) => u,
                Err(MetricError::DegenerateTarget(_)) => continue,
                Err(e) => return Err(e),
            };
            let u_norm2 = u.frob_norm_sq();
            let uc = tape.complex_constant(ComplexTensor::from(&u));
            let ug = tape.complex_matmul(uc, g)?;
            let p = tape.abs2(ug)?;
            let num = tape.gather_cols(p, vec![desired])?;
            let others: Vec<usize> = (0..s).filter(|&k| k != desired).collect();
            let mut den = tape.constant(Tensor::scalar(s_radar * u_norm2));
            if !others.is_empty() {
                let o = tape.gather_cols(p, others)?;
                let o = tape.sum(o);
                den = tape.add(den, o)?;
            }
            if let Some(ge_all) = ge_all {
                let ge = row_block(tape, ge_all, j, ch.n_r)?;
                let ue = tape.complex_matmul(uc, ge)?;
                let pe = tape.abs2(ue)?;
                let pe = tape.sum(pe);
                den = tape.add(den, pe)?;
            }
            let inv = tape.reciprocal(den)?;
            let gamma = tape.mul(num, inv)?;
            let scaled = tape.scale(gamma, lit(eta));
            caps.push(tape.log1p(scaled)?);
        }
        if !caps.is_empty() {
            let ssc = sum_vars(tape, &caps)?;
            terms.push(tape.scale(ssc, lit(weights.alpha_sen)));
        }
    }
    if terms.is_empty() {
        return Ok(tape.constant(Tensor::scalar(T::zero())));
    }
    sum_vars(tape, &terms)
}

fn sum_vars<T: Scalar>(tape: &mut Tape<T>, vars: &[Var]) -> Result<Var> {
    let mut acc = vars[0];
    for v in &vars[1..] {
        acc = tape.add(acc, *v)?;
    }
    Ok(acc)
}

/// Constant-modulus check: `max | |F entry| - 1 |` over all BSs.
pub fn c2_violation<T: Scalar>(bf: &BeamformerSet<T>) -> f64 {
    to_f64(bf.modulus_violation())
}

/// Largest relative deviation of any BS's power from the budget.
pub fn c1_violation<T: Scalar>(bf: &BeamformerSet<T>, power: f64) -> Result<f64> {
    let mut worst = 0.0f64;
    for m in 0..bf.bs() {
        let p = to_f64(bs_power(&bf.analog[m], &bf.digital[m])?);
        worst = worst.max((p - power).abs() / power);
    }
    Ok(worst)
}

/// `e^{j phi}` applied to stream `s` at every BS. Signals from different
/// BSs add coherently, so only a rotation shared by all BSs leaves the
/// SINRs unchanged.
pub fn rotate_stream<T: Scalar>(bf: &BeamformerSet<T>, s: usize, phi: T) -> BeamformerSet<T> {
    let mut out = bf.clone();
    let rot = Complex::new(phi.cos(), phi.sin());
    for w in &mut out.digital {
        for r in 0..w.rows() {
            let v = w.get(r, s) * rot;
            w.set(r, s, v);
        }
    }
    out
}
