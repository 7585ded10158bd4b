//! Network topology, array steering vectors, Rician channels with distance
//! path loss, and imperfect-CSI realizations.

use std::f64::consts::PI;

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::CMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChannelError {
    #[error("invalid topology: {0}")]
    Topology(String),
    #[error("path loss needs a positive distance, got {0}")]
    Distance(f64),
    #[error("{kind} index {index} out of range (count {count})")]
    Index {
        kind: &'static str,
        index: usize,
        count: usize,
    },
    #[error("invalid CSI error spec: {0}")]
    ErrorSpec(String),
}

pub type Result<T, E = ChannelError> = std::result::Result<T, E>;

/// Counts of nodes, antennas and RF chains.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Dims {
    /// Base stations.
    pub bs: usize,
    pub users: usize,
    pub targets: usize,
    /// Transmit antennas per BS.
    pub n_t: usize,
    /// RF chains per BS.
    pub n_rf: usize,
    /// Antennas per user.
    pub n_u: usize,
    /// Radar receiver antennas.
    pub n_r: usize,
}

impl Default for Dims {
    fn default() -> Self {
        Self {
            bs: 2,
            users: 2,
            targets: 2,
            n_t: 8,
            n_rf: 6,
            n_u: 2,
            n_r: 4,
        }
    }
}

impl Dims {
    /// Streams per BS: one per user plus one per target.
    pub fn streams(&self) -> usize {
        self.users + self.targets
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("bs", self.bs),
            ("users", self.users),
            ("targets", self.targets),
            ("n_t", self.n_t),
            ("n_rf", self.n_rf),
            ("n_u", self.n_u),
            ("n_r", self.n_r),
        ];
        if let Some((name, _)) = named.iter().find(|(_, v)| *v == 0) {
            return Err(ChannelError::Topology(format!("{name} must be at least 1")));
        }
        if self.streams() > self.n_rf {
            return Err(ChannelError::Topology(format!(
                "users + targets <= n_rf violated: {} + {} > {}",
                self.users, self.targets, self.n_rf
            )));
        }
        if self.n_rf > self.n_t {
            return Err(ChannelError::Topology(format!(
                "n_rf <= n_t violated: {} > {}",
                self.n_rf, self.n_t
            )));
        }
        Ok(())
    }
}

/// Scenario sampling parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub dims: Dims,
    /// Wavelength-normalized spacing at the BS, user and radar arrays.
    pub spacing_bs: f64,
    pub spacing_user: f64,
    pub spacing_radar: f64,
    pub kappa_com: f64,
    pub kappa_sen: f64,
    pub dist_min: f64,
    pub dist_max: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            dims: Dims::default(),
            spacing_bs: 0.5,
            spacing_user: 0.5,
            spacing_radar: 0.5,
            kappa_com: 0.3,
            kappa_sen: 0.3,
            dist_min: 20.0,
            dist_max: 30.0,
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        for (name, v) in [
            ("spacing_bs", self.spacing_bs),
            ("spacing_user", self.spacing_user),
            ("spacing_radar", self.spacing_radar),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ChannelError::Topology(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("kappa_com", self.kappa_com), ("kappa_sen", self.kappa_sen)] {
            if !(v >= 0.0) {
                return Err(ChannelError::Topology(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.dist_min > 0.0 && self.dist_max >= self.dist_min && self.dist_max.is_finite()) {
            return Err(ChannelError::Topology(format!(
                "distance range [{}, {}] invalid",
                self.dist_min, self.dist_max
            )));
        }
        Ok(())
    }
}

/// One sampled placement of users and targets.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub dims: Dims,
    pub spacing_bs: f64,
    pub spacing_user: f64,
    pub spacing_radar: f64,
    /// `[m][i]` BS-to-user azimuth.
    pub theta_com: Vec<Vec<f64>>,
    /// `[m][j]` BS-to-target azimuth.
    pub theta_sen: Vec<Vec<f64>>,
    /// `[j]` target-to-radar-receiver azimuth.
    pub theta_rx: Vec<f64>,
    pub dist_com: Vec<Vec<f64>>,
    pub dist_sen: Vec<Vec<f64>>,
    pub dist_rx: Vec<f64>,
}

/// Per-link channel matrices: `com[m][i]` is `n_u x n_t`, `sen[m][j]` is
/// `n_r x n_t`.
#[derive(Clone, Debug, PartialEq)]
pub struct Channels<T> {
    pub com: Vec<Vec<CMatrix<T>>>,
    pub sen: Vec<Vec<CMatrix<T>>>,
}

impl<T: Scalar> Channels<T> {
    pub fn bs(&self) -> usize {
        self.com.len()
    }

    pub fn users(&self) -> usize {
        self.com.first().map_or(0, |r| r.len())
    }

    pub fn targets(&self) -> usize {
        self.sen.first().map_or(0, |r| r.len())
    }

    pub fn cast<U: Scalar>(&self) -> Channels<U> {
        Channels {
            com: self.com.iter().map(|r| r.iter().map(|h| h.cast()).collect()).collect(),
            sen: self.sen.iter().map(|r| r.iter().map(|h| h.cast()).collect()).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(&CMatrix<T>) -> CMatrix<T>) -> Self {
        Self {
            com: self.com.iter().map(|r| r.iter().map(&f).collect()).collect(),
            sen: self.sen.iter().map(|r| r.iter().map(&f).collect()).collect(),
        }
    }

    pub fn zip(&self, other: &Self, f: impl Fn(&CMatrix<T>, &CMatrix<T>) -> CMatrix<T>) -> Self {
        let pair = |a: &Vec<Vec<CMatrix<T>>>, b: &Vec<Vec<CMatrix<T>>>| -> Vec<Vec<CMatrix<T>>> {
            a.iter().zip(b).map(|(ra, rb)| ra.iter().zip(rb).map(|(x, y)| f(x, y)).collect()).collect()
        };
        Self {
            com: pair(&self.com, &other.com),
            sen: pair(&self.sen, &other.sen),
        }
    }

    /// Channels seen by one BS, as a single-BS set.
    pub fn for_bs(&self, m: usize) -> Self {
        Self {
            com: vec![self.com[m].clone()],
            sen: vec![self.sen[m].clone()],
        }
    }

    /// Reorders users by `perm` (new user `k` is old user `perm[k]`).
    pub fn permute_users(&self, perm: &[usize]) -> Self {
        Self {
            com: self.com.iter().map(|r| perm.iter().map(|&p| r[p].clone()).collect()).collect(),
            sen: self.sen.clone(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.com.iter().chain(&self.sen).flatten().all(|h| h.is_finite())
    }
}

/// Channels of one scenario together with their large-scale parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSet {
    pub channels: Channels<f64>,
    /// Linear path loss per link; for sensing this is the two-leg product.
    pub pl_com: Vec<Vec<f64>>,
    pub pl_sen: Vec<Vec<f64>>,
    pub kappa_com: f64,
    pub kappa_sen: f64,
}

/// `(1/n) [1, e^{j 2 pi d sin(theta)}, ..., e^{j 2 pi (n-1) d sin(theta)}]^T`.
pub fn steering_vector(n: usize, spacing: f64, theta: f64) -> CMatrix<f64> {
    let phase = 2.0 * PI * spacing * theta.sin();
    let scale = 1.0 / n as f64;
    CMatrix::from_fn(n, 1, |k, _| {
        if k == 0 {
            Complex::new(scale, 0.0)
        } else {
            Complex::from_polar(scale, phase * k as f64)
        }
    })
}

/// Linear path loss `10^((-30 - 25 log10(d)) / 10)`, reference distance 1 m.
pub fn pathloss_linear(d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(ChannelError::Distance(d));
    }
    Ok(10f64.powf((-30.0 - 25.0 * d.log10()) / 10.0))
}

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, variance: f64) -> Complex<f64> {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re * s, im * s)
}

/// `sqrt(k/(1+k)) J + sqrt(1/(1+k)) G` with `J` all ones and `G` i.i.d.
/// CN(0, 1). An infinite `kappa` gives the all-ones matrix.
pub fn rician_core<R: Rng + ?Sized>(rows: usize, cols: usize, kappa: f64, rng: &mut R) -> CMatrix<f64> {
    let (los, nlos) = if kappa.is_infinite() {
        (1.0, 0.0)
    } else {
        ((kappa / (1.0 + kappa)).sqrt(), (1.0 / (1.0 + kappa)).sqrt())
    };
    CMatrix::from_fn(rows, cols, |_, _| {
        let g = complex_gaussian(rng, 1.0);
        Complex::new(los + nlos * g.re, nlos * g.im)
    })
}

/// `sqrt(pl) diag(rx) core diag(tx)`.
pub fn assemble(core: &CMatrix<f64>, rx: &CMatrix<f64>, tx: &CMatrix<f64>, pl: f64) -> CMatrix<f64> {
    let s = pl.sqrt();
    CMatrix::from_fn(core.rows(), core.cols(), |r, c| rx.get(r, 0) * core.get(r, c) * tx.get(c, 0) * s)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LinkKind {
    Com,
    Sen,
}

impl Topology {
    fn check(&self, m: usize, k: usize, kind: LinkKind) -> Result<()> {
        if m >= self.dims.bs {
            return Err(ChannelError::Index {
                kind: "bs",
                index: m,
                count: self.dims.bs,
            });
        }
        let (name, count) = match kind {
            LinkKind::Com => ("user", self.dims.users),
            LinkKind::Sen => ("target", self.dims.targets),
        };
        if k >= count {
            return Err(ChannelError::Index { kind: name, index: k, count });
        }
        Ok(())
    }

    /// Path loss of link `(m, k)`; sensing multiplies both legs.
    pub fn pathloss(&self, kind: LinkKind, m: usize, k: usize) -> Result<f64> {
        self.check(m, k, kind)?;
        match kind {
            LinkKind::Com => pathloss_linear(self.dist_com[m][k]),
            LinkKind::Sen => Ok(pathloss_linear(self.dist_sen[m][k])? * pathloss_linear(self.dist_rx[k])?),
        }
    }

    /// Receive and transmit steering vectors of link `(m, k)`.
    pub fn steering(&self, kind: LinkKind, m: usize, k: usize) -> Result<(CMatrix<f64>, CMatrix<f64>)> {
        self.check(m, k, kind)?;
        let d = &self.dims;
        Ok(match kind {
            LinkKind::Com => (
                steering_vector(d.n_u, self.spacing_user, self.theta_com[m][k]),
                steering_vector(d.n_t, self.spacing_bs, self.theta_com[m][k]),
            ),
            LinkKind::Sen => (
                steering_vector(d.n_r, self.spacing_radar, self.theta_rx[k]),
                steering_vector(d.n_t, self.spacing_bs, self.theta_sen[m][k]),
            ),
        })
    }

    /// Draws one channel matrix for link `(m, k)`.
    pub fn assemble_channel<R: Rng + ?Sized>(
        &self,
        kind: LinkKind,
        m: usize,
        k: usize,
        kappa: f64,
        rng: &mut R,
    ) -> Result<CMatrix<f64>> {
        let (rx, tx) = self.steering(kind, m, k)?;
        let pl = self.pathloss(kind, m, k)?;
        let core = rician_core(rx.rows(), tx.rows(), kappa, rng);
        Ok(assemble(&core, &rx, &tx, pl))
    }
}

/// Seeded source of independent random streams.
///
/// A stream is identified by `(seed, experiment, draw)` plus a purpose tag,
/// so scenario sampling, CSI errors and weight init never share a sequence.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub experiment: u64,
    pub draw: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Scenario = 1,
    CsiError = 2,
    Init = 3,
    Batch = 4,
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, experiment: u64, draw: u64) -> Self {
        Self { seed, experiment, draw }
    }

    pub fn with_draw(self, draw: u64) -> Self {
        Self { draw, ..self }
    }

    pub fn rng(&self, purpose: Purpose) -> ChaCha8Rng {
        let key = splitmix(self.seed ^ splitmix(self.experiment));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(((purpose as u64) << 56) | (self.draw & ((1 << 56) - 1)));
        rng
    }
}

/// Samples a topology and all channels. Angles are uniform on
/// (-pi/2, pi/2), distances uniform on `[dist_min, dist_max]`.
pub fn generate_scenario<R: Rng + ?Sized>(cfg: &ScenarioConfig, rng: &mut R) -> Result<(Topology, ChannelSet)> {
    cfg.validate()?;
    let d = cfg.dims;
    let angle = |rng: &mut R| loop {
        let a: f64 = rng.gen_range(-PI / 2.0..PI / 2.0);
        if a > -PI / 2.0 {
            break a;
        }
    };
    let theta_com: Vec<Vec<f64>> = (0..d.bs).map(|_| (0..d.users).map(|_| angle(rng)).collect()).collect();
    let theta_sen: Vec<Vec<f64>> = (0..d.bs).map(|_| (0..d.targets).map(|_| angle(rng)).collect()).collect();
    let theta_rx: Vec<f64> = (0..d.targets).map(|_| angle(rng)).collect();
    let dist = |rng: &mut R| rng.gen_range(cfg.dist_min..=cfg.dist_max);
    let dist_com: Vec<Vec<f64>> = (0..d.bs).map(|_| (0..d.users).map(|_| dist(rng)).collect()).collect();
    let dist_sen: Vec<Vec<f64>> = (0..d.bs).map(|_| (0..d.targets).map(|_| dist(rng)).collect()).collect();
    let dist_rx: Vec<f64> = (0..d.targets).map(|_| dist(rng)).collect();
    let topo = Topology {
        dims: d,
        spacing_bs: cfg.spacing_bs,
        spacing_user: cfg.spacing_user,
        spacing_radar: cfg.spacing_radar,
        theta_com,
        theta_sen,
        theta_rx,
        dist_com,
        dist_sen,
        dist_rx,
    };
    let mut com = Vec::with_capacity(d.bs);
    let mut sen = Vec::with_capacity(d.bs);
    let mut pl_com = Vec::with_capacity(d.bs);
    let mut pl_sen = Vec::with_capacity(d.bs);
    for m in 0..d.bs {
        let mut row = Vec::with_capacity(d.users);
        let mut pls = Vec::with_capacity(d.users);
        for i in 0..d.users {
            row.push(topo.assemble_channel(LinkKind::Com, m, i, cfg.kappa_com, rng)?);
            pls.push(topo.pathloss(LinkKind::Com, m, i)?);
        }
        com.push(row);
        pl_com.push(pls);
        let mut row = Vec::with_capacity(d.targets);
        let mut pls = Vec::with_capacity(d.targets);
        for j in 0..d.targets {
            row.push(topo.assemble_channel(LinkKind::Sen, m, j, cfg.kappa_sen, rng)?);
            pls.push(topo.pathloss(LinkKind::Sen, m, j)?);
        }
        sen.push(row);
        pl_sen.push(pls);
    }
    let set = ChannelSet {
        channels: Channels { com, sen },
        pl_com,
        pl_sen,
        kappa_com: cfg.kappa_com,
        kappa_sen: cfg.kappa_sen,
    };
    Ok((topo, set))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorModel {
    #[default]
    None,
    Bounded,
    Gaussian,
}

/// How error magnitudes are interpreted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorScale {
    /// Variances and bounds are absolute per-entry values.
    Absolute,
    /// Variances multiply, and bounds multiply the square root of, the mean
    /// entry power of the channel they perturb (a normalized MSE).
    #[default]
    Relative,
}

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CsiErrorSpec {
    pub model: ErrorModel,
    pub eps_com: f64,
    pub eps_sen: f64,
    pub var_com: f64,
    pub var_sen: f64,
    pub scale: ErrorScale,
}

impl CsiErrorSpec {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn gaussian(var_com: f64, var_sen: f64, scale: ErrorScale) -> Self {
        Self {
            model: ErrorModel::Gaussian,
            var_com,
            var_sen,
            scale,
            ..Self::default()
        }
    }

    pub fn bounded(eps_com: f64, eps_sen: f64, scale: ErrorScale) -> Self {
        Self {
            model: ErrorModel::Bounded,
            eps_com,
            eps_sen,
            scale,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("eps_com", self.eps_com),
            ("eps_sen", self.eps_sen),
            ("var_com", self.var_com),
            ("var_sen", self.var_sen),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ChannelError::ErrorSpec(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }

    /// True when every error draw is identically zero.
    pub fn is_trivial(&self) -> bool {
        match self.model {
            ErrorModel::None => true,
            ErrorModel::Bounded => self.eps_com == 0.0 && self.eps_sen == 0.0,
            ErrorModel::Gaussian => self.var_com == 0.0 && self.var_sen == 0.0,
        }
    }
}

/// Estimated, error and true channels with `actual == estimated + error`
/// holding entrywise without rounding.
#[derive(Clone, Debug, PartialEq)]
pub struct CsiRealization {
    pub estimated: Channels<f64>,
    pub error: Channels<f64>,
    pub actual: Channels<f64>,
}

impl CsiRealization {
    /// A realization with zero error.
    pub fn perfect(ch: &Channels<f64>) -> Self {
        Self {
            estimated: ch.clone(),
            error: ch.map(|h| CMatrix::zeros(h.rows(), h.cols())),
            actual: ch.clone(),
        }
    }

    /// Largest entry of `|actual - estimated - error|`.
    pub fn identity_residual(&self) -> f64 {
        let mut worst = 0.0f64;
        let all = |c: &Channels<f64>| c.com.iter().chain(&c.sen).flatten().cloned().collect::<Vec<_>>();
        for ((a, e), h) in all(&self.actual).iter().zip(all(&self.estimated)).zip(all(&self.error)) {
            let r = a.sub(&e).unwrap().sub(&h).unwrap();
            worst = worst.max(r.max_abs());
        }
        worst
    }
}

fn mean_entry_power(h: &CMatrix<f64>) -> f64 {
    h.frob_norm_sq() / (h.rows() * h.cols()) as f64
}

fn draw_error<R: Rng + ?Sized>(h: &CMatrix<f64>, spec: &CsiErrorSpec, com: bool, rng: &mut R) -> CMatrix<f64> {
    let rel = match spec.scale {
        ErrorScale::Absolute => 1.0,
        ErrorScale::Relative => mean_entry_power(h),
    };
    match spec.model {
        ErrorModel::None => CMatrix::zeros(h.rows(), h.cols()),
        ErrorModel::Gaussian => {
            let var = if com { spec.var_com } else { spec.var_sen } * rel;
            CMatrix::from_fn(h.rows(), h.cols(), |_, _| complex_gaussian(rng, var))
        }
        ErrorModel::Bounded => {
            let eps = if com { spec.eps_com } else { spec.eps_sen } * rel.sqrt();
            CMatrix::from_fn(h.rows(), h.cols(), |_, _| {
                let r = eps * rng.gen::<f64>().sqrt();
                let phi = 2.0 * PI * rng.gen::<f64>();
                let mut z = Complex::from_polar(r, phi);
                while z.norm() > eps {
                    z *= 1.0 - f64::EPSILON;
                }
                z
            })
        }
    }
}

/// Power-of-two grid fine enough that sums and differences of entries of
/// `a` and `b` (up to `|a| + |b|`) are exact.
fn dyadic_grid(a: &CMatrix<f64>, b: &CMatrix<f64>) -> Option<f64> {
    let comp = |m: &CMatrix<f64>| m.data().iter().fold(0.0f64, |acc, z| acc.max(z.re.abs()).max(z.im.abs()));
    let span = comp(a) + comp(b);
    if span == 0.0 {
        return None;
    }
    Some(2f64.powi(span.log2().ceil() as i32 - 51))
}

fn snap(m: &CMatrix<f64>, grid: f64, toward_zero: bool) -> CMatrix<f64> {
    let f = |x: f64| {
        let q = x / grid;
        (if toward_zero { q.trunc() } else { q.round() }) * grid
    };
    m.map(|z| Complex::new(f(z.re), f(z.im)))
}

/// `(estimated, error, actual)` from a reference channel and an error draw,
/// using `reference` as either the true or the estimated channel.
fn split(reference: &CMatrix<f64>, err: &CMatrix<f64>, reference_is_true: bool) -> (CMatrix<f64>, CMatrix<f64>, CMatrix<f64>) {
    let Some(grid) = dyadic_grid(reference, err) else {
        return (reference.clone(), err.clone(), reference.clone());
    };
    let h = snap(reference, grid, false);
    let e = snap(err, grid, true);
    if reference_is_true {
        let est = h.sub(&e).unwrap();
        (est, e, h)
    } else {
        let actual = h.add(&e).unwrap();
        (h, e, actual)
    }
}

fn realize<R: Rng + ?Sized>(ch: &Channels<f64>, spec: &CsiErrorSpec, rng: &mut R, reference_is_true: bool) -> Result<CsiRealization> {
    spec.validate()?;
    if spec.is_trivial() {
        return Ok(CsiRealization::perfect(ch));
    }
    let mut est = Channels { com: vec![], sen: vec![] };
    let mut err = est.clone();
    let mut act = est.clone();
    for (rows, com) in [(&ch.com, true), (&ch.sen, false)] {
        let (mut est_rows, mut err_rows, mut act_rows) = (vec![], vec![], vec![]);
        for row in rows {
            let (mut er, mut rr, mut ar) = (vec![], vec![], vec![]);
            for h in row {
                let draw = draw_error(h, spec, com, rng);
                let (e, r, a) = split(h, &draw, reference_is_true);
                er.push(e);
                rr.push(r);
                ar.push(a);
            }
            est_rows.push(er);
            err_rows.push(rr);
            act_rows.push(ar);
        }
        if com {
            est.com = est_rows;
            err.com = err_rows;
            act.com = act_rows;
        } else {
            est.sen = est_rows;
            err.sen = err_rows;
            act.sen = act_rows;
        }
    }
    Ok(CsiRealization {
        estimated: est,
        error: err,
        actual: act,
    })
}

/// Treats `truth` as the actual channel and derives the estimate as
/// `truth - error`.
///
/// Entries are snapped to a power-of-two grid (relative change below
/// 2^-51) so the decomposition is exact in floating point; bounded errors
/// are truncated toward zero so the bound still holds.
pub fn apply_csi_error<R: Rng + ?Sized>(truth: &Channels<f64>, spec: &CsiErrorSpec, rng: &mut R) -> Result<CsiRealization> {
    realize(truth, spec, rng, true)
}

/// Treats `estimate` as known and draws the actual channel as
/// `estimate + error`, the form used for expectations over the error.
pub fn perturb_estimate<R: Rng + ?Sized>(estimate: &Channels<f64>, spec: &CsiErrorSpec, rng: &mut R) -> Result<CsiRealization> {
    realize(estimate, spec, rng, false)
}
