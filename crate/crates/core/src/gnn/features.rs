use num_complex::Complex;

use crate::channel::{Channels, ScenarioConfig};
use crate::linalg::CMatrix;
use crate::scalar::{lit, Scalar};
use crate::tensor::Tensor;

use super::{mid_range_pathloss, GnnConfig, GnnError, Result};

/// Row bookkeeping for a batch of samples sharing one user/target count.
///
/// Rows are grouped by kind across the batch: all user rows (sample-major),
/// then all target rows, then one mean row per sample once it is appended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BatchLayout {
    pub batch: usize,
    pub users: usize,
    pub targets: usize,
}

impl BatchLayout {
    pub fn streams(&self) -> usize {
        self.users + self.targets
    }

    pub fn node_rows(&self) -> usize {
        self.batch * self.streams()
    }

    pub fn total_rows(&self) -> usize {
        self.node_rows() + self.batch
    }

    pub fn user_row(&self, b: usize, i: usize) -> usize {
        b * self.users + i
    }

    pub fn target_row(&self, b: usize, j: usize) -> usize {
        self.batch * self.users + b * self.targets + j
    }

    pub fn mean_row(&self, b: usize) -> usize {
        self.node_rows() + b
    }

    /// Node rows of sample `b` in stream order: users, then targets.
    pub fn sample_nodes(&self, b: usize) -> Vec<usize> {
        (0..self.users)
            .map(|i| self.user_row(b, i))
            .chain((0..self.targets).map(|j| self.target_row(b, j)))
            .collect()
    }

    /// Every row of every sample, mean row last, for the convolutions.
    pub fn samples(&self) -> Vec<Vec<usize>> {
        (0..self.batch)
            .map(|b| {
                let mut rows = self.sample_nodes(b);
                rows.push(self.mean_row(b));
                rows
            })
            .collect()
    }
}

/// Raw node features of one BS for a batch: `com` has one row per user,
/// `sen` one row per target.
#[derive(Clone, Debug, PartialEq)]
pub struct NodeFeatureBatch<T> {
    pub com: Tensor<T>,
    pub sen: Tensor<T>,
    pub layout: BatchLayout,
}

fn pow2_near(x: f64) -> f64 {
    2f64.powi(x.log2().round() as i32)
}

/// `(com, sen)` feature multipliers: the power of two nearest to the inverse
/// RMS channel entry at the mid-range distance.
pub fn feature_scale(cfg: &ScenarioConfig) -> (f64, f64) {
    let d = cfg.dims;
    let pl = mid_range_pathloss(cfg);
    let (n_t, n_u, n_r) = (d.n_t as f64, d.n_u as f64, d.n_r as f64);
    let com = pl / (n_u * n_u * n_t * n_t);
    let sen = pl * pl / (n_r * n_r * n_t * n_t);
    (pow2_near(com.sqrt().recip()), pow2_near(sen.sqrt().recip()))
}

/// `[Re H | Im H]` flattened row by row, times `scale`: for each receive
/// antenna the `n_t` real parts followed by the `n_t` imaginary parts.
pub fn channel_row(h: &CMatrix<f64>, scale: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * h.rows() * h.cols());
    for r in 0..h.rows() {
        out.extend((0..h.cols()).map(|c| h.get(r, c).re * scale));
        out.extend((0..h.cols()).map(|c| h.get(r, c).im * scale));
    }
    out
}

/// Inverse of [`channel_row`].
pub fn unflatten_row(row: &[f64], rows: usize, cols: usize, scale: f64) -> Result<CMatrix<f64>> {
    if row.len() != 2 * rows * cols {
        return Err(GnnError::Shape(format!("row of {} values for a {rows}x{cols} channel", row.len())));
    }
    Ok(CMatrix::from_fn(rows, cols, |r, c| {
        let base = 2 * r * cols;
        Complex::new(row[base + c] / scale, row[base + cols + c] / scale)
    }))
}

/// Feature rows of BS `m` for every sample in the batch.
pub fn build_node_features<T: Scalar>(
    samples: &[&Channels<f64>],
    m: usize,
    cfg: &GnnConfig,
) -> Result<NodeFeatureBatch<T>> {
    let first = samples.first().ok_or_else(|| GnnError::Shape("empty batch".into()))?;
    let layout = BatchLayout {
        batch: samples.len(),
        users: first.users(),
        targets: first.targets(),
    };
    if layout.users == 0 || layout.targets == 0 {
        return Err(GnnError::Shape("each sample needs at least one user and one target".into()));
    }
    let mut com = Vec::with_capacity(layout.batch * layout.users * cfg.com_width());
    let mut sen = Vec::with_capacity(layout.batch * layout.targets * cfg.sen_width());
    for (b, ch) in samples.iter().enumerate() {
        if ch.users() != layout.users || ch.targets() != layout.targets || m >= ch.bs() {
            return Err(GnnError::Shape(format!(
                "sample {b} has {} BSs, {} users, {} targets; batch expects BS {m}, {} users, {} targets",
                ch.bs(),
                ch.users(),
                ch.targets(),
                layout.users,
                layout.targets
            )));
        }
        for h in &ch.com[m] {
            if h.dims() != (cfg.n_u, cfg.n_t) {
                return Err(GnnError::Shape(format!("user channel {:?}, expected ({}, {})", h.dims(), cfg.n_u, cfg.n_t)));
            }
            com.extend(channel_row(h, cfg.feature_scale_com).into_iter().map(lit::<T>));
        }
        for h in &ch.sen[m] {
            if h.dims() != (cfg.n_r, cfg.n_t) {
                return Err(GnnError::Shape(format!(
                    "target channel {:?}, expected ({}, {})",
                    h.dims(),
                    cfg.n_r,
                    cfg.n_t
                )));
            }
            sen.extend(channel_row(h, cfg.feature_scale_sen).into_iter().map(lit::<T>));
        }
    }
    Ok(NodeFeatureBatch {
        com: Tensor::matrix(layout.batch * layout.users, cfg.com_width(), com)?,
        sen: Tensor::matrix(layout.batch * layout.targets, cfg.sen_width(), sen)?,
        layout,
    })
}
