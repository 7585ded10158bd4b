//! Per-BS graph neural network that maps channels to hybrid beamformers.
//!
//! Each BS runs its own network on its own channels: node rows for users
//! and targets, an appended mean node, two max-pool graph convolutions, a
//! digital head on the node rows and an analog phase head on the mean row.
//! Normalization makes the analog entries unit modulus and scales the
//! digital beams so the BS transmits exactly the power budget.

mod checkpoint;
mod features;
mod model;
mod train;

pub use checkpoint::{Checkpoint, TensorRecord, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use features::{build_node_features, channel_row, feature_scale, unflatten_row, BatchLayout, NodeFeatureBatch};
pub use model::{
    append_mean_node, dense, embed, graph_conv, mlp, normalize_analog, normalize_digital, output_heads, BsNet,
    ConvLayer, Dense, GnnModel, Inference, Mlp, SampleBeams,
};
pub use train::{
    loss_on_tape, mean_wscsc, train, EpochRecord, LossSample, StepRecord, TrainConfig, TrainTrace, EXPERIMENT_TRAIN,
    EXPERIMENT_VALIDATION,
};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{pathloss_linear, ChannelError, Dims, ScenarioConfig};
use crate::metrics::MetricError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum GnnError {
    #[error("invalid network config: {0}")]
    Config(String),
    #[error("input does not match the network: {0}")]
    Shape(String),
    #[error("non-finite input or objective for sample {sample} at step {step}")]
    NonFinite { step: usize, sample: usize },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = GnnError> = std::result::Result<T, E>;

/// Layer sizes and feature scaling. The node MLPs of each convolution are
/// `embed -> embed -> embed` and the combination MLPs `2*embed -> embed ->
/// embed`; all hidden and MLP output layers use ReLU, heads are linear.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GnnConfig {
    pub bs: usize,
    pub n_t: usize,
    pub n_rf: usize,
    pub n_u: usize,
    pub n_r: usize,
    pub hidden: usize,
    pub embed: usize,
    pub conv_layers: usize,
    /// One parameter set used by every BS instead of one per BS.
    pub shared: bool,
    /// Multipliers applied to raw channel entries; powers of two so that
    /// feature rows convert back to channels exactly.
    pub feature_scale_com: f64,
    pub feature_scale_sen: f64,
}

impl Default for GnnConfig {
    fn default() -> Self {
        Self::from_scenario(&ScenarioConfig::default())
    }
}

impl GnnConfig {
    /// Table-sized network for a scenario, with feature scales set so an
    /// average channel entry at the mid-range distance is of order one.
    pub fn from_scenario(cfg: &ScenarioConfig) -> Self {
        let d = cfg.dims;
        let (com, sen) = feature_scale(cfg);
        Self {
            bs: d.bs,
            n_t: d.n_t,
            n_rf: d.n_rf,
            n_u: d.n_u,
            n_r: d.n_r,
            hidden: 512,
            embed: 256,
            conv_layers: 2,
            shared: false,
            feature_scale_com: com,
            feature_scale_sen: sen,
        }
    }

    pub fn com_width(&self) -> usize {
        2 * self.n_t * self.n_u
    }

    pub fn sen_width(&self) -> usize {
        2 * self.n_t * self.n_r
    }

    pub fn validate(&self) -> Result<()> {
        let sizes = [
            ("bs", self.bs),
            ("n_t", self.n_t),
            ("n_rf", self.n_rf),
            ("n_u", self.n_u),
            ("n_r", self.n_r),
            ("hidden", self.hidden),
            ("embed", self.embed),
        ];
        if let Some((name, _)) = sizes.iter().find(|(_, v)| *v == 0) {
            return Err(GnnError::Config(format!("{name} must be positive")));
        }
        for (name, s) in [("feature_scale_com", self.feature_scale_com), ("feature_scale_sen", self.feature_scale_sen)] {
            if !(s.is_finite() && s > 0.0) {
                return Err(GnnError::Config(format!("{name} must be finite and positive, got {s}")));
            }
        }
        Ok(())
    }

    /// Checks that a topology can be fed to this network.
    pub fn check_dims(&self, d: &Dims) -> Result<()> {
        let ok = d.bs == self.bs && d.n_t == self.n_t && d.n_rf == self.n_rf && d.n_u == self.n_u && d.n_r == self.n_r;
        if !ok {
            return Err(GnnError::Shape(format!(
                "network built for bs={} n_t={} n_rf={} n_u={} n_r={}, topology has bs={} n_t={} n_rf={} n_u={} n_r={}",
                self.bs, self.n_t, self.n_rf, self.n_u, self.n_r, d.bs, d.n_t, d.n_rf, d.n_u, d.n_r
            )));
        }
        Ok(())
    }
}

pub(crate) fn mid_range_pathloss(cfg: &ScenarioConfig) -> f64 {
    pathloss_linear(0.5 * (cfg.dist_min + cfg.dist_max)).unwrap_or(1.0)
}
