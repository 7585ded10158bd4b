//! Experiment harness for the cell-free ISAC beamforming lab: config
//! loading, training runs, sweeps against the classical baselines, the
//! accelerator latency grid, CSV output with metadata sidecars, and SVG
//! plots rendered from those CSVs.

pub mod config;
pub mod latency;
pub mod output;
pub mod plot;
pub mod run;

use thiserror::Error;

pub use config::{load_config, parse_config, ExperimentConfig, Scheme, SweepVar};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error at {0}")]
    Config(String),
    #[error("{0}")]
    Input(String),
    #[error(transparent)]
    Gnn(#[from] isac_core::gnn::GnnError),
    #[error(transparent)]
    Metric(#[from] isac_core::metrics::MetricError),
    #[error(transparent)]
    Channel(#[from] isac_core::channel::ChannelError),
    #[error(transparent)]
    Fpga(#[from] isac_core::fpga::FpgaError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("plot: {0}")]
    Plot(String),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;
