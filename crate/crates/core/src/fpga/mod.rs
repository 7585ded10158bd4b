//! Fixed-point accelerator emulator: bit-exact integer inference of the
//! trained network and a layer-level latency model of a systolic array fed
//! through double-buffered on-chip memory.

mod emulate;
mod latency;
mod quant;

pub use emulate::{accuracy_delta, emulate, AccuracyDelta, Emulation, ExecMode, LayerTrace, QuantizedLayer, QuantizedModel};
pub use latency::{
    latency_estimate, loop_tiling_plan, network_layers, AcceleratorConfig, LayerLatency, LayerShape, LatencyReport,
    Tile, TilePlan, BUS_WIDTHS,
};
pub use quant::{
    accumulator_bits, calibrate_and_quantize, div_round_even, fixed_point_matmul, integer_matmul, qmax, quantize,
    requantize_dynamic, rescale, FixedPointFormat, QuantizedTensor, Requant, MAX_BITS, MIN_BITS,
};

use thiserror::Error;

use crate::gnn::GnnError;
use crate::metrics::MetricError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum FpgaError {
    #[error("fixed-point format: {0}")]
    Format(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {0}")]
    NonFinite(String),
    #[error("accumulator overflow: {0}; widen the accumulator")]
    Overflow(String),
    #[error("layer {layer} cannot be tiled: {detail}")]
    Tiling { layer: String, detail: String },
    #[error("invalid accelerator config: {0}")]
    Config(String),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = FpgaError> = std::result::Result<T, E>;
