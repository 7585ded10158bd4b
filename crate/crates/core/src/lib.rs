//! Cell-free MIMO integrated sensing and communication lab: channel model,
//! SINR and sum-capacity metrics, a graph-network hybrid beamformer,
//! classical precoders and a fixed-point accelerator emulator.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the rest of the workspace.

pub mod baselines;
pub mod channel;
pub mod fpga;
pub mod gnn;
pub mod linalg;
pub mod metrics;
pub mod scalar;
pub mod tensor;

pub use scalar::Scalar;

pub type Real = f64;
pub type Tensor64 = tensor::Tensor<f64>;
pub type Tensor32 = tensor::Tensor<f32>;
pub type CMatrix64 = linalg::CMatrix<f64>;
/// Precision the network is trained at; evaluation casts to [`Real`].
pub type TrainReal = f32;
pub type GnnModel64 = gnn::GnnModel<f64>;
pub type GnnModel32 = gnn::GnnModel<f32>;
