//! JSON checkpoint container.
//!
//! ```json
//! { "format": "isac-gnn", "version": 1, "scalar": "f64", "seed": 7,
//!   "config": { ...GnnConfig... },
//!   "tensors": [ { "name": "bs0.emb_com.l1.w", "shape": [64, 512], "data": [...] }, ... ] }
//! ```
//!
//! Tensors are listed in parameter order with row-major values. Values are
//! stored as f64 regardless of the training scalar; `scalar` records which
//! one produced them.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::scalar::{lit, to_f64, Scalar};
use crate::tensor::Tensor;

use super::model::GnnModel;
use super::{GnnConfig, GnnError, Result};

pub const CHECKPOINT_FORMAT: &str = "isac-gnn";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub scalar: String,
    pub seed: u64,
    pub config: GnnConfig,
    pub tensors: Vec<TensorRecord>,
}

impl<T: Scalar> GnnModel<T> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            scalar: T::NAME.into(),
            seed: self.seed,
            config: self.config.clone(),
            tensors: self
                .store
                .iter()
                .map(|p| TensorRecord {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    data: p.value.data().iter().map(|&v| to_f64(v)).collect(),
                })
                .collect(),
        }
    }

    /// Rebuilds the parameter layout from the stored config and fills it
    /// with the stored values; names and shapes must match exactly.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(GnnError::Checkpoint(format!(
                "unsupported container {} v{} (expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION})",
                ck.format, ck.version
            )));
        }
        let mut model = Self::new(ck.config.clone(), ck.seed)?;
        if model.store.len() != ck.tensors.len() {
            return Err(GnnError::Checkpoint(format!(
                "{} tensors stored, config needs {}",
                ck.tensors.len(),
                model.store.len()
            )));
        }
        for (p, rec) in model.store.iter_mut().zip(&ck.tensors) {
            if p.name != rec.name || p.value.shape() != rec.shape.as_slice() {
                return Err(GnnError::Checkpoint(format!(
                    "tensor `{}` {:?} where `{}` {:?} was expected",
                    rec.name,
                    rec.shape,
                    p.name,
                    p.value.shape()
                )));
            }
            if rec.data.iter().any(|v| !v.is_finite()) {
                return Err(GnnError::Checkpoint(format!("tensor `{}` holds non-finite values", rec.name)));
            }
            p.value = Tensor::new(rec.shape.clone(), rec.data.iter().map(|&v| lit(v)).collect())?;
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_checkpoint(&serde_json::from_str(&text)?)
    }
}
