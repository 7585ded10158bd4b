//! Accelerator latency and fixed-point accuracy over a bit-width by
//! bus-width grid.

use std::path::{Path, PathBuf};

use isac_core::fpga::{
    accuracy_delta, latency_estimate, network_layers, AcceleratorConfig, LatencyReport, QuantizedModel,
};
use isac_core::gnn::GnnModel;
use isac_core::{GnnModel64, TrainReal};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::run::{eval_channels, Point};
use crate::{HarnessError, Result};

/// Reference cycle band reported next to the default-config estimate.
pub const REFERENCE_CYCLES: (u64, u64) = (432_638, 658_873);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub bits: u32,
    pub bus_bits: u32,
    pub total_cycles: u64,
    pub total_ms: f64,
    pub compute_cycles: u64,
    pub transfer_cycles: u64,
    pub weight_load_cycles: u64,
    pub writeback_cycles: u64,
    pub median_rel_error: f64,
    pub float_wscsc: f64,
    pub fixed_wscsc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerRow {
    pub bits: u32,
    pub bus_bits: u32,
    pub layer: String,
    pub rows: usize,
    pub k: usize,
    pub cols: usize,
    pub tiles: usize,
    pub compute_cycles: u64,
    pub transfer_cycles: u64,
    pub fill_cycles: u64,
    pub drain_cycles: u64,
    pub total_cycles: u64,
}

#[derive(Clone, Debug, Default)]
pub struct LatencyOutput {
    pub rows: Vec<LatencyRow>,
    pub layers: Vec<LayerRow>,
    pub reports: Vec<LatencyReport>,
}

pub fn checkpoint_path(cfg: &ExperimentConfig, flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| cfg.latency.checkpoint.clone())
        .unwrap_or_else(|| cfg.out_dir.join("model.json"))
}

pub fn load_model(path: &Path) -> Result<GnnModel64> {
    if !path.exists() {
        return Err(HarnessError::Input(format!(
            "checkpoint {} not found; run `isac-lab train` first or pass --checkpoint <path>",
            path.display()
        )));
    }
    Ok(GnnModel::<TrainReal>::load(path)?.cast())
}

/// Median relative WSCSC error of fused fixed-point inference and the mean
/// float and fixed objectives over `draws` evaluation channels.
pub fn accuracy(cfg: &ExperimentConfig, model: &GnnModel64, bits: u32, draws: usize) -> Result<(f64, f64, f64)> {
    let point = Point::base(cfg);
    let q = QuantizedModel::new(model, bits)?;
    let mut errs = Vec::with_capacity(draws);
    let (mut fl, mut fx) = (0.0, 0.0);
    for ch in eval_channels(cfg.seed, &point.scenario, draws)? {
        let d = accuracy_delta(model, &q, &ch, &point.weights, &point.noise, cfg.receive)?;
        errs.push(d.rel_error);
        fl += d.float_wscsc;
        fx += d.fixed_wscsc;
    }
    errs.sort_by(f64::total_cmp);
    let n = errs.len();
    let median = if n % 2 == 1 { errs[n / 2] } else { 0.5 * (errs[n / 2 - 1] + errs[n / 2]) };
    Ok((median, fl / n as f64, fx / n as f64))
}

pub fn run_latency(cfg: &ExperimentConfig, model: &GnnModel64) -> Result<LatencyOutput> {
    let d = cfg.scenario.dims;
    model.config.check_dims(&d)?;
    let layers = network_layers(&model.config, d.users, d.targets);
    let mut out = LatencyOutput::default();
    for &bits in &cfg.latency.bits {
        let (median, fl, fx) = accuracy(cfg, model, bits, cfg.latency.draws)?;
        for &bus in &cfg.latency.bus_bits {
            let acc = AcceleratorConfig {
                bus_bits: bus,
                ..cfg.latency.accelerator.clone()
            };
            let r = latency_estimate(&layers, &acc, bits)?;
            out.rows.push(LatencyRow {
                bits,
                bus_bits: bus,
                total_cycles: r.total_cycles,
                total_ms: r.total_ms,
                compute_cycles: r.compute_cycles,
                transfer_cycles: r.transfer_cycles,
                weight_load_cycles: r.weight_load_cycles,
                writeback_cycles: r.writeback_cycles,
                median_rel_error: median,
                float_wscsc: fl,
                fixed_wscsc: fx,
            });
            out.layers.extend(r.layers.iter().map(|l| LayerRow {
                bits,
                bus_bits: bus,
                layer: l.name.clone(),
                rows: l.rows,
                k: l.k,
                cols: l.cols,
                tiles: l.tiles,
                compute_cycles: l.compute_cycles,
                transfer_cycles: l.transfer_cycles,
                fill_cycles: l.fill_cycles,
                drain_cycles: l.drain_cycles,
                total_cycles: l.total_cycles,
            }));
            out.reports.push(r);
        }
    }
    Ok(out)
}
