use serde::{Deserialize, Serialize};

use crate::gnn::GnnConfig;

use super::quant::{MAX_BITS, MIN_BITS};
use super::{FpgaError, Result};

pub const BUS_WIDTHS: [u32; 4] = [32, 64, 128, 256];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AcceleratorConfig {
    /// Systolic array side `S`.
    pub array: usize,
    pub bus_bits: u32,
    pub clock_ns: f64,
    /// On-chip buffer shared by the two halves of the double buffer.
    pub buffer_bytes: usize,
    pub bias_bits: u32,
    /// Keep intermediate activations on chip.
    pub fused: bool,
}

impl Default for AcceleratorConfig {
    fn default() -> Self {
        Self {
            array: 16,
            bus_bits: 64,
            clock_ns: 10.0,
            buffer_bytes: 512 * 1024,
            bias_bits: 32,
            fused: true,
        }
    }
}

impl AcceleratorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.array == 0 {
            return Err(FpgaError::Config("array size must be at least 1".into()));
        }
        if !BUS_WIDTHS.contains(&self.bus_bits) {
            return Err(FpgaError::Config(format!("bus width {} not in {BUS_WIDTHS:?}", self.bus_bits)));
        }
        if !(self.clock_ns.is_finite() && self.clock_ns > 0.0) {
            return Err(FpgaError::Config(format!("clock period must be positive, got {}", self.clock_ns)));
        }
        if self.buffer_bytes == 0 {
            return Err(FpgaError::Config("buffer capacity must be positive".into()));
        }
        Ok(())
    }

    fn bus_bytes(&self) -> usize {
        (self.bus_bits / 8) as usize
    }
}

/// One dense layer as the accelerator sees it: `rows x k` activations
/// times a `k x cols` weight matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub name: String,
    pub rows: usize,
    pub k: usize,
    pub cols: usize,
    /// Input comes from off-chip memory even when fused.
    pub reads_input: bool,
    /// Output goes to off-chip memory even when fused.
    pub writes_output: bool,
}

/// Dense layers of one BS network for `users` users and `targets`
/// targets, in execution order.
pub fn network_layers(cfg: &GnnConfig, users: usize, targets: usize) -> Vec<LayerShape> {
    let (h, e) = (cfg.hidden, cfg.embed);
    let nodes = users + targets;
    let layer = |name: String, rows, k, cols| LayerShape {
        name,
        rows,
        k,
        cols,
        reads_input: false,
        writes_output: false,
    };
    let mut out = vec![
        LayerShape {
            reads_input: true,
            ..layer("emb_com.l1".into(), users, cfg.com_width(), h)
        },
        layer("emb_com.l2".into(), users, h, e),
        LayerShape {
            reads_input: true,
            ..layer("emb_sen.l1".into(), targets, cfg.sen_width(), h)
        },
        layer("emb_sen.l2".into(), targets, h, e),
    ];
    for k in 0..cfg.conv_layers {
        out.push(layer(format!("conv{k}.node.l1"), nodes + 1, e, e));
        out.push(layer(format!("conv{k}.node.l2"), nodes + 1, e, e));
        out.push(layer(format!("conv{k}.combine.l1"), nodes + 1, 2 * e, e));
        out.push(layer(format!("conv{k}.combine.l2"), nodes + 1, e, e));
    }
    out.push(LayerShape {
        writes_output: true,
        ..layer("digital".into(), nodes, e, 2 * cfg.n_rf)
    });
    out.push(LayerShape {
        writes_output: true,
        ..layer("analog".into(), 1, e, cfg.n_t * cfg.n_rf)
    });
    out
}

/// Output block `[r0, r1) x [c0, c1)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tile {
    pub r0: usize,
    pub r1: usize,
    pub c0: usize,
    pub c1: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub tile_rows: usize,
    pub tile_cols: usize,
    /// Row blocks outer, column blocks inner.
    pub tiles: Vec<Tile>,
}

fn tile_bits(tr: usize, tc: usize, k: usize, bits: u32) -> usize {
    (tr * k + k * tc + tr * tc) * bits as usize
}

/// Fewest tiles whose input block, weight block and output block fit twice
/// (ping and pong) in `buffer_bytes`; ties go to the larger tile.
pub fn loop_tiling_plan(layer: &LayerShape, buffer_bytes: usize, bits: u32) -> Result<TilePlan> {
    let err = |detail: String| FpgaError::Tiling {
        layer: layer.name.clone(),
        detail,
    };
    if buffer_bytes == 0 {
        return Err(err("buffer capacity is zero".into()));
    }
    if layer.rows == 0 || layer.k == 0 || layer.cols == 0 {
        return Err(err(format!("empty layer {}x{}x{}", layer.rows, layer.k, layer.cols)));
    }
    let cap = buffer_bytes * 8 / 2;
    if tile_bits(1, 1, layer.k, bits) > cap {
        return Err(err(format!(
            "a single output needs {} bytes per buffer half, capacity allows {}",
            tile_bits(1, 1, layer.k, bits).div_ceil(8),
            cap / 8
        )));
    }
    let k = layer.k;
    let b = bits as usize;
    let mut best: Option<(usize, usize, usize)> = None;
    for tc in 1..=layer.cols {
        // Largest tr with (tr k + k tc + tr tc) b <= cap.
        let budget = cap / b;
        if k * tc >= budget {
            break;
        }
        let tr = ((budget - k * tc) / (k + tc)).min(layer.rows);
        if tr == 0 {
            continue;
        }
        let count = layer.rows.div_ceil(tr) * layer.cols.div_ceil(tc);
        let better = match best {
            None => true,
            Some((c, r0, c0)) => count < c || (count == c && tr * tc >= r0 * c0),
        };
        if better {
            best = Some((count, tr, tc));
        }
    }
    let (_, tr, tc) = best.ok_or_else(|| err("no tile fits the buffer".into()))?;
    let mut tiles = Vec::new();
    for r0 in (0..layer.rows).step_by(tr) {
        for c0 in (0..layer.cols).step_by(tc) {
            tiles.push(Tile {
                r0,
                r1: (r0 + tr).min(layer.rows),
                c0,
                c1: (c0 + tc).min(layer.cols),
            });
        }
    }
    Ok(TilePlan {
        tile_rows: tr,
        tile_cols: tc,
        tiles,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerLatency {
    pub name: String,
    pub rows: usize,
    pub k: usize,
    pub cols: usize,
    pub tiles: usize,
    pub compute_cycles: u64,
    pub transfer_cycles: u64,
    pub weight_cycles: u64,
    pub writeback_cycles: u64,
    /// Transfer before the first tile can start and after the last tile,
    /// which double buffering cannot hide.
    pub fill_cycles: u64,
    pub drain_cycles: u64,
    pub total_cycles: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub bits: u32,
    pub config: AcceleratorConfig,
    pub layers: Vec<LayerLatency>,
    pub compute_cycles: u64,
    pub transfer_cycles: u64,
    pub weight_load_cycles: u64,
    pub writeback_cycles: u64,
    pub total_cycles: u64,
    pub total_ms: f64,
}

fn bus_cycles(bits: usize, bus_bytes: usize) -> u64 {
    bits.div_ceil(8).div_ceil(bus_bytes) as u64
}

/// Layer-level roofline: per tile, compute `ceil(r/S) ceil(c/S) (k + S)`
/// cycles overlaps the next tile's transfer; the first load and the last
/// writeback do not overlap.
pub fn latency_estimate(layers: &[LayerShape], cfg: &AcceleratorConfig, bits: u32) -> Result<LatencyReport> {
    cfg.validate()?;
    if !(MIN_BITS..=MAX_BITS).contains(&bits) {
        return Err(FpgaError::Format(format!("bit width {bits} outside {MIN_BITS}..={MAX_BITS}")));
    }
    let s = cfg.array;
    let bus = cfg.bus_bytes();
    let b = bits as usize;
    let mut out = Vec::with_capacity(layers.len());
    for layer in layers {
        let plan = loop_tiling_plan(layer, cfg.buffer_bytes, bits)?;
        let reads = !cfg.fused || layer.reads_input;
        let writes = !cfg.fused || layer.writes_output;
        let (mut compute, mut transfer, mut weight, mut wb) = (0u64, 0u64, 0u64, 0u64);
        let (mut fill, mut drain) = (0u64, 0u64);
        let mut last_r0 = usize::MAX;
        for (n, t) in plan.tiles.iter().enumerate() {
            let (tr, tc) = (t.r1 - t.r0, t.c1 - t.c0);
            compute += (tr.div_ceil(s) * tc.div_ceil(s) * (layer.k + s)) as u64;
            // The input block stays resident across the column tiles of a
            // row block; weight blocks are streamed per tile.
            let input = if reads && t.r0 != last_r0 { tr * layer.k * b } else { 0 };
            last_r0 = t.r0;
            let w = bus_cycles(layer.k * tc * b + tc * cfg.bias_bits as usize, bus);
            let load = bus_cycles(input, bus) + w;
            let store = if writes { bus_cycles(tr * tc * b, bus) } else { 0 };
            weight += w;
            wb += store;
            transfer += load + store;
            if n == 0 {
                fill = load;
            }
            if n + 1 == plan.tiles.len() {
                drain = store;
            }
        }
        let hidden = transfer - fill - drain;
        let total = fill + compute.max(hidden) + drain;
        out.push(LayerLatency {
            name: layer.name.clone(),
            rows: layer.rows,
            k: layer.k,
            cols: layer.cols,
            tiles: plan.tiles.len(),
            compute_cycles: compute,
            transfer_cycles: transfer,
            weight_cycles: weight,
            writeback_cycles: wb,
            fill_cycles: fill,
            drain_cycles: drain,
            total_cycles: total,
        });
    }
    let sum = |f: fn(&LayerLatency) -> u64| out.iter().map(f).sum::<u64>();
    let total = sum(|l| l.total_cycles);
    Ok(LatencyReport {
        bits,
        config: cfg.clone(),
        compute_cycles: sum(|l| l.compute_cycles),
        transfer_cycles: sum(|l| l.transfer_cycles),
        weight_load_cycles: sum(|l| l.weight_cycles),
        writeback_cycles: sum(|l| l.writeback_cycles),
        total_cycles: total,
        total_ms: total as f64 * cfg.clock_ns * 1e-6,
        layers: out,
    })
}
