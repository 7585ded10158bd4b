use std::borrow::Cow;
use std::collections::BTreeMap;

use crate::channel::Channels;
use crate::gnn::{build_node_features, normalize_analog, normalize_digital, GnnConfig, GnnModel};
use crate::linalg::CMatrix;
use crate::metrics::{evaluate, BeamformerSet, Noise, ObjectiveWeights, ReceiveMode};
use crate::scalar::{to_f64, Scalar};
use crate::tensor::{Eager, Tensor};

use super::quant::{
    accumulator_bits, calibrate_and_quantize, div_round_even, integer_matmul, requantize_dynamic, rescale,
    QuantizedTensor,
};
use super::{FpgaError, Result};

/// `Fused` keeps every intermediate activation on chip; `Unfused` writes
/// each layer's output to off-chip memory and reads it back.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecMode {
    Fused,
    Unfused,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedLayer {
    pub w: QuantizedTensor,
    /// Biases stay real until the input scale is known, then round onto
    /// the accumulator grid.
    pub bias: Vec<f64>,
    pub relu: bool,
}

/// Per-tensor quantized weights of every BS network.
#[derive(Clone, Debug)]
pub struct QuantizedModel {
    pub bits: u32,
    pub config: GnnConfig,
    pub nets: Vec<BTreeMap<String, QuantizedLayer>>,
}

impl QuantizedModel {
    pub fn new<T: Scalar>(model: &GnnModel<T>, bits: u32) -> Result<Self> {
        let mut nets = Vec::with_capacity(model.nets.len());
        for net in &model.nets {
            let mut layers = BTreeMap::new();
            for (name, d, relu) in net.layers() {
                let w = calibrate_and_quantize(&model.store.get(d.w).value, bits)?;
                let bias = model.store.get(d.b).value.data().iter().map(|&v| to_f64(v)).collect();
                layers.insert(name, QuantizedLayer { w, bias, relu });
            }
            nets.push(layers);
        }
        Ok(Self {
            bits,
            config: model.config.clone(),
            nets,
        })
    }
}

/// Integer output of one stage of the forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerTrace {
    pub name: String,
    pub values: Vec<i32>,
    pub scale: f64,
    /// Accumulator width used, 0 for stages without multiply-accumulate.
    pub acc_bits: u32,
}

#[derive(Clone, Debug)]
pub struct Emulation {
    pub beams: BeamformerSet<f64>,
    pub degenerate: Vec<bool>,
    /// `trace[m]`: stages of BS `m` in execution order.
    pub trace: Vec<Vec<LayerTrace>>,
    /// Activation bytes moved to and from off-chip memory.
    pub offchip_bytes: usize,
    /// Entries clamped by quantization anywhere in the pass.
    pub clamped: usize,
}

struct Run<'a> {
    layers: &'a BTreeMap<String, QuantizedLayer>,
    bits: u32,
    mode: ExecMode,
    trace: Vec<LayerTrace>,
    offchip_bytes: usize,
    clamped: usize,
}

impl Run<'_> {
    fn record(&mut self, name: &str, t: &QuantizedTensor, acc_bits: u32) {
        self.clamped += t.clamped;
        self.trace.push(LayerTrace {
            name: name.to_string(),
            values: t.values.clone(),
            scale: t.format.scale,
            acc_bits,
        });
    }

    /// Packs codes at `bits` per entry, as a memory controller would, and
    /// unpacks them again.
    fn offchip(&mut self, t: QuantizedTensor) -> QuantizedTensor {
        let bits = t.format.bits as usize;
        let mask = (1u64 << bits) - 1;
        let mut packed = vec![0u8; (t.values.len() * bits).div_ceil(8)];
        for (i, &v) in t.values.iter().enumerate() {
            let u = (v as i64 as u64) & mask;
            for b in 0..bits {
                if u >> b & 1 == 1 {
                    let pos = i * bits + b;
                    packed[pos / 8] |= 1 << (pos % 8);
                }
            }
        }
        self.offchip_bytes += 2 * packed.len();
        let values = (0..t.values.len())
            .map(|i| {
                let mut u = 0u64;
                for b in 0..bits {
                    let pos = i * bits + b;
                    u |= ((packed[pos / 8] >> (pos % 8) & 1) as u64) << b;
                }
                // Sign-extend from `bits`.
                ((u << (64 - bits)) as i64 >> (64 - bits)) as i32
            })
            .collect();
        QuantizedTensor { values, ..t }
    }

    fn dense(&mut self, name: &str, x: &QuantizedTensor) -> Result<QuantizedTensor> {
        let layer = self.layers.get(name).ok_or_else(|| FpgaError::Shape(format!("no layer {name}")))?;
        let (rows, _) = x.dims2()?;
        let (k, cols) = layer.w.dims2()?;
        let acc_scale = x.format.scale * layer.w.format.scale;
        let bias: Vec<i64> = layer
            .bias
            .iter()
            .map(|&b| {
                let q = (b / acc_scale).round_ties_even();
                if q.abs() >= i64::MAX as f64 / 2.0 {
                    return Err(FpgaError::Overflow(format!("bias of {name} exceeds the accumulator")));
                }
                Ok(q as i64)
            })
            .collect::<Result<_>>()?;
        let (mut acc, _) = integer_matmul(x, &layer.w)?;
        let bmax = bias.iter().map(|b| b.abs()).max().unwrap_or(0);
        let acc_bits = accumulator_bits(k, x.max_abs_code(), layer.w.max_abs_code(), bmax)?;
        for row in acc.chunks_mut(cols) {
            for (a, b) in row.iter_mut().zip(&bias) {
                *a += b;
                if layer.relu {
                    *a = (*a).max(0);
                }
            }
        }
        let out = requantize_dynamic(&acc, acc_scale, self.bits, vec![rows, cols])?;
        self.record(name, &out, acc_bits);
        Ok(match self.mode {
            ExecMode::Fused => out,
            ExecMode::Unfused => self.offchip(out),
        })
    }

    fn mlp(&mut self, name: &str, x: &QuantizedTensor) -> Result<QuantizedTensor> {
        let h = self.dense(&format!("{name}.l1"), x)?;
        self.dense(&format!("{name}.l2"), &h)
    }
}

/// Brings two tensors to the coarser of their scales so their codes can
/// share one buffer.
fn align(a: &QuantizedTensor, b: &QuantizedTensor) -> Result<(QuantizedTensor, QuantizedTensor)> {
    let s = a.format.scale.max(b.format.scale);
    Ok((rescale(a, s)?, rescale(b, s)?))
}

fn concat_rows(a: &QuantizedTensor, b: &QuantizedTensor) -> Result<QuantizedTensor> {
    let (a, b) = align(a, b)?;
    let (ra, c) = a.dims2()?;
    let (rb, cb) = b.dims2()?;
    if c != cb {
        return Err(FpgaError::Shape(format!("row concat of widths {c} and {cb}")));
    }
    let mut values = a.values;
    values.extend(b.values);
    Ok(QuantizedTensor {
        values,
        format: a.format,
        shape: vec![ra + rb, c],
        clamped: a.clamped + b.clamped,
    })
}

fn concat_cols(a: &QuantizedTensor, b: &QuantizedTensor) -> Result<QuantizedTensor> {
    let (a, b) = align(a, b)?;
    let (r, ca) = a.dims2()?;
    let (rb, cb) = b.dims2()?;
    if r != rb {
        return Err(FpgaError::Shape(format!("column concat of heights {r} and {rb}")));
    }
    let mut values = Vec::with_capacity(r * (ca + cb));
    for i in 0..r {
        values.extend_from_slice(&a.values[i * ca..(i + 1) * ca]);
        values.extend_from_slice(&b.values[i * cb..(i + 1) * cb]);
    }
    Ok(QuantizedTensor {
        values,
        format: a.format,
        shape: vec![r, ca + cb],
        clamped: a.clamped + b.clamped,
    })
}

fn rows(t: &QuantizedTensor, idx: std::ops::Range<usize>) -> Result<QuantizedTensor> {
    let (_, c) = t.dims2()?;
    Ok(QuantizedTensor {
        values: t.values[idx.start * c..idx.end * c].to_vec(),
        format: t.format,
        shape: vec![idx.len(), c],
        clamped: 0,
    })
}

/// Appends the rounded integer mean of all rows.
fn append_mean(t: &QuantizedTensor) -> Result<QuantizedTensor> {
    let (r, c) = t.dims2()?;
    let mut values = t.values.clone();
    for j in 0..c {
        let sum: i128 = (0..r).map(|i| t.values[i * c + j] as i128).sum();
        values.push(div_round_even(sum, r as i128) as i32);
    }
    Ok(QuantizedTensor {
        values,
        shape: vec![r + 1, c],
        ..t.clone()
    })
}

/// Row `k` of the result is the elementwise max over all other rows.
fn max_others(t: &QuantizedTensor) -> Result<QuantizedTensor> {
    let (r, c) = t.dims2()?;
    if r < 2 {
        return Err(FpgaError::Shape("aggregation needs at least two nodes".into()));
    }
    let mut values = vec![i32::MIN; r * c];
    for k in 0..r {
        for o in (0..r).filter(|&o| o != k) {
            for j in 0..c {
                values[k * c + j] = values[k * c + j].max(t.values[o * c + j]);
            }
        }
    }
    Ok(QuantizedTensor { values, ..t.clone() })
}

/// Integer forward pass of every BS network on one sample, followed by the
/// float phase and power normalization.
pub fn emulate(q: &QuantizedModel, ch: &Channels<f64>, power: f64, mode: ExecMode) -> Result<Emulation> {
    let cfg = &q.config;
    let (users, targets) = (ch.users(), ch.targets());
    let mut out = Emulation {
        beams: BeamformerSet {
            analog: Vec::with_capacity(cfg.bs),
            digital: Vec::with_capacity(cfg.bs),
        },
        degenerate: Vec::with_capacity(cfg.bs),
        trace: Vec::with_capacity(cfg.bs),
        offchip_bytes: 0,
        clamped: 0,
    };
    for (m, layers) in q.nets.iter().enumerate() {
        let feats = build_node_features::<f64>(&[ch], m, cfg)?;
        let mut run = Run {
            layers,
            bits: q.bits,
            mode,
            trace: Vec::new(),
            offchip_bytes: 0,
            clamped: 0,
        };
        let xc = calibrate_and_quantize(&feats.com, q.bits)?;
        let xs = calibrate_and_quantize(&feats.sen, q.bits)?;
        run.record("input.com", &xc, 0);
        run.record("input.sen", &xs, 0);
        let xc = run.offchip(xc);
        let xs = run.offchip(xs);

        let zc = run.mlp("emb_com", &xc)?;
        let zs = run.mlp("emb_sen", &xs)?;
        let mut z = append_mean(&concat_rows(&zc, &zs)?)?;
        run.record("mean", &z, 0);
        for k in 0..cfg.conv_layers {
            let msg = run.mlp(&format!("conv{k}.node"), &z)?;
            let agg = max_others(&msg)?;
            run.record(&format!("conv{k}.max"), &agg, 0);
            let cat = concat_cols(&z, &agg)?;
            z = run.mlp(&format!("conv{k}.combine"), &cat)?;
        }
        let nodes = users + targets;
        let digital = run.dense("digital", &rows(&z, 0..nodes)?)?;
        let analog = run.dense("analog", &rows(&z, nodes..nodes + 1)?)?;
        let (digital, analog) = match mode {
            // Only the head outputs leave the chip.
            ExecMode::Fused => (run.offchip(digital), run.offchip(analog)),
            ExecMode::Unfused => (digital, analog),
        };

        let mut g = Eager;
        let raw_a: Cow<Tensor<f64>> = Cow::Owned(analog.dequantize());
        let raw_d: Cow<Tensor<f64>> = Cow::Owned(digital.dequantize());
        let (f_re, f_im) = normalize_analog(&mut g, &raw_a, cfg.n_t, cfg.n_rf)?;
        let sb = normalize_digital(&mut g, &raw_d, f_re, f_im, cfg.n_rf, power)?;
        out.beams.analog.push(CMatrix::from_parts(&sb.f_re, &sb.f_im)?);
        out.beams.digital.push(CMatrix::from_parts(&sb.w_re, &sb.w_im)?);
        out.degenerate.push(sb.degenerate);
        out.offchip_bytes += run.offchip_bytes;
        out.clamped += run.clamped;
        out.trace.push(run.trace);
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccuracyDelta {
    pub float_wscsc: f64,
    pub fixed_wscsc: f64,
    /// `|fixed - float| / |float|`.
    pub rel_error: f64,
}

/// WSCSC of fused fixed-point inference against float inference on the
/// same channels.
pub fn accuracy_delta<T: Scalar>(
    model: &GnnModel<T>,
    q: &QuantizedModel,
    ch: &Channels<f64>,
    weights: &ObjectiveWeights,
    noise: &Noise,
    mode: ReceiveMode,
) -> Result<AccuracyDelta> {
    let (bf, _) = model.infer(ch, weights, noise, mode)?;
    let float = evaluate(ch, None, &bf.cast::<f64>(), weights, noise, mode)?.wscsc;
    let emu = emulate(q, ch, noise.power, ExecMode::Fused)?;
    let fixed = evaluate(ch, None, &emu.beams, weights, noise, mode)?.wscsc;
    Ok(AccuracyDelta {
        float_wscsc: float,
        fixed_wscsc: fixed,
        rel_error: (fixed - float).abs() / float.abs(),
    })
}
