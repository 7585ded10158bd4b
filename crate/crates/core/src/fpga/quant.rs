use serde::{Deserialize, Serialize};

use crate::scalar::{lit, to_f64, Scalar};
use crate::tensor::Tensor;

use super::{FpgaError, Result};

pub const MIN_BITS: u32 = 4;
pub const MAX_BITS: u32 = 16;

/// Signed fixed-point format with a per-tensor scale: integer `q` stands
/// for `q * scale`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointFormat {
    pub bits: u32,
    /// Fraction bits implied by the scale, `floor(-log2 scale)` clamped to
    /// `[0, bits)`. Informational; arithmetic uses `scale`.
    pub frac_bits: u32,
    pub signed: bool,
    pub scale: f64,
}

impl FixedPointFormat {
    pub fn new(bits: u32, scale: f64) -> Result<Self> {
        check_bits(bits)?;
        if !(scale.is_finite() && scale > 0.0) {
            return Err(FpgaError::Format(format!("scale must be finite and positive, got {scale}")));
        }
        let frac = (-scale.log2()).floor().clamp(0.0, (bits - 1) as f64) as u32;
        Ok(Self {
            bits,
            frac_bits: frac,
            signed: true,
            scale,
        })
    }

    /// Symmetric calibration: `max|x|` maps to the largest code. An all-zero
    /// tensor gets scale 1.
    pub fn calibrate(bits: u32, max_abs: f64) -> Result<Self> {
        check_bits(bits)?;
        if !max_abs.is_finite() {
            return Err(FpgaError::NonFinite("calibration range".into()));
        }
        let scale = if max_abs > 0.0 { max_abs / qmax(bits) as f64 } else { 1.0 };
        Self::new(bits, scale)
    }

    pub fn qmax(&self) -> i64 {
        qmax(self.bits)
    }
}

fn check_bits(bits: u32) -> Result<()> {
    if !(MIN_BITS..=MAX_BITS).contains(&bits) {
        return Err(FpgaError::Format(format!("bit width {bits} outside {MIN_BITS}..={MAX_BITS}")));
    }
    Ok(())
}

pub fn qmax(bits: u32) -> i64 {
    (1i64 << (bits - 1)) - 1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuantizedTensor {
    /// Row-major codes.
    pub values: Vec<i32>,
    pub format: FixedPointFormat,
    pub shape: Vec<usize>,
    /// Entries that were clamped to the code range.
    pub clamped: usize,
}

impl QuantizedTensor {
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match self.shape[..] {
            [r, c] => Ok((r, c)),
            _ => Err(FpgaError::Shape(format!("expected a matrix, got shape {:?}", self.shape))),
        }
    }

    pub fn dequantize<T: Scalar>(&self) -> Tensor<T> {
        let s = self.format.scale;
        let data = self.values.iter().map(|&q| lit(q as f64 * s)).collect();
        Tensor::new(self.shape.clone(), data).expect("shape matches codes")
    }

    pub fn max_abs_code(&self) -> i64 {
        self.values.iter().map(|&q| (q as i64).abs()).max().unwrap_or(0)
    }
}

/// Quantizes with round-to-nearest-even and clamping to `±qmax`.
pub fn quantize<T: Scalar>(t: &Tensor<T>, format: FixedPointFormat) -> Result<QuantizedTensor> {
    if !t.is_finite() {
        return Err(FpgaError::NonFinite("tensor to quantize".into()));
    }
    let q = format.qmax() as f64;
    let mut clamped = 0;
    let values = t
        .data()
        .iter()
        .map(|&v| {
            let r = (to_f64(v) / format.scale).round_ties_even();
            if r.abs() > q {
                clamped += 1;
            }
            r.clamp(-q, q) as i32
        })
        .collect();
    Ok(QuantizedTensor {
        values,
        format,
        shape: t.shape().to_vec(),
        clamped,
    })
}

/// Calibrates a per-tensor scale from `t` and quantizes it.
pub fn calibrate_and_quantize<T: Scalar>(t: &Tensor<T>, bits: u32) -> Result<QuantizedTensor> {
    if !t.is_finite() {
        return Err(FpgaError::NonFinite("tensor to quantize".into()));
    }
    let format = FixedPointFormat::calibrate(bits, to_f64(t.max_abs()))?;
    quantize(t, format)
}

/// Integer division rounded to nearest, ties to even.
pub fn div_round_even(num: i128, den: i128) -> i128 {
    assert!(den > 0, "positive divisor");
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    match (2 * r).cmp(&den) {
        std::cmp::Ordering::Less => q,
        std::cmp::Ordering::Greater => q + 1,
        std::cmp::Ordering::Equal => q + (q & 1),
    }
}

/// Fixed-point multiplier `mult / 2^shift` approximating a positive ratio,
/// with `mult` in `[2^30, 2^31)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Requant {
    pub mult: i64,
    pub shift: u32,
}

impl Requant {
    pub fn from_ratio(ratio: f64) -> Result<Self> {
        if !(ratio.is_finite() && ratio > 0.0) {
            return Err(FpgaError::Format(format!("requantization ratio must be finite and positive, got {ratio}")));
        }
        let e = ratio.log2().floor() as i32;
        let mut shift = 30 - e;
        let mut mult = (ratio * 2f64.powi(shift)).round_ties_even() as i64;
        if mult >= 1 << 31 {
            mult = div_round_even(mult as i128, 2) as i64;
            shift -= 1;
        }
        if !(0..=96).contains(&shift) {
            return Err(FpgaError::Format(format!("requantization ratio {ratio} out of range")));
        }
        Ok(Self {
            mult,
            shift: shift as u32,
        })
    }

    pub fn apply(&self, acc: i64) -> i128 {
        div_round_even(acc as i128 * self.mult as i128, 1i128 << self.shift)
    }
}

/// Accumulator width that cannot overflow for a length-`k` dot product of
/// codes bounded by `amax` and `bmax`, plus `bias` of the same scale.
pub fn accumulator_bits(k: usize, amax: i64, bmax: i64, bias: i64) -> Result<u32> {
    let bound = (k as i128) * (amax as i128) * (bmax as i128) + (bias as i128).abs();
    if bound < i32::MAX as i128 {
        Ok(32)
    } else if bound < i64::MAX as i128 {
        Ok(64)
    } else {
        Err(FpgaError::Overflow(format!("dot product of length {k} needs more than 64 accumulator bits")))
    }
}

/// Integer `A B` accumulated without intermediate rounding. Returns the
/// accumulators and the accumulator width that was needed.
pub fn integer_matmul(a: &QuantizedTensor, b: &QuantizedTensor) -> Result<(Vec<i64>, u32)> {
    let (r, k) = a.dims2()?;
    let (k2, c) = b.dims2()?;
    if k != k2 {
        return Err(FpgaError::Shape(format!("matmul {r}x{k} by {k2}x{c}")));
    }
    let bits = accumulator_bits(k, a.max_abs_code(), b.max_abs_code(), 0)?;
    let mut acc = vec![0i64; r * c];
    for i in 0..r {
        let row = &a.values[i * k..(i + 1) * k];
        let out = &mut acc[i * c..(i + 1) * c];
        for (p, &x) in row.iter().enumerate() {
            if x == 0 {
                continue;
            }
            let x = x as i64;
            for (o, &w) in out.iter_mut().zip(&b.values[p * c..(p + 1) * c]) {
                *o += x * w as i64;
            }
        }
    }
    Ok((acc, bits))
}

/// Requantizes accumulators at scale `acc_scale` to `bits`, calibrated on
/// their largest magnitude so the output uses the full code range.
pub fn requantize_dynamic(acc: &[i64], acc_scale: f64, bits: u32, shape: Vec<usize>) -> Result<QuantizedTensor> {
    let amax = acc.iter().map(|a| a.abs()).max().unwrap_or(0);
    if amax == 0 {
        return Ok(QuantizedTensor {
            values: vec![0; acc.len()],
            format: FixedPointFormat::new(bits, 1.0)?,
            shape,
            clamped: 0,
        });
    }
    let q = qmax(bits);
    let rq = Requant::from_ratio(q as f64 / amax as f64)?;
    let format = FixedPointFormat::new(bits, acc_scale * amax as f64 / q as f64)?;
    let mut clamped = 0;
    let values = acc
        .iter()
        .map(|&a| {
            let v = rq.apply(a);
            if v.abs() > q as i128 {
                clamped += 1;
            }
            v.clamp(-(q as i128), q as i128) as i32
        })
        .collect();
    Ok(QuantizedTensor {
        values,
        format,
        shape,
        clamped,
    })
}

/// `A B` in integers, requantized to the bit width of `a`.
pub fn fixed_point_matmul(a: &QuantizedTensor, b: &QuantizedTensor) -> Result<QuantizedTensor> {
    let (r, _) = a.dims2()?;
    let (_, c) = b.dims2()?;
    let (acc, _) = integer_matmul(a, b)?;
    requantize_dynamic(&acc, a.format.scale * b.format.scale, a.format.bits, vec![r, c])
}

/// Re-expresses `t` at a coarser or finer scale of the same bit width.
pub fn rescale(t: &QuantizedTensor, scale: f64) -> Result<QuantizedTensor> {
    let format = FixedPointFormat::new(t.format.bits, scale)?;
    if t.format.scale == scale {
        return Ok(QuantizedTensor { format, ..t.clone() });
    }
    let rq = Requant::from_ratio(t.format.scale / scale)?;
    let q = format.qmax() as i128;
    let mut clamped = t.clamped;
    let values = t
        .values
        .iter()
        .map(|&v| {
            let x = rq.apply(v as i64);
            if x.abs() > q {
                clamped += 1;
            }
            x.clamp(-q, q) as i32
        })
        .collect();
    Ok(QuantizedTensor {
        values,
        format,
        shape: t.shape.clone(),
        clamped,
    })
}
