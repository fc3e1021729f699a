//! Min/max linear quantizer.
//!
//! A value `θ` in a tensor with range `[θ_min, θ_max]` maps to the integer code
//!
//! ```text
//! code = round((2ⁿ − 1) · (θ − θ_min) / (θ_max − θ_min) − 2ⁿ⁻¹)
//! ```
//!
//! with ties rounded half away from zero, so codes live in `[−2ⁿ⁻¹, 2ⁿ⁻¹ − 1]`.
//! Although this family of quantizers is usually called "symmetric", the range
//! comes from the tensor's own min and max. A constant tensor quantizes to all
//! zero codes and dequantizes back to its value.

use serde::{Deserialize, Serialize};

use crate::engine::{Graph, Tensor, Var};
use crate::error::{Error, Result};

pub const MIN_BITS: u32 = 2;
pub const MAX_BITS: u32 = 8;

/// Bit width plus the scope of what gets fake-quantized in Q.
///
/// Weights use one per-tensor range recomputed on every forward; activations
/// use the dynamic min/max of the current batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantConfig {
    pub bits: u32,
    /// Also fake-quantize the raw network input, not just hidden activations.
    #[serde(default)]
    pub quantize_input: bool,
}

impl QuantConfig {
    pub fn new(bits: u32) -> Result<Self> {
        let cfg = QuantConfig {
            bits,
            quantize_input: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        check_bits(self.bits)
    }
}

fn check_bits(bits: u32) -> Result<()> {
    if (MIN_BITS..=MAX_BITS).contains(&bits) {
        Ok(())
    } else {
        Err(Error::InvalidBits(bits))
    }
}

/// Integer codes plus the range needed to map them back.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantizedTensor {
    pub shape: Vec<usize>,
    pub codes: Vec<i32>,
    pub min: f64,
    pub max: f64,
    pub bits: u32,
}

impl QuantizedTensor {
    pub fn code_range(&self) -> (i32, i32) {
        code_range(self.bits)
    }

    /// Width of one quantization level.
    pub fn step(&self) -> f64 {
        (self.max - self.min) / levels(self.bits)
    }
}

pub fn code_range(bits: u32) -> (i32, i32) {
    let half = 1i32 << (bits - 1);
    (-half, half - 1)
}

fn levels(bits: u32) -> f64 {
    ((1u64 << bits) - 1) as f64
}

fn code_of(v: f64, min: f64, max: f64, bits: u32) -> i32 {
    if max == min {
        return 0;
    }
    let (lo, hi) = code_range(bits);
    // f64::round is half-away-from-zero
    let scaled = levels(bits) * (v - min) / (max - min) - (1u64 << (bits - 1)) as f64;
    (scaled.round() as i32).clamp(lo, hi)
}

fn value_of(code: i32, min: f64, max: f64, bits: u32) -> f64 {
    if max == min {
        return min;
    }
    let k = (code + (1i32 << (bits - 1))) as f64;
    let t = k / levels(bits);
    // exact at both endpoints: t = 0 → min, t = 1 → max
    min * (1.0 - t) + max * t
}

pub fn quantize(theta: &Tensor, bits: u32) -> Result<QuantizedTensor> {
    check_bits(bits)?;
    if !theta.all_finite() {
        return Err(Error::non_finite("value", "quantize"));
    }
    let (min, max) = (theta.min(), theta.max());
    Ok(QuantizedTensor {
        shape: theta.shape().to_vec(),
        codes: theta
            .data()
            .iter()
            .map(|&v| code_of(v, min, max, bits))
            .collect(),
        min,
        max,
        bits,
    })
}

pub fn dequantize(q: &QuantizedTensor) -> Tensor {
    let data = q
        .codes
        .iter()
        .map(|&c| value_of(c, q.min, q.max, q.bits))
        .collect();
    Tensor::new(q.shape.clone(), data).expect("shape carried from source")
}

/// `dequantize(quantize(θ))` without materializing the codes.
pub fn fake_quantize(theta: &Tensor, bits: u32) -> Result<Tensor> {
    check_bits(bits)?;
    if !theta.all_finite() {
        return Err(Error::non_finite("value", "fake_quantize"));
    }
    let (min, max) = (theta.min(), theta.max());
    Ok(theta.map(|v| value_of(code_of(v, min, max, bits), min, max, bits)))
}

/// Fake quantization on the tape with a straight-through gradient.
pub fn fake_quantize_var(g: &mut Graph, x: Var, bits: u32) -> Result<Var> {
    let forward = fake_quantize(g.value(x), bits)?;
    g.straight_through(x, forward)
}
