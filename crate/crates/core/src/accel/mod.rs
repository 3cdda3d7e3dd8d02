//! The streaming convolution engine.
//!
//! [`conv_stream`] is the stride-1 engine built around a rotating line-buffer
//! set ([`LineBufferSet`]) and per-unit window buffers ([`WindowBuffer`]).
//! [`conv_l0`] is the separate first-layer engine that also handles stride > 1
//! and channel counts that are not a multiple of the MAC group width.

mod conv_l0;
mod engine;
mod line_buffer;
mod stream;
mod window;

pub use conv_l0::{conv_l0, conv_l0_tensor};
pub use engine::{conv_stream, conv_stream_tensor};
pub use line_buffer::LineBufferSet;
pub use stream::{pixel_channel, ChannelSink, ChannelSource, PixelSink, PixelSource, TensorSink, TensorSource};
pub use window::WindowBuffer;

use crate::error::{Error, Result};
use crate::fxp::FixedFormat;
use crate::tensor::Dims;

/// Lanes per MAC group unless configured otherwise.
pub const DEFAULT_CI_MIN: usize = 16;

/// Geometry of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LayerParams {
    pub y_in: usize,
    pub x_in: usize,
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
    pub fused_relu: bool,
}

impl LayerParams {
    pub fn input_dims(&self) -> Dims {
        Dims::new(self.y_in, self.x_in, self.c_in)
    }

    pub fn output_dims(&self) -> Result<Dims> {
        let (y, x) = output_dims(self)?;
        Ok(Dims::new(y, x, self.c_out))
    }

    /// Kernel weights in `W(c_o, k_h, k_w, c_i)` order.
    pub fn weight_count(&self) -> usize {
        self.c_out * self.kernel * self.kernel * self.c_in
    }

    /// Multiply-accumulates for the whole layer, padding taps included.
    pub fn macs(&self) -> Result<u64> {
        let (y, x) = output_dims(self)?;
        Ok((y * x) as u64 * self.weight_count() as u64)
    }
}

fn out_extent(input: usize, kernel: usize, pad: usize, stride: usize, axis: &str) -> Result<usize> {
    let padded = input + 2 * pad;
    if padded < kernel {
        return Err(Error::Geometry(format!(
            "{axis}: kernel {kernel} larger than padded input {padded}"
        )));
    }
    if !(padded - kernel).is_multiple_of(stride) {
        return Err(Error::Geometry(format!(
            "{axis}: ({input} - {kernel} + 2*{pad}) not divisible by stride {stride}"
        )));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Output height and width: `(in - K + 2P) / S + 1` on each axis.
pub fn output_dims(p: &LayerParams) -> Result<(usize, usize)> {
    if p.kernel == 0 || p.stride == 0 {
        return Err(Error::Geometry(format!(
            "kernel ({}) and stride ({}) must be positive",
            p.kernel, p.stride
        )));
    }
    let y = out_extent(p.y_in, p.kernel, p.pad, p.stride, "rows")?;
    let x = out_extent(p.x_in, p.kernel, p.pad, p.stride, "columns")?;
    Ok((y, x))
}

/// A block of raw fixed-point words sharing one format.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixedBuf {
    pub fmt: FixedFormat,
    pub raw: Vec<i32>,
}

impl FixedBuf {
    pub fn new(fmt: FixedFormat, raw: Vec<i32>) -> Result<Self> {
        if let Some(bad) = raw.iter().find(|&&r| !fmt.contains(r as i64)) {
            return Err(Error::FormatMismatch(format!("raw value {bad} does not fit {fmt}")));
        }
        Ok(Self { fmt, raw })
    }

    pub fn zeros(fmt: FixedFormat, len: usize) -> Self {
        Self { fmt, raw: vec![0; len] }
    }

    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }
}

/// Quantized weights and biases of one conv layer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvParams {
    pub weights: FixedBuf,
    pub bias: FixedBuf,
}

impl ConvParams {
    pub fn zeros(p: &LayerParams, fmt: FixedFormat) -> Self {
        Self { weights: FixedBuf::zeros(fmt, p.weight_count()), bias: FixedBuf::zeros(fmt, p.c_out) }
    }

    pub fn check(&self, p: &LayerParams) -> Result<()> {
        if self.weights.len() != p.weight_count() {
            return Err(Error::LengthMismatch { expected: p.weight_count(), got: self.weights.len() });
        }
        if self.bias.len() != p.c_out {
            return Err(Error::LengthMismatch { expected: p.c_out, got: self.bias.len() });
        }
        Ok(())
    }
}

/// Engine build-time configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EngineConfig {
    /// MAC group width.
    pub ci_min: usize,
    /// Output channels are computed by `2^parallelism` MAC units.
    pub parallelism: u32,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self { ci_min: DEFAULT_CI_MIN, parallelism: 0 }
    }
}

impl EngineConfig {
    pub fn with_parallelism(parallelism: u32) -> Self {
        Self { parallelism, ..Self::default() }
    }

    pub fn units(&self) -> usize {
        1 << self.parallelism
    }
}

/// Splits `weights` (kernels for `c_out` output channels, in output-channel
/// order) into `2^n` equal groups of whole kernels.
pub fn split_weights(weights: &FixedBuf, c_out: usize, n: u32) -> Result<Vec<FixedBuf>> {
    let groups = 1usize
        .checked_shl(n)
        .ok_or_else(|| Error::Precondition(format!("parallelism exponent {n} too large")))?;
    if c_out == 0 || !c_out.is_multiple_of(groups) {
        return Err(Error::Precondition(format!(
            "{c_out} output channels cannot be split into {groups} equal groups"
        )));
    }
    if !weights.len().is_multiple_of(c_out) {
        return Err(Error::Geometry(format!(
            "{} weights do not divide into {c_out} kernels",
            weights.len()
        )));
    }
    let chunk = weights.len() / groups;
    Ok(weights
        .raw
        .chunks(chunk.max(1))
        .map(|c| FixedBuf { fmt: weights.fmt, raw: c.to_vec() })
        .collect())
}

/// Counters gathered while a conv engine runs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConvStats {
    pub pixels_read: u64,
    pub pixels_written: u64,
    /// Real input pixels stored into the line-buffer set.
    pub itb_pixel_writes: u64,
    /// Zero pixels stored for padding rows.
    pub itb_padding_writes: u64,
    /// Writes per physical line buffer.
    pub itb_line_writes: Vec<u64>,
    pub window_column_loads: u64,
    pub mac_group_ops: u64,
}
