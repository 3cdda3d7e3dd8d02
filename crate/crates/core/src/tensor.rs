//! Feature maps stored pixel-major: `(y, x, c)` with all channels of one
//! pixel contiguous.

use crate::error::{Error, Result};
use crate::fxp::{dequantize_raw, FixedFormat, FixedWord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Dims {
    pub y: usize,
    pub x: usize,
    pub c: usize,
}

impl Dims {
    pub const fn new(y: usize, x: usize, c: usize) -> Self {
        Self { y, x, c }
    }

    pub fn len(&self) -> usize {
        self.y * self.x * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixels(&self) -> usize {
        self.y * self.x
    }

    #[inline]
    pub fn offset(&self, y: usize, x: usize, c: usize) -> usize {
        (y * self.x + x) * self.c + c
    }
}

impl std::fmt::Display for Dims {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.y, self.x, self.c)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    Real(Vec<f64>),
    Fixed { fmt: FixedFormat, raw: Vec<i32> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmapTensor {
    dims: Dims,
    data: TensorData,
}

impl FmapTensor {
    pub fn new_real(dims: Dims, data: Vec<f64>) -> Result<Self> {
        if data.len() != dims.len() {
            return Err(Error::LengthMismatch { expected: dims.len(), got: data.len() });
        }
        Ok(Self { dims, data: TensorData::Real(data) })
    }

    pub fn new_fixed(dims: Dims, fmt: FixedFormat, raw: Vec<i32>) -> Result<Self> {
        if raw.len() != dims.len() {
            return Err(Error::LengthMismatch { expected: dims.len(), got: raw.len() });
        }
        if let Some(bad) = raw.iter().find(|&&r| !fmt.contains(r as i64)) {
            return Err(Error::FormatMismatch(format!("raw value {bad} does not fit {fmt}")));
        }
        Ok(Self { dims, data: TensorData::Fixed { fmt, raw } })
    }

    pub fn zeros_fixed(dims: Dims, fmt: FixedFormat) -> Self {
        Self { dims, data: TensorData::Fixed { fmt, raw: vec![0; dims.len()] } }
    }

    pub fn zeros_real(dims: Dims) -> Self {
        Self { dims, data: TensorData::Real(vec![0.0; dims.len()]) }
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn into_data(self) -> TensorData {
        self.data
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self.data, TensorData::Fixed { .. })
    }

    pub fn format(&self) -> Option<FixedFormat> {
        match &self.data {
            TensorData::Fixed { fmt, .. } => Some(*fmt),
            TensorData::Real(_) => None,
        }
    }

    pub fn as_real(&self) -> Option<&[f64]> {
        match &self.data {
            TensorData::Real(v) => Some(v),
            TensorData::Fixed { .. } => None,
        }
    }

    pub fn as_raw(&self) -> Option<&[i32]> {
        match &self.data {
            TensorData::Fixed { raw, .. } => Some(raw),
            TensorData::Real(_) => None,
        }
    }

    pub(crate) fn expect_real(&self, what: &str) -> Result<&[f64]> {
        self.as_real()
            .ok_or_else(|| Error::KindMismatch(format!("{what} needs a real-valued tensor")))
    }

    pub(crate) fn expect_fixed(&self, what: &str) -> Result<(FixedFormat, &[i32])> {
        match &self.data {
            TensorData::Fixed { fmt, raw } => Ok((*fmt, raw)),
            TensorData::Real(_) => Err(Error::KindMismatch(format!("{what} needs a fixed-point tensor"))),
        }
    }

    pub fn word(&self, y: usize, x: usize, c: usize) -> Option<FixedWord> {
        let (fmt, raw) = match &self.data {
            TensorData::Fixed { fmt, raw } => (*fmt, raw),
            TensorData::Real(_) => return None,
        };
        FixedWord::new(raw[self.dims.offset(y, x, c)], fmt).ok()
    }

    /// Element value as a real, for either kind.
    pub fn value(&self, y: usize, x: usize, c: usize) -> f64 {
        let i = self.dims.offset(y, x, c);
        match &self.data {
            TensorData::Real(v) => v[i],
            TensorData::Fixed { fmt, raw } => dequantize_raw(raw[i] as i64, fmt.frac_bits()),
        }
    }

    /// All values as reals (exact for fixed tensors).
    pub fn to_real_vec(&self) -> Vec<f64> {
        match &self.data {
            TensorData::Real(v) => v.clone(),
            TensorData::Fixed { fmt, raw } => {
                raw.iter().map(|&r| dequantize_raw(r as i64, fmt.frac_bits())).collect()
            }
        }
    }

    /// Same shape, different kind or format.
    pub fn same_layout(&self, other: &FmapTensor) -> bool {
        self.dims == other.dims && self.format() == other.format() && self.is_fixed() == other.is_fixed()
    }
}
