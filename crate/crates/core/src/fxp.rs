//! Two's-complement fixed-point arithmetic.
//!
//! Words carry a [`FixedFormat`] (total bits including sign, fractional
//! bits). Products are accumulated exactly in a 64-bit [`Accumulator`];
//! rounding (nearest, ties away from zero) and saturation only happen when
//! a value enters a narrow format, i.e. in [`quantize`] and [`finalize`].

use crate::error::{Error, Result};

/// Signed Q-format: `total_bits` including the sign bit, `frac_bits` of them
/// below the binary point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedFormat {
    total_bits: u32,
    frac_bits: u32,
}

impl FixedFormat {
    /// 8-bit parameter format, 1 integer (sign) bit + 7 fractional bits.
    pub const PARAM: FixedFormat = FixedFormat { total_bits: 8, frac_bits: 7 };
    /// 16-bit activation format, 13 integer bits + 3 fractional bits.
    pub const ACTIVATION: FixedFormat = FixedFormat { total_bits: 16, frac_bits: 3 };

    pub fn new(total_bits: u32, frac_bits: u32) -> Result<Self> {
        if !(1..=32).contains(&total_bits) || frac_bits >= total_bits {
            return Err(Error::InvalidFormat { total: total_bits, frac: frac_bits });
        }
        Ok(Self { total_bits, frac_bits })
    }

    pub fn total_bits(self) -> u32 {
        self.total_bits
    }

    pub fn frac_bits(self) -> u32 {
        self.frac_bits
    }

    pub fn min_raw(self) -> i32 {
        (-(1i64 << (self.total_bits - 1))) as i32
    }

    pub fn max_raw(self) -> i32 {
        ((1i64 << (self.total_bits - 1)) - 1) as i32
    }

    /// Weight of one LSB, `2^-frac_bits`.
    pub fn lsb(self) -> f64 {
        (-(self.frac_bits as f64)).exp2()
    }

    pub fn min_value(self) -> f64 {
        self.min_raw() as f64 * self.lsb()
    }

    pub fn max_value(self) -> f64 {
        self.max_raw() as f64 * self.lsb()
    }

    pub fn contains(self, raw: i64) -> bool {
        raw >= self.min_raw() as i64 && raw <= self.max_raw() as i64
    }

    pub fn saturate(self, raw: i128) -> i32 {
        raw.clamp(self.min_raw() as i128, self.max_raw() as i128) as i32
    }
}

impl std::fmt::Display for FixedFormat {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.total_bits, self.frac_bits)
    }
}

impl std::str::FromStr for FixedFormat {
    type Err = Error;

    /// Parses `"total:frac"`, e.g. `"8:7"`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Malformed(format!("expected <total>:<frac>, got {s:?}"));
        let (t, f) = s.split_once(':').ok_or_else(bad)?;
        let t = t.trim().parse().map_err(|_| bad())?;
        let f = f.trim().parse().map_err(|_| bad())?;
        FixedFormat::new(t, f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FixedWord {
    raw: i32,
    fmt: FixedFormat,
}

impl FixedWord {
    pub fn new(raw: i32, fmt: FixedFormat) -> Result<Self> {
        if !fmt.contains(raw as i64) {
            return Err(Error::Geometry(format!("raw value {raw} does not fit format {fmt}")));
        }
        Ok(Self { raw, fmt })
    }

    pub fn zero(fmt: FixedFormat) -> Self {
        Self { raw: 0, fmt }
    }

    pub fn raw(self) -> i32 {
        self.raw
    }

    pub fn format(self) -> FixedFormat {
        self.fmt
    }

    pub fn to_f64(self) -> f64 {
        dequantize(self)
    }
}

/// Raw-level quantization: `clamp(round(value * 2^frac))`, ties away from zero.
pub fn quantize_raw(value: f64, fmt: FixedFormat) -> Result<i32> {
    if value.is_nan() {
        return Err(Error::NotANumber);
    }
    // scaling by a power of two is exact; f64::round breaks ties away from zero
    let scaled = (value * (fmt.frac_bits as f64).exp2()).round();
    let lo = fmt.min_raw() as f64;
    let hi = fmt.max_raw() as f64;
    Ok(scaled.clamp(lo, hi) as i32)
}

pub fn quantize(value: f64, fmt: FixedFormat) -> Result<FixedWord> {
    Ok(FixedWord { raw: quantize_raw(value, fmt)?, fmt })
}

pub fn dequantize(w: FixedWord) -> f64 {
    dequantize_raw(w.raw as i64, w.fmt.frac_bits)
}

/// Exact for every `|raw| < 2^53`.
pub fn dequantize_raw(raw: i64, frac_bits: u32) -> f64 {
    raw as f64 * (-(frac_bits as f64)).exp2()
}

/// Exact sum of products, scaled by `2^-frac_bits`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Accumulator {
    pub raw: i64,
    pub frac_bits: u32,
}

impl Accumulator {
    pub fn zero(frac_bits: u32) -> Self {
        Self { raw: 0, frac_bits }
    }

    /// Accumulator scale for products of `act` and `wt` words.
    pub fn for_formats(act: FixedFormat, wt: FixedFormat) -> Self {
        Self::zero(act.frac_bits + wt.frac_bits)
    }

    pub fn to_f64(self) -> f64 {
        dequantize_raw(self.raw, self.frac_bits)
    }

    /// Adds another partial sum at the same scale.
    pub fn merge(self, other: Accumulator) -> Result<Accumulator> {
        if self.frac_bits != other.frac_bits {
            return Err(Error::FormatMismatch(format!(
                "accumulator scales {} and {}",
                self.frac_bits, other.frac_bits
            )));
        }
        Ok(Accumulator { raw: self.raw + other.raw, frac_bits: self.frac_bits })
    }
}

/// Raw dot product of one MAC group. Operands are at most 32-bit, so each
/// product fits in an i64; callers keep reductions within the headroom
/// documented on [`Accumulator`].
#[inline]
pub fn dot_raw(acts: &[i32], wts: &[i32]) -> i64 {
    debug_assert_eq!(acts.len(), wts.len());
    acts.iter().zip(wts).map(|(&a, &w)| a as i64 * w as i64).sum()
}

/// One MAC-CI_min step: adds `sum(acts[i] * wts[i])` to `acc` exactly.
pub fn mac_group(acts: &[FixedWord], wts: &[FixedWord], acc: Accumulator) -> Result<Accumulator> {
    if acts.len() != wts.len() {
        return Err(Error::LengthMismatch { expected: acts.len(), got: wts.len() });
    }
    let (Some(a0), Some(w0)) = (acts.first(), wts.first()) else {
        return Ok(acc);
    };
    if acts.iter().any(|a| a.fmt != a0.fmt) || wts.iter().any(|w| w.fmt != w0.fmt) {
        return Err(Error::FormatMismatch("MAC group lanes must share one format".into()));
    }
    let scale = a0.fmt.frac_bits + w0.fmt.frac_bits;
    if acc.frac_bits != scale {
        return Err(Error::FormatMismatch(format!(
            "accumulator scale {} does not match operand scale {}",
            acc.frac_bits, scale
        )));
    }
    let sum: i64 = acts.iter().zip(wts).map(|(a, w)| a.raw as i64 * w.raw as i64).sum();
    Ok(Accumulator { raw: acc.raw + sum, frac_bits: acc.frac_bits })
}

/// Arithmetic right shift rounding to nearest, ties away from zero.
pub fn round_shift_right(value: i128, shift: u32) -> i128 {
    if shift == 0 {
        return value;
    }
    let half = 1i128 << (shift - 1);
    if value >= 0 {
        (value + half) >> shift
    } else {
        -((-value + half) >> shift)
    }
}

/// Precomputed bias-add / ReLU / requantize stage for one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Requantizer {
    acc_frac: u32,
    bias_shift: u32,
    out_shift: u32,
    out_fmt: FixedFormat,
    relu: bool,
}

impl Requantizer {
    pub fn new(acc_frac: u32, bias_fmt: FixedFormat, out_fmt: FixedFormat, relu: bool) -> Result<Self> {
        if acc_frac < bias_fmt.frac_bits || acc_frac < out_fmt.frac_bits {
            return Err(Error::FormatMismatch(format!(
                "accumulator scale {acc_frac} is coarser than bias {bias_fmt} or output {out_fmt}"
            )));
        }
        Ok(Self {
            acc_frac,
            bias_shift: acc_frac - bias_fmt.frac_bits,
            out_shift: acc_frac - out_fmt.frac_bits,
            out_fmt,
            relu,
        })
    }

    pub fn acc_frac(&self) -> u32 {
        self.acc_frac
    }

    pub fn out_format(&self) -> FixedFormat {
        self.out_fmt
    }

    #[inline]
    pub fn apply(&self, acc_raw: i64, bias_raw: i32) -> i32 {
        let mut sum = acc_raw as i128 + ((bias_raw as i128) << self.bias_shift);
        if self.relu && sum < 0 {
            sum = 0;
        }
        self.out_fmt.saturate(round_shift_right(sum, self.out_shift))
    }
}

/// Bias add, optional ReLU at full precision, then round and saturate into
/// `out_fmt`.
pub fn finalize(acc: Accumulator, bias: FixedWord, out_fmt: FixedFormat, apply_relu: bool) -> Result<FixedWord> {
    let rq = Requantizer::new(acc.frac_bits, bias.fmt, out_fmt, apply_relu)?;
    Ok(FixedWord { raw: rq.apply(acc.raw, bias.raw), fmt: out_fmt })
}

pub fn relu(w: FixedWord) -> FixedWord {
    FixedWord { raw: w.raw.max(0), fmt: w.fmt }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: FixedFormat = FixedFormat::PARAM;
    const A: FixedFormat = FixedFormat::ACTIVATION;

    fn w(raw: i32, fmt: FixedFormat) -> FixedWord {
        FixedWord::new(raw, fmt).unwrap()
    }

    #[test]
    fn format_validation() {
        assert!(FixedFormat::new(0, 0).is_err());
        assert!(FixedFormat::new(33, 3).is_err());
        assert!(FixedFormat::new(8, 8).is_err());
        assert!(FixedFormat::new(32, 31).is_ok());
        assert_eq!(FixedFormat::new(8, 7).unwrap(), P);
        assert_eq!("16:3".parse::<FixedFormat>().unwrap(), A);
        assert!("16".parse::<FixedFormat>().is_err());
    }

    #[test]
    fn ranges() {
        assert_eq!((P.min_raw(), P.max_raw()), (-128, 127));
        assert_eq!((A.min_raw(), A.max_raw()), (-32768, 32767));
        assert_eq!(P.min_value(), -1.0);
        assert_eq!(P.max_value(), 0.9921875);
        assert_eq!(A.max_value(), 4095.875);
        let f32b = FixedFormat::new(32, 0).unwrap();
        assert_eq!(f32b.min_raw(), i32::MIN);
        assert_eq!(f32b.max_raw(), i32::MAX);
    }

    #[test]
    fn quantize_examples() {
        assert_eq!(quantize(0.5, P).unwrap().raw(), 64);
        assert_eq!(quantize(1.0, P).unwrap().raw(), 127);
        assert_eq!(quantize(-1.0, P).unwrap().raw(), -128);
        assert_eq!(quantize(2.5, A).unwrap().raw(), 20);
        assert!(matches!(quantize(f64::NAN, P), Err(Error::NotANumber)));
        assert_eq!(quantize(f64::INFINITY, A).unwrap().raw(), 32767);
        assert_eq!(quantize(f64::NEG_INFINITY, A).unwrap().raw(), -32768);
    }

    #[test]
    fn quantize_ties_away_from_zero() {
        // 0.0625 in {16,3} is 0.5 LSB
        assert_eq!(quantize(0.0625, A).unwrap().raw(), 1);
        assert_eq!(quantize(-0.0625, A).unwrap().raw(), -1);
        assert_eq!(quantize(0.1875, A).unwrap().raw(), 2);
    }

    #[test]
    fn dequantize_examples() {
        assert_eq!(dequantize(w(64, P)), 0.5);
        assert_eq!(dequantize(w(-128, P)), -1.0);
        assert_eq!(dequantize(w(1, A)), 0.125);
    }

    #[test]
    fn mac_group_examples() {
        let zeros = vec![FixedWord::zero(A); 16];
        let wts = vec![w(64, P); 16];
        let acc = Accumulator::for_formats(A, P);
        assert_eq!(acc.frac_bits, 10);
        assert_eq!(mac_group(&zeros, &wts, acc).unwrap(), acc);

        let mut acts = zeros.clone();
        acts[0] = w(8, A);
        let r = mac_group(&acts, &wts, acc).unwrap();
        assert_eq!(r.raw, 512);
        assert_eq!(r.to_f64(), 0.5);

        let ones = vec![w(8, A); 16];
        let r = mac_group(&ones, &wts, acc).unwrap();
        assert_eq!(r.raw, 8192);
        assert_eq!(r.to_f64(), 8.0);
    }

    #[test]
    fn mac_group_errors() {
        let acc = Accumulator::for_formats(A, P);
        let acts = vec![FixedWord::zero(A); 16];
        let wts = vec![FixedWord::zero(P); 15];
        assert!(matches!(mac_group(&acts, &wts, acc), Err(Error::LengthMismatch { .. })));
        let wts = vec![FixedWord::zero(P); 16];
        assert!(matches!(mac_group(&acts, &wts, Accumulator::zero(7)), Err(Error::FormatMismatch(_))));
        let mut mixed = acts.clone();
        mixed[3] = FixedWord::zero(P);
        assert!(matches!(mac_group(&mixed, &wts, acc), Err(Error::FormatMismatch(_))));
    }

    #[test]
    fn finalize_examples() {
        let zero_bias = FixedWord::zero(P);
        let acc = |raw| Accumulator { raw, frac_bits: 10 };
        assert_eq!(finalize(acc(1024), zero_bias, A, false).unwrap().raw(), 8);
        assert_eq!(finalize(acc(1088), zero_bias, A, false).unwrap().raw(), 9);
        assert_eq!(finalize(acc(-1088), zero_bias, A, false).unwrap().raw(), -9);
        assert_eq!(finalize(acc(-1024), zero_bias, A, true).unwrap().raw(), 0);
        let out = finalize(acc(0), w(8, P), A, false).unwrap();
        assert_eq!(out.raw(), 1);
        assert_eq!(out.to_f64(), 0.125);
    }

    #[test]
    fn finalize_saturates_and_checks_scale() {
        let big = Accumulator { raw: 1 << 40, frac_bits: 10 };
        assert_eq!(finalize(big, FixedWord::zero(P), A, false).unwrap().raw(), 32767);
        let neg = Accumulator { raw: -(1 << 40), frac_bits: 10 };
        assert_eq!(finalize(neg, FixedWord::zero(P), A, false).unwrap().raw(), -32768);
        let coarse = Accumulator { raw: 0, frac_bits: 2 };
        assert!(finalize(coarse, FixedWord::zero(P), A, false).is_err());
    }

    #[test]
    fn relu_clamps_negative() {
        assert_eq!(relu(w(-5, A)).raw(), 0);
        assert_eq!(relu(w(5, A)).raw(), 5);
    }

    #[test]
    fn round_shift_matches_definition() {
        assert_eq!(round_shift_right(12, 3), 2); // 1.5 -> 2
        assert_eq!(round_shift_right(-12, 3), -2);
        assert_eq!(round_shift_right(11, 3), 1);
        assert_eq!(round_shift_right(-11, 3), -1);
        assert_eq!(round_shift_right(7, 0), 7);
    }

    #[test]
    fn accumulator_headroom_for_squeezenet() {
        // 3x3 kernels over at most 512 channels: 4608 products per output
        let worst = 4608i128 * 128 * 32768;
        assert!(worst < i64::MAX as i128);
        assert!(worst < 1i128 << 35);
    }
}
