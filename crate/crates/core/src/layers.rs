//! Layers that run outside the conv engines.

use crate::error::{Error, Result};
use crate::fxp::{dequantize_raw, quantize_raw, FixedFormat};
use crate::tensor::{Dims, FmapTensor, TensorData};

/// How the pooled extent is rounded when `(in - k)` is not a multiple of the
/// stride.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolRounding {
    /// `(in - k) / s + 1`; trailing input that does not fill a window is dropped.
    #[default]
    Floor,
    /// `ceil((in - k) / s) + 1`; the last window may hang off the edge and is
    /// clipped (Caffe's pooling convention).
    Ceil,
}

pub fn pooled_extent(input: usize, k: usize, s: usize, rounding: PoolRounding) -> Result<usize> {
    if k == 0 || s == 0 || input < k {
        return Err(Error::Geometry(format!("pool window {k} stride {s} does not fit extent {input}")));
    }
    let span = input - k;
    Ok(match rounding {
        PoolRounding::Floor => span / s + 1,
        PoolRounding::Ceil => {
            let out = span.div_ceil(s) + 1;
            // every window must start inside the input
            if (out - 1) * s >= input {
                out - 1
            } else {
                out
            }
        }
    })
}

/// Per-channel window maximum, floor rounding.
pub fn maxpool(t: &FmapTensor, k: usize, s: usize) -> Result<FmapTensor> {
    maxpool_with(t, k, s, PoolRounding::Floor)
}

pub fn maxpool_with(t: &FmapTensor, k: usize, s: usize, rounding: PoolRounding) -> Result<FmapTensor> {
    let d = t.dims();
    let out = Dims::new(pooled_extent(d.y, k, s, rounding)?, pooled_extent(d.x, k, s, rounding)?, d.c);
    match t.data() {
        // raw words of one format order the same way as their real values
        TensorData::Fixed { fmt, raw } => {
            FmapTensor::new_fixed(out, *fmt, pool_max(raw, d, out, k, s, i32::MIN, |a, b| a.max(b)))
        }
        TensorData::Real(v) => FmapTensor::new_real(out, pool_max(v, d, out, k, s, f64::NEG_INFINITY, f64::max)),
    }
}

fn pool_max<T: Copy>(data: &[T], d: Dims, out: Dims, k: usize, s: usize, init: T, max: impl Fn(T, T) -> T) -> Vec<T> {
    let mut res = Vec::with_capacity(out.len());
    let mut acc = vec![init; d.c];
    for yo in 0..out.y {
        for xo in 0..out.x {
            acc.fill(init);
            for y in yo * s..(yo * s + k).min(d.y) {
                for x in xo * s..(xo * s + k).min(d.x) {
                    let px = &data[d.offset(y, x, 0)..][..d.c];
                    for (a, &v) in acc.iter_mut().zip(px) {
                        *a = max(*a, v);
                    }
                }
            }
            res.extend_from_slice(&acc);
        }
    }
    res
}

/// Exact elementwise dequantization.
pub fn fixed2float(t: &FmapTensor) -> Result<FmapTensor> {
    let (fmt, raw) = t.expect_fixed("fixed2float")?;
    let frac = fmt.frac_bits();
    FmapTensor::new_real(t.dims(), raw.iter().map(|&r| dequantize_raw(r as i64, frac)).collect())
}

pub fn float2fixed(t: &FmapTensor, fmt: FixedFormat) -> Result<FmapTensor> {
    let v = t.expect_real("float2fixed")?;
    let raw = v.iter().map(|&x| quantize_raw(x, fmt)).collect::<Result<Vec<_>>>()?;
    FmapTensor::new_fixed(t.dims(), fmt, raw)
}

/// Mean over all pixels, per channel.
pub fn global_avgpool(t: &FmapTensor) -> Result<Vec<f64>> {
    let v = t.expect_real("global_avgpool")?;
    let d = t.dims();
    if d.pixels() == 0 || d.c == 0 {
        return Err(Error::EmptyTensor);
    }
    let mut sums = vec![0.0; d.c];
    for px in v.chunks_exact(d.c) {
        for (s, &x) in sums.iter_mut().zip(px) {
            *s += x;
        }
    }
    let n = d.pixels() as f64;
    Ok(sums.into_iter().map(|s| s / n).collect())
}

/// Softmax with the maximum subtracted before exponentiation.
pub fn softmax(v: &[f64]) -> Vec<f64> {
    let Some(max) = v.iter().copied().reduce(f64::max) else {
        return Vec::new();
    };
    let exps: Vec<f64> = v.iter().map(|&x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Stacks `b`'s channels after `a`'s at every pixel.
pub fn concat_channels(a: &FmapTensor, b: &FmapTensor) -> Result<FmapTensor> {
    let (da, db) = (a.dims(), b.dims());
    if da.y != db.y || da.x != db.x {
        return Err(Error::Geometry(format!("cannot concatenate {da} with {db}")));
    }
    let out = Dims::new(da.y, da.x, da.c + db.c);
    match (a.data(), b.data()) {
        (TensorData::Fixed { fmt: fa, raw: ra }, TensorData::Fixed { fmt: fb, raw: rb }) => {
            if fa != fb {
                return Err(Error::FormatMismatch(format!("cannot concatenate {fa} with {fb}")));
            }
            FmapTensor::new_fixed(out, *fa, interleave(ra, rb, da.c, db.c, da.pixels()))
        }
        (TensorData::Real(ra), TensorData::Real(rb)) => {
            FmapTensor::new_real(out, interleave(ra, rb, da.c, db.c, da.pixels()))
        }
        _ => Err(Error::KindMismatch("cannot concatenate fixed and real tensors".into())),
    }
}

fn interleave<T: Copy>(a: &[T], b: &[T], ca: usize, cb: usize, pixels: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(pixels * (ca + cb));
    for p in 0..pixels {
        out.extend_from_slice(&a[p * ca..(p + 1) * ca]);
        out.extend_from_slice(&b[p * cb..(p + 1) * cb]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: FixedFormat = FixedFormat::ACTIVATION;

    fn fixed(d: Dims, raw: Vec<i32>) -> FmapTensor {
        FmapTensor::new_fixed(d, A, raw).unwrap()
    }

    #[test]
    fn maxpool_picks_window_max() {
        let t = fixed(Dims::new(3, 3, 1), (1..=9).collect());
        let out = maxpool(&t, 3, 2).unwrap();
        assert_eq!(out.as_raw().unwrap(), &[9]);
    }

    #[test]
    fn maxpool_constant_and_dims() {
        let t = fixed(Dims::new(56, 56, 64), vec![-7; 56 * 56 * 64]);
        let out = maxpool(&t, 3, 2).unwrap();
        assert_eq!(out.dims(), Dims::new(27, 27, 64));
        assert!(out.as_raw().unwrap().iter().all(|&v| v == -7));
    }

    #[test]
    fn ceil_rounding_clips_last_window() {
        assert_eq!(pooled_extent(113, 3, 2, PoolRounding::Ceil).unwrap(), 56);
        assert_eq!(pooled_extent(56, 3, 2, PoolRounding::Ceil).unwrap(), 28);
        assert_eq!(pooled_extent(28, 3, 2, PoolRounding::Ceil).unwrap(), 14);
        assert_eq!(pooled_extent(56, 3, 2, PoolRounding::Floor).unwrap(), 27);
        let t = fixed(Dims::new(4, 4, 1), (0..16).collect());
        let out = maxpool_with(&t, 3, 2, PoolRounding::Ceil).unwrap();
        assert_eq!(out.dims(), Dims::new(2, 2, 1));
        assert_eq!(out.as_raw().unwrap(), &[10, 11, 14, 15]);
        assert!(pooled_extent(2, 3, 2, PoolRounding::Floor).is_err());
    }

    #[test]
    fn maxpool_real_tensor() {
        let t = FmapTensor::new_real(Dims::new(2, 2, 1), vec![-1.0, -3.0, -0.5, -2.0]).unwrap();
        assert_eq!(maxpool(&t, 2, 2).unwrap().as_real().unwrap(), &[-0.5]);
    }

    #[test]
    fn conversions() {
        let t = fixed(Dims::new(1, 1, 2), vec![8, -1]);
        let f = fixed2float(&t).unwrap();
        assert_eq!(f.as_real().unwrap(), &[1.0, -0.125]);
        assert_eq!(float2fixed(&f, A).unwrap(), t);

        let r = FmapTensor::new_real(Dims::new(1, 1, 3), vec![0.5, 10000.0, 0.0]).unwrap();
        assert_eq!(float2fixed(&r, A).unwrap().as_raw().unwrap(), &[4, 32767, 0]);
        let nan = FmapTensor::new_real(Dims::new(1, 1, 1), vec![f64::NAN]).unwrap();
        assert!(matches!(float2fixed(&nan, A), Err(Error::NotANumber)));
        assert!(fixed2float(&r).is_err());
    }

    #[test]
    fn avgpool_examples() {
        let ones = FmapTensor::new_real(Dims::new(13, 13, 4), vec![1.0; 13 * 13 * 4]).unwrap();
        assert_eq!(global_avgpool(&ones).unwrap(), vec![1.0; 4]);
        let single = FmapTensor::new_real(Dims::new(1, 1, 2), vec![3.5, -2.0]).unwrap();
        assert_eq!(global_avgpool(&single).unwrap(), vec![3.5, -2.0]);
        let two = FmapTensor::new_real(Dims::new(1, 2, 1), vec![0.0, 2.0]).unwrap();
        assert_eq!(global_avgpool(&two).unwrap(), vec![1.0]);
        assert!(matches!(global_avgpool(&FmapTensor::zeros_real(Dims::new(0, 3, 2))), Err(Error::EmptyTensor)));
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[0.0, 0.0]), vec![0.5, 0.5]);
        let u = softmax(&[3.0; 4]);
        assert!(u.iter().all(|&p| (p - 0.25).abs() < 1e-15));
        let v = [0.3, -1.0, 2.5, 0.0];
        let s = softmax(&v);
        let argmax = |x: &[f64]| x.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax(&s), argmax(&v));
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let big = softmax(&[1000.0, 1000.0]);
        assert_eq!(big, vec![0.5, 0.5]);
    }

    #[test]
    fn concat_examples() {
        let d = Dims::new(2, 1, 8);
        let a = fixed(d, (0..16).collect());
        let b = fixed(d, (100..116).collect());
        let ab = concat_channels(&a, &b).unwrap();
        assert_eq!(ab.dims(), Dims::new(2, 1, 16));
        let raw = ab.as_raw().unwrap();
        assert_eq!(&raw[..8], &(0..8).collect::<Vec<_>>()[..]);
        assert_eq!(&raw[8..16], &(100..108).collect::<Vec<_>>()[..]);
        assert_eq!(&raw[16..24], &(8..16).collect::<Vec<_>>()[..]);

        let empty = FmapTensor::zeros_fixed(Dims::new(2, 1, 0), A);
        assert_eq!(concat_channels(&a, &empty).unwrap(), a);

        let other = FmapTensor::zeros_fixed(d, FixedFormat::PARAM);
        assert!(concat_channels(&a, &other).is_err());
        assert!(concat_channels(&a, &fixed(Dims::new(1, 1, 8), vec![0; 8])).is_err());
        assert!(concat_channels(&a, &fixed2float(&b).unwrap()).is_err());
    }
}
