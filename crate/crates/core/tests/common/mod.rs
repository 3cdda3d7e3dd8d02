#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use squeezejet::accel::{ConvParams, FixedBuf, LayerParams};
use squeezejet::{Dims, FixedFormat, FmapTensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn raw_range(fmt: FixedFormat) -> (i32, i32) {
    let t = fmt.total_bits();
    ((-(1i64 << (t - 1))) as i32, ((1i64 << (t - 1)) - 1) as i32)
}

pub fn random_buf(rng: &mut impl Rng, fmt: FixedFormat, len: usize) -> FixedBuf {
    let (lo, hi) = raw_range(fmt);
    FixedBuf { fmt, raw: (0..len).map(|_| rng.gen_range(lo..=hi)).collect() }
}

pub fn random_params(rng: &mut impl Rng, p: &LayerParams, fmt: FixedFormat) -> ConvParams {
    ConvParams { weights: random_buf(rng, fmt, p.weight_count()), bias: random_buf(rng, fmt, p.c_out) }
}

/// Activations drawn from `[-mag, mag]` raw units.
pub fn random_input(rng: &mut impl Rng, dims: Dims, fmt: FixedFormat, mag: i32) -> FmapTensor {
    let raw = (0..dims.y * dims.x * dims.c).map(|_| rng.gen_range(-mag..=mag)).collect();
    FmapTensor::new_fixed(dims, fmt, raw).unwrap()
}

/// Divide by 2^s, ties away from zero.
pub fn round_div_pow2(v: i128, s: u32) -> i128 {
    if s == 0 {
        return v;
    }
    let mag = (v.abs() + (1i128 << (s - 1))) >> s;
    if v < 0 {
        -mag
    } else {
        mag
    }
}

pub fn clamp_to(v: i128, fmt: FixedFormat) -> i32 {
    let (lo, hi) = raw_range(fmt);
    v.clamp(lo as i128, hi as i128) as i32
}

/// Straight-line fixed-point convolution kept independent of the library:
/// i128 sums, bias aligned to the product scale, ReLU, then rounding into
/// the input activation format.
pub fn oracle_conv(p: &LayerParams, w: &FixedBuf, b: &FixedBuf, x: &[i32], act: FixedFormat) -> Vec<i32> {
    let k = p.kernel;
    let y_out = (p.y_in + 2 * p.pad - k) / p.stride + 1;
    let x_out = (p.x_in + 2 * p.pad - k) / p.stride + 1;
    let prod_frac = act.frac_bits() + w.fmt.frac_bits();
    let mut out = Vec::with_capacity(y_out * x_out * p.c_out);
    for yo in 0..y_out {
        for xo in 0..x_out {
            for co in 0..p.c_out {
                let mut sum: i128 = 0;
                for kh in 0..k {
                    for kw in 0..k {
                        let yy = (yo * p.stride + kh) as isize - p.pad as isize;
                        let xx = (xo * p.stride + kw) as isize - p.pad as isize;
                        if yy < 0 || xx < 0 || yy as usize >= p.y_in || xx as usize >= p.x_in {
                            continue;
                        }
                        for ci in 0..p.c_in {
                            let xv = x[(yy as usize * p.x_in + xx as usize) * p.c_in + ci] as i128;
                            let wv = w.raw[((co * k + kh) * k + kw) * p.c_in + ci] as i128;
                            sum += xv * wv;
                        }
                    }
                }
                sum += (b.raw[co] as i128) << (prod_frac - b.fmt.frac_bits());
                if p.fused_relu && sum < 0 {
                    sum = 0;
                }
                out.push(clamp_to(round_div_pow2(sum, prod_frac - act.frac_bits()), act));
            }
        }
    }
    out
}

pub fn oracle_for(p: &LayerParams, params: &ConvParams, input: &FmapTensor) -> Vec<i32> {
    oracle_conv(p, &params.weights, &params.bias, input.as_raw().unwrap(), input.format().unwrap())
}

/// Random stride-1 layer legal for the stream engine.
pub fn random_stream_layer(rng: &mut impl Rng) -> LayerParams {
    let kernel = if rng.gen_bool(0.5) { 1 } else { 3 };
    let pad = if kernel == 3 { rng.gen_range(0..=1) } else { 0 };
    LayerParams {
        y_in: rng.gen_range(4..=16),
        x_in: rng.gen_range(4..=16),
        c_in: [16, 32, 48][rng.gen_range(0..3)],
        c_out: [4, 8, 16][rng.gen_range(0..3)],
        kernel,
        stride: 1,
        pad,
        fused_relu: rng.gen_bool(0.5),
    }
}
