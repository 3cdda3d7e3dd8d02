//! Parameter quantization and the two reference convolutions.
//!
//! [`reference_conv_float`] evaluates the convolution sum literally in `f64`.
//! [`reference_conv_fixed`] evaluates the same sum over raw fixed-point words
//! with exact 64-bit accumulation and the engines' bias/ReLU/requantize
//! stage, so any disagreement with an engine points at dataflow rather
//! than arithmetic policy.

use crate::accel::{output_dims, ConvParams, FixedBuf, LayerParams};
use crate::error::{Error, Result};
use crate::fxp::{dequantize_raw, quantize_raw, FixedFormat, Requantizer};
use crate::net::{FloatModel, Model};
use crate::tensor::FmapTensor;

/// Real-valued weights (`W(c_o, k_h, k_w, c_i)` order) and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatConvParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl FloatConvParams {
    pub fn zeros(p: &LayerParams) -> Self {
        Self { weights: vec![0.0; p.weight_count()], bias: vec![0.0; p.c_out] }
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

fn quantize_buf(values: &[f64], fmt: FixedFormat) -> Result<(FixedBuf, usize)> {
    let mut saturated = 0;
    let raw = values
        .iter()
        .map(|&v| {
            let r = quantize_raw(v, fmt)?;
            if (v * (fmt.frac_bits() as f64).exp2()).round() != r as f64 {
                saturated += 1;
            }
            Ok(r)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((FixedBuf { fmt, raw }, saturated))
}

/// Quantizes one layer's weights and biases to `fmt`; also returns how many
/// values were clamped to the format's range.
pub fn quantize_params(params: &FloatConvParams, fmt: FixedFormat) -> Result<(ConvParams, usize)> {
    let (weights, sw) = quantize_buf(&params.weights, fmt)?;
    let (bias, sb) = quantize_buf(&params.bias, fmt)?;
    Ok((ConvParams { weights, bias }, sw + sb))
}

pub fn dequantize_params(params: &ConvParams) -> FloatConvParams {
    let deq = |b: &FixedBuf| b.raw.iter().map(|&r| dequantize_raw(r as i64, b.fmt.frac_bits())).collect();
    FloatConvParams { weights: deq(&params.weights), bias: deq(&params.bias) }
}

/// Quantizes every conv layer's parameters with `weight_fmt` and records
/// `act_fmt` as the runtime activation format.
pub fn quantize_model(m: &FloatModel, weight_fmt: FixedFormat, act_fmt: FixedFormat) -> Result<Model> {
    Ok(quantize_model_report(m, weight_fmt, act_fmt)?.0)
}

/// As [`quantize_model`], plus per-slot saturation counts.
pub fn quantize_model_report(
    m: &FloatModel,
    weight_fmt: FixedFormat,
    act_fmt: FixedFormat,
) -> Result<(Model, Vec<usize>)> {
    let mut params = Vec::with_capacity(m.params.len());
    let mut saturations = Vec::with_capacity(m.params.len());
    for p in &m.params {
        let (q, sat) = quantize_params(p, weight_fmt)?;
        params.push(q);
        saturations.push(sat);
    }
    Ok((Model::new(m.net.clone(), params, act_fmt)?, saturations))
}

/// Input element at padded coordinates, zero outside the real input.
#[inline]
fn padded_index(p: &LayerParams, yp: usize, xp: usize) -> Option<(usize, usize)> {
    let y = yp.checked_sub(p.pad).filter(|&y| y < p.y_in)?;
    let x = xp.checked_sub(p.pad).filter(|&x| x < p.x_in)?;
    Some((y, x))
}

fn check_input(p: &LayerParams, fmap: &FmapTensor) -> Result<()> {
    if fmap.dims() != p.input_dims() {
        return Err(Error::Geometry(format!("input is {}, layer expects {}", fmap.dims(), p.input_dims())));
    }
    Ok(())
}

/// Direct real-arithmetic convolution with bias and optional ReLU.
pub fn reference_conv_float(p: &LayerParams, params: &FloatConvParams, fmap: &FmapTensor) -> Result<FmapTensor> {
    params.check(p)?;
    check_input(p, fmap)?;
    let input = fmap.expect_real("reference_conv_float")?;
    let (y_out, x_out) = output_dims(p)?;
    let out_dims = p.output_dims()?;
    let d = fmap.dims();
    let k = p.kernel;
    let mut out = Vec::with_capacity(out_dims.len());
    for yo in 0..y_out {
        for xo in 0..x_out {
            for co in 0..p.c_out {
                let mut sum = 0.0;
                for kh in 0..k {
                    for kw in 0..k {
                        let Some((y, x)) = padded_index(p, yo * p.stride + kh, xo * p.stride + kw) else {
                            continue;
                        };
                        for ci in 0..p.c_in {
                            sum += input[d.offset(y, x, ci)] * params.weights[((co * k + kh) * k + kw) * p.c_in + ci];
                        }
                    }
                }
                sum += params.bias[co];
                if p.fused_relu && sum < 0.0 {
                    sum = 0.0;
                }
                out.push(sum);
            }
        }
    }
    FmapTensor::new_real(out_dims, out)
}

/// Direct fixed-point convolution: exact integer sum of products over every
/// kernel tap, then bias, ReLU and requantization into the input's format.
pub fn reference_conv_fixed(p: &LayerParams, params: &ConvParams, fmap: &FmapTensor) -> Result<FmapTensor> {
    params.check(p)?;
    check_input(p, fmap)?;
    let (act_fmt, input) = fmap.expect_fixed("reference_conv_fixed")?;
    let rq = Requantizer::new(
        act_fmt.frac_bits() + params.weights.fmt.frac_bits(),
        params.bias.fmt,
        act_fmt,
        p.fused_relu,
    )?;
    let (y_out, x_out) = output_dims(p)?;
    let out_dims = p.output_dims()?;
    let d = fmap.dims();
    let k = p.kernel;
    let w = &params.weights.raw;
    let mut out = Vec::with_capacity(out_dims.len());
    for yo in 0..y_out {
        for xo in 0..x_out {
            for co in 0..p.c_out {
                let mut acc: i64 = 0;
                for kh in 0..k {
                    for kw in 0..k {
                        let Some((y, x)) = padded_index(p, yo * p.stride + kh, xo * p.stride + kw) else {
                            continue;
                        };
                        for ci in 0..p.c_in {
                            acc += input[d.offset(y, x, ci)] as i64 * w[((co * k + kh) * k + kw) * p.c_in + ci] as i64;
                        }
                    }
                }
                out.push(rq.apply(acc, params.bias.raw[co]));
            }
        }
    }
    FmapTensor::new_fixed(out_dims, act_fmt, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Dims;

    fn lp(y: usize, c_in: usize, c_out: usize, k: usize, pad: usize, relu: bool) -> LayerParams {
        LayerParams { y_in: y, x_in: y, c_in, c_out, kernel: k, stride: 1, pad, fused_relu: relu }
    }

    #[test]
    fn quantize_params_examples() {
        let fp = FloatConvParams { weights: vec![0.5, 2.0, -3.0, 0.25], bias: vec![0.0] };
        let (q, sat) = quantize_params(&fp, FixedFormat::PARAM).unwrap();
        assert_eq!(q.weights.raw, vec![64, 127, -128, 32]);
        assert_eq!(sat, 2);
        let nan = FloatConvParams { weights: vec![f64::NAN], bias: vec![] };
        assert!(matches!(quantize_params(&nan, FixedFormat::PARAM), Err(Error::NotANumber)));
        // exactly representable range endpoints do not count as clamped
        let edge = FloatConvParams { weights: vec![-1.0, 0.9921875], bias: vec![] };
        assert_eq!(quantize_params(&edge, FixedFormat::PARAM).unwrap().1, 0);
    }

    #[test]
    fn float_channel_select() {
        let p = lp(2, 3, 1, 1, 0, false);
        let fp = FloatConvParams { weights: vec![0.0, 1.0, 0.0], bias: vec![0.0] };
        let input = FmapTensor::new_real(p.input_dims(), (0..12).map(|v| v as f64).collect()).unwrap();
        let out = reference_conv_float(&p, &fp, &input).unwrap();
        assert_eq!(out.as_real().unwrap(), &[1.0, 4.0, 7.0, 10.0]);
    }

    #[test]
    fn float_zero_weights_give_clamped_bias() {
        let p = lp(3, 2, 2, 3, 1, true);
        let fp = FloatConvParams { weights: vec![0.0; p.weight_count()], bias: vec![0.75, -0.5] };
        let input = FmapTensor::new_real(p.input_dims(), vec![1.0; 18]).unwrap();
        let out = reference_conv_float(&p, &fp, &input).unwrap();
        for px in out.as_real().unwrap().chunks(2) {
            assert_eq!(px, &[0.75, 0.0]);
        }
    }

    #[test]
    fn float_nine_term_sum() {
        let p = lp(3, 1, 1, 3, 0, false);
        let fp = FloatConvParams { weights: vec![1.0; 9], bias: vec![0.5] };
        let input = FmapTensor::new_real(p.input_dims(), vec![1.0; 9]).unwrap();
        let out = reference_conv_float(&p, &fp, &input).unwrap();
        assert_eq!(out.dims(), Dims::new(1, 1, 1));
        assert_eq!(out.as_real().unwrap(), &[9.5]);
    }

    #[test]
    fn fixed_oracle_single_term() {
        let p = lp(1, 16, 1, 1, 0, false);
        let mut w = vec![0; 16];
        w[0] = 64;
        let params = ConvParams { weights: FixedBuf::new(FixedFormat::PARAM, w).unwrap(), bias: FixedBuf::zeros(FixedFormat::PARAM, 1) };
        let mut x = vec![0; 16];
        x[0] = 16;
        let input = FmapTensor::new_fixed(p.input_dims(), FixedFormat::ACTIVATION, x).unwrap();
        let out = reference_conv_fixed(&p, &params, &input).unwrap();
        assert_eq!(out.as_raw().unwrap(), &[8]);
    }

    #[test]
    fn kind_and_shape_checked() {
        let p = lp(2, 1, 1, 1, 0, false);
        let real = FmapTensor::zeros_real(p.input_dims());
        let fixed = FmapTensor::zeros_fixed(p.input_dims(), FixedFormat::ACTIVATION);
        let cp = ConvParams::zeros(&p, FixedFormat::PARAM);
        assert!(matches!(reference_conv_fixed(&p, &cp, &real), Err(Error::KindMismatch(_))));
        assert!(reference_conv_float(&p, &FloatConvParams::zeros(&p), &fixed).is_err());
        let wrong = FmapTensor::zeros_fixed(Dims::new(3, 2, 1), FixedFormat::ACTIVATION);
        assert!(matches!(reference_conv_fixed(&p, &cp, &wrong), Err(Error::Geometry(_))));
    }
}
