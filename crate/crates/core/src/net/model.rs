use super::NetworkSpec;
use crate::accel::{ConvParams, LayerParams};
use crate::error::{Error, Result};
use crate::fxp::FixedFormat;
use crate::quant::FloatConvParams;

/// A network plus quantized parameters for every conv slot, in
/// [`NetworkSpec::conv_layers`] order.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub net: NetworkSpec,
    pub params: Vec<ConvParams>,
    pub act_fmt: FixedFormat,
}

fn check_slots<T>(
    net: &NetworkSpec,
    params: &[T],
    check: impl Fn(&T, &LayerParams) -> Result<()>,
) -> Result<()> {
    net.validate()?;
    let layers = net.conv_layers();
    if params.len() < layers.len() {
        return Err(Error::MissingParams(params.len()));
    }
    if params.len() > layers.len() {
        return Err(Error::Malformed(format!(
            "{} parameter sets for {} conv layers",
            params.len(),
            layers.len()
        )));
    }
    for (slot, (p, layer)) in params.iter().zip(&layers).enumerate() {
        check(p, layer).map_err(|e| match e {
            Error::LengthMismatch { expected, got } => Error::ParamCount { slot, expected, got },
            other => other,
        })?;
    }
    Ok(())
}

impl Model {
    pub fn new(net: NetworkSpec, params: Vec<ConvParams>, act_fmt: FixedFormat) -> Result<Self> {
        check_slots(&net, &params, |p, l| p.check(l))?;
        Ok(Self { net, params, act_fmt })
    }

    /// All-zero parameters in `param_fmt`.
    pub fn zeros(net: NetworkSpec, param_fmt: FixedFormat, act_fmt: FixedFormat) -> Result<Self> {
        let params = net.conv_layers().iter().map(|l| ConvParams::zeros(l, param_fmt)).collect();
        Self::new(net, params, act_fmt)
    }
}

/// A network with real-valued parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FloatModel {
    pub net: NetworkSpec,
    pub params: Vec<FloatConvParams>,
}

impl FloatModel {
    pub fn new(net: NetworkSpec, params: Vec<FloatConvParams>) -> Result<Self> {
        check_slots(&net, &params, |p, l| p.check(l))?;
        Ok(Self { net, params })
    }

    pub fn zeros(net: NetworkSpec) -> Result<Self> {
        let params = net.conv_layers().iter().map(FloatConvParams::zeros).collect();
        Self::new(net, params)
    }

    /// Real-valued view of a quantized model.
    pub fn from_model(m: &Model) -> Self {
        Self { net: m.net.clone(), params: m.params.iter().map(crate::quant::dequantize_params).collect() }
    }
}
