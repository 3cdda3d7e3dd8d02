use super::{ConvEngine, FireSpec, FloatModel, LayerNode, Model};
use crate::accel::{conv_l0_tensor, conv_stream_tensor, ConvParams, ConvStats, EngineConfig, LayerParams};
use crate::error::{Error, Result};
use crate::layers::{concat_channels, fixed2float, float2fixed, global_avgpool, maxpool_with, softmax};
use crate::quant::{reference_conv_float, FloatConvParams};
use crate::tensor::FmapTensor;

/// Value produced by one pipeline stage.
#[derive(Debug, Clone, PartialEq)]
pub enum StageOutput {
    Fmap(FmapTensor),
    Vector(Vec<f64>),
}

impl StageOutput {
    fn fmap(&self, layer: usize, node: &LayerNode) -> Result<&FmapTensor> {
        match self {
            StageOutput::Fmap(t) => Ok(t),
            StageOutput::Vector(_) => Err(Error::ShapeChain {
                layer,
                reason: format!("{} needs a feature map, got a vector", node.name()),
            }),
        }
    }

    fn vector(&self, layer: usize, node: &LayerNode) -> Result<&[f64]> {
        match self {
            StageOutput::Vector(v) => Ok(v),
            StageOutput::Fmap(_) => Err(Error::ShapeChain {
                layer,
                reason: format!("{} needs a vector, got a feature map", node.name()),
            }),
        }
    }
}

/// Counters of one conv layer execution.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvRecord {
    /// Index of the network node that ran the conv.
    pub layer: usize,
    /// Parameter slot.
    pub slot: usize,
    pub params: LayerParams,
    pub stats: ConvStats,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceRun {
    pub probs: Vec<f64>,
    pub convs: Vec<ConvRecord>,
}

pub fn run_conv(
    p: &LayerParams,
    params: &ConvParams,
    input: &FmapTensor,
    engine: ConvEngine,
    cfg: &EngineConfig,
) -> Result<(FmapTensor, ConvStats)> {
    match engine {
        ConvEngine::Stream => conv_stream_tensor(p, params, input, cfg),
        ConvEngine::FirstLayer => conv_l0_tensor(p, params, input, cfg),
    }
}

/// Squeeze, then both expands over the squeeze output, then channel concat
/// (1x1 expand channels first). `params` holds the three slots in that order.
pub fn run_fire(
    spec: &FireSpec,
    input: &FmapTensor,
    params: &[ConvParams],
    cfg: &EngineConfig,
) -> Result<(FmapTensor, [ConvStats; 3])> {
    let [sq, e1, e3] = spec.convs(input.dims());
    let [psq, pe1, pe3] = params else {
        return Err(Error::LengthMismatch { expected: 3, got: params.len() });
    };
    let (squeezed, s0) = conv_stream_tensor(&sq, psq, input, cfg)?;
    let (a, s1) = conv_stream_tensor(&e1, pe1, &squeezed, cfg)?;
    let (b, s2) = conv_stream_tensor(&e3, pe3, &squeezed, cfg)?;
    Ok((concat_channels(&a, &b)?, [s0, s1, s2]))
}

fn check_entry(node: Option<&LayerNode>, input: &FmapTensor) -> Result<()> {
    let node = node.ok_or(Error::ShapeChain { layer: 0, reason: "network has no layers".into() })?;
    let expected = match node.input_shape() {
        super::Shape::Fixed(d) | super::Shape::Real(d) => d,
        super::Shape::Vector(n) => crate::tensor::Dims::new(1, 1, n),
    };
    if input.dims() != expected {
        return Err(Error::Geometry(format!("input is {}, network expects {expected}", input.dims())));
    }
    Ok(())
}

/// Fixed-point inference with the default engine configuration; returns the
/// class probabilities.
pub fn run_inference(m: &Model, input: &FmapTensor) -> Result<Vec<f64>> {
    Ok(run_inference_traced(m, input, &EngineConfig::default(), &mut |_, _, _| {})?.probs)
}

/// Fixed-point inference. A real input is first converted to the model's
/// activation format. `observer` sees every stage output.
pub fn run_inference_traced(
    m: &Model,
    input: &FmapTensor,
    cfg: &EngineConfig,
    observer: &mut dyn FnMut(usize, &LayerNode, &StageOutput),
) -> Result<InferenceRun> {
    check_entry(m.net.layers.first(), input)?;
    let entry = match input.format() {
        Some(fmt) if fmt == m.act_fmt => input.clone(),
        Some(fmt) => {
            return Err(Error::FormatMismatch(format!("input is {fmt}, model activations are {}", m.act_fmt)));
        }
        None => float2fixed(input, m.act_fmt)?,
    };
    let mut value = StageOutput::Fmap(entry);
    let mut slot = 0;
    let mut convs = Vec::new();

    for (i, node) in m.net.layers.iter().enumerate() {
        let next = match node {
            LayerNode::Conv { params, engine } => {
                let p = m.params.get(slot).ok_or(Error::MissingParams(slot))?;
                let (out, stats) = run_conv(params, p, value.fmap(i, node)?, *engine, cfg)?;
                convs.push(ConvRecord { layer: i, slot, params: *params, stats });
                slot += 1;
                StageOutput::Fmap(out)
            }
            LayerNode::Fire { spec, .. } => {
                let p = m.params.get(slot..slot + 3).ok_or(Error::MissingParams(slot))?;
                let input = value.fmap(i, node)?;
                let layers = spec.convs(input.dims());
                let (out, stats) = run_fire(spec, input, p, cfg)?;
                for (j, (params, stats)) in layers.into_iter().zip(stats).enumerate() {
                    convs.push(ConvRecord { layer: i, slot: slot + j, params, stats });
                }
                slot += 3;
                StageOutput::Fmap(out)
            }
            LayerNode::MaxPool { kernel, stride, rounding, .. } => {
                StageOutput::Fmap(maxpool_with(value.fmap(i, node)?, *kernel, *stride, *rounding)?)
            }
            LayerNode::Fixed2Float { .. } => StageOutput::Fmap(fixed2float(value.fmap(i, node)?)?),
            LayerNode::GlobalAvgPool { .. } => StageOutput::Vector(global_avgpool(value.fmap(i, node)?)?),
            LayerNode::Softmax { .. } => StageOutput::Vector(softmax(value.vector(i, node)?)),
        };
        observer(i, node, &next);
        value = next;
    }

    match value {
        StageOutput::Vector(probs) => Ok(InferenceRun { probs, convs }),
        StageOutput::Fmap(_) => Err(Error::ShapeChain {
            layer: m.net.layers.len(),
            reason: "network does not end in a vector".into(),
        }),
    }
}

fn float_fire(spec: &FireSpec, input: &FmapTensor, params: &[FloatConvParams]) -> Result<FmapTensor> {
    let [sq, e1, e3] = spec.convs(input.dims());
    let [psq, pe1, pe3] = params else {
        return Err(Error::LengthMismatch { expected: 3, got: params.len() });
    };
    let squeezed = reference_conv_float(&sq, psq, input)?;
    let a = reference_conv_float(&e1, pe1, &squeezed)?;
    let b = reference_conv_float(&e3, pe3, &squeezed)?;
    concat_channels(&a, &b)
}

/// Real-arithmetic inference through the reference convolutions.
pub fn run_inference_float(m: &FloatModel, input: &FmapTensor) -> Result<Vec<f64>> {
    run_inference_float_traced(m, input, &mut |_, _, _| {})
}

pub fn run_inference_float_traced(
    m: &FloatModel,
    input: &FmapTensor,
    observer: &mut dyn FnMut(usize, &LayerNode, &StageOutput),
) -> Result<Vec<f64>> {
    check_entry(m.net.layers.first(), input)?;
    let entry = if input.is_fixed() { fixed2float(input)? } else { input.clone() };
    let mut value = StageOutput::Fmap(entry);
    let mut slot = 0;

    for (i, node) in m.net.layers.iter().enumerate() {
        let next = match node {
            LayerNode::Conv { params, .. } => {
                let p = m.params.get(slot).ok_or(Error::MissingParams(slot))?;
                slot += 1;
                StageOutput::Fmap(reference_conv_float(params, p, value.fmap(i, node)?)?)
            }
            LayerNode::Fire { spec, .. } => {
                let p = m.params.get(slot..slot + 3).ok_or(Error::MissingParams(slot))?;
                slot += 3;
                StageOutput::Fmap(float_fire(spec, value.fmap(i, node)?, p)?)
            }
            LayerNode::MaxPool { kernel, stride, rounding, .. } => {
                StageOutput::Fmap(maxpool_with(value.fmap(i, node)?, *kernel, *stride, *rounding)?)
            }
            // already real-valued
            LayerNode::Fixed2Float { .. } => StageOutput::Fmap(value.fmap(i, node)?.clone()),
            LayerNode::GlobalAvgPool { .. } => StageOutput::Vector(global_avgpool(value.fmap(i, node)?)?),
            LayerNode::Softmax { .. } => StageOutput::Vector(softmax(value.vector(i, node)?)),
        };
        observer(i, node, &next);
        value = next;
    }

    match value {
        StageOutput::Vector(probs) => Ok(probs),
        StageOutput::Fmap(_) => Err(Error::ShapeChain {
            layer: m.net.layers.len(),
            reason: "network does not end in a vector".into(),
        }),
    }
}
