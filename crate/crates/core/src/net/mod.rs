//! Network description, models and the end-to-end executor.

mod exec;
mod io;
mod model;

pub use exec::{
    run_conv, run_fire, run_inference, run_inference_float, run_inference_float_traced, run_inference_traced,
    ConvRecord, InferenceRun, StageOutput,
};
pub use io::{
    load_model, load_model_file, load_tensor, read_model, read_model_file, read_tensor, save_float_model, save_model, save_tensor,
    write_float_model, write_model, write_tensor, ModelFile,
};
pub use model::{FloatModel, Model};

use crate::accel::LayerParams;
use crate::error::{Error, Result};
use crate::layers::{pooled_extent, PoolRounding};
use crate::tensor::Dims;

/// Which conv engine executes a conv node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConvEngine {
    /// Stride-1 streaming engine.
    Stream,
    /// First-layer engine (any stride, small channel counts).
    FirstLayer,
}

/// Channel counts of a fire module's three convolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FireSpec {
    pub squeeze: usize,
    pub expand1x1: usize,
    pub expand3x3: usize,
}

impl FireSpec {
    pub const fn new(squeeze: usize, expand1x1: usize, expand3x3: usize) -> Self {
        Self { squeeze, expand1x1, expand3x3 }
    }

    pub fn out_channels(&self) -> usize {
        self.expand1x1 + self.expand3x3
    }

    /// Squeeze 1x1, expand 1x1, expand 3x3 (pad 1), all with fused ReLU.
    pub fn convs(&self, input: Dims) -> [LayerParams; 3] {
        let conv = |c_in, c_out, kernel, pad| LayerParams {
            y_in: input.y,
            x_in: input.x,
            c_in,
            c_out,
            kernel,
            stride: 1,
            pad,
            fused_relu: true,
        };
        [
            conv(input.c, self.squeeze, 1, 0),
            conv(self.squeeze, self.expand1x1, 1, 0),
            conv(self.squeeze, self.expand3x3, 3, 1),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerNode {
    Conv { params: LayerParams, engine: ConvEngine },
    Fire { input: Dims, spec: FireSpec },
    MaxPool { input: Dims, kernel: usize, stride: usize, rounding: PoolRounding },
    Fixed2Float { dims: Dims },
    GlobalAvgPool { dims: Dims },
    Softmax { len: usize },
}

/// Shape and element kind of the value flowing between two layers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Fixed(Dims),
    Real(Dims),
    Vector(usize),
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Shape::Fixed(d) => write!(f, "{d} fixed"),
            Shape::Real(d) => write!(f, "{d} real"),
            Shape::Vector(n) => write!(f, "vector[{n}]"),
        }
    }
}

impl LayerNode {
    pub fn name(&self) -> &'static str {
        match self {
            LayerNode::Conv { engine: ConvEngine::FirstLayer, .. } => "conv_l0",
            LayerNode::Conv { .. } => "conv",
            LayerNode::Fire { .. } => "fire",
            LayerNode::MaxPool { .. } => "maxpool",
            LayerNode::Fixed2Float { .. } => "fixed2float",
            LayerNode::GlobalAvgPool { .. } => "avgpool",
            LayerNode::Softmax { .. } => "softmax",
        }
    }

    pub fn input_shape(&self) -> Shape {
        match *self {
            LayerNode::Conv { params, .. } => Shape::Fixed(params.input_dims()),
            LayerNode::Fire { input, .. } | LayerNode::MaxPool { input, .. } => Shape::Fixed(input),
            LayerNode::Fixed2Float { dims } => Shape::Fixed(dims),
            LayerNode::GlobalAvgPool { dims } => Shape::Real(dims),
            LayerNode::Softmax { len } => Shape::Vector(len),
        }
    }

    pub fn output_shape(&self) -> Result<Shape> {
        Ok(match *self {
            LayerNode::Conv { params, .. } => Shape::Fixed(params.output_dims()?),
            LayerNode::Fire { input, spec } => {
                let [sq, e1, e3] = spec.convs(input);
                let (s, a, b) = (sq.output_dims()?, e1.output_dims()?, e3.output_dims()?);
                if (a.y, a.x) != (b.y, b.x) || (s.y, s.x) != (input.y, input.x) {
                    return Err(Error::Geometry("fire expand outputs disagree".into()));
                }
                Shape::Fixed(Dims::new(a.y, a.x, spec.out_channels()))
            }
            LayerNode::MaxPool { input, kernel, stride, rounding } => Shape::Fixed(Dims::new(
                pooled_extent(input.y, kernel, stride, rounding)?,
                pooled_extent(input.x, kernel, stride, rounding)?,
                input.c,
            )),
            LayerNode::Fixed2Float { dims } => Shape::Real(dims),
            LayerNode::GlobalAvgPool { dims } => Shape::Vector(dims.c),
            LayerNode::Softmax { len } => Shape::Vector(len),
        })
    }

    /// Conv layers this node runs, in execution order.
    pub fn conv_layers(&self) -> Vec<LayerParams> {
        match *self {
            LayerNode::Conv { params, .. } => vec![params],
            LayerNode::Fire { input, spec } => spec.convs(input).to_vec(),
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkSpec {
    pub layers: Vec<LayerNode>,
}

impl NetworkSpec {
    pub fn input_shape(&self) -> Option<Shape> {
        self.layers.first().map(LayerNode::input_shape)
    }

    /// Every conv layer in execution order; fire modules contribute three.
    pub fn conv_layers(&self) -> Vec<LayerParams> {
        self.layers.iter().flat_map(LayerNode::conv_layers).collect()
    }

    /// Checks that each layer's output feeds the next layer's input and
    /// returns the shape after every layer.
    pub fn validate(&self) -> Result<Vec<Shape>> {
        if self.layers.is_empty() {
            return Err(Error::ShapeChain { layer: 0, reason: "network has no layers".into() });
        }
        let mut shapes = Vec::with_capacity(self.layers.len());
        let mut prev: Option<Shape> = None;
        for (i, node) in self.layers.iter().enumerate() {
            let input = node.input_shape();
            if let Some(prev) = prev {
                if prev != input {
                    return Err(Error::ShapeChain {
                        layer: i,
                        reason: format!("{} expects {input}, previous layer produces {prev}", node.name()),
                    });
                }
            }
            if let LayerNode::Conv { params, engine: ConvEngine::Stream } = node {
                if params.stride != 1 {
                    return Err(Error::ShapeChain {
                        layer: i,
                        reason: "stream engine layers must have stride 1".into(),
                    });
                }
            }
            let out = node
                .output_shape()
                .map_err(|e| Error::ShapeChain { layer: i, reason: format!("{}: {e}", node.name()) })?;
            shapes.push(out);
            prev = Some(out);
        }
        Ok(shapes)
    }

    /// Multiply-accumulates over every conv layer.
    pub fn conv_macs(&self) -> Result<u64> {
        self.conv_layers().iter().map(LayerParams::macs).sum()
    }

    /// Conv workload in operations, counting each MAC as two.
    pub fn conv_ops(&self) -> Result<u64> {
        Ok(2 * self.conv_macs()?)
    }
}

pub const SQUEEZENET_INPUT: Dims = Dims::new(227, 227, 3);
pub const SQUEEZENET_CLASSES: usize = 1000;

/// SqueezeNet v1.1: conv, maxpool, 2 fire, maxpool, 2 fire, maxpool, 4 fire,
/// 1x1 classifier conv, fixed2float, global average pool, softmax.
///
/// Pooling uses ceil rounding as in the reference Caffe model, giving
/// 113 -> 56 -> 28 -> 14.
pub fn squeezenet_v11() -> NetworkSpec {
    let mut layers = Vec::new();
    let conv1 = LayerParams {
        y_in: SQUEEZENET_INPUT.y,
        x_in: SQUEEZENET_INPUT.x,
        c_in: SQUEEZENET_INPUT.c,
        c_out: 64,
        kernel: 3,
        stride: 2,
        pad: 0,
        fused_relu: true,
    };
    layers.push(LayerNode::Conv { params: conv1, engine: ConvEngine::FirstLayer });
    let mut dims = conv1.output_dims().expect("conv1 geometry");

    let pool = |layers: &mut Vec<LayerNode>, dims: &mut Dims| {
        let node = LayerNode::MaxPool { input: *dims, kernel: 3, stride: 2, rounding: PoolRounding::Ceil };
        let Ok(Shape::Fixed(out)) = node.output_shape() else { unreachable!() };
        layers.push(node);
        *dims = out;
    };
    let fire = |layers: &mut Vec<LayerNode>, dims: &mut Dims, spec: FireSpec| {
        layers.push(LayerNode::Fire { input: *dims, spec });
        *dims = Dims::new(dims.y, dims.x, spec.out_channels());
    };

    pool(&mut layers, &mut dims);
    fire(&mut layers, &mut dims, FireSpec::new(16, 64, 64));
    fire(&mut layers, &mut dims, FireSpec::new(16, 64, 64));
    pool(&mut layers, &mut dims);
    fire(&mut layers, &mut dims, FireSpec::new(32, 128, 128));
    fire(&mut layers, &mut dims, FireSpec::new(32, 128, 128));
    pool(&mut layers, &mut dims);
    fire(&mut layers, &mut dims, FireSpec::new(48, 192, 192));
    fire(&mut layers, &mut dims, FireSpec::new(48, 192, 192));
    fire(&mut layers, &mut dims, FireSpec::new(64, 256, 256));
    fire(&mut layers, &mut dims, FireSpec::new(64, 256, 256));

    let conv10 = LayerParams {
        y_in: dims.y,
        x_in: dims.x,
        c_in: dims.c,
        c_out: SQUEEZENET_CLASSES,
        kernel: 1,
        stride: 1,
        pad: 0,
        fused_relu: true,
    };
    layers.push(LayerNode::Conv { params: conv10, engine: ConvEngine::Stream });
    let dims = conv10.output_dims().expect("conv10 geometry");
    layers.push(LayerNode::Fixed2Float { dims });
    layers.push(LayerNode::GlobalAvgPool { dims });
    layers.push(LayerNode::Softmax { len: SQUEEZENET_CLASSES });
    NetworkSpec { layers }
}
