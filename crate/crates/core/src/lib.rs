//! Functional simulator of a fixed-point, line-buffered convolution
//! accelerator and the SqueezeNet v1.1 pipeline that runs on it.
//!
//! * [`fxp`]: two's-complement fixed-point words, exact accumulation,
//!   rounding and saturation.
//! * [`accel`]: the stride-1 streaming engine and the first-layer engine.
//! * [`layers`]: pooling, softmax, concatenation and format conversion.
//! * [`quant`]: parameter quantization and the reference convolutions used
//!   as bit-exactness oracles.
//! * [`net`]: network description, model/tensor files and the executor.
//! * [`perf`]: analytic cycle and buffer-footprint model.

pub mod accel;
pub mod error;
pub mod fxp;
pub mod layers;
pub mod net;
pub mod perf;
pub mod quant;
pub mod tensor;

pub use error::{Error, Result};
pub use fxp::{FixedFormat, FixedWord};
pub use tensor::{Dims, FmapTensor, TensorData};
