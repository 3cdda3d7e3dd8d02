//! Binary model (`SQJM`) and tensor (`SQJT`) files. Little-endian throughout.
//!
//! Model file:
//!
//! ```text
//! "SQJM" | u32 version=1 | u32 record count
//! record: u8 kind | u32 y_in, x_in, c_in, c_out, k, stride, pad, flags
//!         | u8 weight total bits, weight frac bits, bias total bits, bias frac bits
//!         | weights in W(c_o, k_h, k_w, c_i) order | biases
//! ```
//!
//! A fire module is three consecutive records (squeeze, expand 1x1, expand
//! 3x3). Fixed-point parameters take `ceil(total_bits / 8)` bytes each, so
//! the default 8-bit format is one signed byte per value. A total-bits field
//! of 0 marks real-valued parameters stored as `f64`. Conv records carry the
//! activation format in bits 8..16 (total) and 16..24 (frac) of `flags`.
//!
//! Tensor file:
//!
//! ```text
//! "SQJT" | u32 version=1 | u8 dtype (0 real64, 1 fixed16, 2 fixed8) | u8 frac bits
//!        | u32 y, x, c | payload in (y, x, c) order
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian, WriteBytesExt};

use super::{ConvEngine, FireSpec, FloatModel, LayerNode, Model, NetworkSpec};
use crate::accel::{ConvParams, FixedBuf, LayerParams};
use crate::error::{Error, Result};
use crate::fxp::FixedFormat;
use crate::layers::PoolRounding;
use crate::quant::FloatConvParams;
use crate::tensor::{Dims, FmapTensor, TensorData};

pub const MODEL_MAGIC: [u8; 4] = *b"SQJM";
pub const TENSOR_MAGIC: [u8; 4] = *b"SQJT";
pub const VERSION: u32 = 1;

const TAG_CONV: u8 = 0;
const TAG_CONV_L0: u8 = 1;
const TAG_FIRE_SQUEEZE: u8 = 2;
const TAG_FIRE_EXPAND1: u8 = 3;
const TAG_FIRE_EXPAND3: u8 = 4;
const TAG_MAXPOOL: u8 = 5;
const TAG_FIXED2FLOAT: u8 = 6;
const TAG_AVGPOOL: u8 = 7;
const TAG_SOFTMAX: u8 = 8;

const FLAG_RELU: u32 = 1;
const FLAG_CEIL: u32 = 1 << 1;

const DTYPE_REAL64: u8 = 0;
const DTYPE_FIXED16: u8 = 1;
const DTYPE_FIXED8: u8 = 2;

/// Either flavour of model file.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelFile {
    Fixed(Model),
    Float(FloatModel),
}

enum Payload<'a> {
    None,
    Fixed(&'a ConvParams),
    Float(&'a FloatConvParams),
}

fn word_bytes(fmt: FixedFormat) -> usize {
    fmt.total_bits().div_ceil(8) as usize
}

fn write_words<W: Write>(w: &mut W, buf: &FixedBuf) -> Result<()> {
    let n = word_bytes(buf.fmt);
    for &r in &buf.raw {
        w.write_all(&r.to_le_bytes()[..n])?;
    }
    Ok(())
}

fn conv_geometry(p: &LayerParams, act_fmt: Option<FixedFormat>) -> [u32; 8] {
    let mut flags = if p.fused_relu { FLAG_RELU } else { 0 };
    if let Some(f) = act_fmt {
        flags |= f.total_bits() << 8 | f.frac_bits() << 16;
    }
    let g = [p.y_in, p.x_in, p.c_in, p.c_out, p.kernel, p.stride, p.pad].map(|v| v as u32);
    [g[0], g[1], g[2], g[3], g[4], g[5], g[6], flags]
}

fn write_record<W: Write>(w: &mut W, tag: u8, geom: [u32; 8], payload: Payload) -> Result<()> {
    w.write_u8(tag)?;
    for v in geom {
        w.write_u32::<LittleEndian>(v)?;
    }
    match payload {
        Payload::None => w.write_all(&[0; 4])?,
        Payload::Fixed(p) => {
            for f in [p.weights.fmt, p.bias.fmt] {
                w.write_all(&[f.total_bits() as u8, f.frac_bits() as u8])?;
            }
            write_words(w, &p.weights)?;
            write_words(w, &p.bias)?;
        }
        Payload::Float(p) => {
            w.write_all(&[0; 4])?;
            for &v in p.weights.iter().chain(&p.bias) {
                w.write_f64::<LittleEndian>(v)?;
            }
        }
    }
    Ok(())
}

fn write_network<'a, W: Write>(
    w: &mut W,
    net: &NetworkSpec,
    act_fmt: Option<FixedFormat>,
    payload: impl Fn(usize) -> Payload<'a>,
) -> Result<()> {
    let records: usize = net.layers.iter().map(|n| if matches!(n, LayerNode::Fire { .. }) { 3 } else { 1 }).sum();
    w.write_all(&MODEL_MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    w.write_u32::<LittleEndian>(records as u32)?;
    let mut slot = 0;
    let plain = |d: Dims, c_out: usize, k: usize, s: usize, flags: u32| {
        [d.y as u32, d.x as u32, d.c as u32, c_out as u32, k as u32, s as u32, 0, flags]
    };
    for node in &net.layers {
        match node {
            LayerNode::Conv { params, engine } => {
                let tag = match engine {
                    ConvEngine::Stream => TAG_CONV,
                    ConvEngine::FirstLayer => TAG_CONV_L0,
                };
                write_record(w, tag, conv_geometry(params, act_fmt), payload(slot))?;
                slot += 1;
            }
            LayerNode::Fire { input, spec } => {
                let tags = [TAG_FIRE_SQUEEZE, TAG_FIRE_EXPAND1, TAG_FIRE_EXPAND3];
                for (tag, conv) in tags.into_iter().zip(spec.convs(*input)) {
                    write_record(w, tag, conv_geometry(&conv, act_fmt), payload(slot))?;
                    slot += 1;
                }
            }
            LayerNode::MaxPool { input, kernel, stride, rounding } => {
                let flags = if *rounding == PoolRounding::Ceil { FLAG_CEIL } else { 0 };
                write_record(w, TAG_MAXPOOL, plain(*input, input.c, *kernel, *stride, flags), Payload::None)?;
            }
            LayerNode::Fixed2Float { dims } => {
                write_record(w, TAG_FIXED2FLOAT, plain(*dims, dims.c, 1, 1, 0), Payload::None)?;
            }
            LayerNode::GlobalAvgPool { dims } => {
                write_record(w, TAG_AVGPOOL, plain(*dims, dims.c, 1, 1, 0), Payload::None)?;
            }
            LayerNode::Softmax { len } => {
                write_record(w, TAG_SOFTMAX, plain(Dims::new(1, 1, *len), *len, 1, 1, 0), Payload::None)?;
            }
        }
    }
    Ok(())
}

pub fn write_model<W: Write>(m: &Model, w: &mut W) -> Result<()> {
    write_network(w, &m.net, Some(m.act_fmt), |slot| Payload::Fixed(&m.params[slot]))
}

pub fn write_float_model<W: Write>(m: &FloatModel, w: &mut W) -> Result<()> {
    write_network(w, &m.net, None, |slot| Payload::Float(&m.params[slot]))
}

pub fn save_model(m: &Model, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_model(m, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn save_float_model(m: &FloatModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_float_model(m, &mut w)?;
    w.flush()?;
    Ok(())
}

struct Parser<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Parser<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(Error::Truncated(what))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(LittleEndian::read_u32(self.take(4, what)?))
    }

    fn magic(&mut self, expected: [u8; 4]) -> Result<()> {
        let found: [u8; 4] = self.take(4, "magic")?.try_into().expect("4 bytes");
        if found != expected {
            return Err(Error::BadMagic { expected, found });
        }
        let version = self.u32("version")?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        Ok(())
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(Error::Malformed(format!("{} trailing bytes", self.buf.len() - self.pos)));
        }
        Ok(())
    }
}

fn read_words(ps: &mut Parser, fmt: FixedFormat, count: usize) -> Result<FixedBuf> {
    let n = word_bytes(fmt);
    let bytes = ps.take(count.checked_mul(n).ok_or(Error::Truncated("parameters"))?, "parameters")?;
    let shift = 64 - 8 * n as u32;
    let raw = bytes
        .chunks_exact(n)
        .map(|c| {
            let mut le = [0u8; 8];
            le[..n].copy_from_slice(c);
            // sign-extend from the stored width
            let v = (i64::from_le_bytes(le) << shift) >> shift;
            if fmt.contains(v) {
                Ok(v as i32)
            } else {
                Err(Error::Malformed(format!("parameter {v} does not fit {fmt}")))
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FixedBuf { fmt, raw })
}

enum Params {
    Fixed(ConvParams),
    Float(FloatConvParams),
}

struct Record {
    tag: u8,
    geom: [usize; 7],
    flags: u32,
    params: Option<Params>,
}

impl Record {
    fn conv(&self) -> LayerParams {
        let [y_in, x_in, c_in, c_out, kernel, stride, pad] = self.geom;
        LayerParams { y_in, x_in, c_in, c_out, kernel, stride, pad, fused_relu: self.flags & FLAG_RELU != 0 }
    }

    fn dims(&self) -> Dims {
        Dims::new(self.geom[0], self.geom[1], self.geom[2])
    }

    fn act_fmt(&self) -> Result<Option<FixedFormat>> {
        let total = (self.flags >> 8) & 0xff;
        let frac = (self.flags >> 16) & 0xff;
        if total == 0 {
            return Ok(None);
        }
        FixedFormat::new(total, frac).map(Some)
    }
}

fn read_record(ps: &mut Parser) -> Result<Record> {
    let tag = ps.u8("record kind")?;
    if tag > TAG_SOFTMAX {
        return Err(Error::UnknownKind(tag));
    }
    let mut geom = [0usize; 7];
    for g in &mut geom {
        *g = ps.u32("record geometry")? as usize;
    }
    let flags = ps.u32("record flags")?;
    let fmts = ps.take(4, "parameter formats")?;
    let is_conv = tag <= TAG_FIRE_EXPAND3;
    let params = if !is_conv {
        None
    } else {
        let [y_in, x_in, c_in, c_out, kernel, ..] = geom;
        let _ = (y_in, x_in);
        let n_w = c_out
            .checked_mul(kernel * kernel)
            .and_then(|v| v.checked_mul(c_in))
            .ok_or_else(|| Error::Malformed("conv geometry overflows".into()))?;
        if fmts[0] == 0 {
            let mut vals = Vec::new();
            let bytes = ps.take((n_w + c_out).checked_mul(8).ok_or(Error::Truncated("parameters"))?, "parameters")?;
            for c in bytes.chunks_exact(8) {
                vals.push(LittleEndian::read_f64(c));
            }
            let bias = vals.split_off(n_w);
            Some(Params::Float(FloatConvParams { weights: vals, bias }))
        } else {
            let wfmt = FixedFormat::new(fmts[0] as u32, fmts[1] as u32)?;
            let bfmt = FixedFormat::new(fmts[2] as u32, fmts[3] as u32)?;
            let weights = read_words(ps, wfmt, n_w)?;
            let bias = read_words(ps, bfmt, c_out)?;
            Some(Params::Fixed(ConvParams { weights, bias }))
        }
    };
    Ok(Record { tag, geom, flags, params })
}

fn parse_model(buf: &[u8]) -> Result<ModelFile> {
    let mut ps = Parser { buf, pos: 0 };
    ps.magic(MODEL_MAGIC)?;
    let count = ps.u32("record count")? as usize;
    let mut records = Vec::new();
    for _ in 0..count {
        records.push(read_record(&mut ps)?);
    }
    ps.finish()?;

    let mut layers = Vec::new();
    let mut params = Vec::new();
    let mut act_fmt: Option<FixedFormat> = None;
    let mut it = records.into_iter().peekable();
    while let Some(rec) = it.next() {
        if let Some(f) = rec.act_fmt()? {
            if act_fmt.is_some_and(|a| a != f) {
                return Err(Error::Malformed("conv records disagree on activation format".into()));
            }
            act_fmt = Some(f);
        }
        let node = match rec.tag {
            TAG_CONV | TAG_CONV_L0 => {
                let engine = if rec.tag == TAG_CONV { ConvEngine::Stream } else { ConvEngine::FirstLayer };
                let node = LayerNode::Conv { params: rec.conv(), engine };
                params.extend(rec.params);
                node
            }
            TAG_FIRE_SQUEEZE => {
                let squeeze = rec.conv();
                let mut parts = vec![rec];
                for want in [TAG_FIRE_EXPAND1, TAG_FIRE_EXPAND3] {
                    match it.next() {
                        Some(r) if r.tag == want => parts.push(r),
                        _ => return Err(Error::Malformed("fire squeeze record not followed by its expands".into())),
                    }
                }
                let input = squeeze.input_dims();
                let spec = FireSpec::new(squeeze.c_out, parts[1].conv().c_out, parts[2].conv().c_out);
                let expected = spec.convs(input);
                for (r, want) in parts.iter().zip(expected) {
                    if r.conv() != want {
                        return Err(Error::Malformed(format!(
                            "fire record geometry {:?} does not match module layout",
                            r.geom
                        )));
                    }
                }
                params.extend(parts.into_iter().filter_map(|r| r.params));
                LayerNode::Fire { input, spec }
            }
            TAG_FIRE_EXPAND1 | TAG_FIRE_EXPAND3 => {
                return Err(Error::Malformed("fire expand record without squeeze".into()));
            }
            TAG_MAXPOOL => LayerNode::MaxPool {
                input: rec.dims(),
                kernel: rec.geom[4],
                stride: rec.geom[5],
                rounding: if rec.flags & FLAG_CEIL != 0 { PoolRounding::Ceil } else { PoolRounding::Floor },
            },
            TAG_FIXED2FLOAT => LayerNode::Fixed2Float { dims: rec.dims() },
            TAG_AVGPOOL => LayerNode::GlobalAvgPool { dims: rec.dims() },
            TAG_SOFTMAX => LayerNode::Softmax { len: rec.geom[2] },
            other => return Err(Error::UnknownKind(other)),
        };
        layers.push(node);
    }

    let net = NetworkSpec { layers };
    let fixed = params.iter().filter(|p| matches!(p, Params::Fixed(_))).count();
    if fixed == params.len() && (fixed > 0 || act_fmt.is_some()) {
        let act_fmt = act_fmt.ok_or_else(|| Error::Malformed("missing activation format".into()))?;
        let params = params
            .into_iter()
            .map(|p| match p {
                Params::Fixed(c) => c,
                Params::Float(_) => unreachable!(),
            })
            .collect();
        Ok(ModelFile::Fixed(Model::new(net, params, act_fmt)?))
    } else if fixed == 0 {
        let params = params
            .into_iter()
            .map(|p| match p {
                Params::Float(f) => f,
                Params::Fixed(_) => unreachable!(),
            })
            .collect();
        Ok(ModelFile::Float(FloatModel::new(net, params)?))
    } else {
        Err(Error::Malformed("model mixes fixed-point and real parameters".into()))
    }
}

pub fn read_model_file<R: Read>(r: &mut R) -> Result<ModelFile> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    parse_model(&buf)
}

/// Reads a quantized model; a real-valued model file is rejected.
pub fn read_model<R: Read>(r: &mut R) -> Result<Model> {
    match read_model_file(r)? {
        ModelFile::Fixed(m) => Ok(m),
        ModelFile::Float(_) => Err(Error::Malformed("model has real-valued parameters; quantize it first".into())),
    }
}

pub fn load_model_file(path: impl AsRef<Path>) -> Result<ModelFile> {
    read_model_file(&mut BufReader::new(File::open(path)?))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    read_model(&mut BufReader::new(File::open(path)?))
}

pub fn write_tensor<W: Write>(t: &FmapTensor, w: &mut W) -> Result<()> {
    let d = t.dims();
    w.write_all(&TENSOR_MAGIC)?;
    w.write_u32::<LittleEndian>(VERSION)?;
    let (dtype, frac) = match t.data() {
        TensorData::Real(_) => (DTYPE_REAL64, 0),
        TensorData::Fixed { fmt, .. } => match fmt.total_bits() {
            16 => (DTYPE_FIXED16, fmt.frac_bits() as u8),
            8 => (DTYPE_FIXED8, fmt.frac_bits() as u8),
            _ => return Err(Error::Malformed(format!("tensor files hold 8- or 16-bit words, not {fmt}"))),
        },
    };
    w.write_all(&[dtype, frac])?;
    for v in [d.y, d.x, d.c] {
        w.write_u32::<LittleEndian>(v as u32)?;
    }
    match t.data() {
        TensorData::Real(v) => {
            for &x in v {
                w.write_f64::<LittleEndian>(x)?;
            }
        }
        TensorData::Fixed { fmt, raw } => write_words(w, &FixedBuf { fmt: *fmt, raw: raw.clone() })?,
    }
    Ok(())
}

pub fn read_tensor<R: Read>(r: &mut R) -> Result<FmapTensor> {
    let mut buf = Vec::new();
    r.read_to_end(&mut buf)?;
    let mut ps = Parser { buf: &buf, pos: 0 };
    ps.magic(TENSOR_MAGIC)?;
    let dtype = ps.u8("dtype")?;
    let frac = ps.u8("frac bits")? as u32;
    let dims = Dims::new(ps.u32("dims")? as usize, ps.u32("dims")? as usize, ps.u32("dims")? as usize);
    let len = dims.y.checked_mul(dims.x).and_then(|v| v.checked_mul(dims.c)).ok_or(Error::Truncated("payload"))?;
    let t = match dtype {
        DTYPE_REAL64 => {
            let bytes = ps.take(len.checked_mul(8).ok_or(Error::Truncated("payload"))?, "payload")?;
            FmapTensor::new_real(dims, bytes.chunks_exact(8).map(LittleEndian::read_f64).collect())?
        }
        DTYPE_FIXED16 | DTYPE_FIXED8 => {
            let total = if dtype == DTYPE_FIXED16 { 16 } else { 8 };
            let fmt = FixedFormat::new(total, frac)?;
            let words = read_words(&mut ps, fmt, len)?;
            FmapTensor::new_fixed(dims, fmt, words.raw)?
        }
        other => return Err(Error::UnsupportedDtype(other)),
    };
    if ps.pos != buf.len() {
        return Err(Error::LengthMismatch { expected: len, got: len + (buf.len() - ps.pos) });
    }
    Ok(t)
}

pub fn save_tensor(t: &FmapTensor, path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor(t, &mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_tensor(path: impl AsRef<Path>) -> Result<FmapTensor> {
    read_tensor(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::net::squeezenet_v11;

    fn bytes_of(m: &Model) -> Vec<u8> {
        let mut v = Vec::new();
        write_model(m, &mut v).unwrap();
        v
    }

    fn small_model() -> Model {
        let mut m = Model::zeros(squeezenet_v11(), FixedFormat::PARAM, FixedFormat::ACTIVATION).unwrap();
        for (i, p) in m.params.iter_mut().enumerate() {
            for (j, w) in p.weights.raw.iter_mut().enumerate().take(50) {
                *w = ((i * 31 + j * 7) % 256) as i32 - 128;
            }
            p.bias.raw[0] = -(i as i32);
        }
        m
    }

    #[test]
    fn header_layout() {
        let v = bytes_of(&small_model());
        assert_eq!(&v[..4], b"SQJM");
        assert_eq!(LittleEndian::read_u32(&v[4..8]), 1);
        // 2 convs + 8 fires x 3 + 3 maxpool + fixed2float + avgpool + softmax
        assert_eq!(LittleEndian::read_u32(&v[8..12]), 32);
        assert_eq!(v[12], TAG_CONV_L0);
        let geom: Vec<u32> = (0..8).map(|i| LittleEndian::read_u32(&v[13 + 4 * i..])).collect();
        assert_eq!(&geom[..7], &[227, 227, 3, 64, 3, 2, 0]);
        assert_eq!(geom[7], FLAG_RELU | 16 << 8 | 3 << 16);
        assert_eq!(&v[45..49], &[8, 7, 8, 7]);
        // first weight as a signed byte
        assert_eq!(v[49] as i8 as i32, small_model().params[0].weights.raw[0]);
    }

    #[test]
    fn model_round_trip() {
        let m = small_model();
        let back = read_model(&mut &bytes_of(&m)[..]).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn model_errors_are_distinct() {
        let v = bytes_of(&small_model());
        let mut bad = v.clone();
        bad[0] = b'X';
        assert!(matches!(read_model(&mut &bad[..]), Err(Error::BadMagic { .. })));
        let mut bad = v.clone();
        bad[4] = 2;
        assert!(matches!(read_model(&mut &bad[..]), Err(Error::UnsupportedVersion(2))));
        assert!(matches!(read_model(&mut &v[..v.len() - 10]), Err(Error::Truncated(_))));
        let mut bad = v.clone();
        bad[12] = 42;
        assert!(matches!(read_model(&mut &bad[..]), Err(Error::UnknownKind(42))));
        // break the chain: conv_l0 output channels 64 -> 48, parameter count follows
        let mut m = small_model();
        if let LayerNode::Conv { params, .. } = &mut m.net.layers[0] {
            params.c_out = 48;
        }
        m.params[0] = ConvParams::zeros(&m.net.conv_layers()[0], FixedFormat::PARAM);
        let mut raw = Vec::new();
        write_model(&m, &mut raw).unwrap();
        assert!(matches!(read_model(&mut &raw[..]), Err(Error::ShapeChain { layer: 1, .. })));
    }

    #[test]
    fn float_model_round_trip() {
        let mut fm = FloatModel::zeros(squeezenet_v11()).unwrap();
        fm.params[3].weights[5] = 0.123456789;
        fm.params[25].bias[999] = -7.5;
        let mut v = Vec::new();
        write_float_model(&fm, &mut v).unwrap();
        match read_model_file(&mut &v[..]).unwrap() {
            ModelFile::Float(back) => assert_eq!(back, fm),
            ModelFile::Fixed(_) => panic!("expected a float model"),
        }
        assert!(read_model(&mut &v[..]).is_err());
    }

    #[test]
    fn tensor_round_trip_and_kinds() {
        let fixed = FmapTensor::new_fixed(Dims::new(2, 3, 2), FixedFormat::ACTIVATION, (-6..6).collect()).unwrap();
        let real = FmapTensor::new_real(Dims::new(1, 1, 3), vec![0.5, -1e300, f64::MIN_POSITIVE]).unwrap();
        let byte = FmapTensor::new_fixed(Dims::new(1, 2, 1), FixedFormat::PARAM, vec![-128, 127]).unwrap();
        for t in [fixed, real, byte] {
            let mut v = Vec::new();
            write_tensor(&t, &mut v).unwrap();
            assert_eq!(&v[..4], b"SQJT");
            assert_eq!(read_tensor(&mut &v[..]).unwrap(), t);
        }
    }

    #[test]
    fn tensor_payload_length_checked() {
        let t = FmapTensor::new_fixed(Dims::new(1, 2, 2), FixedFormat::ACTIVATION, vec![1, 2, 3, 4]).unwrap();
        let mut v = Vec::new();
        write_tensor(&t, &mut v).unwrap();
        assert!(matches!(read_tensor(&mut &v[..v.len() - 2][..]), Err(Error::Truncated(_))));
        let mut long = v.clone();
        long.extend_from_slice(&[0, 0]);
        assert!(matches!(read_tensor(&mut &long[..]), Err(Error::LengthMismatch { .. })));
        let mut bad = v.clone();
        bad[8] = 9;
        assert!(matches!(read_tensor(&mut &bad[..]), Err(Error::UnsupportedDtype(9))));
        let odd = FmapTensor::zeros_fixed(Dims::new(1, 1, 1), FixedFormat::new(12, 4).unwrap());
        assert!(write_tensor(&odd, &mut Vec::new()).is_err());
    }
}
