use super::{
    output_dims, split_weights, ConvParams, ConvStats, EngineConfig, FixedBuf, LayerParams, LineBufferSet,
    PixelSink, PixelSource, TensorSink, TensorSource, WindowBuffer,
};
use crate::error::{Error, Result};
use crate::fxp::{dot_raw, Requantizer};
use crate::tensor::FmapTensor;

/// One MAC-CI_min unit with its private window and weight group.
struct MacUnit {
    window: WindowBuffer,
    weights: FixedBuf,
    first_channel: usize,
    channels: usize,
}

pub(super) fn check_stream_preconditions(p: &LayerParams, cfg: &EngineConfig) -> Result<()> {
    if p.stride != 1 {
        return Err(Error::Precondition(format!("stream engine needs stride 1, got {}", p.stride)));
    }
    if p.kernel != 1 && p.kernel != 3 {
        return Err(Error::Precondition(format!("stream engine supports 1x1 and 3x3 kernels, got {}", p.kernel)));
    }
    if cfg.ci_min == 0 || p.c_in == 0 || !p.c_in.is_multiple_of(cfg.ci_min) {
        return Err(Error::Precondition(format!(
            "input channels {} not a multiple of MAC group width {}",
            p.c_in, cfg.ci_min
        )));
    }
    if p.c_out == 0 || !p.c_out.is_multiple_of(cfg.units()) {
        return Err(Error::Precondition(format!(
            "output channels {} not divisible across {} units",
            p.c_out,
            cfg.units()
        )));
    }
    Ok(())
}

/// Accumulates one output channel over the window, CI_min lanes at a time:
/// channel blocks innermost, then kernel columns, then kernel rows.
#[inline]
fn reduce_window(window: &WindowBuffer, kernel: &[i32], k: usize, c_in: usize, ci_min: usize, ops: &mut u64) -> i64 {
    let mut acc = 0i64;
    for kh in 0..k {
        for kw in 0..k {
            let act = window.tap(kh, kw);
            let wts = &kernel[(kh * k + kw) * c_in..][..c_in];
            for (a, w) in act.chunks_exact(ci_min).zip(wts.chunks_exact(ci_min)) {
                acc += dot_raw(a, w);
                *ops += 1;
            }
        }
    }
    acc
}

/// Stride-1 line-buffered convolution with fused bias, optional ReLU and
/// requantization to the input activation format.
///
/// Reads exactly `y_in * x_in` pixels from `input` and writes
/// `y_out * x_out` pixels of `c_out` channels to `output`. Padding is
/// generated inside the engine and never read from the stream.
pub fn conv_stream(
    p: &LayerParams,
    params: &ConvParams,
    input: &mut dyn PixelSource,
    output: &mut dyn PixelSink,
    cfg: &EngineConfig,
) -> Result<ConvStats> {
    check_stream_preconditions(p, cfg)?;
    params.check(p)?;
    if input.channels() != p.c_in {
        return Err(Error::LengthMismatch { expected: p.c_in, got: input.channels() });
    }
    let (y_out, x_out) = output_dims(p)?;
    let act_fmt = input.format();
    let rq = Requantizer::new(
        act_fmt.frac_bits() + params.weights.fmt.frac_bits(),
        params.bias.fmt,
        act_fmt,
        p.fused_relu,
    )?;

    let groups = split_weights(&params.weights, p.c_out, cfg.parallelism)?;
    let per_unit = p.c_out / groups.len();
    let mut units: Vec<MacUnit> = groups
        .into_iter()
        .enumerate()
        .map(|(g, weights)| MacUnit {
            window: WindowBuffer::new(p.kernel, p.c_in),
            weights,
            first_channel: g * per_unit,
            channels: per_unit,
        })
        .collect();

    let mut run = StreamRun {
        p: *p,
        input,
        pixel: vec![0; p.c_in],
        expected: p.y_in * p.x_in,
        stats: ConvStats::default(),
    };
    let mut out_px = vec![0i32; p.c_out];
    let kernel_len = p.kernel * p.kernel * p.c_in;
    let bias = &params.bias.raw;

    let compute = |units: &mut [MacUnit], out_px: &mut [i32], stats: &mut ConvStats| {
        for unit in units.iter() {
            for j in 0..unit.channels {
                let co = unit.first_channel + j;
                let kernel = &unit.weights.raw[j * kernel_len..][..kernel_len];
                let acc = reduce_window(&unit.window, kernel, p.kernel, p.c_in, cfg.ci_min, &mut stats.mac_group_ops);
                out_px[co] = rq.apply(acc, bias[co]);
            }
        }
    };

    if p.kernel == 1 {
        // single-pixel path: no line or window buffering
        for r in 0..p.y_in + 2 * p.pad {
            for c in 0..p.x_in + 2 * p.pad {
                let col = run.fetch_pixel(r, c)?;
                for unit in units.iter_mut() {
                    unit.window.shift_column(col)?;
                }
                compute(&mut units, &mut out_px, &mut run.stats);
                output.write_pixel(&out_px)?;
                run.stats.pixels_written += 1;
            }
        }
        return Ok(run.stats);
    }

    let k = p.kernel;
    let mut itb = LineBufferSet::new(k, p.x_in, p.c_in);
    let mut column = vec![0i32; k * p.c_in];

    // prime the top K-1 rows
    for r in 0..k - 1 {
        itb.shift();
        for c in 0..p.x_in + 2 * p.pad {
            run.feed(&mut itb, r, c)?;
        }
    }

    for yo in 0..y_out {
        let new_row = yo + k - 1;
        itb.shift();
        for c in 0..k - 1 {
            run.feed(&mut itb, new_row, c)?;
            run.load_column(&itb, c, &mut column)?;
            for unit in units.iter_mut() {
                unit.window.shift_column(&column)?;
            }
        }
        for xo in 0..x_out {
            let c = xo + k - 1;
            run.feed(&mut itb, new_row, c)?;
            run.load_column(&itb, c, &mut column)?;
            for unit in units.iter_mut() {
                unit.window.shift_column(&column)?;
            }
            compute(&mut units, &mut out_px, &mut run.stats);
            output.write_pixel(&out_px)?;
            run.stats.pixels_written += 1;
        }
    }

    run.stats.itb_line_writes = itb.line_writes().to_vec();
    Ok(run.stats)
}

/// Walks padded coordinates `(r, c)` and pulls real pixels from the stream.
struct StreamRun<'a> {
    p: LayerParams,
    input: &'a mut dyn PixelSource,
    pixel: Vec<i32>,
    expected: usize,
    stats: ConvStats,
}

impl StreamRun<'_> {
    fn real_row(&self, r: usize) -> bool {
        r >= self.p.pad && r < self.p.pad + self.p.y_in
    }

    fn real_col(&self, c: usize) -> bool {
        c >= self.p.pad && c < self.p.pad + self.p.x_in
    }

    fn pull(&mut self) -> Result<()> {
        if !self.input.read_pixel(&mut self.pixel)? {
            return Err(Error::StreamUnderrun { expected: self.expected, got: self.stats.pixels_read as usize });
        }
        self.stats.pixels_read += 1;
        Ok(())
    }

    /// Pixel at padded position `(r, c)`; zeros for padding.
    fn fetch_pixel(&mut self, r: usize, c: usize) -> Result<&[i32]> {
        if self.real_row(r) && self.real_col(c) {
            self.pull()?;
        } else {
            self.pixel.fill(0);
        }
        Ok(&self.pixel)
    }

    /// Stores padded column `c` of padded row `r` into the write-target line.
    /// Padding columns are not stored; padding rows are stored as zeros.
    fn feed(&mut self, itb: &mut LineBufferSet, r: usize, c: usize) -> Result<()> {
        if !self.real_col(c) {
            return Ok(());
        }
        let x = c - self.p.pad;
        if self.real_row(r) {
            self.pull()?;
            itb.write_pixel(x, &self.pixel)?;
            self.stats.itb_pixel_writes += 1;
        } else {
            itb.write_zero_pixel(x)?;
            self.stats.itb_padding_writes += 1;
        }
        Ok(())
    }

    fn load_column(&mut self, itb: &LineBufferSet, c: usize, out: &mut [i32]) -> Result<()> {
        self.stats.window_column_loads += 1;
        if self.real_col(c) {
            itb.read_column(c - self.p.pad, out)
        } else {
            out.fill(0);
            Ok(())
        }
    }
}

/// Runs [`conv_stream`] over an in-memory fixed-point tensor.
pub fn conv_stream_tensor(
    p: &LayerParams,
    params: &ConvParams,
    input: &FmapTensor,
    cfg: &EngineConfig,
) -> Result<(FmapTensor, ConvStats)> {
    if input.dims() != p.input_dims() {
        return Err(Error::Geometry(format!("input is {}, layer expects {}", input.dims(), p.input_dims())));
    }
    let mut src = TensorSource::new(input)?;
    let mut sink = TensorSink::new(p.output_dims()?, src.format());
    let stats = conv_stream(p, params, &mut src, &mut sink, cfg)?;
    debug_assert_eq!(src.reads(), stats.pixels_read);
    Ok((sink.into_tensor()?, stats))
}
