use super::{
    output_dims, ConvParams, ConvStats, EngineConfig, LayerParams, LineBufferSet, PixelSink, PixelSource, TensorSink,
    TensorSource, WindowBuffer,
};
use crate::error::{Error, Result};
use crate::fxp::{dot_raw, Requantizer};
use crate::tensor::FmapTensor;

/// First-layer engine: any stride, any kernel size, any channel count.
///
/// Input channels are zero-padded up to a multiple of `cfg.ci_min` so the
/// same MAC-group datapath is used; the padded lanes contribute exact zeros.
/// Rows are buffered whole and the line-buffer set advances `stride` rows
/// per output row. `cfg.parallelism` is ignored.
pub fn conv_l0(
    p: &LayerParams,
    params: &ConvParams,
    input: &mut dyn PixelSource,
    output: &mut dyn PixelSink,
    cfg: &EngineConfig,
) -> Result<ConvStats> {
    if cfg.ci_min == 0 || p.c_in == 0 || p.c_out == 0 {
        return Err(Error::Precondition("channel counts and MAC group width must be positive".into()));
    }
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

    let k = p.kernel;
    let s = p.stride;
    let lanes = p.c_in.div_ceil(cfg.ci_min) * cfg.ci_min;

    // W(c_o, k_h, k_w, c_i) with c_i padded to `lanes`
    let mut weights = vec![0i32; p.c_out * k * k * lanes];
    for (dst, src) in weights.chunks_exact_mut(lanes).zip(params.weights.raw.chunks_exact(p.c_in)) {
        dst[..p.c_in].copy_from_slice(src);
    }

    let mut stats = ConvStats::default();
    let mut itb = LineBufferSet::new(k, p.x_in, lanes);
    let mut window = WindowBuffer::new(k, lanes);
    let mut pixel = vec![0i32; p.c_in];
    let mut padded = vec![0i32; lanes];
    let mut column = vec![0i32; k * lanes];
    let mut out_px = vec![0i32; p.c_out];
    let kernel_len = k * k * lanes;
    let expected = p.y_in * p.x_in;

    let mut load_row = |itb: &mut LineBufferSet, r: usize, stats: &mut ConvStats| -> Result<()> {
        itb.shift();
        let real = r >= p.pad && r < p.pad + p.y_in;
        for x in 0..p.x_in {
            if real {
                if !input.read_pixel(&mut pixel)? {
                    return Err(Error::StreamUnderrun { expected, got: stats.pixels_read as usize });
                }
                stats.pixels_read += 1;
                padded[..p.c_in].copy_from_slice(&pixel);
                itb.write_pixel(x, &padded)?;
                stats.itb_pixel_writes += 1;
            } else {
                itb.write_zero_pixel(x)?;
                stats.itb_padding_writes += 1;
            }
        }
        Ok(())
    };

    let mut next_row = 0;
    for yo in 0..y_out {
        // rows yo*s .. yo*s + k - 1 must be the last k loaded; rows skipped
        // by a stride wider than the kernel still stream through
        let last = yo * s + k;
        for r in next_row..last {
            load_row(&mut itb, r, &mut stats)?;
        }
        next_row = last;

        let mut next_col = 0;
        for xo in 0..x_out {
            let end = xo * s + k;
            for c in next_col.max(end.saturating_sub(k))..end {
                if c >= p.pad && c < p.pad + p.x_in {
                    itb.read_column(c - p.pad, &mut column)?;
                } else {
                    column.fill(0);
                }
                window.shift_column(&column)?;
                stats.window_column_loads += 1;
            }
            next_col = end;

            for (co, out) in out_px.iter_mut().enumerate() {
                let kernel = &weights[co * kernel_len..][..kernel_len];
                let mut acc = 0i64;
                for kh in 0..k {
                    for kw in 0..k {
                        let act = window.tap(kh, kw);
                        let wts = &kernel[(kh * k + kw) * lanes..][..lanes];
                        for (a, w) in act.chunks_exact(cfg.ci_min).zip(wts.chunks_exact(cfg.ci_min)) {
                            acc += dot_raw(a, w);
                            stats.mac_group_ops += 1;
                        }
                    }
                }
                *out = rq.apply(acc, params.bias.raw[co]);
            }
            output.write_pixel(&out_px)?;
            stats.pixels_written += 1;
        }
    }

    stats.itb_line_writes = itb.line_writes().to_vec();
    Ok(stats)
}

/// Runs [`conv_l0`] over an in-memory fixed-point tensor.
pub fn conv_l0_tensor(
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
    let stats = conv_l0(p, params, &mut src, &mut sink, cfg)?;
    Ok((sink.into_tensor()?, stats))
}
