use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use squeezejet::accel::EngineConfig;
use squeezejet::net::{
    load_model_file, load_tensor, run_inference_float_traced, run_inference_traced, save_float_model, save_model,
    save_tensor, squeezenet_v11, FloatModel, LayerNode, Model, ModelFile, NetworkSpec, StageOutput,
};
use squeezejet::perf::{network_report, HwConfig};
use squeezejet::quant::{quantize_model_report, FloatConvParams};
use squeezejet::{Dims, FixedFormat, FmapTensor, TensorData};

#[derive(Parser)]
#[command(name = "sqj", version, about = "Fixed-point SqueezeNet dataflow simulator")]
struct Cli {
    /// Emit one JSON object per output record instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Quantize a model's parameters.
    Quantize {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "8:7")]
        wfmt: FixedFormat,
        #[arg(long, default_value = "16:3")]
        afmt: FixedFormat,
    },
    /// Run fixed-point inference.
    Infer(InferArgs),
    /// Compare two tensor files; exits 0 only when they are bit-identical.
    Compare {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
    },
    /// Print the layer dimension chain (built-in SqueezeNet v1.1 without --model).
    Shapes {
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Analytic cycle and buffer report.
    Perf(PerfArgs),
    /// Write a random model and/or input tensor.
    Synth {
        #[arg(long)]
        model_out: Option<PathBuf>,
        #[arg(long)]
        input_out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write the input as 16-bit fixed point instead of f64.
        #[arg(long)]
        fixed_input: bool,
    },
}

#[derive(Args)]
struct InferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Also run the real-arithmetic reference and report agreement.
    #[arg(long)]
    float_ref: bool,
    /// Real-valued model for the reference; defaults to the dequantized model.
    #[arg(long, requires = "float_ref")]
    float_model: Option<PathBuf>,
    /// Weight-group splitting: 2^n parallel MAC groups.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(0..=8))]
    parallel: u32,
    #[arg(long)]
    dump_fmaps: Option<PathBuf>,
}

#[derive(Args)]
struct PerfArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = 8)]
    units: usize,
    #[arg(long, default_value_t = 16)]
    ci_min: usize,
    /// Clock in MHz.
    #[arg(long, default_value_t = 100.0)]
    clock: f64,
    #[arg(long, default_value_t = 0)]
    pipeline_fill: u64,
    #[arg(long, default_value_t = 0)]
    row_overhead: u64,
    #[arg(long, default_value_t = 0)]
    per_pixel_overhead: u64,
    #[arg(long)]
    bram_bits: Option<u64>,
}

enum Failure {
    Usage(String),
    Io(String),
    Mismatch(String),
}

impl From<squeezejet::Error> for Failure {
    fn from(e: squeezejet::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

type CmdResult = Result<(), Failure>;

fn io_err(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::Io(format!("{}: {e}", path.display()))
}

struct Out {
    json: bool,
}

/// Prints a line; a closed stdout (e.g. piped into `head`) ends the process quietly.
fn say(line: impl std::fmt::Display) {
    let mut stdout = std::io::stdout().lock();
    if let Err(e) = writeln!(stdout, "{line}") {
        if e.kind() == std::io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("sqj: stdout: {e}");
        std::process::exit(2);
    }
}

impl Out {
    fn emit(&self, text: impl FnOnce() -> String, value: serde_json::Value) {
        if self.json {
            say(value);
        } else {
            say(text());
        }
    }
}

fn load_fixed(path: &Path) -> Result<Model, Failure> {
    match load_model_file(path).map_err(|e| io_err(path, e))? {
        ModelFile::Fixed(m) => Ok(m),
        ModelFile::Float(_) => {
            Err(Failure::Io(format!("{}: model has real-valued parameters; run `sqj quantize` first", path.display())))
        }
    }
}

fn quantize(out: &Out, input: &Path, dest: &Path, wfmt: FixedFormat, afmt: FixedFormat) -> CmdResult {
    let float = match load_model_file(input).map_err(|e| io_err(input, e))? {
        ModelFile::Float(m) => m,
        ModelFile::Fixed(m) => FloatModel::from_model(&m),
    };
    let (model, sats) = quantize_model_report(&float, wfmt, afmt)?;
    for (slot, (layer, sat)) in model.net.conv_layers().iter().zip(&sats).enumerate() {
        let total = layer.weight_count() + layer.c_out;
        out.emit(
            || format!("slot {slot:>2} {:>13} -> {:>4}: {sat} of {total} values saturated", layer.input_dims().to_string(), layer.c_out),
            json!({"record": "saturation", "slot": slot, "saturated": sat, "values": total}),
        );
    }
    save_model(&model, dest).map_err(|e| io_err(dest, e))?;
    out.emit(
        || format!("wrote {} (weights {wfmt}, activations {afmt})", dest.display()),
        json!({"record": "written", "path": dest.display().to_string(), "wfmt": wfmt.to_string(), "afmt": afmt.to_string()}),
    );
    Ok(())
}

fn stage_tensor(v: &StageOutput) -> FmapTensor {
    match v {
        StageOutput::Fmap(t) => t.clone(),
        StageOutput::Vector(v) => FmapTensor::new_real(Dims::new(1, 1, v.len()), v.clone()).expect("length matches"),
    }
}

fn top_k(v: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[b].total_cmp(&v[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

fn infer(out: &Out, a: &InferArgs) -> CmdResult {
    let model = load_fixed(&a.model)?;
    let input = load_tensor(&a.input).map_err(|e| io_err(&a.input, e))?;
    if let Some(dir) = &a.dump_fmaps {
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    let mut dump_err = None;
    let mut dump = |prefix: &str, i: usize, node: &LayerNode, v: &StageOutput| {
        if let (Some(dir), None) = (&a.dump_fmaps, &dump_err) {
            let path = dir.join(format!("{prefix}{i:02}_{}.sqjt", node.name()));
            if let Err(e) = save_tensor(&stage_tensor(v), &path) {
                dump_err = Some(io_err(&path, e));
            }
        }
    };

    let cfg = EngineConfig::with_parallelism(a.parallel);
    let run = run_inference_traced(&model, &input, &cfg, &mut |i, n, v| dump("", i, n, v))?;
    let probs = run.probs;
    let top5 = top_k(&probs, 5);
    let result = FmapTensor::new_real(Dims::new(1, 1, probs.len()), probs.clone())?;
    save_tensor(&result, &a.out).map_err(|e| io_err(&a.out, e))?;
    for r in &run.convs {
        let s = &r.stats;
        out.emit(
            || {
                format!(
                    "conv slot {:>2} (node {:>2}): read {} pixels, wrote {}, itb writes {}",
                    r.slot,
                    r.layer,
                    s.pixels_read,
                    s.pixels_written,
                    s.itb_pixel_writes + s.itb_padding_writes
                )
            },
            json!({"record": "conv", "slot": r.slot, "node": r.layer, "pixels_read": s.pixels_read,
                   "pixels_written": s.pixels_written, "itb_pixel_writes": s.itb_pixel_writes,
                   "itb_padding_writes": s.itb_padding_writes, "mac_group_ops": s.mac_group_ops}),
        );
    }
    out.emit(
        || format!("top-5: {top5:?} (p = {:.6})", probs[top5[0]]),
        json!({"record": "result", "engine": "fixed", "top5": top5, "top1_prob": probs[top5[0]],
               "out": a.out.display().to_string(), "parallel": a.parallel}),
    );

    if a.float_ref {
        let float = match &a.float_model {
            Some(p) => match load_model_file(p).map_err(|e| io_err(p, e))? {
                ModelFile::Float(m) => m,
                ModelFile::Fixed(m) => FloatModel::from_model(&m),
            },
            None => FloatModel::from_model(&model),
        };
        let real_input = if input.is_fixed() { squeezejet::layers::fixed2float(&input)? } else { input.clone() };
        let fprobs = run_inference_float_traced(&float, &real_input, &mut |i, n, v| dump("float_", i, n, v))?;
        let ftop5 = top_k(&fprobs, 5);
        let max_diff = probs.iter().zip(&fprobs).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        let top1_agree = top5[0] == ftop5[0];
        let in_top5 = top5.contains(&ftop5[0]);
        out.emit(
            || {
                format!(
                    "float reference top-5: {ftop5:?}; top-1 agreement: {}; float top-1 in fixed top-5: {}; max |dp| = {max_diff:.3e}",
                    if top1_agree { "yes" } else { "no" },
                    if in_top5 { "yes" } else { "no" }
                )
            },
            json!({"record": "float_ref", "top5": ftop5, "top1_agree": top1_agree,
                   "float_top1_in_fixed_top5": in_top5, "max_abs_prob_diff": max_diff}),
        );
    }
    match dump_err {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn compare(out: &Out, a: &Path, b: &Path) -> CmdResult {
    let ta = load_tensor(a).map_err(|e| io_err(a, e))?;
    let tb = load_tensor(b).map_err(|e| io_err(b, e))?;
    if ta.dims() != tb.dims() {
        return Err(Failure::Io(format!("dims differ: {} vs {}", ta.dims(), tb.dims())));
    }
    let (va, vb) = (ta.to_real_vec(), tb.to_real_vec());
    let diffs: Vec<f64> = va.iter().zip(&vb).map(|(x, y)| (x - y).abs()).collect();
    let max = diffs.iter().copied().fold(0.0, f64::max);
    let mean = if diffs.is_empty() { 0.0 } else { diffs.iter().sum::<f64>() / diffs.len() as f64 };
    let exact = match (ta.data(), tb.data()) {
        (TensorData::Fixed { fmt: fa, raw: ra }, TensorData::Fixed { fmt: fb, raw: rb }) => fa == fb && ra == rb,
        (TensorData::Real(x), TensorData::Real(y)) => x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits()),
        _ => false,
    };
    out.emit(
        || format!("max |diff| = {max:.6e}, mean |diff| = {mean:.6e}, {}", if exact { "bit-exact" } else { "NOT bit-exact" }),
        json!({"record": "compare", "dims": ta.dims().to_string(), "max_abs_diff": max, "mean_abs_diff": mean, "bit_exact": exact}),
    );
    if exact {
        Ok(())
    } else {
        Err(Failure::Mismatch("tensors differ".into()))
    }
}

fn shapes(out: &Out, model: Option<&Path>) -> CmdResult {
    let net: NetworkSpec = match model {
        None => squeezenet_v11(),
        Some(p) => match load_model_file(p) {
            Ok(ModelFile::Fixed(m)) => m.net,
            Ok(ModelFile::Float(m)) => m.net,
            Err(e @ squeezejet::Error::ShapeChain { .. }) => return Err(Failure::Mismatch(format!("{}: {e}", p.display()))),
            Err(e) => return Err(io_err(p, e)),
        },
    };
    let chain = net.validate().map_err(|e| Failure::Mismatch(e.to_string()))?;
    if let Some(first) = net.input_shape() {
        out.emit(|| format!("input {first}"), json!({"record": "shape", "layer": null, "name": "input", "out": first.to_string()}));
    }
    for (i, (node, shape)) in net.layers.iter().zip(&chain).enumerate() {
        out.emit(
            || format!("{i:>2} {:<12} -> {shape}", node.name()),
            json!({"record": "shape", "layer": i, "name": node.name(), "out": shape.to_string()}),
        );
    }
    let ops = net.conv_ops()?;
    out.emit(
        || format!("conv ops: {ops} ({:.4} GOPs, MAC = 2 ops)", ops as f64 / 1e9),
        json!({"record": "ops", "conv_ops": ops}),
    );
    Ok(())
}

fn perf(out: &Out, a: &PerfArgs) -> CmdResult {
    let (net, act_bits, w_bits) = match &a.model {
        None => (squeezenet_v11(), 16, 8),
        Some(p) => match load_model_file(p).map_err(|e| io_err(p, e))? {
            ModelFile::Fixed(m) => {
                let w = m.params.first().map_or(8, |c| c.weights.fmt.total_bits());
                (m.net, m.act_fmt.total_bits(), w)
            }
            ModelFile::Float(m) => (m.net, 16, 8),
        },
    };
    let cfg = HwConfig {
        ci_min: a.ci_min,
        units: a.units,
        clock_mhz: a.clock,
        pipeline_fill: a.pipeline_fill,
        row_overhead: a.row_overhead,
        per_pixel_overhead: a.per_pixel_overhead,
        bram_bits: a.bram_bits.unwrap_or(HwConfig::default().bram_bits),
    };
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;
    let r = network_report(&net, &cfg, act_bits, w_bits)?;
    if !out.json {
        say(r.to_string().trim_end());
        return Ok(());
    }
    for l in &r.layers {
        let f = &l.footprint;
        say(
            json!({"record": "layer", "slot": l.slot, "input": l.params.input_dims().to_string(), "c_out": l.params.c_out,
                   "kernel": l.params.kernel, "stride": l.params.stride, "macs": l.estimate.macs,
                   "cycles": l.estimate.cycles, "ideal_cycles": l.estimate.ideal_cycles,
                   "itb_bits": f.itb, "itwb_bits_per_unit": f.itwb_per_unit, "weight_bits": f.weights,
                   "weight_bits_per_unit": f.weights_per_unit, "bias_bits": f.bias, "out_pixel_bits": f.out_pixel,
                   "total_bits": f.total, "exceeds_bram": f.exceeds_bram})
        );
    }
    say(
        json!({"record": "total", "ops": r.ops(), "cycles": r.total_cycles, "ideal_cycles": r.ideal_cycles,
               "ms": r.total_ms, "ideal_ms": r.ideal_ms, "gops": r.gops})
    );
    say(
        json!({"record": "reference", "ms": squeezejet::perf::REFERENCE_LATENCY_MS, "gops": squeezejet::perf::REFERENCE_GOPS})
    );
    Ok(())
}

fn synth(out: &Out, model_out: Option<&Path>, input_out: Option<&Path>, seed: u64, fixed_input: bool) -> CmdResult {
    if model_out.is_none() && input_out.is_none() {
        return Err(Failure::Usage("nothing to do: pass --model-out and/or --input-out".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = squeezenet_v11();
    if let Some(path) = model_out {
        let params = net
            .conv_layers()
            .iter()
            .map(|l| {
                // uniform with variance 2 / fan_in
                let a = (6.0 / (l.kernel * l.kernel * l.c_in) as f64).sqrt();
                FloatConvParams {
                    weights: (0..l.weight_count()).map(|_| rng.gen_range(-a..a)).collect(),
                    bias: (0..l.c_out).map(|_| rng.gen_range(-0.1..0.1)).collect(),
                }
            })
            .collect();
        let m = FloatModel::new(net.clone(), params)?;
        save_float_model(&m, path).map_err(|e| io_err(path, e))?;
        out.emit(|| format!("wrote {}", path.display()), json!({"record": "written", "path": path.display().to_string()}));
    }
    if let Some(path) = input_out {
        let d = squeezejet::net::SQUEEZENET_INPUT;
        let real = FmapTensor::new_real(d, (0..d.len()).map(|_| rng.gen_range(-32.0..32.0)).collect())?;
        let t = if fixed_input { squeezejet::layers::float2fixed(&real, FixedFormat::ACTIVATION)? } else { real };
        save_tensor(&t, path).map_err(|e| io_err(path, e))?;
        out.emit(|| format!("wrote {}", path.display()), json!({"record": "written", "path": path.display().to_string()}));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let out = Out { json: cli.json };
    let res = match &cli.cmd {
        Cmd::Quantize { input, out: dest, wfmt, afmt } => quantize(&out, input, dest, *wfmt, *afmt),
        Cmd::Infer(a) => infer(&out, a),
        Cmd::Compare { a, b } => compare(&out, a, b),
        Cmd::Shapes { model } => shapes(&out, model.as_deref()),
        Cmd::Perf(a) => perf(&out, a),
        Cmd::Synth { model_out, input_out, seed, fixed_input } => {
            synth(&out, model_out.as_deref(), input_out.as_deref(), *seed, *fixed_input)
        }
    };
    let (code, kind, msg) = match res {
        Ok(()) => return ExitCode::SUCCESS,
        Err(Failure::Usage(m)) => (1, "usage", m),
        Err(Failure::Io(m)) => (2, "io", m),
        Err(Failure::Mismatch(m)) => (3, "mismatch", m),
    };
    if cli.json {
        say(json!({"record": "error", "kind": kind, "message": msg, "exit": code}));
    }
    eprintln!("sqj: {msg}");
    ExitCode::from(code)
}
