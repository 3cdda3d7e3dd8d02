use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use serde_json::Value;
use squeezejet::net::{load_model, write_model, LayerNode};

fn sqj(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sqj")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json_lines(o: &Output) -> Vec<Value> {
    stdout(o).lines().map(|l| serde_json::from_str(l).unwrap_or_else(|e| panic!("{l}: {e}"))).collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A synthetic float model, its quantized form and one input, built once.
struct Fixture {
    dir: PathBuf,
}

impl Fixture {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        let f = Fixture { dir };
        let o = sqj(&["synth", "--model-out", s(&f.path("float.sqjm")), "--input-out", s(&f.path("x.sqjt")), "--seed", "7"]);
        assert!(o.status.success(), "{}", stderr(&o));
        let o = sqj(&["quantize", "--in", s(&f.path("float.sqjm")), "--out", s(&f.path("q.sqjm"))]);
        assert!(o.status.success(), "{}", stderr(&o));
        f
    })
}

#[test]
fn quantize_reports_and_is_idempotent() {
    let f = fixture();
    let o = sqj(&["--json", "quantize", "--in", s(&f.path("float.sqjm")), "--out", s(&f.path("q1.sqjm"))]);
    assert_eq!(o.status.code(), Some(0));
    let lines = json_lines(&o);
    let sats: Vec<_> = lines.iter().filter(|v| v["record"] == "saturation").collect();
    assert_eq!(sats.len(), 26);
    let written = lines.iter().find(|v| v["record"] == "written").unwrap();
    assert_eq!(written["wfmt"], "8:7");
    assert_eq!(written["afmt"], "16:3");

    let o = sqj(&["quantize", "--in", s(&f.path("q1.sqjm")), "--out", s(&f.path("q2.sqjm"))]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(std::fs::read(f.path("q1.sqjm")).unwrap(), std::fs::read(f.path("q2.sqjm")).unwrap());
}

#[test]
fn quantize_errors() {
    let f = fixture();
    let o = sqj(&["quantize", "--in", "/nonexistent/model.sqjm", "--out", s(&f.path("never.sqjm"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("/nonexistent/model.sqjm"));
    let o = sqj(&["quantize", "--in", s(&f.path("x.sqjt")), "--out", s(&f.path("never.sqjm"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("magic"), "{}", stderr(&o));
    let o = sqj(&["quantize", "--in", s(&f.path("float.sqjm")), "--out", s(&f.path("never.sqjm")), "--wfmt", "8:9"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(sqj(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(sqj(&["infer", "--model", "m"]).status.code(), Some(1));
    assert_eq!(sqj(&["perf", "--units", "6"]).status.code(), Some(1));
    assert_eq!(sqj(&["--help"]).status.code(), Some(0));
}

#[test]
fn infer_parallel_settings_agree_and_compare_exact() {
    let f = fixture();
    let mut outs = Vec::new();
    for n in 0..=3 {
        let out = f.path(&format!("y{n}.sqjt"));
        let o = sqj(&[
            "infer", "--model", s(&f.path("q.sqjm")), "--input", s(&f.path("x.sqjt")), "--out", s(&out),
            "--parallel", &n.to_string(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        outs.push(out);
    }
    for out in &outs[1..] {
        assert_eq!(std::fs::read(&outs[0]).unwrap(), std::fs::read(out).unwrap());
        let o = sqj(&["compare", "--a", s(&outs[0]), "--b", s(out)]);
        assert_eq!(o.status.code(), Some(0));
        assert!(stdout(&o).contains("bit-exact"));
    }
}

#[test]
fn infer_float_ref_and_dumps() {
    let f = fixture();
    let dump = f.path("dump");
    let o = sqj(&[
        "--json", "infer", "--model", s(&f.path("q.sqjm")), "--input", s(&f.path("x.sqjt")), "--out",
        s(&f.path("yf.sqjt")), "--float-ref", "--dump-fmaps", s(&dump),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lines = json_lines(&o);
    assert_eq!(lines.iter().filter(|v| v["record"] == "conv").count(), 26);
    for v in lines.iter().filter(|v| v["record"] == "conv") {
        assert!(v["pixels_read"].as_u64().unwrap() > 0);
    }
    let fr = lines.iter().find(|v| v["record"] == "float_ref").unwrap();
    assert!(fr["top1_agree"].is_boolean());
    assert!(fr["max_abs_prob_diff"].as_f64().unwrap() >= 0.0);

    let mut names: Vec<String> =
        std::fs::read_dir(&dump).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names.len(), 32);
    assert_eq!(names[0], "00_conv_l0.sqjt");

    // fixed and real pipelines differ; tensors of different dims are an error
    let o = sqj(&["compare", "--a", s(&dump.join("15_softmax.sqjt")), "--b", s(&dump.join("float_15_softmax.sqjt"))]);
    assert_eq!(o.status.code(), Some(3));
    let o = sqj(&["compare", "--a", s(&dump.join("00_conv_l0.sqjt")), "--b", s(&dump.join("01_maxpool.sqjt"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("dims differ"));
}

#[test]
fn infer_rejects_float_model_and_bad_input() {
    let f = fixture();
    let o = sqj(&["infer", "--model", s(&f.path("float.sqjm")), "--input", s(&f.path("x.sqjt")), "--out", s(&f.path("z.sqjt"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("quantize"));
    let o = sqj(&["infer", "--model", s(&f.path("q.sqjm")), "--input", s(&f.path("missing.sqjt")), "--out", s(&f.path("z.sqjt"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shapes_builtin_and_corrupted() {
    let o = sqj(&["shapes"]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("113x113x64"));
    assert!(text.contains("softmax      -> vector[1000]"));
    assert!(text.contains("775495040"));

    let o = sqj(&["--json", "shapes"]);
    let lines = json_lines(&o);
    let outs: Vec<&str> = lines.iter().filter(|v| v["record"] == "shape").map(|v| v["out"].as_str().unwrap()).collect();
    // the 1x1 classifier keeps the 14x14 extent
    let conv10 = outs.iter().position(|&o| o == "14x14x1000 fixed").unwrap();
    assert_eq!(outs[conv10 - 1], "14x14x512 fixed");

    let f = fixture();
    let mut m = load_model(f.path("q.sqjm")).unwrap();
    if let LayerNode::Conv { params, .. } = &mut m.net.layers[12] {
        params.y_in = 13;
        params.x_in = 13;
    }
    let mut bytes = Vec::new();
    write_model(&m, &mut bytes).unwrap();
    let bad = f.path("broken.sqjm");
    std::fs::write(&bad, bytes).unwrap();
    let o = sqj(&["shapes", "--model", s(&bad)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("layer 12"), "{}", stderr(&o));
}

fn perf_total(units: usize) -> u64 {
    let o = sqj(&["--json", "perf", "--units", &units.to_string(), "--per-pixel-overhead", "3"]);
    assert_eq!(o.status.code(), Some(0));
    json_lines(&o).iter().find(|v| v["record"] == "total").unwrap()["cycles"].as_u64().unwrap()
}

#[test]
fn perf_report() {
    let f = fixture();
    let o = sqj(&["--json", "perf", "--model", s(&f.path("q.sqjm"))]);
    assert_eq!(o.status.code(), Some(0));
    let lines = json_lines(&o);
    let layers: Vec<_> = lines.iter().filter(|v| v["record"] == "layer").collect();
    assert_eq!(layers.len(), 26);
    for l in &layers {
        assert!(l["cycles"].as_u64() >= l["ideal_cycles"].as_u64());
        let (k, c) = (l["kernel"].as_u64().unwrap(), l["input"].as_str().unwrap());
        let dims: Vec<u64> = c.split('x').map(|d| d.parse().unwrap()).collect();
        assert_eq!(l["itb_bits"].as_u64().unwrap(), k * dims[1] * dims[2] * 16);
    }
    let reference = lines.iter().find(|v| v["record"] == "reference").unwrap();
    assert_eq!(reference["ms"], 175.0);
    assert_eq!(reference["gops"], 4.43);

    let mut prev = u64::MAX;
    for u in [1, 2, 4, 8, 16] {
        let t = perf_total(u);
        assert!(t <= prev, "units {u}: {t} > {prev}");
        prev = t;
    }

    let text = stdout(&sqj(&["perf"]));
    assert!(text.contains("ideal"));
    assert!(text.contains("175 ms, 4.43 GOPs"));
}
