use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use warpfda::simulate::{run_pair, SimSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_warpfda"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Pair {
    dir: tempfile::TempDir,
    ds1: PathBuf,
    ds2: PathBuf,
}

fn pair(n: usize, seed: u64) -> Pair {
    let dir = tempfile::tempdir().unwrap();
    let spec = SimSpec {
        n1: n,
        n2: n,
        seed,
        ..SimSpec::default()
    };
    let (a, b) = run_pair(&spec, 0).unwrap();
    let ds1 = dir.path().join("first.csv");
    let ds2 = dir.path().join("second.csv");
    a.write_csv(File::create(&ds1).unwrap()).unwrap();
    b.write_csv(File::create(&ds2).unwrap()).unwrap();
    Pair { dir, ds1, ds2 }
}

const FAST_REG: &[&str] = &["--knots", "8", "--rounds", "2", "--steps", "5", "--sweeps", "1"];

#[test]
fn summarize_prints_table() {
    let p = pair(40, 1);
    let out = run(&["summarize", "--input", s(&p.ds1)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("size                40"));
    let out = run(&["summarize", "--input", s(&p.ds1), "--json"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["size"], 40);
}

#[test]
fn register_then_estimate() {
    let p = pair(80, 2);
    let warp = p.dir.path().join("warp.json");
    let curve = p.dir.path().join("curve.csv");
    let mut args = vec!["register", "--ds1", s(&p.ds1), "--ds2", s(&p.ds2), "--out", s(&warp)];
    args.extend_from_slice(FAST_REG);
    assert!(run(&args).status.success());
    let w = warpfda::PiecewiseLinearWarp::load(&warp).unwrap();
    assert_eq!(w.knots().len(), 8);

    let out = run(&[
        "estimate", "--ds1", s(&p.ds1), "--ds2", s(&p.ds2), "--warp", s(&warp), "--hn", "5", "--grid", "32",
        "--out", s(&curve),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&curve).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,estimate,mass,flag"));
    assert_eq!(lines.count(), 32);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.dir.path().join("curve.csv.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "estimate");
    assert_eq!(manifest["inputs"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn first_only_estimate_without_second_dataset() {
    let p = pair(60, 3);
    let curve = p.dir.path().join("curve.csv");
    let out = run(&["estimate", "--ds1", s(&p.ds1), "--grid", "16", "--out", s(&curve)]);
    assert!(out.status.success());
    assert_eq!(fs::read_to_string(&curve).unwrap().lines().count(), 17);
}

#[test]
fn estimate_needs_a_warp_source_with_second_dataset() {
    let p = pair(30, 4);
    let curve = p.dir.path().join("curve.csv");
    let out = run(&["estimate", "--ds1", s(&p.ds1), "--ds2", s(&p.ds2), "--out", s(&curve)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!curve.exists());
}

#[test]
fn unknown_flag_is_a_usage_error_and_writes_nothing() {
    let p = pair(30, 5);
    let warp = p.dir.path().join("warp.json");
    let out = run(&["register", "--ds1", s(&p.ds1), "--ds2", s(&p.ds2), "--out", s(&warp), "--frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!warp.exists());
    assert_eq!(fs::read_dir(p.dir.path()).unwrap().count(), 2);
}

#[test]
fn randomized_commands_require_seed() {
    let p = pair(30, 6);
    let band = p.dir.path().join("band.csv");
    let out = run(&["bootstrap", "--ds1", s(&p.ds1), "--ds2", s(&p.ds2), "--auto", "--out", s(&band)]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["simulate", "--runs", "2", "--out", s(&band)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!band.exists());
}

#[test]
fn missing_input_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["summarize", "--input", s(&dir.path().join("absent.csv"))]);
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "UsageError");
}

#[test]
fn computation_error_exits_one_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("dup.csv");
    fs::write(&ds, "t,y\n1,2\n1,3\n2,4\n").unwrap();
    let out = run(&["summarize", "--input", s(&ds)]);
    assert_eq!(out.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(v["error"], "DuplicateTime");
    let out = run(&["summarize", "--input", s(&ds), "--ties", "jitter"]);
    assert!(out.status.success());
}

#[test]
fn config_file_supplies_flags_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out_json = dir.path().join("sym.json");
    fs::write(&cfg, format!("t0 = 0.4\nr = 1.2\nterms = 20\nout = {}\n", s(&out_json))).unwrap();
    let out = run(&["symmetry", "--config", s(&cfg), "--t0", "0.25"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&out_json).unwrap()).unwrap();
    assert_eq!(v["report"]["t0"], 0.25);
    assert_eq!(v["report"]["r"], 1.2);
    assert_eq!(v["sequence"]["t"].as_array().unwrap().len(), 20);
    fs::write(&cfg, "bogus = 3\n").unwrap();
    let out = run(&["symmetry", "--config", s(&cfg), "--t0", "0.25", "--r", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn symmetry_reports_roots() {
    let out = run(&["symmetry", "--t0", "0.25", "--r", "1.2"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("symmetric pair exists      false"));
    assert!(text.contains("root 1                     1.0000000000000000e0 (feasible)"));
    assert!(text.contains("root 2                     3.0000000000000000e0 (infeasible)"));
}

#[test]
fn asymptotics_example() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("model.cfg");
    let json = dir.path().join("mse.json");
    fs::write(&model, "f1 = uniform\nmean = 0, 0, 1\nsigma1 = 0.1\nxi = 1\n").unwrap();
    let out = run(&[
        "asymptotics", "--model", s(&model), "--t", "0.5", "--n", "1000", "--h", "0.1", "--out", s(&json),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    let var = v["mse"]["variance"].as_f64().unwrap();
    let bias = v["mse"]["bias_sq"].as_f64().unwrap();
    assert!((var - 2.8209479177387815e-5).abs() < 1e-15);
    assert!((bias - 1e-4).abs() < 1e-16);
}

#[test]
fn cv_report_has_both_values() {
    let p = pair(60, 7);
    let report = p.dir.path().join("cv.json");
    let mut args = vec!["cv", "--ds1", s(&p.ds1), "--ds2", s(&p.ds2), "--hn", "6", "--out", s(&report)];
    args.extend_from_slice(FAST_REG);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(v["cv_first_only"].as_f64().unwrap() >= 0.0);
    assert!(v["cv_pooled"].as_f64().unwrap() >= 0.0);
    assert_eq!(v["mode"], "fast");
    assert_eq!(v["deletions"], 120);
}

#[test]
fn inputs_are_not_modified() {
    let p = pair(50, 8);
    let before = fs::read(&p.ds1).unwrap();
    let warp = p.dir.path().join("warp.json");
    let mut args = vec!["register", "--ds1", s(&p.ds1), "--ds2", s(&p.ds2), "--out", s(&warp)];
    args.extend_from_slice(FAST_REG);
    assert!(run(&args).status.success());
    assert_eq!(fs::read(&p.ds1).unwrap(), before);
}

fn outputs_for(threads: &str, dir: &Path, p: &Pair) -> Vec<Vec<u8>> {
    let band = dir.join(format!("band{threads}.csv"));
    let sim = dir.join(format!("sim{threads}.csv"));
    let mut args = vec![
        "--threads", threads, "bootstrap", "--ds1", s(&p.ds1), "--ds2", s(&p.ds2), "--auto", "--B", "6", "--seed",
        "11", "--hn", "8", "--grid", "24", "--out", s(&band),
    ];
    args.extend_from_slice(FAST_REG);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let mut args = vec![
        "simulate", "--threads", threads, "--runs", "4", "--n1", "40", "--n2", "40", "--seed", "5", "--frozen-hn",
        "8", "--out", s(&sim),
    ];
    args.extend_from_slice(FAST_REG);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let read = |p: &Path| fs::read(p).unwrap();
    let man = |p: &Path| {
        let text = fs::read_to_string(warpfda_manifest(p)).unwrap();
        text.replace(s(p), "OUT").into_bytes()
    };
    vec![read(&band), man(&band), read(&sim), man(&sim)]
}

fn warpfda_manifest(p: &Path) -> PathBuf {
    let mut name = p.file_name().unwrap().to_os_string();
    name.push(".manifest.json");
    p.with_file_name(name)
}

#[test]
fn randomized_outputs_ignore_thread_count() {
    let p = pair(50, 9);
    let dir = p.dir.path().to_path_buf();
    let one = outputs_for("1", &dir, &p);
    let three = outputs_for("3", &dir, &p);
    assert_eq!(one, three);
}
