use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn trnn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trnn"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = trnn(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    trnn(dir, args).status.code().unwrap()
}

#[test]
fn generate_reports_shapes() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let s = ok(d, &["generate", "waterdrop", "--n", "10", "--grid", "8", "--seed", "1", "--out", "wd"]);
    assert!(s.contains("X (10, 4) Y (10, 8, 8, 2)"), "{s}");
    let s = ok(d, &["generate", "helicoid", "--n", "5", "--grid-i", "4", "--grid-j", "10", "--seed", "1", "--out", "h"]);
    assert!(s.contains("X (5, 4, 10) Y (5, 2, 4, 10)"), "{s}");
    assert!(d.join("h/meta").exists());
}

#[test]
fn generate_is_byte_identical_on_rerun() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    for out in ["a", "b"] {
        ok(d, &["generate", "waterdrop", "--n", "6", "--grid", "5", "--sigma", "0.1", "--seed", "4", "--out", out]);
    }
    for f in ["X.dtf", "Y.dtf", "meta"] {
        assert_eq!(fs::read(d.join("a").join(f)).unwrap(), fs::read(d.join("b").join(f)).unwrap(), "{f}");
    }
}

#[test]
fn zero_learning_rate_keeps_the_loss_constant() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "waterdrop", "--n", "8", "--grid", "5", "--seed", "2", "--out", "wd"]);
    ok(d, &["train", "--data", "wd", "--out", "m", "--seed", "3", "--epochs", "5", "--lr", "0"]);
    let report = fs::read_to_string(d.join("m/report.csv")).unwrap();
    let losses: Vec<&str> = report.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert!(losses.len() >= 2);
    assert!(losses.iter().all(|l| *l == losses[0]), "{report}");
}

#[test]
fn train_is_reproducible_and_eval_scores_it() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "waterdrop", "--n", "12", "--grid", "5", "--seed", "2", "--out", "wd"]);
    for out in ["m1", "m2"] {
        ok(d, &["train", "--data", "wd", "--out", out, "--seed", "3", "--epochs", "10"]);
    }
    for f in fs::read_dir(d.join("m1")).unwrap() {
        let name = f.unwrap().file_name();
        assert_eq!(
            fs::read(d.join("m1").join(&name)).unwrap(),
            fs::read(d.join("m2").join(&name)).unwrap(),
            "{name:?}"
        );
    }
    ok(d, &["eval", "--model", "m1", "--data", "wd", "--out", "e.csv"]);
    let csv = fs::read_to_string(d.join("e.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "method,generator,N,sigma,rep,seed,rmse,train_seconds");
    assert!(lines.next().unwrap().starts_with("trnn,waterdrop,12,0.0,0,2,"));
}

#[test]
fn every_method_trains_predicts_and_evaluates() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "helicoid", "--n", "10", "--grid", "4", "--seed", "5", "--out", "h"]);
    for m in ["trnn", "sl_trnn", "pls", "flat_dense"] {
        let model = format!("m_{m}");
        ok(d, &["train", "--data", "h", "--out", &model, "--seed", "1", "--method", m, "--epochs", "3"]);
        ok(d, &["predict", "--model", &model, "--input", "h/X.dtf", "--out", "yh.dtf"]);
        let s = ok(d, &["eval", "--model", &model, "--data", "h", "--out", "e.csv"]);
        assert!(s.starts_with("rmse "), "{s}");
        let csv = fs::read_to_string(d.join("e.csv")).unwrap();
        assert!(csv.lines().nth(1).unwrap().starts_with(m), "{csv}");
    }
}

#[test]
fn pls_recovers_noiseless_linear_data() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "linear", "--n", "30", "--grid", "3", "--seed", "8", "--out", "lin"]);
    ok(d, &["train", "--data", "lin", "--out", "m", "--seed", "1", "--method", "pls", "--k", "3"]);
    let s = ok(d, &["eval", "--model", "m", "--data", "lin", "--out", "e.csv"]);
    let value: f64 = s.trim().strip_prefix("rmse ").unwrap().parse().unwrap();
    assert!(value < 1e-10, "{s}");
}

#[test]
fn gradcheck_passes_and_catches_a_corrupted_gradient() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    assert!(ok(d, &["gradcheck", "--seed", "1"]).contains("PASS"));
    assert!(ok(d, &["gradcheck", "--seed", "2", "--identity", "--tolerance", "1e-6"]).contains("PASS"));
    assert_eq!(code(d, &["gradcheck", "--seed", "1", "--corrupt", "0.5"]), 4);
}

#[test]
fn exit_codes_classify_failures() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    fs::write(d.join("bad.toml"), "data = \"wd\"\nout = \"m\"\nseed = 1\nlearning_rate = 0.1\n").unwrap();
    assert_eq!(code(d, &["train", "--config", "bad.toml"]), 2);
    assert_eq!(code(d, &["train", "--data", "wd", "--out", "m"]), 2);
    assert_eq!(code(d, &["train", "--data", "missing", "--out", "m", "--seed", "1"]), 3);
    assert_eq!(code(d, &["generate", "nosuch", "--n", "3", "--seed", "1"]), 2);
    fs::create_dir(d.join("junk")).unwrap();
    fs::write(d.join("junk/X.dtf"), b"not a tensor").unwrap();
    fs::write(d.join("junk/Y.dtf"), b"not a tensor").unwrap();
    assert_eq!(code(d, &["train", "--data", "junk", "--out", "m", "--seed", "1"]), 3);
}

#[test]
fn benchmark_writes_one_row_per_fit() {
    let tmp = TempDir::new().unwrap();
    let d = tmp.path();
    let plan = r#"
generator = "waterdrop"
methods = ["trnn", "sl_trnn", "pls", "flat_dense"]
n = [10]
sigma = [0.1]
replications = 1
test_size = 5
grid_i = 4
grid_j = 4
base_seed = 3
timings = false

[trnn.train]
max_epochs = 3

[sl_trnn.train]
max_epochs = 3

[flat_dense]
hidden = [8]

[flat_dense.train]
max_epochs = 3
"#;
    fs::write(d.join("plan.toml"), plan).unwrap();
    for out in ["b1", "b2"] {
        ok(d, &["benchmark", "plan.toml", "--out", out, "--quiet"]);
    }
    let csv = fs::read_to_string(d.join("b1/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4);
    assert_eq!(csv, fs::read_to_string(d.join("b2/metrics.csv")).unwrap());
    assert!(d.join("b1/summary.json").exists());
}
