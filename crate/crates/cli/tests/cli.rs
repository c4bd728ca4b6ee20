use std::path::Path;
use std::process::{Command, Output};

fn mdcuts(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdcuts"))
        .args(args)
        .current_dir(cwd)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn generate_solve_bench_and_replay() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("spec.json"), r#"{"articles": 10, "countries": 2, "preset": "hard", "seed": 7}"#).unwrap();

    assert!(mdcuts(&["generate", "--spec", "spec.json", "--out", "inst.json"], d).status.success());
    let manifest = json(&d.join("manifest.json"));
    assert_eq!(manifest["subcommand"], "generate");
    assert_eq!(manifest["seed"], 7);

    let out = mdcuts(&["solve", "--instance", "inst.json", "--out-dir", "run", "--strategy", "mixed", "--threads", "1"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["trace.ndjson", "summary.json", "solution.json", "pool.json", "manifest.json"] {
        assert!(d.join("run").join(f).exists(), "{f}");
    }
    let summary = json(&d.join("run/summary.json"));
    assert!(summary["mu"].as_f64().unwrap() <= summary["dual_bound"].as_f64().unwrap() * (1.0 + 1e-7));
    let solution = json(&d.join("run/solution.json"));
    assert_eq!(solution["selection"].as_array().unwrap().len(), 10);
    assert_eq!(solution["offers"].as_array().unwrap().len(), 10);
    let run_manifest = json(&d.join("run/manifest.json"));
    assert_eq!(run_manifest["config"]["strategy"], "mixed");
    assert_eq!(run_manifest["input_hashes"][0], manifest["config"]["instance_hash"]);

    let out = mdcuts(&["bench", "--pool", "run/pool.json", "--mode", "partial:1,2,10", "--out", "bench.csv"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(d.join("bench.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    assert!(csv.starts_with("mode,label,elapsed_ms,bound,gap"));

    let out = mdcuts(&["replay", "--manifest", "run/manifest.json", "--out-dir", "again"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(d.join("run/solution.json")).unwrap(),
        std::fs::read(d.join("again/solution.json")).unwrap()
    );
}

#[test]
fn compare_writes_curves_and_time_to_gap() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("spec.json"), r#"{"articles": 8, "preset": "hard", "seed": 1}"#).unwrap();
    assert!(mdcuts(&["generate", "--spec", "spec.json", "--out", "inst.json"], d).status.success());
    let out = mdcuts(
        &["compare", "--instance", "inst.json", "--strategies", "none,max-violation", "--out-dir", "cmp", "--outer", "4"],
        d,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(d.join("cmp/curves_0.csv")).unwrap();
    assert!(csv.lines().skip(1).any(|l| l.starts_with("none,")));
    assert!(csv.lines().skip(1).any(|l| l.starts_with("max-violation,")));
    let table = json(&d.join("cmp/time_to_gap.json"));
    assert_eq!(table.as_array().unwrap().len(), 6);
}

#[test]
fn input_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(mdcuts(&["solve", "--instance", "missing.json", "--out-dir", "o"], d).status.code(), Some(2));
    std::fs::write(d.join("spec.json"), r#"{"articles": 3, "weeks": 30, "discount_levels": 30}"#).unwrap();
    assert_eq!(mdcuts(&["generate", "--spec", "spec.json", "--out", "i.json"], d).status.code(), Some(2));
    std::fs::write(d.join("bad.json"), r#"{"articles": 3, "colour": "red"}"#).unwrap();
    assert_eq!(mdcuts(&["generate", "--spec", "bad.json", "--out", "i.json"], d).status.code(), Some(2));
    std::fs::write(d.join("spec.json"), r#"{"articles": 3}"#).unwrap();
    assert!(mdcuts(&["generate", "--spec", "spec.json", "--out", "i.json"], d).status.success());
    let out = mdcuts(&["solve", "--instance", "i.json", "--out-dir", "o", "--strategy", "bundle"], d);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_count_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("spec.json"), r#"{"articles": 3}"#).unwrap();
    assert!(mdcuts(&["generate", "--spec", "spec.json", "--out", "i.json"], d).status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_mdcuts"))
        .args(["solve", "--instance", "i.json", "--out-dir", "o"])
        .current_dir(d)
        .env("MDCUTS_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}
