use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const AP: &str = r#"{"d":1,"patterns":[{"m":3,"coeffs":[["1"],["-2"],["1"]]}]}"#;

fn lacuna(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lacuna"))
        .args(args)
        .env_remove("LACUNA_LEVEL_CAP")
        .output()
        .expect("binary runs")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn error_kind(out: &Output) -> String {
    let v: Value = serde_json::from_slice(&out.stderr).expect("stderr is a JSON envelope");
    v["error"]["kind"].as_str().unwrap_or_default().to_string()
}

fn build_ap(dir: &TempDir, depth: usize, name: &str) -> String {
    let patterns = path(dir, "ap.json");
    fs::write(&patterns, AP).unwrap();
    let tree = path(dir, name);
    let out = lacuna(&["build", &patterns, "--dimfn", "pow:1/2", "--depth", &depth.to_string(), "--out", &tree]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    tree
}

fn leaf_count(tree: &str, depth: usize) -> usize {
    let v: Value = serde_json::from_str(&fs::read_to_string(tree).unwrap()).unwrap();
    v["cubes"][depth.to_string()].as_array().unwrap().len()
}

#[test]
fn build_writes_tree_and_log() {
    let dir = TempDir::new().unwrap();
    let tree = build_ap(&dir, 7, "tree.json");
    assert_eq!(leaf_count(&tree, 7), 64);
    let log = fs::read_to_string(Path::new(&tree).with_extension("schedule.jsonl")).unwrap();
    let first: Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(first["M_i"], 6);
    assert_eq!(first["beta_i"], 9);
    let root = build_ap(&dir, 0, "root.json");
    assert_eq!(leaf_count(&root, 0), 1);
}

#[test]
fn build_rejects_full_power() {
    let dir = TempDir::new().unwrap();
    let patterns = path(&dir, "ap.json");
    fs::write(&patterns, AP).unwrap();
    let out = lacuna(&["build", &patterns, "--dimfn", "pow:1/1", "--depth", "3", "--out", &path(&dir, "t.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "RejectNotDominated");
}

#[test]
fn certify_depth_twelve() {
    let dir = TempDir::new().unwrap();
    let tree = build_ap(&dir, 12, "tree.json");
    let cert = path(&dir, "cert.json");
    let out = lacuna(&["certify", &tree, "--mode", "all", "--out", &cert]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_str(&fs::read_to_string(&cert).unwrap()).unwrap();
    assert_eq!(v["measure"]["lower_bound"], "1/10");
    assert_eq!(v["gaps"][0]["threshold"], "1/288");
    assert_eq!(v["gaps"].as_array().unwrap().len(), 2);
}

#[test]
fn certify_shallow_tree_fails_measure() {
    let dir = TempDir::new().unwrap();
    let tree = build_ap(&dir, 5, "tree.json");
    let out = lacuna(&["certify", &tree, "--mode", "measure", "--out", &path(&dir, "c.json")]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(error_kind(&out), "EntryNotProcessed");
}

#[test]
fn certify_detects_corruption() {
    let dir = TempDir::new().unwrap();
    let tree = build_ap(&dir, 7, "tree.json");
    let mut v: Value = serde_json::from_str(&fs::read_to_string(&tree).unwrap()).unwrap();
    v["cubes"]["6"][0]["lower"][0] = Value::String("1/1".into());
    v["cubes"]["7"][0]["lower"][0] = Value::String("1/1".into());
    fs::write(&tree, serde_json::to_string(&v).unwrap()).unwrap();
    let out = lacuna(&["certify", &tree, "--out", &path(&dir, "c.json")]);
    assert_eq!(out.status.code(), Some(1));
    let kind = error_kind(&out);
    assert!(kind == "GapViolated" || kind == "StructureViolated", "{kind}");
}

#[test]
fn exports() {
    let dir = TempDir::new().unwrap();
    let tree = build_ap(&dir, 7, "tree.json");
    let csv = path(&dir, "centers.csv");
    assert!(lacuna(&["export", &tree, "--format", "csv", "--out", &csv]).status.success());
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 65);
    let svg = path(&dir, "tree.svg");
    assert!(lacuna(&["export", &tree, "--format", "svg", "--out", &svg]).status.success());
    assert!(fs::read_to_string(&svg).unwrap().starts_with("<svg"));
    let out = lacuna(&["export", &tree, "--format", "csv", "--precision", "4", "--out", &csv]);
    assert_eq!(out.status.code(), Some(2));

    let pts = path(&dir, "points.csv");
    assert!(lacuna(&["export", &tree, "--format", "points", "--out", &pts]).status.success());
    let ap = path(&dir, "ap.json");
    let out = lacuna(&["oracle", &pts, &ap]);
    assert!(out.status.success() || out.status.code() == Some(1));
}

#[test]
fn svg_rejects_three_dimensions() {
    let dir = TempDir::new().unwrap();
    let patterns = path(&dir, "p3.json");
    fs::write(&patterns, r#"{"d":3,"patterns":[{"m":2,"coeffs":[["1","0","0"],["-1","0","0"]]}]}"#).unwrap();
    let tree = path(&dir, "t3.json");
    assert!(lacuna(&["build", &patterns, "--dimfn", "pow:1/1", "--depth", "1", "--out", &tree]).status.success());
    let out = lacuna(&["export", &tree, "--format", "svg", "--out", &path(&dir, "t3.svg")]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "UnsupportedDimension");
}

#[test]
fn oracle_reports_instances() {
    let dir = TempDir::new().unwrap();
    let pts = path(&dir, "pts.csv");
    fs::write(&pts, "1\n5/4\n3/2\n").unwrap();
    let ap = path(&dir, "ap.json");
    fs::write(&ap, AP).unwrap();
    let out = lacuna(&["oracle", &pts, &ap]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["instances"].as_array().unwrap().len(), 2);
    fs::write(&pts, "1\n5/4\n").unwrap();
    assert!(lacuna(&["oracle", &pts, &ap]).status.success());
}

#[test]
fn app_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let spec = path(&dir, "spec.json");
    fs::write(&spec, r#"{"kind":"ratios","params":["2"],"h":"pow:1/2","depth":7}"#).unwrap();
    let (a, b) = (path(&dir, "a"), path(&dir, "b"));
    for out_dir in [&a, &b] {
        let out = lacuna(&["app", &spec, "--out-dir", out_dir]);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for name in ["patterns.json", "tree.json", "cert.json"] {
        let x = fs::read(Path::new(&a).join(name)).unwrap();
        let y = fs::read(Path::new(&b).join(name)).unwrap();
        assert_eq!(x, y, "{name} differs");
    }
    // leaf centers of a certified build pass the oracle on covered tuples; the
    // full scan may still report uncovered instances, so only the exit contract is checked
    let pts = path(&dir, "leaves.csv");
    let tree = Path::new(&a).join("tree.json").to_string_lossy().into_owned();
    assert!(lacuna(&["export", &tree, "--format", "points", "--out", &pts]).status.success());
    let out = lacuna(&["oracle", &pts, &Path::new(&a).join("patterns.json").to_string_lossy()]);
    assert!(matches!(out.status.code(), Some(0) | Some(1)));
}

#[test]
fn difference_app_writes_log_points() {
    let dir = TempDir::new().unwrap();
    let spec = path(&dir, "spec.json");
    fs::write(&spec, r#"{"kind":"differences","params":["ln:2","1/2"],"h":"pow:1/8","depth":6}"#).unwrap();
    let out_dir = path(&dir, "out");
    let out = lacuna(&["app", &spec, "--out-dir", &out_dir]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let margins: Value = serde_json::from_str(&fs::read_to_string(Path::new(&out_dir).join("margins.json")).unwrap()).unwrap();
    assert!(!margins.as_array().unwrap().is_empty());
    assert!(fs::read_to_string(Path::new(&out_dir).join("log-points.csv")).unwrap().starts_with("lo,hi"));
}

#[test]
fn level_cap_from_environment() {
    let dir = TempDir::new().unwrap();
    let patterns = path(&dir, "ap.json");
    fs::write(&patterns, AP).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_lacuna"))
        .args(["build", &patterns, "--dimfn", "pow:1/2", "--depth", "9", "--out", &path(&dir, "t.json")])
        .env("LACUNA_LEVEL_CAP", "8")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "ScheduleOverflow");
}
