use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn growup(dir: &Path, args: &[&str], config: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_growup"));
    cmd.args(args).arg("--out").arg(dir.join("out"));
    if let Some(text) = config {
        let path = dir.join("config.toml");
        fs::write(&path, text).unwrap();
        cmd.arg("--config").arg(path);
    }
    cmd.output().unwrap()
}

fn manifest(dir: &Path, name: &str) -> serde_json::Value {
    let text = fs::read_to_string(dir.join("out").join(format!("{name}.json"))).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn match_is_deterministic() {
    let d = TempDir::new().unwrap();
    let out = growup(d.path(), &["match"], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let first = fs::read(d.path().join("out/path_K5.csv")).unwrap();
    assert!(d.path().join("out/path_K6.json").exists());
    let out = growup(d.path(), &["match", "--quiet"], None);
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    assert_eq!(first, fs::read(d.path().join("out/path_K5.csv")).unwrap());
    assert_eq!(manifest(d.path(), "match")["passed"], true);
}

#[test]
fn small_table_range_warns_and_skips() {
    let d = TempDir::new().unwrap();
    let out = growup(d.path(), &["tabulate"], Some("[tabulate]\ny_max = 100.0\nsensitivity_slopes = []\n"));
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("too small"));
    assert_eq!(manifest(d.path(), "tabulate")["checks"][0]["status"], "skipped");
    assert!(d.path().join("out/tables.csv").exists());
}

#[test]
fn default_tabulate_passes() {
    let d = TempDir::new().unwrap();
    let out = growup(d.path(), &["tabulate"], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let header = fs::read_to_string(d.path().join("out/tables.csv")).unwrap();
    assert!(header.starts_with("y,f,f',tilde_f,g,g',h,h'\n"));
}

#[test]
fn zero_amplitude_is_rejected() {
    let d = TempDir::new().unwrap();
    let out = growup(d.path(), &["tabulate"], Some("[tables]\nM = 0.0\n"));
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("M too small"));
}

#[test]
fn config_errors_exit_with_two() {
    let d = TempDir::new().unwrap();
    assert_eq!(growup(d.path(), &["match"], Some("[match]\nrtol = -1.0\n")).status.code(), Some(2));
    assert_eq!(growup(d.path(), &["match"], Some("[match]\nK = [-10.0]\n")).status.code(), Some(2));
    assert_eq!(growup(d.path(), &["solve"], Some("[nope]\n")).status.code(), Some(2));
}

#[test]
fn swapped_constants_fail_certification() {
    let d = TempDir::new().unwrap();
    let out = growup(d.path(), &["certify"], Some("[certify]\nk_lower = 7.0\nswaps = []\n"));
    assert_eq!(out.status.code(), Some(1));
    let m = manifest(d.path(), "certify");
    let failed: Vec<&str> = m["checks"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|c| c["status"] == "fail")
        .map(|c| c["name"].as_str().unwrap())
        .collect();
    assert_eq!(failed, ["lower boundary matching"]);
}

#[test]
fn subcritical_control_has_no_grow_up() {
    let d = TempDir::new().unwrap();
    let cfg = "[solve]\nxi = 0.9\ninitial = \"steady\"\nt_end = 30.0\nnodes = 300\ngrading = 1.05\n\n[rate]\nwindow = [20.0, 30.0]\n";
    let out = growup(d.path(), &["rate"], Some(cfg));
    assert_eq!(out.status.code(), Some(1));
    let m = manifest(d.path(), "rate");
    // the slope settles at 9, so d = log 9 - sqrt(2t) keeps falling
    assert!(m["data"]["d"].as_f64().unwrap() < 0.0);
    assert!((m["data"]["slope"].as_f64().unwrap() - 9.0).abs() < 1e-3);
}

#[test]
fn supercritical_run_records_blow_up() {
    let d = TempDir::new().unwrap();
    let cfg = "[solve]\nxi = 1.5\nt_end = 10.0\nnodes = 300\ngrading = 1.05\nx_min = 1e-6\nblowup_cap = 1e6\n";
    let out = growup(d.path(), &["solve"], Some(cfg));
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(d.path().join("out/blowup.json")).unwrap();
    let ev: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert!(ev["u_time"].as_f64().is_some_and(|t| t > 0.0 && t < 10.0), "{ev}");
}

#[test]
fn full_pipeline_passes() {
    let d = TempDir::new().unwrap();
    let out = growup(d.path(), &["all"], None);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    for c in ["tabulate", "match", "certify", "solve", "rate", "profile", "sandwich"] {
        let m = manifest(d.path(), &format!("{c}/{c}"));
        assert_eq!(m["passed"], true, "{c}");
    }
    let snaps = fs::read_dir(d.path().join("out/solve/snapshots")).unwrap().count();
    assert_eq!(snaps, 101);
}
