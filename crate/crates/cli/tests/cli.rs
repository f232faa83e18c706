//! The `sfwm` binary driven as a subprocess.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn sfwm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfwm"))
        .args(args)
        .env_remove("SFWM_THREADS")
        .output()
        .expect("spawn sfwm")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(p: PathBuf) -> Value {
    serde_json::from_str(&fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))).unwrap()
}

fn entries(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    v.sort();
    v
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("r");
    assert_eq!(code(&sfwm(&["no-such-command"])), 2);
    assert_eq!(code(&sfwm(&["steady-state", "--omega-c", "0", "--out", path(&out)])), 2);
    assert_eq!(code(&sfwm(&["steady-state", "--threads", "0", "--out", path(&out)])), 2);
    let missing = tmp.path().join("missing.sfwm");
    assert_eq!(code(&sfwm(&["analyze", "--input", path(&missing), "--out", path(&out)])), 2);
    let cfg = tmp.path().join("bad.json");
    fs::write(&cfg, r#"{"system": {"od": 20}}"#).unwrap();
    assert_eq!(code(&sfwm(&["steady-state", "--config", path(&cfg), "--out", path(&out)])), 2);
    assert!(!out.exists());
    assert_eq!(entries(tmp.path()), ["bad.json"]);
}

#[test]
fn computation_errors_exit_with_one_and_leave_no_partial_run() {
    let tmp = TempDir::new().unwrap();
    let junk = tmp.path().join("junk.sfwm");
    fs::write(&junk, b"definitely not a time-tag stream").unwrap();
    let out = tmp.path().join("r");
    let o = sfwm(&["analyze", "--input", path(&junk), "--out", path(&out)]);
    assert_eq!(code(&o), 1, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(entries(tmp.path()), ["junk.sfwm"]);
}

#[test]
fn existing_run_directory_needs_force() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("r");
    assert_eq!(code(&sfwm(&["steady-state", "--out", path(&out)])), 0);
    let first = fs::read(out.join("manifest.json")).unwrap();
    assert_eq!(code(&sfwm(&["steady-state", "--out", path(&out)])), 1);
    assert_eq!(fs::read(out.join("manifest.json")).unwrap(), first);
    assert_eq!(code(&sfwm(&["steady-state", "--od", "30", "--out", path(&out), "--force"])), 0);
    let m = json(out.join("manifest.json"));
    assert_eq!(m["scenario"]["system"]["od"], 30.0);
    assert_eq!(entries(tmp.path()), ["r"]);
}

#[test]
fn manifest_lists_the_run() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("r");
    let o = sfwm(&["coefficients", "--omega", "-0.5", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let m = json(out.join("manifest.json"));
    assert_eq!(m["manifest_version"], "sfwm-run/1");
    assert_eq!(m["subcommand"], "coefficients");
    assert_eq!(m["files"], serde_json::json!(["coefficients.json"]));
    assert_eq!(m["scenario_hash"].as_str().unwrap().len(), 64);
    assert!(m["seed"].is_null());
    assert_eq!(entries(&out), ["coefficients.json", "manifest.json"]);
}

#[test]
fn threads_come_from_the_environment() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("r");
    let o = Command::new(env!("CARGO_BIN_EXE_sfwm"))
        .args(["steady-state", "--out", path(&out)])
        .env("SFWM_THREADS", "3")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert_eq!(json(out.join("manifest.json"))["threads"], 3);
    let o = Command::new(env!("CARGO_BIN_EXE_sfwm"))
        .args(["steady-state", "--out", path(&tmp.path().join("s"))])
        .env("SFWM_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn simulation_is_seed_deterministic_and_analyzable() {
    let tmp = TempDir::new().unwrap();
    let run = |name: &str, seed: &str| {
        let out = tmp.path().join(name);
        let o = sfwm(&["simulate-events", "--seed", seed, "--hours", "0.05", "--csv", "--out", path(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        out
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    let bytes = |d: &Path| fs::read(d.join("events.sfwm")).unwrap();
    assert_eq!(bytes(&a), bytes(&b));
    assert_ne!(bytes(&a), bytes(&c));
    assert_eq!(json(a.join("manifest.json"))["seed"], 7);

    let analyse = |name: &str, input: PathBuf| {
        let out = tmp.path().join(name);
        let o = sfwm(&["analyze", "--input", path(&input), "--hours", "0.05", "--out", path(&out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        json(out.join("estimates.json"))
    };
    let bin = analyse("from-binary", a.join("events.sfwm"));
    let csv = analyse("from-csv", a.join("events.csv"));
    assert_eq!(bin["recovered"]["rp_s"], csv["recovered"]["rp_s"]);
    assert_eq!(bin["recovered"]["r_as"], csv["recovered"]["r_as"]);
    assert!(bin["ground_truth"].is_object());
    assert!(csv["ground_truth"].is_null());
    let rp = &bin["recovered"]["rp_s"];
    let truth = bin["ground_truth"]["rp_s"].as_f64().unwrap();
    let (v, e) = (rp["value"].as_f64().unwrap(), rp["err"].as_f64().unwrap());
    assert!((v - truth).abs() < 4.0 * e, "{v} ± {e} vs {truth}");
}

#[test]
fn decoherence_sweep_lowers_the_stokes_pairing_ratio() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("r");
    let o = sfwm(&["sweep", "--param", "gamma21", "--from", "0.001", "--to", "0.1", "--points", "10", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("param,param_value,quantity,value"));
    let rp: Vec<f64> = lines
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|f| f[2] == "rp_s")
        .map(|f| f[3].parse().unwrap())
        .collect();
    assert_eq!(rp.len(), 10);
    assert!(rp.windows(2).all(|w| w[1] < w[0]), "{rp:?}");
}

#[test]
fn table_reproduces_the_four_scenarios() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("r");
    let o = sfwm(&["table1", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = json(out.join("table1.json"))["rows"].as_array().unwrap().clone();
    assert_eq!(rows.len(), 4);
    let first = &rows[0];
    assert_eq!(first["od"], 20.0);
    assert_eq!(first["gamma_21"], 0.001);
    assert!((first["rp_s"]["computed"].as_f64().unwrap() - 0.70).abs() < 0.01);
    let csv = fs::read_to_string(out.join("table1.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 7);
    assert!(String::from_utf8_lossy(&o.stdout).contains("0.700/0.70"));
}
