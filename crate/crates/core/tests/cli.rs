use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const OU: &str = r#"
process = "ou"
seed = 2

[time]
t_end = 1.0
points = 50

[ou]
beta = 0.05
sigma = 1.0
x0 = 0.0

[bound]
kind = "analytic"

[sample]
paths = 25
write_paths = 2
"#;

fn fpratio(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fpratio")).args(args).output().unwrap()
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn stderr_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stderr).unwrap_or_else(|_| panic!("stderr: {}", String::from_utf8_lossy(&o.stderr)))
}

#[test]
fn missing_key_exits_two_naming_key() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", &OU.replace("sigma = 1.0\n", ""));
    let out = d.path().join("o");
    let o = fpratio(&["sample", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr_json(&o);
    assert_eq!(e["key"], "ou.sigma");
    assert_eq!(e["status"], "error");
}

#[test]
fn unknown_key_and_missing_config_are_usage_errors() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", &format!("{OU}\n[grid]\nmesh = 3\n"));
    let o = fpratio(&["solve-ratio", "--config", &cfg, "--out", d.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["key"], "grid.mesh");
    let o = fpratio(&["sample", "--out", d.path().join("o").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn forced_identity_accepts_everything() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", &OU.replace("write_paths = 2", "write_paths = 2\nforce_identity = true"));
    let out = d.path().join("o");
    let o = fpratio(&["sample", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let s: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["acceptance_rate"], 1.0);
    let csv = fs::read_to_string(out.join("paths/path_00000.csv")).unwrap();
    assert!(csv.starts_with("t,proposal,ratio,uniform,decision,output\n"));
    assert_eq!(csv.lines().count(), 51);
}

#[test]
fn large_beta_is_mostly_rejected() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", &OU.replace("beta = 0.05", "beta = 25.0").replace("paths = 25", "paths = 20\nmax_attempts = 2"));
    let out = d.path().join("o");
    let o = fpratio(&["sample", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success());
    let s: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert!(s["rejection_rate"].as_f64().unwrap() >= 0.99 || s["paths_failed"].as_u64().unwrap() > 0);
}

#[test]
fn seed_flag_overrides_config_and_is_deterministic() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", OU);
    let run = |seed: &str, out: &str| {
        let out = d.path().join(out);
        assert!(fpratio(&["sample", "--config", &cfg, "--seed", seed, "--out", out.to_str().unwrap()]).status.success());
        fs::read(out.join("paths/path_00001.csv")).unwrap()
    };
    assert_eq!(run("9", "a"), run("9", "b"));
    assert_ne!(run("9", "a"), run("10", "c"));
}

#[test]
fn tiny_beta_field_is_one() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", &OU.replace("beta = 0.05", "beta = 5e-20"));
    let out = d.path().join("o");
    assert!(fpratio(&["solve-ratio", "--config", &cfg, "--out", out.to_str().unwrap(), "--normalized"]).status.success());
    let csv = fs::read_to_string(out.join("field.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,x,V"));
    for l in lines {
        let v: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!((v - 1.0).abs() < 1e-6);
    }
    assert!(out.join("field_norm.csv").exists());
    let m: Value = serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["invocation"]["config"]["ou"]["beta"], 5e-20);
    assert!(m["files"]["field.csv"].as_str().unwrap().len() == 64);
}

#[test]
fn validate_ou_sweep() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", &format!("{OU}\n[validate]\nbetas = [5e-20, 0.005, 0.05]\n"));
    let out = d.path().join("o");
    assert!(fpratio(&["validate-ou", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let csv = fs::read_to_string(out.join("errors.csv")).unwrap();
    let errs: Vec<f64> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(errs.len(), 3);
    assert!(errs[0] < 1e-4);
    assert!(errs.windows(2).all(|w| w[1] > w[0]), "{errs:?}");

    let cfg = write_config(d.path(), "e.toml", &format!("{OU}\n[validate]\nbetas = []\n"));
    let o = fpratio(&["validate-ou", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert_eq!(stderr_json(&o)["key"], "validate.betas");
}

#[test]
fn convergence_command() {
    let d = tempfile::tempdir().unwrap();
    let out = d.path().join("o");
    let o = fpratio(&["convergence", "--problem", "mms-1d", "--problem", "heat-2d-space", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    for l in csv.lines().filter(|l| l.contains(",fit,")) {
        let order: f64 = l.rsplit(',').next().unwrap().parse().unwrap();
        assert!(order >= 1.9, "{l}");
    }
    let o = fpratio(&["convergence", "--problem", "nope", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn planar_snapshots() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        "w.toml",
        "process = \"wf2d\"\n[time]\nt_end = 1.0\npoints = 20\n[wf2d]\nh = 1.0\nx0 = [0.5, 0.5]\n[grid]\nm = 40\nn = 20\nsnapshots = [5, 10, 15, 20]\n",
    );
    let out = d.path().join("o");
    assert!(fpratio(&["solve-ratio", "--config", &cfg, "--out", out.to_str().unwrap()]).status.success());
    let csv = fs::read_to_string(out.join("field.csv")).unwrap();
    let mut times: Vec<String> = csv.lines().skip(1).map(|l| l.split(',').next().unwrap().to_string()).collect();
    times.dedup();
    assert_eq!(times, ["0.25", "0.5", "0.75", "1"]);
    assert_eq!(csv.lines().count(), 1 + 4 * 41 * 41);
}

#[test]
fn mc_compare_wright_fisher_small() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(
        d.path(),
        "w.toml",
        "process = \"wf1d\"\nseed = 4\n[time]\nt_end = 1.0\npoints = 50\n[wf1d]\ngamma = 1.0\nx0 = 0.5\n[grid]\nm = 200\nn = 200\n[mc]\nat = 0.5\ntarget_accepted = 3000\nem_dt = 1e-3\nem_paths = 20000\nthreshold = 0.06\n",
    );
    let out = d.path().join("o");
    let o = fpratio(&["mc-compare", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r: Value = serde_json::from_str(&fs::read_to_string(out.join("ks.json")).unwrap()).unwrap();
    assert_eq!(r["pass"], true, "{r}");
    assert!(fs::read_to_string(out.join("reference.csv")).unwrap().starts_with("value\n"));
}

#[test]
fn replay_detects_tampered_hash() {
    let d = tempfile::tempdir().unwrap();
    let cfg = write_config(d.path(), "c.toml", OU);
    let a = d.path().join("a");
    assert!(fpratio(&["sample", "--config", &cfg, "--out", a.to_str().unwrap()]).status.success());
    let m = a.join("manifest.json");
    let o = fpratio(&["replay", m.to_str().unwrap(), "--out", d.path().join("b").to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let mut v: Value = serde_json::from_str(&fs::read_to_string(&m).unwrap()).unwrap();
    v["files"]["summary.json"] = Value::from("0".repeat(64));
    fs::write(&m, v.to_string()).unwrap();
    let o = fpratio(&["replay", m.to_str().unwrap(), "--out", d.path().join("c").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    let e = stderr_json(&o);
    assert_eq!(e["kind"], "replay-mismatch");
    assert!(e["message"].as_str().unwrap().contains("summary.json"));
}
