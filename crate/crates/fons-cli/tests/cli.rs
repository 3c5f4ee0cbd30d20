use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

use fons::grid::{Field, PeriodicGrid};
use fons::io::write_field_path;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fons"))
}

fn tmp(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fons_cli_{name}_{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn empty_run_config() -> &'static str {
    r#"{
        "d": 1, "n": 4096, "theta": 0.2, "r": "inf", "kappa": 0.8,
        "set": { "kind": "empty" },
        "field": { "kind": "singular" },
        "slices": 2,
        "h_ladder": [0.03125, 0.015625, 0.0078125, 0.00390625, 0.001953125],
        "eps0": 0.125, "seed": 7
    }"#
}

#[test]
fn gen_set_flags_report_cantor_dimension() {
    let dir = tmp("genset");
    let out = bin()
        .args(["gen-set", "--kind", "cantor", "--depth", "8", "--d", "1", "--n", "65536"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("set.fons").is_file());
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("set.json")).unwrap()).unwrap();
    let gamma = doc["gamma_hat"].as_f64().unwrap();
    let want = (2f64).ln() / (3f64).ln();
    // The default ladder keeps its coarse rungs, which swallow fine-level
    // gaps and bias the estimate a few hundredths high.
    assert!((gamma - want).abs() < 0.06, "gamma_hat {gamma}");
    assert!((doc["analytic_dim"].as_f64().unwrap() - want).abs() < 1e-12);
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn gen_set_config_ladder_tightens_the_fit() {
    let dir = tmp("genset_cfg");
    let ladder: Vec<f64> = (5..=12).map(|j| (2f64).powi(-j)).collect();
    let cfg = serde_json::json!({
        "d": 1, "n": 65536,
        "set": { "kind": "cantor", "removed": 1.0 / 3.0, "depth": 8, "axes": [0] },
        "ladder": ladder,
    });
    let path = dir.join("cfg.json");
    fs::write(&path, serde_json::to_string(&cfg).unwrap()).unwrap();
    let out = bin()
        .arg("gen-set")
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("set.json")).unwrap()).unwrap();
    let gamma = doc["gamma_hat"].as_f64().unwrap();
    let want = (2f64).ln() / (3f64).ln();
    assert!((gamma - want).abs() < 0.03, "gamma_hat {gamma}");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn run_empty_set_conservative_and_idempotent() {
    let dir = tmp("run_empty");
    let cfg = dir.join("empty_set.json");
    fs::write(&cfg, empty_run_config()).unwrap();
    let run = |sub: &str| {
        bin()
            .arg("run")
            .arg("--config")
            .arg(&cfg)
            .arg("--out")
            .arg(dir.join(sub))
            .output()
            .unwrap()
    };
    let first = run("a");
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(stdout(&first).contains("verdict \"conservative (Lipschitz regime)\""));
    let second = run("b");
    assert!(second.status.success());
    let a = fs::read(dir.join("a/report.json")).unwrap();
    let b = fs::read(dir.join("b/report.json")).unwrap();
    assert_eq!(a, b, "rerun changed report.json");
    assert!(dir.join("a/terms.csv").is_file());
    assert!(dir.join("a/fields/slice_000.fons").is_file());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn run_worker_counts_agree_bytewise() {
    let dir = tmp("run_workers");
    let cfg = dir.join("empty_set.json");
    fs::write(&cfg, empty_run_config()).unwrap();
    for (sub, workers) in [("w1", "1"), ("w3", "3")] {
        let out = bin()
            .arg("run")
            .arg("--config")
            .arg(&cfg)
            .arg("--workers")
            .arg(workers)
            .arg("--out")
            .arg(dir.join(sub))
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = fs::read(dir.join("w1/report.json")).unwrap();
    let b = fs::read(dir.join("w3/report.json")).unwrap();
    assert_eq!(a, b, "worker count changed report.json");
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn run_outside_regime_exits_two() {
    let dir = tmp("run_outside");
    let cfg = dir.join("full_weier.json");
    fs::write(
        &cfg,
        r#"{
            "d": 1, "n": 4096, "theta": 0.2, "r": "inf", "kappa": 0.8,
            "set": { "kind": "full" },
            "field": { "kind": "weierstrass", "levels": 8 },
            "slices": 2,
            "h_ladder": [0.03125, 0.015625, 0.0078125, 0.00390625, 0.001953125],
            "eps0": 0.125, "seed": 7
        }"#,
    )
    .unwrap();
    let out = bin()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", stdout(&out));
    assert!(stdout(&out).contains("outside regime"));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn fons_out_env_wins_over_flag() {
    let dir = tmp("env_out");
    let cfg = dir.join("empty_set.json");
    fs::write(&cfg, empty_run_config()).unwrap();
    let out = bin()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("flag"))
        .env("FONS_OUT", dir.join("env"))
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("env/report.json").is_file());
    assert!(!dir.join("flag").exists());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn besov_constant_field_zero_tables() {
    let dir = tmp("besov_const");
    let grid = PeriodicGrid::new(1, 256).unwrap();
    let f = Field::from_samples(grid, 1, vec![2.5; 256]).unwrap();
    let art = dir.join("const.fons");
    write_field_path(&art, &f).unwrap();
    let out = bin()
        .arg("besov")
        .arg("--field")
        .arg(&art)
        .args(["--theta", "0.25"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.join("structure.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let value: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert_eq!(value, 0.0, "nonzero structure value in {line}");
    }
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("besov.json")).unwrap()).unwrap();
    assert_eq!(doc["seminorm"]["value"].as_f64().unwrap(), 0.0);
    assert!(doc["effective"].is_null());
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn malformed_config_exits_one() {
    let dir = tmp("malformed");
    let cfg = dir.join("bad.json");
    fs::write(&cfg, "{ not json").unwrap();
    let out = bin()
        .arg("run")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("o"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
    let _ = fs::remove_dir_all(&dir);
}

#[test]
fn flux_accepts_run_config_probe_block() {
    let dir = tmp("flux_probe");
    let cfg = dir.join("run.json");
    fs::write(
        &cfg,
        r#"{
            "d": 1, "n": 512, "theta": 0.2, "kappa": 0.8,
            "set": { "kind": "cantor", "removed": 0.3333333333333333, "depth": 3, "axes": [0] },
            "field": { "kind": "singular" },
            "h_ladder": [0.03125, 0.015625], "eps0": 0.125, "seed": 7,
            "flux": { "deltas": [0.0625, 0.03125, 0.015625] }
        }"#,
    )
    .unwrap();
    let out = bin()
        .arg("flux")
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("rungs=3"));
    let csv = fs::read_to_string(dir.join("flux.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let _ = fs::remove_dir_all(&dir);
}
