use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn read_config(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(configs().join(name)).unwrap()).unwrap()
}

fn write_config(dir: &Path, v: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, v.to_string()).unwrap();
    path
}

fn ssmrom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssmrom")).args(args).output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Shorter Stuart-Landau run without forcing or orderscan blocks.
fn small_sl() -> Value {
    let mut v = read_config("stuart_landau.json");
    v["geometry"]["refine_iterations"] = json!(0);
    let obj = v.as_object_mut().unwrap();
    obj.remove("forcing");
    obj.remove("orderscan");
    v
}

fn metrics(dir: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("metrics.json")).unwrap()).unwrap()
}

#[test]
fn pipeline_writes_every_artifact() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = ssmrom(&["pipeline", arg(&configs().join("stuart_landau.json")), "-o", arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["chart.json", "model.json", "metrics.json", "backbone.csv", "frc.csv", "frc_omega.csv", "forcing.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let m = metrics(&out);
    assert!(m["test_nmte"].as_f64().unwrap() < 0.04);
    assert!(m["conjugacy_residual"].as_f64().unwrap().is_finite());
    let frc = std::fs::read_to_string(out.join("frc.csv")).unwrap();
    assert!(frc.starts_with("f,Omega,rho0,psi0,stable,branch"));
    // three calibrated amplitudes
    let amps: std::collections::BTreeSet<&str> = frc.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(amps.len(), 3);
}

#[test]
fn short_embedding_warns_and_proceeds() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = small_sl();
    v["embedding"]["p"] = json!(3);
    let cfg = write_config(tmp.path(), &v);
    let out = tmp.path().join("out");
    let o = ssmrom(&["pipeline", arg(&cfg), "-o", arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stderr(&o).contains("2d+1"));
    let warnings = metrics(&out)["warnings"].as_array().unwrap().clone();
    assert!(warnings.iter().any(|w| w.as_str().unwrap().contains("2d+1")));
}

#[test]
fn missing_csv_exits_1_with_path() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = small_sl();
    v["input"] = json!({"csv": {"files": [{"path": "nowhere/traj.csv", "role": "train"}]}});
    let cfg = write_config(tmp.path(), &v);
    let o = ssmrom(&["pipeline", arg(&cfg), "-o", arg(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nowhere/traj.csv"), "{}", stderr(&o));
}

#[test]
fn malformed_config_exits_1() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = small_sl();
    v["geometry"]["curvature"] = json!(2);
    let cfg = write_config(tmp.path(), &v);
    let o = ssmrom(&["pipeline", arg(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("curvature"), "{}", stderr(&o));
}

#[test]
fn simulated_csv_feeds_the_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    let o = ssmrom(&["simulate", arg(&configs().join("stuart_landau.json")), "-o", arg(&data)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let inputs: Value = serde_json::from_str(&std::fs::read_to_string(data.join("inputs.json")).unwrap()).unwrap();
    let mut v = small_sl();
    v["input"] = inputs;
    // relative paths resolve against the config's directory
    let cfg = write_config(&data, &v);
    let out = tmp.path().join("out");
    let o = ssmrom(&["pipeline", arg(&cfg), "-o", arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(metrics(&out)["test_nmte"].as_f64().unwrap() < 0.04);
}

#[test]
fn frc_from_saved_model() {
    let tmp = tempfile::tempdir().unwrap();
    let fit = tmp.path().join("fit");
    let o = ssmrom(&["pipeline", arg(&write_config(tmp.path(), &small_sl())), "-o", arg(&fit)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let curves = tmp.path().join("curves");
    let o = ssmrom(&[
        "frc",
        arg(&configs().join("stuart_landau.json")),
        "--model",
        arg(&fit.join("model.json")),
        "-o",
        arg(&curves),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let frc = std::fs::read_to_string(curves.join("frc.csv")).unwrap();
    assert!(frc.lines().count() > 100);
}

#[test]
fn orderscan_single_order_matches_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_sl());
    let fit = tmp.path().join("fit");
    assert!(ssmrom(&["pipeline", arg(&cfg), "-o", arg(&fit)]).status.success());
    let scan = tmp.path().join("scan");
    let o = ssmrom(&["orderscan", arg(&cfg), "--orders", "3", "-o", arg(&scan)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(scan.join("orderscan.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], "N,train_error,test_error");
    let train: f64 = rows[1].split(',').nth(1).unwrap().parse().unwrap();
    let want = metrics(&fit)["mean_conjugacy_residual"].as_f64().unwrap();
    assert!((train - want).abs() <= 1e-9 * want, "{train} vs {want}");
}

#[test]
fn orderscan_train_error_is_nonincreasing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &small_sl());
    let scan = tmp.path().join("scan");
    let o = ssmrom(&["orderscan", arg(&cfg), "--orders", "5,3,7", "-o", arg(&scan)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(scan.join("orderscan.csv")).unwrap();
    let rows: Vec<(usize, f64)> = csv
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split(',');
            (it.next().unwrap().parse().unwrap(), it.next().unwrap().parse().unwrap())
        })
        .collect();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![3, 5, 7]);
    assert!(rows.windows(2).all(|w| w[1].1 <= w[0].1));
}

#[test]
fn oracle_compare_passes_on_default_system() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("out");
    let o = ssmrom(&["oracle-compare", arg(&configs().join("slow_fast.json")), "-o", arg(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let cmp: Value = serde_json::from_str(&std::fs::read_to_string(out.join("comparison.json")).unwrap()).unwrap();
    assert_eq!(cmp["pass"], json!(true));
    for c in cmp["coefficients"].as_array().unwrap() {
        assert!(c["error"].as_f64().unwrap() < 0.02, "{c}");
    }
}

#[test]
fn outer_resonance_surfaces_oracle_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = read_config("slow_fast.json");
    // fast pair at exactly twice the slow eigenvalue
    v["input"]["synth"]["system"]["slow_fast"]["fast"] = json!([[-0.1, 2.0], [-0.7, 3.7]]);
    let cfg = write_config(tmp.path(), &v);
    let o = ssmrom(&["oracle-compare", arg(&cfg), "-o", arg(&tmp.path().join("out"))]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).to_lowercase().contains("resonan"), "{}", stderr(&o));
}
