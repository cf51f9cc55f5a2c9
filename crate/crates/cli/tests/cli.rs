use std::path::Path;
use std::process::{Command, Output};

fn vineclass(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vineclass"))
        .current_dir(dir)
        .env_remove("VINECLASS_OUT_DIR")
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = vineclass(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn fitted(dir: &Path) {
    ok(dir, &["simulate", "--variant", "mixed", "--n", "120", "--seed", "9", "--out", "train.csv"]);
    ok(dir, &["simulate", "--variant", "mixed", "--n", "60", "--seed", "9", "--replicate", "1", "--out", "test.csv"]);
    ok(dir, &["fit", "--data", "train.csv", "--schema", "train.schema.json", "--out", "model.json", "--margins", "empirical"]);
}

#[test]
fn predict_evaluate_and_risk_groups() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fitted(dir);
    ok(dir, &[
        "predict", "--model", "model.json", "--data", "test.csv", "--schema", "train.schema.json", "--alpha", "0.2",
        "--out", "pred.csv",
    ]);
    let pred = read(dir, "pred.csv");
    assert!(pred.starts_with("row,label,p_0,p_1,group_0.2\n"));
    assert_eq!(pred.lines().count(), 121);
    for line in pred.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        let s: f64 = cells[2].parse::<f64>().unwrap() + cells[3].parse::<f64>().unwrap();
        assert!((s - 1.0).abs() < 1e-5);
    }

    ok(dir, &["evaluate", "--predictions", "test=pred.csv", "--out", "eval.csv"]);
    let eval = read(dir, "eval.csv");
    assert!(eval.starts_with("split,metric,class,value\n"));
    for metric in ["brier,0", "brier,1", "nll,0", "nll,1", "nll_sum,", "nll_mean,", "auc,1"] {
        assert!(eval.contains(&format!("test,{metric},")), "{metric}");
    }

    ok(dir, &["risk-groups", "--predictions", "pred.csv", "--out", "groups.csv"]);
    let groups = read(dir, "groups.csv");
    let rows: Vec<&str> = groups.lines().collect();
    assert_eq!(rows[0], "alpha,group,n_class0,n_class1,total,aux_mean,aux_sd");
    assert_eq!(rows.len(), 10);
    for alpha in rows[1..].chunks(3) {
        let total: usize = alpha.iter().map(|r| r.split(',').nth(4).unwrap().parse::<usize>().unwrap()).sum();
        assert_eq!(total, 120);
    }
}

#[test]
fn scenario_curve_and_surface() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fitted(dir);
    std::fs::write(dir.join("profile.json"), r#"{"x1": 0.0, "x2": 3}"#).unwrap();
    ok(dir, &["scenario", "--model", "model.json", "--profile", "profile.json", "--grid", "x1:-2:2:9", "--out", "curve.csv"]);
    assert_eq!(read(dir, "curve.csv").lines().count(), 10);
    assert!(read(dir, "curve.meta.json").contains("\"adverse_class\": 1"));
    ok(dir, &[
        "scenario", "--model", "model.json", "--profile", "profile.json", "--grid", "x1:-2:2:9", "--grid", "x2:1,2,3,4",
        "--out", "surface.csv",
    ]);
    let surface = read(dir, "surface.csv");
    assert!(surface.starts_with("x1,x2,probability,on_contour\n"));
    assert_eq!(surface.lines().count(), 37);
}

#[test]
fn out_dir_and_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    std::fs::write(dir.join("sim.json"), r#"{"variant": "continuous", "n": 30, "seed": 4}"#).unwrap();
    ok(dir, &["simulate", "--config", "sim.json", "--n", "20", "--out-dir", "results", "--out", "a.csv"]);
    let data = read(dir, "results/a.csv");
    assert_eq!(data.lines().count(), 41);
    assert!(dir.join("results/a.schema.json").is_file());
}

#[test]
fn failures_use_one_line_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let out = vineclass(dir, &["fit", "--data", "missing.csv", "--schema", "s.json", "--out", "m.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error: Io: "));
    assert_eq!(err.lines().count(), 1);

    let out = vineclass(dir, &["simulate", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error: Usage: "));

    fitted(dir);
    let out = vineclass(dir, &["risk-groups", "--predictions", "train.csv", "--alpha", "0.6", "--out", "g.csv"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().starts_with("error: InvalidArgument: "));
}
