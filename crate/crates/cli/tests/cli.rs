use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const CALL_REFERENCE: f64 = 10.450583572185616;

fn stochbs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stochbs"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("run.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn fixture(dir: &Path) -> (String, String) {
    let out = stochbs(&["simulate", "--fixture", dir.to_str().unwrap(), "--json"]);
    let rec = stdout_json(&out);
    (
        rec["prices"].as_str().unwrap().to_owned(),
        rec["quotes"].as_str().unwrap().to_owned(),
    )
}

#[test]
fn price_default_is_the_benchmark_case() {
    let rec = stdout_json(&stochbs(&["price", "--json"]));
    let price = rec["price"].as_f64().unwrap();
    assert!((price / CALL_REFERENCE - 1.0).abs() < 0.005, "{price}");
    assert_eq!(rec["n_s"], 200);
    assert_eq!(rec["n_t"], 2000);
    let cf = rec["closed_form"].as_f64().unwrap();
    assert!((cf - CALL_REFERENCE).abs() < 1e-9);
}

#[test]
fn price_text_and_json_agree() {
    let text = stochbs(&["price"]);
    assert!(text.status.success());
    let line = String::from_utf8(text.stdout).unwrap();
    let shown: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    let rec = stdout_json(&stochbs(&["price", "--json"]));
    assert!((shown - rec["price"].as_f64().unwrap()).abs() < 1e-6);
}

#[test]
fn negative_strike_is_a_config_error() {
    let out = stochbs(&["price", "--strike=-5"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("strike"), "{err}");
}

#[test]
fn unstable_grid_is_a_numerical_failure() {
    let out = stochbs(&["price", "--n-t", "50"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unstable"));
    // same grid with the step count raised automatically
    assert!(stochbs(&["price", "--n-t", "50", "--auto-steps"])
        .status
        .success());
}

#[test]
fn config_file_and_flag_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"schema_version": 1, "contract": {"kind": "put", "strike": 110}, "grid": {"n_s": 120, "n_t": 1000}}"#,
    );
    let rec = stdout_json(&stochbs(&["price", "--config", &cfg, "--json"]));
    assert_eq!(rec["kind"], "put");
    assert_eq!(rec["strike"], 110.0);
    assert_eq!(rec["n_s"], 120);
    let rec = stdout_json(&stochbs(&[
        "price", "--config", &cfg, "--strike", "90", "--json",
    ]));
    assert_eq!(rec["strike"], 90.0);
    assert_eq!(rec["kind"], "put");
}

#[test]
fn config_needs_schema_version() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"contract": {"strike": 100}}"#);
    let out = stochbs(&["price", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("schema_version"));

    let cfg = write_config(dir.path(), r#"{"schema_version": 1, "strike": 100}"#);
    assert_eq!(stochbs(&["price", "--config", &cfg]).status.code(), Some(2));
}

#[test]
fn missing_data_path_is_rejected_at_parse_time() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        r#"{"schema_version": 1, "data": {"prices": "/nonexistent/prices.csv"}}"#,
    );
    let out = stochbs(&["price", "--config", &cfg]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_file_matches_stdout_record() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("price.json");
    let rec = stdout_json(&stochbs(&[
        "price",
        "--json",
        "--out",
        path.to_str().unwrap(),
    ]));
    let file: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(rec, file);
}

#[test]
fn extended_price_runs() {
    let rec = stdout_json(&stochbs(&[
        "price",
        "--n-s",
        "60",
        "--n-sigma",
        "3",
        "--n-r",
        "3",
        "--kappa",
        "2",
        "--theta",
        "0.04",
        "--xi",
        "0.1",
        "--rate-speed",
        "0.5",
        "--rate-mean",
        "0.05",
        "--rate-vol",
        "0.01",
        "--auto-steps",
        "--json",
    ]));
    assert!(rec["closed_form"].is_null());
    assert!(rec["price"].as_f64().unwrap() > 0.0);
    let implicit = stdout_json(&stochbs(&[
        "price",
        "--n-s",
        "60",
        "--n-t",
        "500",
        "--n-sigma",
        "3",
        "--n-r",
        "3",
        "--kappa",
        "2",
        "--theta",
        "0.04",
        "--xi",
        "0.1",
        "--rate-speed",
        "0.5",
        "--rate-mean",
        "0.05",
        "--rate-vol",
        "0.01",
        "--scheme",
        "implicit",
        "--json",
    ]));
    let (a, b) = (
        rec["price"].as_f64().unwrap(),
        implicit["price"].as_f64().unwrap(),
    );
    assert!((a - b).abs() / a < 0.005, "{a} vs {b}");
}

#[test]
fn put_strike_sweep() {
    let rec = stdout_json(&stochbs(&[
        "surface", "--mode", "strike", "--kind", "put", "--json",
    ]));
    let rows = rec["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 11);
    let prices: Vec<f64> = rows.iter().map(|r| r[1].as_f64().unwrap()).collect();
    assert!(prices.windows(2).all(|w| w[1] >= w[0]), "{prices:?}");
    assert_eq!(rows[0][0].as_f64().unwrap(), 50.0);
    assert_eq!(rows[10][0].as_f64().unwrap(), 150.0);
}

#[test]
fn inverted_sweep_is_rejected() {
    let out = stochbs(&[
        "surface", "--mode", "strike", "--k-min", "150", "--k-max", "50",
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn time_sweep_boundary_row() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("time.csv");
    let out = stochbs(&["surface", "--mode", "time", "--out", path.to_str().unwrap()]);
    assert!(out.status.success());
    let mut reader = csv::Reader::from_path(&path).unwrap();
    assert_eq!(
        reader.headers().unwrap(),
        vec!["t", "s", "sigma", "r", "value"]
    );
    let rows: Vec<Vec<f64>> = reader
        .records()
        .map(|r| r.unwrap().iter().map(|x| x.parse().unwrap()).collect())
        .collect();
    let s_max = rows.iter().map(|r| r[1]).fold(0.0, f64::max);
    let top = rows
        .iter()
        .find(|r| r[0] == 0.0 && r[1] == s_max)
        .expect("row at (s_max, t = 0)");
    let expected = s_max - 100.0 * (-0.05f64).exp();
    assert!((top[4] - expected).abs() < 1e-9, "{} vs {expected}", top[4]);
}

#[test]
fn grid_surface_csv() {
    let out = stochbs(&["surface", "--n-s", "50", "--n-t", "500"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("s,sigma,r,value"));
    assert_eq!(lines.count(), 50);
}

#[test]
fn simulate_is_seed_deterministic() {
    let a = stdout_json(&stochbs(&[
        "simulate",
        "--n-paths",
        "2000",
        "--seed",
        "5",
        "--json",
    ]));
    let b = stdout_json(&stochbs(&[
        "simulate",
        "--n-paths",
        "2000",
        "--seed",
        "5",
        "--json",
    ]));
    let c = stdout_json(&stochbs(&[
        "simulate",
        "--n-paths",
        "2000",
        "--seed",
        "6",
        "--json",
    ]));
    assert_eq!(a, b);
    assert_ne!(a["price"], c["price"]);
}

#[test]
fn simulate_vs_pde_record() {
    let rec = stdout_json(&stochbs(&[
        "simulate",
        "--vs-pde",
        "--n-paths",
        "20000",
        "--json",
    ]));
    for key in ["pde", "mc", "std_error", "z", "n_paths", "seed"] {
        assert!(rec.get(key).is_some(), "missing {key}");
    }
    assert!(rec["z"].as_f64().unwrap().abs() < 4.0, "{rec}");
}

#[test]
fn simulate_path_dump() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("paths.csv");
    let out = stochbs(&[
        "simulate",
        "--n-paths",
        "100",
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().count(), 101);
    assert!(text.starts_with("path,stock,variance,rate,rate_integral"));
}

#[test]
fn backtest_on_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let (prices, quotes) = fixture(dir.path());
    let features = dir.path().join("features.csv");
    let rec = stdout_json(&stochbs(&[
        "backtest",
        "--prices",
        &prices,
        "--quotes",
        &quotes,
        "--r0",
        "0.03",
        "--features",
        features.to_str().unwrap(),
        "--json",
    ]));
    for key in [
        "model_name",
        "rmse",
        "mae",
        "n_quotes",
        "skipped",
        "wall_time_seconds",
    ] {
        assert!(rec.get(key).is_some(), "missing {key}");
    }
    let residuals = rec["residuals"].as_array().unwrap();
    let mean = residuals
        .iter()
        .map(|r| r["market"].as_f64().unwrap())
        .sum::<f64>()
        / residuals.len() as f64;
    assert!(rec["rmse"].as_f64().unwrap() < 0.005 * mean);
    assert!(std::fs::read_to_string(features)
        .unwrap()
        .starts_with("quote_id,date,close,sigma,r,"));

    let pass = stdout_json(&stochbs(&[
        "backtest",
        "--prices",
        &prices,
        "--quotes",
        &quotes,
        "--pricer",
        "passthrough",
        "--json",
    ]));
    assert_eq!(pass["rmse"], 0.0);
}

#[test]
fn backtest_requires_data() {
    let out = stochbs(&["backtest"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compare_without_predictions_degrades() {
    let dir = tempfile::tempdir().unwrap();
    let (prices, quotes) = fixture(dir.path());
    let missing = dir.path().join("nope.csv");
    let out = stochbs(&[
        "compare",
        "--prices",
        &prices,
        "--quotes",
        &quotes,
        "--r0",
        "0.03",
        "--predictions",
        missing.to_str().unwrap(),
        "--json",
    ]);
    let rec = stdout_json(&out);
    assert!(rec["lstm"].is_null());
    assert!(rec["pde"]["n_quotes"].as_u64().unwrap() > 0);
    assert!(rec["notice"].as_str().unwrap().contains("nope.csv"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("notice"));
}

#[test]
fn compare_with_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let (prices, quotes) = fixture(dir.path());
    let report = stdout_json(&stochbs(&[
        "backtest", "--prices", &prices, "--quotes", &quotes, "--r0", "0.03", "--json",
    ]));
    let residuals = report["residuals"].as_array().unwrap();
    let preds = dir.path().join("preds.csv");
    let mut body = String::from("quote_id,predicted_price\n");
    for r in residuals {
        let market = r["market"].as_f64().unwrap();
        body.push_str(&format!(
            "{},{}\n",
            r["quote_id"].as_str().unwrap(),
            market + 0.5
        ));
    }
    std::fs::write(&preds, &body).unwrap();
    let rec = stdout_json(&stochbs(&[
        "compare",
        "--prices",
        &prices,
        "--quotes",
        &quotes,
        "--r0",
        "0.03",
        "--predictions",
        preds.to_str().unwrap(),
        "--json",
    ]));
    let lstm_rmse = rec["lstm"]["rmse"].as_f64().unwrap();
    assert!((lstm_rmse - 0.5).abs() < 1e-9);
    let delta = rec["rmse_delta"].as_f64().unwrap();
    let pde_rmse = rec["pde"]["rmse"].as_f64().unwrap();
    assert!((delta - (pde_rmse - lstm_rmse)).abs() < 1e-12);

    // drop one row: the error names the missing quote
    let mut lines: Vec<&str> = body.lines().collect();
    let dropped = lines.remove(3).split(',').next().unwrap().to_owned();
    std::fs::write(&preds, lines.join("\n")).unwrap();
    let out = stochbs(&[
        "compare",
        "--prices",
        &prices,
        "--quotes",
        &quotes,
        "--predictions",
        preds.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(&dropped));
}
