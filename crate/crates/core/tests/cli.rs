use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lpsmooth::ged::Ged;
use lpsmooth::localreg::Dataset1D;
use lpsmooth::rng::child_rng;
use lpsmooth::tuning::{tune, TuneOptions};

fn lpsmooth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lpsmooth"))
        .args(args)
        .env_remove("LPSMOOTH_THREADS")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_csv(dir: &Path, name: &str, x: &[f64], y: &[f64]) -> PathBuf {
    let mut body = String::from("x,y\n");
    for (a, b) in x.iter().zip(y) {
        body.push_str(&format!("{a},{b}\n"));
    }
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn read_column(path: &Path, name: &str) -> Vec<f64> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let idx = reader.headers().unwrap().iter().position(|h| h == name).unwrap();
    reader
        .records()
        .map(|r| r.unwrap()[idx].parse().unwrap())
        .collect()
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn noisy_design(n: usize, p: f64, seed: u64, m: impl Fn(f64) -> f64) -> (Vec<f64>, Vec<f64>) {
    let x: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    let e = Ged::new(0.0, 0.2, p).unwrap().sample_n(n, &mut child_rng(seed, 0));
    let y = x.iter().zip(&e).map(|(x, e)| m(*x) + e).collect();
    (x, y)
}

#[test]
fn fit_reproduces_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let x: Vec<f64> = (0..40).map(|i| i as f64 / 39.0).collect();
    // tiny deterministic wiggle so the residuals are not all identical
    let y: Vec<f64> = x
        .iter()
        .enumerate()
        .map(|(i, x)| 1.0 + 2.0 * x + 1e-6 * if i % 2 == 0 { 1.0 } else { -1.0 })
        .collect();
    let input = write_csv(dir.path(), "line.csv", &x, &y);
    let out = dir.path().join("fit.csv");
    let status = lpsmooth(&["fit", "--input", path_str(&input), "--output", path_str(&out)]);
    assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
    let grid = read_column(&out, "x");
    let m_hat = read_column(&out, "m_hat");
    for (g, m) in grid.iter().zip(&m_hat) {
        assert!((m - (1.0 + 2.0 * g)).abs() < 1e-4, "{g}: {m}");
    }
    let sidecar = read_json(&dir.path().join("fit.json"));
    for key in ["p_hat", "h2", "hp", "kernel", "seed", "diagnostics", "config"] {
        assert!(sidecar.get(key).is_some(), "sidecar lacks {key}");
    }
}

#[test]
fn forced_p2_matches_least_squares_path() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = noisy_design(80, 4.0, 3, |x| (2.0 * x).sin());
    let input = write_csv(dir.path(), "d.csv", &x, &y);
    let out = dir.path().join("fit.csv");
    let run = lpsmooth(&["fit", "--input", path_str(&input), "--output", path_str(&out), "--p", "2"]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let cli_m = read_column(&out, "m_hat");

    let data = Dataset1D::new(read_column(&input, "x"), read_column(&input, "y")).unwrap();
    let tuned = tune(&data, &TuneOptions { p_override: Some(2.0), ..TuneOptions::default() }, None).unwrap();
    assert_eq!(tuned.llp_spec.bandwidth, tuned.h2);
    assert_eq!(cli_m, tuned.lls.m_hat);
}

#[test]
fn malformed_csv_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "x,y\n0,1\n0.5,1\n1,oops\n").unwrap();
    let out = dir.path().join("fit.csv");
    let run = lpsmooth(&["fit", "--input", path_str(&input), "--output", path_str(&out)]);
    assert_eq!(run.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&run.stderr).contains("line 4"));
}

#[test]
fn identical_responses_are_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let x: Vec<f64> = (0..30).map(|i| i as f64).collect();
    let input = write_csv(dir.path(), "flat.csv", &x, &vec![5.0; 30]);
    let out = dir.path().join("p.json");
    let run = lpsmooth(&["estimate-p", "--input", path_str(&input), "--output", path_str(&out)]);
    let code = run.status.code();
    if code == Some(0) {
        assert_eq!(read_json(&out)["p_source"], "degenerate_fallback");
    } else {
        assert_eq!(code, Some(3), "{}", String::from_utf8_lossy(&run.stderr));
    }
}

#[test]
fn unknown_simulation_inputs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = path_str(dir.path());
    assert_eq!(lpsmooth(&["simulate", "--function", "9", "--reps", "2", "--out-dir", d]).status.code(), Some(2));
    assert_eq!(lpsmooth(&["simulate", "--errors", "cauchy", "--reps", "2", "--out-dir", d]).status.code(), Some(2));
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    let sub = dir.path().join("run");
    for threads in ["1", "3"] {
        let run = lpsmooth(&[
            "--threads", threads, "simulate", "--function", "1,3", "--errors", "uniform,ged:0.2:4", "--n", "50",
            "--reps", "6", "--seed", "7", "--out-dir", path_str(&sub),
        ]);
        assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
        outputs.push((
            std::fs::read(sub.join("simulation.csv")).unwrap(),
            std::fs::read(sub.join("simulation.json")).unwrap(),
        ));
    }
    assert_eq!(outputs[0], outputs[1]);
    let csv = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert!(csv.starts_with("function,error_model,n,p_hat,h2,mse_lls,h_p,mse_llp,std_mse_lls,std_mse_llp"));
    assert_eq!(csv.lines().count(), 5);
}

#[test]
fn single_replicate_leaves_std_empty() {
    let dir = tempfile::tempdir().unwrap();
    let run = lpsmooth(&["simulate", "--reps", "1", "--n", "60", "--out-dir", path_str(dir.path())]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let path = dir.path().join("simulation.csv");
    let mut reader = csv::Reader::from_path(&path).unwrap();
    let headers = reader.headers().unwrap().clone();
    let row = reader.records().next().unwrap().unwrap();
    for name in ["std_mse_lls", "std_mse_llp"] {
        let idx = headers.iter().position(|h| h == name).unwrap();
        assert_eq!(&row[idx], "");
    }
}

#[test]
fn heavy_tailed_residuals_give_small_p() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = noisy_design(1000, 1.35, 11, |x| (1.0 + 9.0 * x).sqrt());
    let input = write_csv(dir.path(), "heavy.csv", &x, &y);
    let out = dir.path().join("p.json");
    let run = lpsmooth(&["estimate-p", "--input", path_str(&input), "--output", path_str(&out)]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let p_hat = read_json(&out)["p_hat"].as_f64().unwrap();
    assert!((p_hat - 1.35).abs() <= 0.35, "p_hat = {p_hat}");
}

#[test]
fn bands_bracket_the_fit_grid() {
    let dir = tempfile::tempdir().unwrap();
    let (x, y) = noisy_design(100, 4.0, 5, |x| (2.0 * x).sin());
    let input = write_csv(dir.path(), "d.csv", &x, &y);
    let out = dir.path().join("bands.csv");
    let run = lpsmooth(&[
        "bands", "--input", path_str(&input), "--output", path_str(&out), "--boot-reps", "200", "--grid-size", "21",
    ]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let lower = read_column(&out, "lower");
    let upper = read_column(&out, "upper");
    assert_eq!(lower.len(), 21);
    assert!(lower.iter().zip(&upper).all(|(l, u)| l <= u));
}
