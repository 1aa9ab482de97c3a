use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mrs_core::model::presets;
use mrs_core::oracle::brute_likelihood;
use mrs_core::state_space::cardinality;
use mrs_core::{MrsModel, Regime};
use tempfile::TempDir;

fn mrs(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrs")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = mrs(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

/// Data rows of a CSV written by the binary (comment and header dropped).
fn rows(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = fs::read_to_string(path).unwrap();
    let mut lines = text.lines().filter(|l| !l.starts_with('#'));
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    (header, lines.map(|l| l.split(',').map(String::from).collect()).collect())
}

fn write_model(dir: &TempDir, name: &str, m: &MrsModel) -> String {
    let p = dir.path().join(name);
    fs::write(&p, m.to_kv()).unwrap();
    p.to_str().unwrap().to_string()
}

fn simulate_to(dir: &TempDir, model: &str, t: usize, seed: u64, name: &str) -> String {
    let out = dir.path().join(name);
    let out_s = out.to_str().unwrap().to_string();
    ok(&["simulate", "--model", model, "--T", &t.to_string(), "--seed", &seed.to_string(), "-o", &out_s]);
    out_s
}

#[test]
fn simulate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let model = write_model(&dir, "model1.kv", &presets::model1());
    let a = simulate_to(&dir, &model, 400, 7, "a.csv");
    let b = simulate_to(&dir, &model, 400, 7, "b.csv");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let text = fs::read_to_string(&a).unwrap();
    assert!(text.starts_with("# mrs simulate"));
    let (header, body) = rows(Path::new(&a));
    assert_eq!(header, ["t", "x", "r"]);
    assert_eq!(body.len(), 401);
}

#[test]
fn simulate_horizon_zero_gives_one_row() {
    let dir = TempDir::new().unwrap();
    let out = simulate_to(&dir, "preset:model2", 0, 1, "one.csv");
    let (_, body) = rows(Path::new(&out));
    assert_eq!(body.len(), 1);
    assert_eq!(body[0][0], "0");
}

#[test]
fn missing_model_file_exits_2_naming_the_path() {
    let out = mrs(&["simulate", "--model", "/no/such/model.kv", "--T", "5"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/model.kv"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(mrs(&["simulate", "--T", "5"]).status.code(), Some(2));
    assert_eq!(mrs(&["bench", "--truncation", "lots"]).status.code(), Some(2));
}

#[test]
fn one_iteration_fit_has_two_trajectory_rows() {
    let dir = TempDir::new().unwrap();
    let model = write_model(&dir, "start.kv", &presets::model1());
    let data = simulate_to(&dir, &model, 100, 3, "data.csv");
    let outdir = dir.path().join("fit");
    let outdir_s = outdir.to_str().unwrap();
    ok(&["fit", "--data", &data, "--model", &model, "--restarts", "1", "--max-iters", "1", "-o", outdir_s]);
    let (header, body) = rows(&outdir.join("trajectory.csv"));
    assert_eq!(header, ["iteration", "loglik"]);
    assert_eq!(body.len(), 2);
    let (_, restarts) = rows(&outdir.join("restarts.csv"));
    assert_eq!(restarts.len(), 1);
    assert_eq!(restarts[0][4], "max-iters");
    let params = fs::read_to_string(outdir.join("params.kv")).unwrap();
    assert!(MrsModel::from_kv(&params).is_ok());
}

#[test]
fn emlike_fit_is_flagged_approximate() {
    let dir = TempDir::new().unwrap();
    let data = simulate_to(&dir, "preset:emlike-failure", 300, 4, "data.csv");
    let outdir = dir.path().join("fit");
    let out = ok(&[
        "fit",
        "--data",
        &data,
        "--model",
        "preset:emlike-failure",
        "--algorithm",
        "emlike",
        "--truncation",
        "40",
        "-o",
        outdir.to_str().unwrap(),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("approximate"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(outdir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["approximate"], serde_json::Value::Bool(true));
    assert!(fs::read_to_string(outdir.join("params.kv")).unwrap().contains("# approximate = true"));
}

#[test]
fn fit_reports_distance_between_truncated_and_exact() {
    let dir = TempDir::new().unwrap();
    let data = simulate_to(&dir, "preset:model1", 150, 5, "data.csv");
    let exact = dir.path().join("exact");
    ok(&["fit", "--data", &data, "--model", "preset:model1", "--truncation", "none", "-o", exact.to_str().unwrap()]);
    let exact_params = exact.join("params.kv");
    let out = ok(&[
        "fit",
        "--data",
        &data,
        "--model",
        "preset:model1",
        "--truncation",
        "40",
        "--compare",
        exact_params.to_str().unwrap(),
        "-o",
        dir.path().join("trunc").to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let line = stdout.lines().find(|l| l.starts_with("sup-distance")).expect("distance reported");
    let d: f64 = line.rsplit(' ').next().unwrap().parse().unwrap();
    assert!(d < 1e-4, "{d}");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("em.kv");
    fs::write(&cfg, "max_iters = 1\nrestarts = 1\n").unwrap();
    let data = simulate_to(&dir, "preset:model1", 80, 6, "data.csv");
    let outdir = dir.path().join("fit");
    ok(&[
        "fit",
        "--data",
        &data,
        "--model",
        "preset:model1",
        "--config",
        cfg.to_str().unwrap(),
        "--max-iters",
        "2",
        "-o",
        outdir.to_str().unwrap(),
    ]);
    let (_, body) = rows(&outdir.join("trajectory.csv"));
    assert_eq!(body.len(), 3);
    let header = fs::read_to_string(outdir.join("trajectory.csv")).unwrap();
    assert!(header.lines().next().unwrap().contains("max-iters=2"));
}

#[test]
fn all_restarts_failing_exits_3() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data.csv");
    fs::write(&data, "t,x\n0,1.0\n1,2.0\n2,1.5\n3,0.5\n").unwrap();
    // The spike regime lives above 100, the base regime is fine; make both
    // regimes unable to explain the data.
    let model = MrsModel::new(
        vec![
            Regime::ShiftedLogNormal {
                mu: 0.0,
                sigma2: 1.0,
                shift: 100.0,
                orientation: mrs_core::Orientation::Up,
            },
            Regime::ShiftedLogNormal {
                mu: 0.0,
                sigma2: 1.0,
                shift: 200.0,
                orientation: mrs_core::Orientation::Up,
            },
        ],
        vec![vec![0.5, 0.5], vec![0.5, 0.5]],
        vec![0.5, 0.5],
    )
    .unwrap();
    let m = write_model(&dir, "bad.kv", &model);
    let out = mrs(&["fit", "--data", data.to_str().unwrap(), "--model", &m, "-o", dir.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn degenerate_chain_labels_everything_regime_1() {
    let dir = TempDir::new().unwrap();
    let mut m = presets::model1();
    m.transition = vec![vec![1.0, 0.0], vec![1.0, 0.0]];
    m.initial = vec![1.0, 0.0];
    let model = write_model(&dir, "stuck.kv", &m);
    let data = simulate_to(&dir, &model, 50, 2, "data.csv");
    let out = dir.path().join("smooth.csv");
    ok(&["smooth", "--model", &model, "--data", &data, "-o", out.to_str().unwrap()]);
    let (header, body) = rows(&out);
    assert_eq!(header, ["t", "p_1", "p_2", "label"]);
    assert!(body.iter().all(|r| r[3] == "1"));
}

#[test]
fn smoothed_rows_sum_to_one_and_match_oracle() {
    let dir = TempDir::new().unwrap();
    let model = presets::model2();
    let path = write_model(&dir, "m2.kv", &model);
    let data = simulate_to(&dir, &path, 5, 9, "data.csv");
    let out = dir.path().join("smooth.csv");
    ok(&["smooth", "--model", &path, "--data", &data, "-o", out.to_str().unwrap()]);
    let (_, body) = rows(&out);
    assert_eq!(body.len(), 6);

    let (_, data_rows) = rows(Path::new(&data));
    let x: Vec<f64> = data_rows.iter().map(|r| r[1].parse().unwrap()).collect();
    let brute = brute_likelihood(&model, &x, None).unwrap();
    for (t, r) in body.iter().enumerate() {
        let p: Vec<f64> = r[1..3].iter().map(|v| v.parse().unwrap()).collect();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        for i in 0..2 {
            assert!((p[i] - brute.regime_posterior[t][i]).abs() < 1e-10);
        }
    }
}

#[test]
fn smooth_rejects_labels_beyond_model() {
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data.csv");
    fs::write(&data, "t,x,r\n0,0.1,1\n1,0.2,3\n").unwrap();
    let out = mrs(&["smooth", "--model", "preset:model1", "--data", data.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn bench_single_point_and_peak_states() {
    let dir = TempDir::new().unwrap();
    let three = MrsModel::new(
        vec![
            Regime::Ar1 { alpha: 0.0, phi: 0.5, sigma2: 1.0 },
            Regime::Ar1 { alpha: 0.0, phi: -0.2, sigma2: 1.0 },
            Regime::Normal { mu: 1.0, sigma2: 1.0 },
        ],
        vec![vec![1.0 / 3.0; 3]; 3],
        vec![1.0 / 3.0; 3],
    )
    .unwrap();
    let model = write_model(&dir, "three.kv", &three);
    let out = dir.path().join("bench.csv");
    ok(&["bench", "--model", &model, "--grid", "10", "--repeats", "1", "-o", out.to_str().unwrap()]);
    let (header, body) = rows(&out);
    assert_eq!(header, ["T", "k", "M", "D", "wall_time", "peak_states"]);
    assert_eq!(body.len(), 1);
    assert_eq!(body[0][..4], ["10", "2", "3", "none"]);
    assert_eq!(body[0][5].parse::<usize>().unwrap(), cardinality(10, 2).unwrap());
}

#[test]
fn verify_passes_on_short_series() {
    ok(&["verify", "--model", "preset:model2", "--T", "6", "--seed", "3"]);
    ok(&["verify", "--model", "preset:model1", "--T", "6", "--truncation", "3"]);
    ok(&["verify", "--model", "preset:model1", "--T", "6", "--dependent"]);
}

fn write_prices(path: &Path, days: usize) {
    let mut text = String::from("timestamp,price\n");
    let start = chrono::NaiveDate::from_ymd_opt(2023, 1, 2).unwrap();
    for d in 0..days {
        let date = start + chrono::Days::new(d as u64);
        for slot in 0..48 {
            let base = 40.0 + [3.0, 2.0, 1.0, 0.0, -1.0, -2.0, -3.0][d % 7] + 0.1 * ((d * 48 + slot) % 5) as f64;
            let spike = if d == 30 { 200.0 } else { 0.0 };
            text.push_str(&format!("{}T{:02}:{:02}:00,{}\n", date, slot / 2, 30 * (slot % 2), base + spike));
        }
    }
    fs::write(path, text).unwrap();
}

#[test]
fn detrend_writes_trend_and_detrended_series() {
    let dir = TempDir::new().unwrap();
    let prices = dir.path().join("prices.csv");
    write_prices(&prices, 70);
    let outdir = dir.path().join("out");
    let out = ok(&["detrend", "--prices", prices.to_str().unwrap(), "-o", outdir.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("1 replaced"));
    let (th, trend) = rows(&outdir.join("trend.csv"));
    let (dh, det) = rows(&outdir.join("detrended.csv"));
    assert_eq!(th, ["date", "g", "h"]);
    assert_eq!(dh, ["date", "x"]);
    assert_eq!(trend.len(), 70);
    assert_eq!(det.len(), 70);
    let x30: f64 = det[30][1].parse().unwrap();
    assert!(x30 > 150.0);
}

#[test]
fn classify_writes_spike_probabilities() {
    let dir = TempDir::new().unwrap();
    let data = simulate_to(&dir, "preset:emlike-failure", 60, 8, "data.csv");
    let out = dir.path().join("classes.csv");
    ok(&[
        "classify",
        "--model",
        "preset:emlike-failure",
        "--data",
        &data,
        "--truncation",
        "40",
        "-o",
        out.to_str().unwrap(),
    ]);
    let (header, body) = rows(&out);
    assert_eq!(header, ["t", "x", "p_spike", "label"]);
    assert_eq!(body.len(), 61);
    for r in &body {
        let p: f64 = r[2].parse().unwrap();
        assert_eq!(r[3] == "spike", p > 0.5);
    }
    let bad = mrs(&["classify", "--model", "preset:model1", "--data", &data, "--spike-regime", "3"]);
    assert_eq!(bad.status.code(), Some(2));
}
