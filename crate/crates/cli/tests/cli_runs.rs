use std::fs;
use std::path::Path;
use std::process::Command;

use taylor_pn::{run, Experiment, ExperimentConfig, RunManifest};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_taylor-pn"))
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let (header, rows) = read_csv(path);
    let i = header.iter().position(|h| h == name).unwrap();
    rows.iter().map(|r| r[i].parse().unwrap()).collect()
}

fn quick(experiment: Experiment, dir: &Path) -> ExperimentConfig {
    let cfg = ExperimentConfig::new(experiment, 7, dir);
    match experiment {
        Experiment::FitzhughNagumo => cfg.with_override("reference_steps", 10_000),
        Experiment::Tracking => cfg.with_override("steps", 20),
        _ => cfg,
    }
}

#[test]
fn reruns_with_the_same_seed_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for e in Experiment::ALL {
        let a = run(&quick(e, &tmp.path().join(format!("{e}_a")))).unwrap();
        let b = run(&quick(e, &tmp.path().join(format!("{e}_b")))).unwrap();
        assert!(!a.manifest.files.is_empty());
        assert_eq!(a.manifest.files, b.manifest.files, "{e}");
    }
}

#[test]
fn different_seeds_change_tracking_output() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run(&quick(Experiment::Tracking, &tmp.path().join("a"))).unwrap();
    let mut cfg = quick(Experiment::Tracking, &tmp.path().join("b"));
    cfg.seed = 8;
    let b = run(&cfg).unwrap();
    assert_ne!(a.manifest.files, b.manifest.files);
}

#[test]
fn manifest_lists_every_file_with_its_hash() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&quick(Experiment::Logistic, tmp.path()).with_override("steps", "10,20")).unwrap();
    let manifest = RunManifest::read(tmp.path()).unwrap();
    assert_eq!(manifest, out.manifest);
    assert_eq!(manifest.files.len(), 6);
    for f in &manifest.files {
        let bytes = fs::read(tmp.path().join(&f.path)).unwrap();
        assert_eq!(taylor_pn::output::sha256_hex(&bytes), f.sha256);
    }
    assert_eq!(manifest.overrides["steps"], "10,20");
}

#[test]
fn csv_values_round_trip_exactly() {
    let tmp = tempfile::tempdir().unwrap();
    run(&quick(Experiment::PosteriorDemo, tmp.path())).unwrap();
    let path = tmp.path().join("posterior_n2.csv");
    let (header, rows) = read_csv(&path);
    assert_eq!(header, ["x", "mean", "lower95", "upper95"]);
    assert_eq!(rows.len(), 400);
    for row in &rows {
        for cell in row {
            let v: f64 = cell.parse().unwrap();
            assert_eq!(probtaylor::io::format_real(v), *cell);
        }
    }
    let xs = column(&path, "x");
    assert_eq!(xs[0], -1.5);
    assert!((xs[399] - 2.5).abs() < 1e-15);
}

#[test]
fn posterior_demo_matches_taylor_polynomials() {
    let tmp = tempfile::tempdir().unwrap();
    run(&quick(Experiment::PosteriorDemo, tmp.path())).unwrap();
    let d = |k: i32| 3f64.powi(k) * (1.5 + k as f64 * std::f64::consts::FRAC_PI_2).sin();
    for n in 0..=3 {
        let path = tmp.path().join(format!("posterior_n{n}.csv"));
        let xs = column(&path, "x");
        let mean = column(&path, "mean");
        let (lo, hi) = (column(&path, "lower95"), column(&path, "upper95"));
        for i in 0..xs.len() {
            let z = xs[i] - 0.5;
            let mut fact = 1.0;
            let mut taylor = 0.0;
            for k in 0..=n {
                if k > 0 {
                    fact *= k as f64;
                }
                taylor += d(k) * z.powi(k) / fact;
            }
            assert!((mean[i] - taylor).abs() < 1e-10 * (1.0 + taylor.abs()));
            // 1.96·σ·sqrt(exp tail), with σ = λ = 1
            let tail: f64 = (n + 1..60).map(|p| z.powi(2 * p) / (1..=p).map(f64::from).product::<f64>()).sum();
            assert!(((hi[i] - lo[i]) - 2.0 * 1.96 * tail.sqrt()).abs() < 1e-9 * (1.0 + hi[i] - lo[i]));
        }
    }
}

#[test]
fn noise_free_tracking_follows_the_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::new(Experiment::Tracking, 3, tmp.path())
        .with_override("q1", 0)
        .with_override("q2", 0)
        .with_override("obs_var", 0);
    run(&cfg).unwrap();
    let rmse = read_csv(&tmp.path().join("rmse.csv"));
    let col = rmse.0.iter().position(|h| h == "rmse_position").unwrap();
    for row in &rmse.1 {
        let v: f64 = row[col].parse().unwrap();
        if row[0] != "ukf" {
            assert!(v < 1e-3, "{}: {v}", row[0]);
        }
    }
    let (_, rows) = read_csv(&tmp.path().join("trace_taylor_ekf.csv"));
    assert_eq!(rows.len(), 51);
}

#[test]
fn multi_seed_tracking_writes_aggregates() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = quick(Experiment::Tracking, tmp.path()).with_override("seeds", 3);
    let out = run(&cfg).unwrap();
    assert_eq!(out.manifest.files.len(), 3 * 4 + 2);
    let (_, by_seed) = read_csv(&tmp.path().join("rmse_by_seed.csv"));
    assert_eq!(by_seed.len(), 9);
    assert_eq!(by_seed[0][0], "7");
    assert!(tmp.path().join("seeds/seed_9/trace_ekf.csv").exists());
    let (_, agg) = read_csv(&tmp.path().join("rmse_aggregate.csv"));
    assert_eq!(agg.len(), 3);
}

#[test]
fn logistic_reference_is_inside_the_band_at_the_end() {
    let tmp = tempfile::tempdir().unwrap();
    run(&quick(Experiment::Logistic, tmp.path())).unwrap();
    let p = tmp.path().join("probabilistic_N10.csv");
    let (y, eps) = (column(&p, "y_0"), column(&p, "eps_0"));
    let exact = 0.1 * 9f64.exp() / (1.0 + 0.1 * (9f64.exp() - 1.0));
    assert!((exact - 0.99889).abs() < 1e-5);
    assert!((column(&tmp.path().join("reference_N10.csv"), "y_0")[10] - exact).abs() < 1e-12);
    assert!((y[10] - exact).abs() <= 1.96 * eps[10]);
}

#[test]
fn convergence_writes_one_row_per_step_count() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&ExperimentConfig::new(Experiment::Convergence, 0, tmp.path()).with_override("steps", "20,40,80")).unwrap();
    let (_, rows) = read_csv(&tmp.path().join("convergence.csv"));
    assert_eq!(rows.len(), 3);
    let (_, orders) = read_csv(&tmp.path().join("orders.csv"));
    assert_eq!(orders.len(), 2);
    let ok = orders.iter().all(|r| r[4] == "true");
    assert_eq!(out.exit_code(), if ok { 0 } else { 2 });
}

#[test]
fn wide_brackets_give_exit_code_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let status = bin()
        .args(["convergence", "--out"])
        .arg(tmp.path())
        .args(["--set", "eps_order_min=0", "--set", "eps_order_max=5"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0));
}

#[test]
fn single_step_count_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = ExperimentConfig::new(Experiment::Convergence, 0, tmp.path()).with_override("steps", "20");
    let err = run(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 1);
    assert!(!tmp.path().join("manifest.json").exists());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let code = |args: &[&str]| bin().args(args).arg("--out").arg(tmp.path()).output().unwrap().status.code();
    assert_eq!(code(&["logistic"]), Some(0));
    assert_eq!(code(&["no-such-experiment"]), Some(1));
    assert_eq!(code(&["logistic", "--set", "unknown=1"]), Some(1));
    assert_eq!(code(&["logistic", "--set", "steps"]), Some(1));
    assert_eq!(code(&["logistic", "--set", "r=abc"]), Some(1));
    assert_eq!(code(&["logistic", "--seed", "-3"]), Some(1));
    assert_eq!(code(&["convergence", "--set", "error_order_min=5"]), Some(2));
    assert_eq!(bin().arg("--help").output().unwrap().status.code(), Some(0));
    assert_eq!(bin().arg("--version").output().unwrap().status.code(), Some(0));
}

#[test]
fn default_output_directory_is_per_experiment() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin().arg("logistic").current_dir(tmp.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(tmp.path().join("results/logistic/manifest.json").exists());
    assert!(String::from_utf8(out.stdout).unwrap().contains("N = 10"));
}
