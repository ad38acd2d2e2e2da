use std::path::PathBuf;
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use trunctail::estimators::{EstimatorKind, EstimatorOptions, PreparedSample};
use trunctail::kernels::biweight_kernel;
use trunctail::model::ObservedSample;
use trunctail::simulation::rt_estimate;
use trunctail::threshold::RtConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trunctail"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn config(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(o: &Output) -> serde_json::Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

#[test]
fn hill_on_powers_of_two() {
    let f = fixture("powers_of_two.csv");
    for est in ["hill", "kernel", "bmn"] {
        let mut args = vec!["estimate", f.to_str().unwrap(), "--k", "2", "--json", "--estimator", est];
        if est == "kernel" {
            args.extend(["--kernel", "indicator"]);
        }
        let o = run(&args);
        assert!(o.status.success(), "{}", stderr(&o));
        let v = json(&o)["gamma1_hat"].as_f64().unwrap();
        assert!((v - 1.5 * 2f64.ln()).abs() < 1e-12, "{est}: {v}");
    }
}

#[test]
fn small_k_is_a_usage_error() {
    let f = fixture("powers_of_two.csv");
    for k in ["0", "1", "-3"] {
        let o = run(&["estimate", f.to_str().unwrap(), "--k", k]);
        assert_eq!(o.status.code(), Some(2));
        assert!(stderr(&o).contains("k must be ≥ 2"), "{}", stderr(&o));
    }
}

#[test]
fn malformed_csv_names_the_line() {
    let o = run(&["estimate", fixture("malformed.csv").to_str().unwrap(), "--k", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("row 3") && err.contains("oops"), "{err}");
}

#[test]
fn missing_data_file_is_a_usage_error() {
    let o = run(&["estimate", "/nonexistent/data.csv", "--k", "2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn k_auto_matches_library() {
    let f = fixture("burr_p09.csv");
    let o = run(&["estimate", f.to_str().unwrap(), "--k-auto", "--json"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let out = json(&o);

    let sample = ObservedSample::from_csv(std::fs::File::open(&f).unwrap()).unwrap();
    let prepared = PreparedSample::new(&sample, EstimatorOptions::default());
    let (k, g) = rt_estimate(&prepared, EstimatorKind::Kernel, &biweight_kernel(), &RtConfig::default()).unwrap();
    assert_eq!(out["k"].as_u64().unwrap() as usize, k);
    assert_eq!(out["gamma1_hat"].as_f64().unwrap(), g);
    assert_eq!(out["n"].as_u64().unwrap() as usize, sample.len());
    assert_eq!(out["estimator"], "kernel");
}

#[test]
fn output_is_reproducible() {
    let f = fixture("burr_p09.csv");
    let args = ["estimate", f.to_str().unwrap(), "--k-auto", "--estimator", "gs"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn k_and_k_auto_conflict() {
    let f = fixture("burr_p09.csv");
    let o = run(&["estimate", f.to_str().unwrap(), "--k", "10", "--k-auto"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn dn_dump_writes_curve() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("dn.csv");
    let f = fixture("burr_p09.csv");
    let o = run(&["estimate", f.to_str().unwrap(), "--k", "30", "--dn-dump", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,dn"));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(first, vec![1.0, 0.0]);
    assert_eq!(text.lines().count(), 201);
}

#[test]
fn smoke_simulation_is_fast_and_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report.csv");
    let start = Instant::now();
    let o = run(&["simulate", config("smoke.cfg").to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(start.elapsed() < Duration::from_secs(10));
    let report = std::fs::read_to_string(&out).unwrap();
    assert!(report.starts_with("N,mean_n,p,gamma1,kernel,estimator,abs_bias,rmse,failures\n"));
    // 2 cells x 3 estimators
    assert_eq!(report.lines().count(), 7);
}

#[test]
fn simulation_thread_count_does_not_change_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config("smoke.cfg");
    let mut reports = Vec::new();
    for threads in ["1", "4"] {
        let out = dir.path().join(format!("r{threads}.csv"));
        let o = run(&["--threads", threads, "simulate", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
        assert!(o.status.success());
        reports.push(std::fs::read(&out).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
}

#[test]
fn missing_config_is_a_usage_error() {
    let o = run(&["simulate", "/nonexistent/grid.cfg"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.cfg");
    std::fs::write(&path, "gamma1 = 0.6\nreplicatez = 10\n").unwrap();
    let o = run(&["simulate", path.to_str().unwrap(), "--out", dir.path().join("x.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("replicatez"), "{}", stderr(&o));
}

#[test]
fn asymptotics_emits_moments() {
    let o = run(&[
        "asymptotics", "--gamma1", "0.6", "--p", "0.7", "--lambda", "1", "--mc-paths", "2000", "--mc-grid", "1000",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let v = json(&o);
    for key in ["mu", "sigma2", "quadrature_error", "mc_sigma2", "mc_stderr"] {
        assert!(v[key].is_number(), "{key} missing in {v}");
    }
    let o = run(&["asymptotics", "--gamma1", "1", "--lambda", "1", "--kernel", "indicator", "--no-mc"]);
    let v = json(&o);
    assert!((v["mu"].as_f64().unwrap() - 0.5).abs() < 1e-10);
    assert!((v["sigma2"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!(v["mc_sigma2"].is_null());
}

#[test]
fn printed_form_divergence_is_reported() {
    let o = run(&["asymptotics", "--gamma1", "0.6", "--gamma2", "1.4", "--phi-form", "printed", "--no-mc"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!stderr(&o).is_empty());
}

#[test]
fn selftest_passes_and_flags_corrupted_kernel() {
    let o = run(&["selftest"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(!stdout(&o).contains("FAIL"));
    let o = run(&["selftest", "--corrupt-kernel"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("FAIL  kernel corrupted-biweight [C3]"), "{}", stdout(&o));
}
