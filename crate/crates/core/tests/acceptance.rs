//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any failure.

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use common::{close, g_biweight, g_triweight, Naive};
use trunctail::asymptotics::{gamma_process_variance, limit_moments, limit_moments_with, AsymptoticParams, PhiForm};
use trunctail::estimators::{
    bmn_estimate, gs_estimate, hill_estimate, kernel_estimate, EstimatorKind, EstimatorOptions, PreparedSample,
};
use trunctail::kernels::{biweight_kernel, indicator_kernel, triweight_kernel, BuiltinKernel, Kernel};
use trunctail::model::{complete_data_mode, derive_seed, sample_truncated, TruncationDesign};
use trunctail::simulation::{run_grid, ReportRow, SimulationConfig, SimulationReport};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

// 1. complete data + indicator kernel reduces kernel and BMN to Hill
fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst: f64 = 0.0;
    let mut pairs = 0usize;
    for _ in 0..100 {
        let n = rng.random_range(3..=200);
        let gamma = rng.random_range(0.2..2.0);
        let xs: Vec<f64> = (0..n).map(|_| (1.0 - rng.random::<f64>()).powf(-gamma)).collect();
        let sample = complete_data_mode(&xs).unwrap();
        for k in 2..n {
            let hill = hill_estimate(&xs, k).unwrap().gamma1_hat;
            let kern = kernel_estimate(&sample, k, &indicator_kernel()).unwrap().gamma1_hat;
            let bmn = bmn_estimate(&sample, k).unwrap().gamma1_hat;
            worst = worst.max((kern - hill).abs()).max((bmn - hill).abs());
            pairs += 1;
        }
    }
    outcome(worst <= 1e-12, format!("{pairs} (sample, k) pairs, max deviation {worst:.2e}"))
}

// 2. estimators against naive transcriptions on 50 small truncated samples
fn criterion_2() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut pairs = 0usize;
    let mut mismatches = Vec::new();
    for seed in 0..50u64 {
        let capital_n = 20 + (seed % 14) as usize;
        let p = [0.7, 0.8, 0.9][(seed % 3) as usize];
        let design = TruncationDesign::from_observed_fraction(0.6, p, 0.25, capital_n).unwrap();
        let sample = sample_truncated(&design, 9000 + seed).unwrap();
        let naive = Naive::new(&sample);
        for k in 2..sample.len() {
            let got = [
                kernel_estimate(&sample, k, &biweight_kernel()).unwrap().gamma1_hat,
                kernel_estimate(&sample, k, &triweight_kernel()).unwrap().gamma1_hat,
                bmn_estimate(&sample, k).unwrap().gamma1_hat,
                gs_estimate(&sample, k).unwrap().gamma1_hat,
            ];
            let want = [naive.kernel(k, g_biweight), naive.kernel(k, g_triweight), naive.bmn(k), naive.gs(k)];
            for (g, w) in got.iter().zip(&want) {
                worst = worst.max((g - w).abs() / w.abs().max(1.0));
                if !close(*g, *w, 1e-12) {
                    mismatches.push((seed, k));
                }
            }
            pairs += 1;
        }
    }
    outcome(
        mismatches.is_empty(),
        format!("{pairs} (sample, k) pairs x 4 estimators, max relative deviation {worst:.2e}"),
    )
}

// 3. complete-data limit of sigma2
fn criterion_3() -> Outcome {
    let cases: [(&dyn Kernel, f64); 3] = [
        (&indicator_kernel(), 1.0),
        (&biweight_kernel(), 10.0 / 7.0),
        (&triweight_kernel(), 700.0 / 429.0),
    ];
    let mut passed = true;
    let mut parts = Vec::new();
    for gamma1 in [0.6, 1.0] {
        let params = AsymptoticParams::complete(gamma1, -1.0, 0.0).unwrap();
        for (kernel, int_k2) in &cases {
            let want = gamma1 * gamma1 * int_k2;
            let got = limit_moments(&params, *kernel).unwrap().sigma2;
            let rel = (got - want).abs() / want;
            passed &= rel <= 1e-6;
            parts.push(format!("{}@{gamma1}: {rel:.1e}", kernel.name()));
        }
    }
    outcome(
        passed,
        format!(
            "relative errors {}; triweight uses int K^2 = 700/429, the stated 2450/3003 is half of it",
            parts.join(", ")
        ),
    )
}

// 4. quadrature sigma2 against the Gamma-process Monte Carlo
fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut passed = true;
    let mut lines = Vec::new();
    let mut max_z: f64 = 0.0;
    for gamma1 in [0.6, 0.8] {
        for p in [0.7, 0.8, 0.9] {
            for kernel in [BuiltinKernel::Biweight, BuiltinKernel::Triweight] {
                let params = AsymptoticParams::from_observed_fraction(gamma1, p, -1.0, 0.0).unwrap();
                let q = limit_moments(&params, &kernel).unwrap();
                let mc = gamma_process_variance(&params, &kernel, 10_000, 4000, 7).unwrap();
                let z = (mc.variance - q.sigma2) / mc.stderr;
                max_z = max_z.max(z.abs());
                passed &= z.abs() <= 3.0;
                let printed = match limit_moments_with(&params, &kernel, PhiForm::Printed) {
                    Ok(_) => "printed form converges".to_string(),
                    Err(_) => "printed form diverges".to_string(),
                };
                lines.push(format!(
                    "    gamma1 {gamma1} p {p} {kernel}: quadrature {:.5}, MC {:.5} +- {:.5}, z {z:+.2}; {printed}",
                    q.sigma2, mc.variance, mc.stderr
                ));
            }
        }
    }
    outcome(
        passed,
        format!(
            "12 cells, 10^4 paths each, max |z| {max_z:.2}, {:.0?}\n{}",
            start.elapsed(),
            lines.join("\n")
        ),
    )
}

fn row(rows: &[ReportRow], n: usize, p: f64, e: EstimatorKind) -> &ReportRow {
    rows.iter()
        .find(|r| r.capital_n == n && r.p == p && r.estimator == e)
        .expect("grid cell present")
}

// 5. two reference cells of the default grid at reduced scale
fn criterion_5(report: &SimulationReport) -> Outcome {
    let a = row(&report.rows, 1000, 0.9, EstimatorKind::Kernel);
    let b = row(&report.rows, 1000, 0.7, EstimatorKind::Kernel);
    let ok_a_bias = (a.abs_bias - 0.006).abs() <= 0.03;
    let ok_a_rmse = (a.rmse - 0.163).abs() <= 0.06;
    let ok_b_rmse = (b.rmse - 0.284).abs() <= 0.10;
    outcome(
        ok_a_bias && ok_a_rmse && ok_b_rmse,
        format!(
            "(1000, 0.9) abs_bias {:.3} (target 0.006 +- 0.03), rmse {:.3} (0.163 +- 0.06); (1000, 0.7) rmse {:.3} (0.284 +- 0.10)",
            a.abs_bias, a.rmse, b.rmse
        ),
    )
}

// 6. kernel estimator has the smallest bias in small samples
fn criterion_6(report: &SimulationReport, replicates: usize) -> Outcome {
    let mut wins = 0;
    let mut cells = Vec::new();
    for n in [150, 200, 300] {
        for p in [0.7, 0.8, 0.9] {
            let kr = row(&report.rows, n, p, EstimatorKind::Kernel);
            let k = kr.abs_bias;
            // Monte Carlo standard error of the kernel estimator's mean
            let se = ((kr.rmse * kr.rmse - k * k).max(0.0) / (replicates - kr.failures) as f64).sqrt();
            let b = row(&report.rows, n, p, EstimatorKind::Bmn).abs_bias;
            let g = row(&report.rows, n, p, EstimatorKind::Gs).abs_bias;
            let win = k < b && k < g;
            wins += win as usize;
            cells.push(format!(
                "    N {n} p {p}: kernel {k:.3} (se {se:.3}), bmn {b:.3}, gs {g:.3}{}",
                if win { "" } else { "  <- kernel not smallest" }
            ));
        }
    }
    outcome(
        wins as f64 >= 0.8 * 9.0,
        format!("kernel smallest in {wins}/9 cells (need >= 80%)\n{}", cells.join("\n")),
    )
}

// 7. rmse at p = 0.9 no larger than at p = 0.7
fn criterion_7(report: &SimulationReport, n_values: &[usize]) -> Outcome {
    let ok = n_values
        .iter()
        .filter(|&&n| {
            row(&report.rows, n, 0.9, EstimatorKind::Kernel).rmse <= row(&report.rows, n, 0.7, EstimatorKind::Kernel).rmse
        })
        .count();
    outcome(
        ok as f64 >= 0.8 * n_values.len() as f64,
        format!("holds for {ok}/{} values of N", n_values.len()),
    )
}

// 8. closed-form mu and exact linearity in lambda
fn criterion_8() -> Outcome {
    let params = AsymptoticParams::complete(1.0, -1.0, 1.0).unwrap();
    let mu = limit_moments(&params, &indicator_kernel()).unwrap().mu;
    let closed = (mu - 0.5).abs() <= 1e-10;
    let mut linear = true;
    for (g2, kernel) in [(None, BuiltinKernel::Indicator), (Some(1.4), BuiltinKernel::Biweight)] {
        let base = AsymptoticParams::new(0.6, g2, -1.0, 1.0).unwrap();
        let unit = limit_moments(&base, &kernel).unwrap().mu;
        for lambda in [-2.0, 0.0, 0.5, 3.0] {
            let p = AsymptoticParams::new(0.6, g2, -1.0, lambda).unwrap();
            linear &= limit_moments(&p, &kernel).unwrap().mu == lambda * unit;
        }
    }
    outcome(
        closed && linear,
        format!("mu = {mu} (want 0.5 to 1e-10); linear in lambda exactly: {linear}"),
    )
}

// 9. the full grid is byte-identical under 1 and 8 worker threads
fn criterion_9(cfg: &SimulationConfig, eight: &SimulationReport) -> Outcome {
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let one = pool.install(|| run_grid(cfg)).unwrap();
    let same = one.to_csv().as_bytes() == eight.to_csv().as_bytes();
    outcome(
        same,
        format!(
            "{} rows, {} replicates per cell, identical: {same} ({:.0?})",
            one.rows.len(),
            cfg.replicates,
            start.elapsed()
        ),
    )
}

// not a numbered criterion: standardized estimates look normal at N = 5000
fn normality_check() -> Outcome {
    let design = TruncationDesign::from_observed_fraction(0.6, 0.9, 0.25, 5000).unwrap();
    let k = 300;
    let mut z: Vec<f64> = (0..1000u64)
        .into_par_iter()
        .map(|r| {
            let sample = sample_truncated(&design, derive_seed(42, &[r])).unwrap();
            let prepared = PreparedSample::new(&sample, EstimatorOptions::default());
            let g = prepared.kernel(k, &biweight_kernel(), false).unwrap().gamma1_hat;
            (k as f64).sqrt() * (g - 0.6)
        })
        .collect();
    let n = z.len() as f64;
    let mean = z.iter().sum::<f64>() / n;
    let sd = (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    z.sort_by(f64::total_cmp);
    let normal = Normal::new(mean, sd).unwrap();
    let d = z
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = normal.cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    let critical = 1.628 / n.sqrt();
    outcome(
        d < critical,
        format!("k = {k}, 1000 replicates, KS distance {d:.4} vs 1% critical value {critical:.4} (moments fitted)"),
    )
}

fn main() {
    let total = Instant::now();
    let mut results: Vec<(String, Outcome)> = Vec::new();
    let mut report = |name: String, o: Outcome| {
        println!("{name}: {}  {}", if o.passed { "PASS" } else { "FAIL" }, o.detail);
        results.push((name, o));
    };

    report("criterion 1".into(), criterion_1());
    report("criterion 2".into(), criterion_2());
    report("criterion 3".into(), criterion_3());
    report("criterion 4".into(), criterion_4());

    let cfg = SimulationConfig::default();
    let start = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(8).build().unwrap();
    let grid = pool.install(|| run_grid(&cfg)).unwrap();
    println!(
        "  (default grid: {} replicates per cell, master seed {}, {:.0?})",
        cfg.replicates,
        cfg.master_seed,
        start.elapsed()
    );
    report("criterion 5".into(), criterion_5(&grid));
    report("criterion 6".into(), criterion_6(&grid, cfg.replicates));
    report("criterion 7".into(), criterion_7(&grid, &cfg.n_values));
    report("criterion 8".into(), criterion_8());
    report("criterion 9".into(), criterion_9(&cfg, &grid));
    report("supplementary normality".into(), normality_check());

    let failed: Vec<&str> = results.iter().filter(|(_, o)| !o.passed).map(|(n, _)| n.as_str()).collect();
    println!("acceptance finished in {:.0?}", total.elapsed());
    if !failed.is_empty() {
        println!("failed: {}", failed.join(", "));
        std::process::exit(1);
    }
}
