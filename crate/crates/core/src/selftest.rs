//! Built-in consistency checks behind `trunctail selftest`.

use std::fmt;

use crate::asymptotics::{gamma_process_variance, limit_moments, AsymptoticParams};
use crate::estimators::{bmn_estimate, gs_from_sorted, hill_estimate, kernel_estimate};
use crate::kernels::{conformance, indicator_kernel, Kernel, ALL_KERNELS};
use crate::model::{complete_data_mode, sample_truncated, TruncationDesign};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{tag}  {}: {}", self.name, self.detail)
    }
}

fn check(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Check {
    Check {
        name: name.into(),
        passed,
        detail: detail.into(),
    }
}

fn kernel_checks(kernel: &dyn Kernel) -> Vec<Check> {
    let failures = conformance(kernel);
    if failures.is_empty() {
        return vec![check(format!("kernel {}", kernel.name()), true, "all conditions hold")];
    }
    failures
        .into_iter()
        .map(|f| check(format!("kernel {} {}", kernel.name(), f.condition.label()), false, f.detail))
        .collect()
}

fn hill_reduction() -> Check {
    let xs: Vec<f64> = (1..=60).map(|i| (1.0 + i as f64 * 0.37).powf(1.3) + (i % 7) as f64 * 0.01).collect();
    let Ok(sample) = complete_data_mode(&xs) else {
        return check("Hill reduction", false, "could not build complete-data sample");
    };
    let mut worst: f64 = 0.0;
    for k in 2..xs.len() {
        let (Ok(kern), Ok(bmn), Ok(hill)) = (
            kernel_estimate(&sample, k, &indicator_kernel()),
            bmn_estimate(&sample, k),
            hill_estimate(&xs, k),
        ) else {
            return check("Hill reduction", false, format!("estimator failed at k = {k}"));
        };
        worst = worst
            .max((kern.gamma1_hat - hill.gamma1_hat).abs())
            .max((bmn.gamma1_hat - hill.gamma1_hat).abs());
    }
    check("Hill reduction", worst <= 1e-12, format!("max deviation {worst:.2e}"))
}

fn gs_hand_value() -> Check {
    // X = {1, 2}, Y = {3, 12}, k = 1: ln 2 ln 4 / ln(12 / 6) = ln 4
    let got = gs_from_sorted(&[1.0, 2.0], &[3.0, 12.0], 1);
    let want = 4f64.ln();
    match got {
        Ok(v) => check("GS hand value", (v - want).abs() < 1e-12, format!("{v} vs ln 4 = {want}")),
        Err(e) => check("GS hand value", false, e.to_string()),
    }
}

fn scale_invariance() -> Check {
    let name = "scale invariance";
    let sample = TruncationDesign::from_observed_fraction(0.6, 0.8, 0.25, 300).and_then(|d| sample_truncated(&d, 17));
    let Ok(sample) = sample else {
        return check(name, false, "sampling failed");
    };
    let Ok(scaled) = sample.rescaled(3.5, 3.5) else {
        return check(name, false, "rescaling failed");
    };
    let k = 40;
    let (Ok(a), Ok(b)) = (
        kernel_estimate(&sample, k, &crate::kernels::biweight_kernel()),
        kernel_estimate(&scaled, k, &crate::kernels::biweight_kernel()),
    ) else {
        return check(name, false, "estimation failed");
    };
    let d = (a.gamma1_hat - b.gamma1_hat).abs();
    check(name, d < 1e-12, format!("difference {d:.2e}"))
}

fn variance_cross_check() -> Check {
    let name = "sigma2 two-route (gamma1 = 0.6, gamma2 = 1.4, biweight)";
    let kernel = crate::kernels::biweight_kernel();
    let params = match AsymptoticParams::new(0.6, Some(1.4), -1.0, 0.0) {
        Ok(p) => p,
        Err(e) => return check(name, false, e.to_string()),
    };
    let (q, mc) = match (
        limit_moments(&params, &kernel),
        gamma_process_variance(&params, &kernel, 4000, 2000, 2024),
    ) {
        (Ok(q), Ok(mc)) => (q.sigma2, mc),
        (Err(e), _) | (_, Err(e)) => return check(name, false, e.to_string()),
    };
    let z = (mc.variance - q) / mc.stderr;
    check(
        name,
        z.abs() <= 3.0,
        format!("quadrature {q:.5}, Monte Carlo {:.5} +- {:.5} (z = {z:.2})", mc.variance, mc.stderr),
    )
}

/// Runs every check; `extra_kernels` are put through conformance alongside the built-ins.
pub fn run(extra_kernels: &[&dyn Kernel]) -> Vec<Check> {
    let mut out = Vec::new();
    for k in ALL_KERNELS {
        out.extend(kernel_checks(&k));
    }
    for k in extra_kernels {
        out.extend(kernel_checks(*k));
    }
    out.push(hill_reduction());
    out.push(gs_hand_value());
    out.push(scale_invariance());
    out.push(variance_cross_check());
    out
}

/// Biweight kernel scaled by 1.1, so that it violates unit mass.
#[derive(Debug, Clone, Copy)]
pub struct CorruptedKernel;

impl Kernel for CorruptedKernel {
    fn name(&self) -> &str {
        "corrupted-biweight"
    }
    fn k_at(&self, s: f64) -> f64 {
        1.1 * crate::kernels::biweight_kernel().k_at(s)
    }
    fn k_prime_at(&self, s: f64) -> f64 {
        1.1 * crate::kernels::biweight_kernel().k_prime_at(s)
    }
}
