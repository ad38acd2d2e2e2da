//! Tail-index estimators for randomly right-truncated data.
//!
//! Every truncation-aware estimator is built on [`SortedView`], which holds the
//! order statistics together with the at-risk fraction `C_n` and the
//! product-limit estimate of the underlying distribution function at each `X`
//! order statistic. Order statistics are indexed from the top:
//! `X_{n-i+1:n}` is ascending position `n - i`, and the threshold `X_{n-k:n}`
//! is ascending position `n - k - 1`.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::Kernel;
use crate::model::ObservedSample;

/// How tail ratios inside the kernel weight are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TailConvention {
    /// Ratio for term `i` is `prefix[i-1] / prefix[k]`; the tail estimate is the
    /// weight sum `n^-1 sum a^(i)`.
    #[default]
    PartialSum,
    /// Ratio for term `i` is `(1 - F_n(X_{n-i+1:n})) / (1 - F_n(X_{n-k:n}))`.
    Product,
}

/// Which estimate of the underlying distribution function feeds the weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DfRule {
    /// Empirical df when no pair is truncated, Woodroofe's estimator otherwise.
    #[default]
    Auto,
    /// Woodroofe's exponential product-limit estimator on every sample.
    Woodroofe,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct EstimatorOptions {
    pub tail: TailConvention,
    pub df: DfRule,
}

impl FromStr for TailConvention {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "partial-sum" => Ok(TailConvention::PartialSum),
            "product" => Ok(TailConvention::Product),
            _ => Err(Error::UnknownName {
                kind: "tail convention",
                name: s.to_string(),
            }),
        }
    }
}

impl FromStr for DfRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "auto" => Ok(DfRule::Auto),
            "woodroofe" => Ok(DfRule::Woodroofe),
            _ => Err(Error::UnknownName {
                kind: "df rule",
                name: s.to_string(),
            }),
        }
    }
}

/// Order statistics of an observed sample with `C_n` and `F_n` at every `X`.
#[derive(Debug, Clone, PartialEq)]
pub struct SortedView {
    n: usize,
    /// `X_{1:n} <= ... <= X_{n:n}`.
    pub x_order: Vec<f64>,
    /// Original index of each entry of `x_order`.
    pub x_index: Vec<usize>,
    /// `Y_{1:n} <= ... <= Y_{n:n}`, sentinel mapped to `+inf`.
    pub y_order: Vec<f64>,
    pub cn_at_x: Vec<f64>,
    pub fn_at_x: Vec<f64>,
    ln_x: Vec<f64>,
    /// `a^(i)` for `i = 1..=n`, i.e. taken from the top.
    weights: Vec<f64>,
    /// `prefix[j] = sum_{i <= j} a^(i)`, length `n + 1`.
    prefix: Vec<f64>,
}

/// Top-`k` slice of the product-limit weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TopWeights<'a> {
    pub k: usize,
    /// `a^(1), ..., a^(k)`.
    pub a: &'a [f64],
    /// `prefix[0..=k]`, with `prefix[0] = 0`.
    pub prefix: &'a [f64],
}

impl SortedView {
    pub fn new(sample: &ObservedSample, df: DfRule) -> Self {
        let n = sample.len();
        let nf = n as f64;
        let pairs = sample.pairs();

        let mut x_index: Vec<usize> = (0..n).collect();
        // stable: ties keep original order
        x_index.sort_by(|&i, &j| pairs[i].x.total_cmp(&pairs[j].x));
        let x_order: Vec<f64> = x_index.iter().map(|&i| pairs[i].x).collect();
        let mut y_order = sample.ys();
        y_order.sort_by(f64::total_cmp);

        // last ascending position holding the same value as position j
        let mut group_end = vec![0usize; n];
        let mut j = n;
        while j > 0 {
            let end = j - 1;
            let mut start = end;
            while start > 0 && x_order[start - 1] == x_order[end] {
                start -= 1;
            }
            group_end[start..=end].fill(end);
            j = start;
        }

        // C_n(x) = (#{X_i <= x} - #{Y_i < x}) / n, since X_i <= Y_i
        let cn_at_x: Vec<f64> = (0..n)
            .map(|j| {
                let x = x_order[j];
                let below_y = y_order.partition_point(|&y| y < x);
                (group_end[j] + 1 - below_y) as f64 / nf
            })
            .collect();

        let use_empirical = df == DfRule::Auto && sample.is_complete();
        let fn_at_x: Vec<f64> = if use_empirical {
            (0..n).map(|j| (group_end[j] + 1) as f64 / nf).collect()
        } else {
            // log F_n(x) = -sum_{X_i > x} 1 / (n C_n(X_i))
            let mut suffix = vec![0.0; n + 1];
            for j in (0..n).rev() {
                suffix[j] = suffix[j + 1] + 1.0 / (nf * cn_at_x[j]);
            }
            (0..n).map(|j| (-suffix[group_end[j] + 1]).exp()).collect()
        };

        let weights: Vec<f64> = (1..=n).map(|i| fn_at_x[n - i] / cn_at_x[n - i]).collect();
        let mut prefix = Vec::with_capacity(n + 1);
        prefix.push(0.0);
        let mut acc = 0.0;
        for &w in &weights {
            acc += w;
            prefix.push(acc);
        }
        let ln_x = x_order.iter().map(|x| x.ln()).collect();

        Self {
            n,
            x_order,
            x_index,
            y_order,
            cn_at_x,
            fn_at_x,
            ln_x,
            weights,
            prefix,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn top_weights(&self, k: usize) -> Result<TopWeights<'_>> {
        if k > self.n {
            return Err(Error::IndexOutOfRange { j: k, n: self.n });
        }
        Ok(TopWeights {
            k,
            a: &self.weights[..k],
            prefix: &self.prefix[..=k],
        })
    }

    /// `X_{n-i+1:n}` for `i` in `1..=n`.
    #[inline]
    pub fn top_x(&self, i: usize) -> f64 {
        self.x_order[self.n - i]
    }

    /// Sum-form tail estimate at an arbitrary point: `n^-1 sum_{X_i > z} F_n(X_i) / C_n(X_i)`.
    pub fn tail_at(&self, z: f64) -> f64 {
        let above = self.n - self.x_order.partition_point(|&x| x <= z);
        self.prefix[above] / self.n as f64
    }

    #[inline]
    fn top_ln_x(&self, i: usize) -> f64 {
        self.ln_x[self.n - i]
    }

    /// `1 - F_n(X_{n-i+1:n})`; `i = k + 1` gives the value at the threshold.
    #[inline]
    fn top_product_tail(&self, i: usize) -> f64 {
        1.0 - self.fn_at_x[self.n - i]
    }

    fn check_k(&self, k: usize) -> Result<()> {
        if k < 2 || k + 1 > self.n {
            return Err(Error::KOutOfRange { k, n: self.n });
        }
        Ok(())
    }

    /// Log-spacings `ln X_{n-i+1:n} - ln X_{n-k:n}` for `i = 1..=k`.
    fn log_excesses(&self, k: usize) -> impl Iterator<Item = f64> + '_ {
        let threshold = self.top_ln_x(k + 1);
        (1..=k).map(move |i| self.top_ln_x(i) - threshold)
    }

    fn all_ties(&self, k: usize) -> bool {
        self.top_x(1) == self.top_x(k + 1)
    }
}

/// `C_n(x)`: fraction of pairs with `X_i <= x <= Y_i`.
pub fn empirical_c(sample: &ObservedSample, x: f64) -> f64 {
    let hits = sample.pairs().iter().filter(|p| p.x <= x && p.y.covers(x)).count();
    hits as f64 / sample.len() as f64
}

/// Sorted view with Woodroofe's product-limit estimator at every `X`.
pub fn woodroofe_cdf(sample: &ObservedSample) -> SortedView {
    SortedView::new(sample, DfRule::Woodroofe)
}

/// Sum-form tail estimate `n^-1 sum_{i <= j} a^(i)` at `X_{n-j:n}`.
pub fn tail_mass(view: &SortedView, j: usize) -> Result<f64> {
    if j >= view.n {
        return Err(Error::IndexOutOfRange { j, n: view.n });
    }
    Ok(view.prefix[j] / view.n as f64)
}

/// Per-term trail of a weighted estimate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Diagnostics {
    pub weights: Vec<f64>,
    pub ratios: Vec<f64>,
    pub log_excesses: Vec<f64>,
    pub terms: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateResult {
    pub estimator: String,
    pub k: usize,
    pub gamma1_hat: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<Diagnostics>,
}

/// The estimators a simulation cell or the CLI can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Kernel,
    Bmn,
    Gs,
    Hill,
}

impl EstimatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Kernel => "kernel",
            EstimatorKind::Bmn => "bmn",
            EstimatorKind::Gs => "gs",
            EstimatorKind::Hill => "hill",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kernel" => Ok(EstimatorKind::Kernel),
            "bmn" => Ok(EstimatorKind::Bmn),
            "gs" => Ok(EstimatorKind::Gs),
            "hill" => Ok(EstimatorKind::Hill),
            _ => Err(Error::UnknownName {
                kind: "estimator",
                name: s.to_string(),
            }),
        }
    }
}

/// A sample prepared once for repeated estimation at many `k`.
#[derive(Debug, Clone)]
pub struct PreparedSample {
    view: SortedView,
    ln_y: Vec<f64>,
    options: EstimatorOptions,
}

impl PreparedSample {
    pub fn new(sample: &ObservedSample, options: EstimatorOptions) -> Self {
        let view = SortedView::new(sample, options.df);
        let ln_y = view.y_order.iter().map(|y| y.ln()).collect();
        Self { view, ln_y, options }
    }

    pub fn view(&self) -> &SortedView {
        &self.view
    }

    pub fn n(&self) -> usize {
        self.view.n
    }

    pub fn options(&self) -> EstimatorOptions {
        self.options
    }

    /// Kernel estimate; `trail` requests per-term diagnostics.
    pub fn kernel(&self, k: usize, kernel: &dyn Kernel, trail: bool) -> Result<EstimateResult> {
        let v = &self.view;
        v.check_k(k)?;
        if v.all_ties(k) {
            return Err(Error::DegenerateTies);
        }
        let w = v.top_weights(k)?;
        let total = w.prefix[k];
        let threshold_tail = v.top_product_tail(k + 1);
        let mut diag = trail.then(|| Diagnostics {
            weights: Vec::with_capacity(k),
            ratios: Vec::with_capacity(k),
            log_excesses: Vec::with_capacity(k),
            terms: Vec::with_capacity(k),
        });
        let mut sum = 0.0;
        for (i, excess) in (1..=k).zip(v.log_excesses(k)) {
            let ratio = match self.options.tail {
                TailConvention::PartialSum => w.prefix[i - 1] / total,
                TailConvention::Product => v.top_product_tail(i) / threshold_tail,
            };
            let term = w.a[i - 1] * kernel.g_at(ratio) * excess;
            sum += term;
            if let Some(d) = diag.as_mut() {
                d.weights.push(w.a[i - 1]);
                d.ratios.push(ratio);
                d.log_excesses.push(excess);
                d.terms.push(term);
            }
        }
        finish("kernel", k, sum / total, diag)
    }

    /// Product-limit weighted Hill estimate.
    pub fn bmn(&self, k: usize) -> Result<EstimateResult> {
        let v = &self.view;
        v.check_k(k)?;
        if v.all_ties(k) {
            return Err(Error::DegenerateTies);
        }
        let w = v.top_weights(k)?;
        let sum: f64 = w.a.iter().zip(v.log_excesses(k)).map(|(a, e)| a * e).sum();
        finish("bmn", k, sum / w.prefix[k], None)
    }

    pub fn gs(&self, k: usize) -> Result<EstimateResult> {
        self.view.check_k(k)?;
        let value = gs_from_logs(&self.view.ln_x, &self.ln_y, k)?;
        finish("gs", k, value, None)
    }

    pub fn hill(&self, k: usize) -> Result<EstimateResult> {
        self.view.check_k(k)?;
        if self.view.all_ties(k) {
            return Err(Error::DegenerateTies);
        }
        let value = hill_from_logs(&self.view.ln_x, k);
        finish("hill", k, value, None)
    }

    pub fn estimate(&self, kind: EstimatorKind, k: usize, kernel: &dyn Kernel) -> Result<EstimateResult> {
        match kind {
            EstimatorKind::Kernel => self.kernel(k, kernel, false),
            EstimatorKind::Bmn => self.bmn(k),
            EstimatorKind::Gs => self.gs(k),
            EstimatorKind::Hill => self.hill(k),
        }
    }

    /// `gamma_hat(k)` for every `k` in `k_min..=k_max`; entry `j` is `k_min + j`.
    pub fn trajectory(
        &self,
        kind: EstimatorKind,
        kernel: &dyn Kernel,
        k_min: usize,
        k_max: usize,
    ) -> Vec<Result<f64>> {
        match kind {
            EstimatorKind::Kernel => (k_min..=k_max)
                .map(|k| self.kernel(k, kernel, false).map(|r| r.gamma1_hat))
                .collect(),
            _ => self.linear_trajectory(kind, k_min, k_max),
        }
    }

    // Hill, BMN and GS reduce to running sums, so the whole path is O(n).
    fn linear_trajectory(&self, kind: EstimatorKind, k_min: usize, k_max: usize) -> Vec<Result<f64>> {
        let v = &self.view;
        let n = v.n;
        let mut out = Vec::with_capacity(k_max.saturating_sub(k_min) + 1);
        let (mut sum_lx, mut sum_ly, mut sum_a, mut sum_alx) = (0.0, 0.0, 0.0, 0.0);
        for k in 1..=k_max {
            if k >= n {
                if k >= k_min {
                    out.push(Err(Error::KOutOfRange { k, n }));
                }
                continue;
            }
            let lx = v.top_ln_x(k);
            sum_lx += lx;
            sum_ly += self.ln_y[n - k];
            sum_a += v.weights[k - 1];
            sum_alx += v.weights[k - 1] * lx;
            if k < k_min {
                continue;
            }
            if let Err(e) = v.check_k(k) {
                out.push(Err(e));
                continue;
            }
            let kf = k as f64;
            let thr_x = v.top_ln_x(k + 1);
            let value = match kind {
                EstimatorKind::Hill | EstimatorKind::Bmn if v.all_ties(k) => Err(Error::DegenerateTies),
                EstimatorKind::Hill => Ok(sum_lx / kf - thr_x),
                EstimatorKind::Bmn => Ok(sum_alx / sum_a - thr_x),
                EstimatorKind::Gs => {
                    let hx = sum_lx / kf - thr_x;
                    let hy = sum_ly / kf - self.ln_y[n - k - 1];
                    gs_ratio(hx, hy, k)
                }
                EstimatorKind::Kernel => unreachable!("kernel trajectory is evaluated term by term"),
            };
            out.push(value.and_then(|g| check_finite(g, k)));
        }
        out
    }
}

fn check_finite(value: f64, k: usize) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::GsUndefined { k })
    }
}

fn finish(name: &str, k: usize, value: f64, diagnostics: Option<Diagnostics>) -> Result<EstimateResult> {
    if !value.is_finite() {
        return Err(Error::DegenerateTies);
    }
    Ok(EstimateResult {
        estimator: name.to_string(),
        k,
        gamma1_hat: value,
        diagnostics,
    })
}

fn hill_from_logs(ln_asc: &[f64], k: usize) -> f64 {
    let n = ln_asc.len();
    let threshold = ln_asc[n - k - 1];
    ln_asc[n - k..].iter().map(|l| l - threshold).sum::<f64>() / k as f64
}

fn gs_ratio(hill_x: f64, hill_y: f64, k: usize) -> Result<f64> {
    let denom = hill_y - hill_x;
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::GsUndefined { k });
    }
    Ok(hill_x * hill_y / denom)
}

// k^-1 * (sum LX)(sum LY) / sum(LY - LX) == HX * HY / (HY - HX)
fn gs_from_logs(ln_x_asc: &[f64], ln_y_asc: &[f64], k: usize) -> Result<f64> {
    gs_ratio(hill_from_logs(ln_x_asc, k), hill_from_logs(ln_y_asc, k), k)
}

/// GS estimate from independently sorted `X` and `Y` values, admitting any
/// `1 <= k <= n - 1`.
pub fn gs_from_sorted(x_asc: &[f64], y_asc: &[f64], k: usize) -> Result<f64> {
    let n = x_asc.len();
    if k == 0 || k >= n || y_asc.len() != n {
        return Err(Error::KOutOfRange { k, n });
    }
    let lx: Vec<f64> = x_asc.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = y_asc.iter().map(|y| y.ln()).collect();
    gs_from_logs(&lx, &ly, k)
}

pub fn kernel_estimate(sample: &ObservedSample, k: usize, kernel: &dyn Kernel) -> Result<EstimateResult> {
    kernel_estimate_with(sample, k, kernel, EstimatorOptions::default())
}

pub fn kernel_estimate_with(
    sample: &ObservedSample,
    k: usize,
    kernel: &dyn Kernel,
    options: EstimatorOptions,
) -> Result<EstimateResult> {
    PreparedSample::new(sample, options).kernel(k, kernel, true)
}

pub fn bmn_estimate(sample: &ObservedSample, k: usize) -> Result<EstimateResult> {
    PreparedSample::new(sample, EstimatorOptions::default()).bmn(k)
}

pub fn gs_estimate(sample: &ObservedSample, k: usize) -> Result<EstimateResult> {
    PreparedSample::new(sample, EstimatorOptions::default()).gs(k)
}

fn sorted_logs(xs: &[f64], k: usize) -> Result<Vec<f64>> {
    let n = xs.len();
    if k < 2 || k + 1 > n {
        return Err(Error::KOutOfRange { k, n });
    }
    if let Some(&bad) = xs.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(crate::error::invalid("xs", format!("values must be finite and > 0, got {bad}")));
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted[n - 1] == sorted[n - k - 1] {
        return Err(Error::DegenerateTies);
    }
    Ok(sorted.iter().map(|x| x.ln()).collect())
}

/// Classical Hill estimate from complete data.
pub fn hill_estimate(xs: &[f64], k: usize) -> Result<EstimateResult> {
    let logs = sorted_logs(xs, k)?;
    finish("hill", k, hill_from_logs(&logs, k), None)
}

/// Complete-data kernel form `sum (i/k) K(i/k) ln(X_{n-i+1:n} / X_{n-i:n})`.
///
/// At `i = k` the kernel is read as its left limit at 1, which is what makes
/// the indicator kernel reproduce Hill.
pub fn cdm_kernel_estimate(xs: &[f64], k: usize, kernel: &dyn Kernel) -> Result<EstimateResult> {
    let logs = sorted_logs(xs, k)?;
    let n = logs.len();
    let kf = k as f64;
    let value = (1..=k)
        .map(|i| {
            let s = i as f64 / kf;
            let weight = if i == k { kernel.k_left_of_one() } else { kernel.k_at(s) };
            s * weight * (logs[n - i] - logs[n - i - 1])
        })
        .sum();
    finish("cdm", k, value, None)
}

/// Orders `f64` with `total_cmp`, for use in heaps and sorts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct Total(pub f64);

impl Eq for Total {}
impl PartialOrd for Total {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Total {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}
