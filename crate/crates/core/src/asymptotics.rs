//! Limiting bias and variance of the kernel estimator, a Gaussian-process
//! Monte Carlo check of the variance, and the tail product-limit process.
//!
//! With `gamma = g1 g2 / (g1 + g2)`, `a = gamma / g1`, `b = gamma / g2` and
//! `r = g1 / g2`, the variance is `(gamma^2 / g1)^2 int_0^1 phi(s)^2 ds`.
//! Two versions of `phi` are available, see [`PhiForm`].

use std::cell::RefCell;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::{EstimatorOptions, PreparedSample};
use crate::kernels::Kernel;
use crate::model::{derive_seed, ObservedSample};
use crate::quadrature::{integrate, QuadConfig, QuadResult};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticParams {
    pub gamma1: f64,
    /// `None` is the complete-data limit `1 / g2 = 0`.
    pub gamma2: Option<f64>,
    /// Second-order parameter of the truncated law, negative.
    pub tau1: f64,
    /// Limit of `sqrt(k) A_0(N / k)`.
    pub lambda: f64,
    /// Second-order parameter of the truncating law. Carried along, never used.
    pub tau2: Option<f64>,
}

impl AsymptoticParams {
    pub fn new(gamma1: f64, gamma2: Option<f64>, tau1: f64, lambda: f64) -> Result<Self> {
        let p = Self {
            gamma1,
            gamma2,
            tau1,
            lambda,
            tau2: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn complete(gamma1: f64, tau1: f64, lambda: f64) -> Result<Self> {
        Self::new(gamma1, None, tau1, lambda)
    }

    /// Parameters from the observed fraction `p = g2 / (g1 + g2)`.
    pub fn from_observed_fraction(gamma1: f64, p: f64, tau1: f64, lambda: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid("p", format!("must lie in (0, 1), got {p}")));
        }
        Self::new(gamma1, Some(p * gamma1 / (1.0 - p)), tau1, lambda)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma1 > 0.0 && self.gamma1.is_finite()) {
            return Err(invalid("gamma1", format!("must be positive, got {}", self.gamma1)));
        }
        if let Some(g2) = self.gamma2 {
            if !(g2 > 0.0) || g2.is_nan() {
                return Err(invalid("gamma2", format!("must be positive, got {g2}")));
            }
        }
        if !(self.tau1 < 0.0 && self.tau1.is_finite()) {
            return Err(invalid("tau1", format!("must be negative, got {}", self.tau1)));
        }
        if !self.lambda.is_finite() {
            return Err(invalid("lambda", "must be finite"));
        }
        if let Some(t2) = self.tau2 {
            if !(t2 < 0.0) {
                return Err(invalid("tau2", format!("must be negative, got {t2}")));
            }
        }
        Ok(())
    }

    /// `1 / g2`, zero in the complete-data limit.
    fn inv_gamma2(&self) -> f64 {
        self.gamma2.map_or(0.0, |g2| 1.0 / g2)
    }

    /// `gamma = g1 g2 / (g1 + g2)`.
    pub fn gamma(&self) -> f64 {
        1.0 / (1.0 / self.gamma1 + self.inv_gamma2())
    }

    /// `gamma / g1`.
    pub fn a(&self) -> f64 {
        self.gamma() / self.gamma1
    }

    /// `gamma / g2`.
    pub fn b(&self) -> f64 {
        self.gamma() * self.inv_gamma2()
    }

    /// `g1 / g2`.
    pub fn r(&self) -> f64 {
        self.gamma1 * self.inv_gamma2()
    }

    fn require_lighter_truncated(&self) -> Result<()> {
        if self.r() >= 1.0 {
            return Err(Error::NonIntegrable {
                what: "variance",
                detail: format!(
                    "needs gamma1 < gamma2, got gamma1 = {}, gamma2 = {:?}",
                    self.gamma1, self.gamma2
                ),
            });
        }
        Ok(())
    }
}

/// Which integrand defines `phi`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhiForm {
    /// The integrand exactly as printed, with the middle term
    /// `-(g1/g2) t^(-g2/g1) K(t^a)`. Its exponent makes the integral diverge
    /// at 0 whenever `g2 < inf` and `K(0) > 0`.
    Printed,
    /// `s phi(s) = int_0^s rho`, with `rho` the density that turns
    /// `int x^-1 Gamma(x; W) g(x^(-1/g1)) dx` into `int s^-1 W(s) d{s phi(s)}`:
    /// the middle term becomes `(g1/g2) (L(t^a) - K(t^a))`, `L(c) = int_c^1 K(v)/v dv`.
    #[default]
    Derived,
}

fn phi_integrand(params: &AsymptoticParams, kernel: &dyn Kernel, form: PhiForm, t: f64) -> f64 {
    let (a, b, r) = (params.a(), params.b(), params.r());
    let c = t.powf(a);
    let k = kernel.k_at(c);
    let base = k + c * kernel.k_prime_at(c);
    let middle = match form {
        PhiForm::Printed if r > 0.0 => -r * t.powf(-1.0 / r) * k,
        PhiForm::Printed => 0.0,
        PhiForm::Derived if r > 0.0 => r * (kernel.log_tail_integral(c) - k),
        PhiForm::Derived => 0.0,
    };
    t.powf(-b) * (base + middle)
}

fn quad_cfg() -> QuadConfig {
    QuadConfig::default()
}

/// Rejects integrands that behave like `t^e` with `e <= -1` near 0.
fn check_origin(f: impl Fn(f64) -> f64, s: f64) -> Result<()> {
    let (t1, t2) = (s * 1e-12, s * 1e-10);
    let (f1, f2) = (f(t1).abs(), f(t2).abs());
    if !f1.is_finite() {
        return Err(Error::NonIntegrable {
            what: "phi",
            detail: format!("integrand is not finite at t = {t1:e}"),
        });
    }
    if f1 > 0.0 && f2 > 0.0 {
        let slope = (f1 / f2).ln() / (t1 / t2).ln();
        if slope <= -1.0 + 1e-3 {
            return Err(Error::NonIntegrable {
                what: "phi",
                detail: format!("integrand behaves like t^{slope:.4} near 0"),
            });
        }
    }
    Ok(())
}

/// `phi(s)` for `0 < s <= 1` by adaptive quadrature of the chosen integrand.
pub fn phi(params: &AsymptoticParams, kernel: &dyn Kernel, s: f64, form: PhiForm) -> Result<QuadResult> {
    params.validate()?;
    if !(s > 0.0 && s <= 1.0) {
        return Err(invalid("s", format!("must lie in (0, 1], got {s}")));
    }
    let f = |t: f64| phi_integrand(params, kernel, form, t);
    check_origin(f, s)?;
    let r = integrate(f, 0.0, s, &quad_cfg())?;
    Ok(QuadResult {
        value: r.value / s,
        error: r.error / s,
        ..r
    })
}

/// Closed form of the derived `phi`: `s^-b (K(s^a) + r L(s^a)) / a`.
pub fn phi_derived_closed(params: &AsymptoticParams, kernel: &dyn Kernel, s: f64) -> f64 {
    let (a, b, r) = (params.a(), params.b(), params.r());
    let c = s.powf(a);
    let tail = if r > 0.0 { r * kernel.log_tail_integral(c) } else { 0.0 };
    s.powf(-b) * (kernel.k_at(c) + tail) / a
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitMoments {
    pub mu: f64,
    pub sigma2: f64,
    pub quadrature_error: f64,
}

/// Bias and variance of the limiting normal law, using the derived `phi`.
pub fn limit_moments(params: &AsymptoticParams, kernel: &dyn Kernel) -> Result<LimitMoments> {
    limit_moments_with(params, kernel, PhiForm::Derived)
}

pub fn limit_moments_with(params: &AsymptoticParams, kernel: &dyn Kernel, form: PhiForm) -> Result<LimitMoments> {
    params.validate()?;
    let cfg = quad_cfg();
    let bias = integrate(|s| s.powf(-params.tau1) * kernel.k_at(s), 0.0, 1.0, &cfg)?;
    let mu = params.lambda * bias.value;
    let mu_err = params.lambda.abs() * bias.error;

    let (sigma2, sigma_err) = match form {
        PhiForm::Derived => {
            params.require_lighter_truncated()?;
            // v = s^a turns (gamma^2/g1)^2 int phi^2 ds into gamma g1 int v^-r (K + r L)^2 dv
            let r = params.r();
            let f = |v: f64| {
                let tail = if r > 0.0 { r * kernel.log_tail_integral(v) } else { 0.0 };
                v.powf(-r) * (kernel.k_at(v) + tail).powi(2)
            };
            let scale = params.gamma() * params.gamma1;
            let q = integrate(f, 0.0, 1.0, &cfg)?;
            (scale * q.value, scale * q.error)
        }
        PhiForm::Printed => {
            let failure = RefCell::new(None);
            let f = |s: f64| match phi(params, kernel, s, PhiForm::Printed) {
                Ok(q) => q.value * q.value,
                Err(e) => {
                    failure.borrow_mut().get_or_insert(e);
                    f64::NAN
                }
            };
            let q = integrate(f, 0.0, 1.0, &cfg);
            if let Some(e) = failure.into_inner() {
                return Err(e);
            }
            let q = q?;
            let scale = (params.gamma().powi(2) / params.gamma1).powi(2);
            (scale * q.value, scale * q.error)
        }
    };
    if !(sigma2 > 0.0 && sigma2.is_finite()) {
        return Err(Error::NonIntegrable {
            what: "variance",
            detail: format!("got {sigma2}"),
        });
    }
    Ok(LimitMoments {
        mu,
        sigma2,
        quadrature_error: mu_err + sigma_err,
    })
}

/// A standard Wiener path on `t_i = (i / m)^q`, linear between grid points.
#[derive(Debug, Clone)]
pub struct WienerPath {
    t: Vec<f64>,
    w: Vec<f64>,
}

const GRID_POWER: i32 = 4;

fn power_grid(cells: usize) -> Vec<f64> {
    (0..=cells).map(|i| (i as f64 / cells as f64).powi(GRID_POWER)).collect()
}

impl WienerPath {
    pub fn simulate(cells: usize, rng: &mut impl rand::Rng) -> Self {
        let t = power_grid(cells);
        Self::on_grid(t, rng)
    }

    fn on_grid(t: Vec<f64>, rng: &mut impl rand::Rng) -> Self {
        let mut w = Vec::with_capacity(t.len());
        w.push(0.0);
        for pair in t.windows(2) {
            let z: f64 = StandardNormal.sample(rng);
            let last = *w.last().expect("non-empty");
            w.push(last + z * (pair[1] - pair[0]).sqrt());
        }
        Self { t, w }
    }

    fn cell_of(&self, u: f64) -> usize {
        let i = self.t.partition_point(|&t| t <= u);
        i.saturating_sub(1).min(self.t.len() - 2)
    }

    /// `W(u)` for `u` in `[0, 1]`.
    pub fn at(&self, u: f64) -> f64 {
        let i = self.cell_of(u);
        let h = self.t[i + 1] - self.t[i];
        self.w[i] + (self.w[i + 1] - self.w[i]) * (u - self.t[i]) / h
    }

    /// `int_0^u t^(-b-1) W(t) dt`, exact for the interpolated path.
    pub fn weighted_integral(&self, u: f64, b: f64) -> f64 {
        let i = self.cell_of(u);
        let mut total = 0.0;
        for j in 0..i {
            total += self.cell_moment(j, self.t[j + 1], b);
        }
        total + self.cell_moment(i, u, b)
    }

    /// `int_{t_j}^x t^(-b-1) W(t) dt` for `x` in cell `j`.
    fn cell_moment(&self, j: usize, x: f64, b: f64) -> f64 {
        let (t0, t1) = (self.t[j], self.t[j + 1]);
        let slope = (self.w[j + 1] - self.w[j]) / (t1 - t0);
        let intercept = self.w[j] - slope * t0;
        slope * power_moment(t0, x, -b) + if j == 0 { 0.0 } else { intercept * power_moment(t0, x, -b - 1.0) }
    }
}

/// `int_lo^hi t^e dt`, with `lo = 0` allowed when `e > -1`.
fn power_moment(lo: f64, hi: f64, e: f64) -> f64 {
    if e == -1.0 {
        (hi / lo).ln()
    } else {
        (hi.powf(e + 1.0) - lo.powf(e + 1.0)) / (e + 1.0)
    }
}

/// `Gamma(x; W)` for `x >= 1`.
pub fn gamma_process(params: &AsymptoticParams, path: &WienerPath, x: f64) -> f64 {
    let (a, b) = (params.a(), params.b());
    let u = x.powf(-1.0 / params.gamma());
    let w1 = path.at(1.0);
    let first = a * u.powf(a) * (path.at(u) / u - w1);
    if b == 0.0 {
        return first;
    }
    let inner = u.powf(b - 1.0) * path.weighted_integral(u, b) - path.weighted_integral(1.0, b);
    first + a * b * u.powf(a) * inner
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McVariance {
    pub variance: f64,
    pub stderr: f64,
    pub paths: usize,
}

const GAUSS3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_31, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

/// Per-node constants shared by every path.
struct ZPlan {
    t: Vec<f64>,
    /// For node `(cell, j)`: position, quadrature weight times `gamma g(u^a) u^-1`,
    /// `a u^a`, and the two power moments from the cell start to the node.
    nodes: Vec<[f64; 5]>,
    /// Whole-cell power moments `(e = -b, e = -b - 1)`.
    cell_moments: Vec<(f64, f64)>,
    b: f64,
}

impl ZPlan {
    fn new(params: &AsymptoticParams, kernel: &dyn Kernel, cells: usize) -> Self {
        let (gamma, a, b) = (params.gamma(), params.a(), params.b());
        let t = power_grid(cells);
        let mut nodes = Vec::with_capacity(3 * cells);
        let mut cell_moments = Vec::with_capacity(cells);
        for i in 0..cells {
            let (t0, t1) = (t[i], t[i + 1]);
            let h = t1 - t0;
            cell_moments.push((power_moment(t0, t1, -b), if i == 0 { 0.0 } else { power_moment(t0, t1, -b - 1.0) }));
            for &(x, w) in &GAUSS3 {
                let u = t0 + x * h;
                let ua = u.powf(a);
                nodes.push([
                    u,
                    w * h * gamma * kernel.g_at(ua) / u,
                    a * ua,
                    power_moment(t0, u, -b),
                    if i == 0 { 0.0 } else { power_moment(t0, u, -b - 1.0) },
                ]);
            }
        }
        Self {
            t,
            nodes,
            cell_moments,
            b,
        }
    }

    /// `Z = gamma int_0^1 u^-1 Gamma(u) g(u^a) du` after `x = u^-gamma`.
    fn z(&self, path: &WienerPath) -> f64 {
        let cells = self.t.len() - 1;
        let (w, b) = (&path.w, self.b);
        let w1 = w[cells];
        // F(t_i) = int_0^{t_i} t^(-b-1) W(t) dt at every grid point
        let mut f_grid = Vec::with_capacity(cells + 1);
        f_grid.push(0.0);
        let mut acc = 0.0;
        for i in 0..cells {
            let slope = (w[i + 1] - w[i]) / (self.t[i + 1] - self.t[i]);
            let intercept = w[i] - slope * self.t[i];
            acc += slope * self.cell_moments[i].0 + intercept * self.cell_moments[i].1;
            f_grid.push(acc);
        }
        let f1 = f_grid[cells];

        let mut z = 0.0;
        for i in 0..cells {
            let (t0, t1) = (self.t[i], self.t[i + 1]);
            let slope = (w[i + 1] - w[i]) / (t1 - t0);
            let intercept = w[i] - slope * t0;
            for node in &self.nodes[3 * i..3 * i + 3] {
                let [u, weight, a_ua, m_b, m_b1] = *node;
                let wu = intercept + slope * u;
                let mut gam = a_ua * (wu / u - w1);
                if b > 0.0 {
                    let fu = f_grid[i] + slope * m_b + intercept * m_b1;
                    gam += self.b * a_ua * (u.powf(b - 1.0) * fu - f1);
                }
                z += weight * gam;
            }
        }
        z
    }
}

/// Sample variance of `Z = int_1^inf x^-1 Gamma(x; W) g(x^(-1/g1)) dx` over
/// simulated Wiener paths, with its standard error.
pub fn gamma_process_variance(
    params: &AsymptoticParams,
    kernel: &dyn Kernel,
    paths: usize,
    grid: usize,
    seed: u64,
) -> Result<McVariance> {
    params.validate()?;
    params.require_lighter_truncated()?;
    if paths < 1000 {
        return Err(invalid("paths", "must be >= 1000"));
    }
    if grid < 1000 {
        return Err(invalid("grid", "must be >= 1000"));
    }
    let plan = ZPlan::new(params, kernel, grid);
    let zs: Vec<f64> = (0..paths as u64)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[p]));
            let path = WienerPath::on_grid(plan.t.clone(), &mut rng);
            plan.z(&path)
        })
        .collect();
    let n = zs.len() as f64;
    let mean = zs.iter().sum::<f64>() / n;
    let (m2, m4) = zs.iter().fold((0.0, 0.0), |(m2, m4), z| {
        let d2 = (z - mean).powi(2);
        (m2 + d2, m4 + d2 * d2)
    });
    let variance = m2 / (n - 1.0);
    let fourth = m4 / n;
    let pop = m2 / n;
    Ok(McVariance {
        variance,
        stderr: ((fourth - pop * pop) / n).sqrt(),
        paths,
    })
}

/// The tail product-limit process
/// `D_n(x) = sqrt(k) (Fbar_n(x X_{n-k:n}) / Fbar_n(X_{n-k:n}) - x^(-1/g1_hat))`
/// on a grid of `x >= 1`, with the sum-form tail and the kernel estimate at `k`.
pub fn dn_process(sample: &ObservedSample, k: usize, x_grid: &[f64], kernel: &dyn Kernel) -> Result<Vec<f64>> {
    if let Some(&x) = x_grid.iter().find(|&&x| !(x >= 1.0) || !x.is_finite()) {
        return Err(invalid("x_grid", format!("points must be finite and >= 1, got {x}")));
    }
    let prepared = PreparedSample::new(sample, EstimatorOptions::default());
    let gamma_hat = prepared.kernel(k, kernel, false)?.gamma1_hat;
    let view = prepared.view();
    let threshold = view.top_x(k + 1);
    let base = view.tail_at(threshold);
    let root_k = (k as f64).sqrt();
    Ok(x_grid
        .iter()
        .map(|&x| root_k * (view.tail_at(x * threshold) / base - x.powf(-1.0 / gamma_hat)))
        .collect())
}
