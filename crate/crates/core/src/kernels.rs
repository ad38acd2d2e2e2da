//! Weight kernels on `[0, 1)` and the induced weight `g(s) = d/ds [s K(s)]`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::quadrature::{integrate, QuadConfig};

/// A kernel supported on `[0, 1)`.
///
/// Implementors provide `K` and its first derivative; `g` and the second
/// derivative have defaults. Anything used in estimation should pass
/// [`conformance`].
pub trait Kernel: fmt::Debug + Send + Sync {
    fn name(&self) -> &str;

    fn k_at(&self, s: f64) -> f64;

    fn k_prime_at(&self, s: f64) -> f64;

    /// Second derivative, only used for the boundedness check.
    fn k_second_at(&self, s: f64) -> f64 {
        let h = 1e-5;
        (self.k_prime_at(s + h) - self.k_prime_at(s - h)) / (2.0 * h)
    }

    /// Derivative of `s K(s)` on `[0, 1)`, zero elsewhere.
    fn g_at(&self, s: f64) -> f64 {
        if (0.0..1.0).contains(&s) {
            self.k_at(s) + s * self.k_prime_at(s)
        } else {
            0.0
        }
    }

    /// `lim_{s -> 1-} K(s)`.
    fn k_left_of_one(&self) -> f64 {
        self.k_at(1.0 - 1e-12)
    }

    /// `int_c^1 K(v) / v dv` for `0 < c <= 1`.
    fn log_tail_integral(&self, c: f64) -> f64 {
        let cfg = QuadConfig {
            abs_tol: 1e-12,
            ..Default::default()
        };
        integrate(|v| self.k_at(v) / v, c, 1.0, &cfg).map_or(f64::NAN, |r| r.value)
    }
}

/// The kernels shipped with the crate, selectable by name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuiltinKernel {
    Indicator,
    Biweight,
    Triweight,
}

pub const ALL_KERNELS: [BuiltinKernel; 3] = [
    BuiltinKernel::Indicator,
    BuiltinKernel::Biweight,
    BuiltinKernel::Triweight,
];

pub fn indicator_kernel() -> BuiltinKernel {
    BuiltinKernel::Indicator
}

pub fn biweight_kernel() -> BuiltinKernel {
    BuiltinKernel::Biweight
}

pub fn triweight_kernel() -> BuiltinKernel {
    BuiltinKernel::Triweight
}

#[inline]
fn in_support(s: f64) -> bool {
    (0.0..1.0).contains(&s)
}

impl BuiltinKernel {
    pub fn as_str(self) -> &'static str {
        match self {
            BuiltinKernel::Indicator => "indicator",
            BuiltinKernel::Biweight => "biweight",
            BuiltinKernel::Triweight => "triweight",
        }
    }

    /// Closed-form `int_0^1 K(s)^2 ds`.
    pub fn squared_integral(self) -> f64 {
        match self {
            BuiltinKernel::Indicator => 1.0,
            BuiltinKernel::Biweight => 10.0 / 7.0,
            BuiltinKernel::Triweight => 700.0 / 429.0,
        }
    }
}

impl fmt::Display for BuiltinKernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for BuiltinKernel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "indicator" => Ok(BuiltinKernel::Indicator),
            "biweight" => Ok(BuiltinKernel::Biweight),
            "triweight" => Ok(BuiltinKernel::Triweight),
            _ => Err(Error::UnknownName {
                kind: "kernel",
                name: s.to_string(),
            }),
        }
    }
}

impl Kernel for BuiltinKernel {
    fn name(&self) -> &str {
        self.as_str()
    }

    fn k_at(&self, s: f64) -> f64 {
        if !in_support(s) {
            return 0.0;
        }
        let q = 1.0 - s * s;
        match self {
            BuiltinKernel::Indicator => 1.0,
            BuiltinKernel::Biweight => 15.0 / 8.0 * q * q,
            BuiltinKernel::Triweight => 35.0 / 16.0 * q * q * q,
        }
    }

    fn k_prime_at(&self, s: f64) -> f64 {
        if !in_support(s) {
            return 0.0;
        }
        let q = 1.0 - s * s;
        match self {
            BuiltinKernel::Indicator => 0.0,
            BuiltinKernel::Biweight => -15.0 / 2.0 * s * q,
            BuiltinKernel::Triweight => -105.0 / 8.0 * s * q * q,
        }
    }

    fn k_second_at(&self, s: f64) -> f64 {
        if !in_support(s) {
            return 0.0;
        }
        let s2 = s * s;
        match self {
            BuiltinKernel::Indicator => 0.0,
            BuiltinKernel::Biweight => -15.0 / 2.0 * (1.0 - 3.0 * s2),
            BuiltinKernel::Triweight => -105.0 / 8.0 * (1.0 - s2) * (1.0 - 5.0 * s2),
        }
    }

    fn g_at(&self, s: f64) -> f64 {
        if !in_support(s) {
            return 0.0;
        }
        let s2 = s * s;
        match self {
            BuiltinKernel::Indicator => 1.0,
            BuiltinKernel::Biweight => 15.0 / 8.0 * (1.0 - s2) * (1.0 - 5.0 * s2),
            BuiltinKernel::Triweight => 35.0 / 16.0 * (1.0 - s2) * (1.0 - s2) * (1.0 - 7.0 * s2),
        }
    }

    fn k_left_of_one(&self) -> f64 {
        match self {
            BuiltinKernel::Indicator => 1.0,
            BuiltinKernel::Biweight | BuiltinKernel::Triweight => 0.0,
        }
    }

    fn log_tail_integral(&self, c: f64) -> f64 {
        let minus_ln = -c.ln();
        let c2 = c * c;
        match self {
            BuiltinKernel::Indicator => minus_ln,
            BuiltinKernel::Biweight => 15.0 / 8.0 * (minus_ln - (1.0 - c2) + (1.0 - c2 * c2) / 4.0),
            BuiltinKernel::Triweight => {
                let c4 = c2 * c2;
                35.0 / 16.0
                    * (minus_ln - 1.5 * (1.0 - c2) + 0.75 * (1.0 - c4) - (1.0 - c4 * c2) / 6.0)
            }
        }
    }
}

/// Which kernel requirement a conformance failure refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Nonincreasing on `[0, 1)`.
    C1,
    /// Zero outside `[0, 1)`, nonnegative inside.
    C2,
    /// Unit mass.
    C3,
    /// `K`, `K'`, `K''` bounded.
    C4,
    /// `g = K + s K'` pointwise.
    GConsistency,
    /// `int g = lim_{s->1-} s K(s)`.
    GMass,
    /// Hand-coded derivative disagrees with a central difference.
    Derivative,
}

impl Condition {
    pub fn label(self) -> &'static str {
        match self {
            Condition::C1 => "[C1] nonincreasing",
            Condition::C2 => "[C2] support and sign",
            Condition::C3 => "[C3] unit mass",
            Condition::C4 => "[C4] bounded derivatives",
            Condition::GConsistency => "g = K + sK'",
            Condition::GMass => "integral of g",
            Condition::Derivative => "finite-difference derivative",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConformanceFailure {
    pub condition: Condition,
    pub detail: String,
}

impl fmt::Display for ConformanceFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.condition.label(), self.detail)
    }
}

const GRID: usize = 2000;
const BOUND: f64 = 1e6;

/// Runs every kernel requirement and returns the failures (empty when conforming).
pub fn conformance(kernel: &dyn Kernel) -> Vec<ConformanceFailure> {
    let mut out = Vec::new();
    let mut fail = |condition, detail: String| out.push(ConformanceFailure { condition, detail });
    let grid: Vec<f64> = (0..GRID).map(|i| i as f64 / GRID as f64).collect();

    for &s in &[-1.0, -1e-9, 1.0, 1.0 + 1e-9, 2.0] {
        if kernel.k_at(s) != 0.0 {
            fail(Condition::C2, format!("K({s}) = {} outside [0, 1)", kernel.k_at(s)));
        }
    }
    if let Some(&s) = grid.iter().find(|&&s| kernel.k_at(s) < 0.0 || !kernel.k_at(s).is_finite()) {
        fail(Condition::C2, format!("K({s}) = {} is negative or non-finite", kernel.k_at(s)));
    }
    if let Some(w) = grid.windows(2).find(|w| kernel.k_at(w[1]) > kernel.k_at(w[0]) + 1e-12) {
        fail(Condition::C1, format!("K increases between {} and {}", w[0], w[1]));
    }

    let quad = QuadConfig {
        abs_tol: 1e-13,
        ..Default::default()
    };
    match integrate(|s| kernel.k_at(s), 0.0, 1.0, &quad) {
        Ok(r) if (r.value - 1.0).abs() <= 1e-10 => {}
        Ok(r) => fail(Condition::C3, format!("int K = {}", r.value)),
        Err(e) => fail(Condition::C3, format!("int K failed: {e}")),
    }
    let boundary = kernel.k_left_of_one();
    match integrate(|s| kernel.g_at(s), 0.0, 1.0, &quad) {
        Ok(r) if (r.value - boundary).abs() <= 1e-8 => {}
        Ok(r) => fail(Condition::GMass, format!("int g = {} but lim sK(s) = {boundary}", r.value)),
        Err(e) => fail(Condition::GMass, format!("int g failed: {e}")),
    }

    let max_abs = |f: &dyn Fn(f64) -> f64| grid.iter().map(|&s| f(s).abs()).fold(0.0, f64::max);
    let bounds = [
        ("K", max_abs(&|s| kernel.k_at(s))),
        ("K'", max_abs(&|s| kernel.k_prime_at(s))),
        ("K''", max_abs(&|s| kernel.k_second_at(s))),
    ];
    for (what, m) in bounds {
        if !(m.is_finite() && m < BOUND) {
            fail(Condition::C4, format!("sup |{what}| = {m} on the grid"));
        }
    }

    let h = 1e-6;
    for &s in grid.iter().filter(|&&s| s > 1e-3 && s < 1.0 - 1e-3) {
        let g = kernel.g_at(s);
        let g_def = kernel.k_at(s) + s * kernel.k_prime_at(s);
        if (g - g_def).abs() > 1e-12 * (1.0 + g.abs()) {
            fail(Condition::GConsistency, format!("g({s}) = {g} but K + sK' = {g_def}"));
            break;
        }
        let fd = (kernel.k_at(s + h) - kernel.k_at(s - h)) / (2.0 * h);
        if (fd - kernel.k_prime_at(s)).abs() > 1e-5 {
            fail(Condition::Derivative, format!("K'({s}) = {} vs central difference {fd}", kernel.k_prime_at(s)));
            break;
        }
        let psi = |t: f64| t * kernel.k_at(t);
        let fd_g = (psi(s + h) - psi(s - h)) / (2.0 * h);
        if (fd_g - g).abs() > 1e-5 {
            fail(Condition::Derivative, format!("g({s}) = {g} vs central difference {fd_g}"));
            break;
        }
    }
    out
}
