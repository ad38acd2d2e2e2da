//! Burr sampling and the random right-truncation mechanism.
//!
//! A latent pair `(X, Y)` is drawn from independent Burr laws and kept only
//! when `X <= Y`. Each latent pair consumes exactly two `Open01` uniforms from
//! a ChaCha8 stream, the first for `X` and the second for `Y`, so a seed fully
//! determines the observed sample.

use std::io::Read;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Burr law with survival function `(1 + x^(1/delta))^(-delta/gamma)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BurrSpec {
    delta: f64,
    gamma: f64,
}

impl BurrSpec {
    pub fn new(delta: f64, gamma: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(invalid("delta", format!("must be finite and > 0, got {delta}")));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(invalid("gamma", format!("must be finite and > 0, got {gamma}")));
        }
        Ok(Self { delta, gamma })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Tail index of the survival function.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn survival(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 1.0;
        }
        // ln(1 + x^(1/delta)) computed without overflow for large x
        let log_x = x.ln() / self.delta;
        let log1p = if log_x > 30.0 {
            log_x + (-log_x).exp().ln_1p()
        } else {
            log_x.exp().ln_1p()
        };
        (-self.delta / self.gamma * log1p).exp()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        1.0 - self.survival(x)
    }

    /// Inverse of the distribution function: `((1-u)^(-gamma/delta) - 1)^delta`.
    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::ProbabilityOutOfRange(u));
        }
        // (1-u)^(-gamma/delta) - 1 == expm1(-(gamma/delta) * ln(1-u)); keeps precision as u -> 0
        let inner = (-(self.gamma / self.delta) * (-u).ln_1p()).exp_m1();
        Ok(inner.powf(self.delta))
    }
}

pub fn burr_quantile(spec: &BurrSpec, u: f64) -> Result<f64> {
    spec.quantile(u)
}

/// Law of the truncating variable.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Truncation {
    Burr(BurrSpec),
    /// Every `Y` is `+inf`: the complete-data case.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncationDesign {
    pub truncated: BurrSpec,
    pub truncating: Truncation,
    pub capital_n: usize,
}

impl TruncationDesign {
    pub fn new(truncated: BurrSpec, truncating: Truncation, capital_n: usize) -> Result<Self> {
        if capital_n == 0 {
            return Err(invalid("N", "latent sample size must be >= 1"));
        }
        Ok(Self {
            truncated,
            truncating,
            capital_n,
        })
    }

    /// Shared-delta Burr design whose observed fraction is `p`, i.e.
    /// `gamma2 = p * gamma1 / (1 - p)`.
    pub fn from_observed_fraction(gamma1: f64, p: f64, delta: f64, capital_n: usize) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(invalid("p", format!("must lie in (0, 1), got {p}")));
        }
        let gamma2 = p * gamma1 / (1.0 - p);
        Self::new(
            BurrSpec::new(delta, gamma1)?,
            Truncation::Burr(BurrSpec::new(delta, gamma2)?),
            capital_n,
        )
    }

    pub fn gamma1(&self) -> f64 {
        self.truncated.gamma
    }

    /// `None` in the complete-data case.
    pub fn gamma2(&self) -> Option<f64> {
        match self.truncating {
            Truncation::Burr(spec) => Some(spec.gamma),
            Truncation::None => None,
        }
    }

    /// `P(X <= Y) = gamma2 / (gamma1 + gamma2)`; exact when both laws share delta.
    pub fn observed_fraction(&self) -> f64 {
        match self.gamma2() {
            Some(g2) => g2 / (self.gamma1() + g2),
            None => 1.0,
        }
    }

    /// Human-readable caveats about the design; empty when nothing is off.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if let Truncation::Burr(g) = self.truncating {
            if self.truncated.gamma >= g.gamma {
                out.push(format!(
                    "gamma1 = {} >= gamma2 = {}: the asymptotic theory assumes gamma1 < gamma2",
                    self.truncated.gamma, g.gamma
                ));
            }
            if self.truncated.delta != g.delta {
                out.push("truncated and truncating laws use different delta; \
                          observed fraction is no longer gamma2/(gamma1+gamma2)"
                    .to_string());
            }
        }
        out
    }
}

/// Upper member of an observed pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum UpperBound {
    Finite(f64),
    /// No truncation: the pair brackets every `t >= x`.
    Unbounded,
}

impl UpperBound {
    pub fn as_f64(self) -> f64 {
        match self {
            UpperBound::Finite(y) => y,
            UpperBound::Unbounded => f64::INFINITY,
        }
    }

    pub fn covers(self, t: f64) -> bool {
        match self {
            UpperBound::Finite(y) => t <= y,
            UpperBound::Unbounded => true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub x: f64,
    pub y: UpperBound,
}

/// The truncated dataset: pairs with `0 < x <= y`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedSample {
    pairs: Vec<Observation>,
}

impl ObservedSample {
    pub fn new(pairs: Vec<Observation>) -> Result<Self> {
        if pairs.is_empty() {
            return Err(Error::EmptySample);
        }
        for (row, p) in pairs.iter().enumerate() {
            check_pair(row, p.x, p.y)?;
        }
        Ok(Self { pairs })
    }

    /// Convenience constructor from finite `(x, y)` tuples.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Result<Self> {
        Self::new(
            pairs
                .iter()
                .map(|&(x, y)| Observation {
                    x,
                    y: if y == f64::INFINITY {
                        UpperBound::Unbounded
                    } else {
                        UpperBound::Finite(y)
                    },
                })
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[Observation] {
        &self.pairs
    }

    pub fn xs(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.x).collect()
    }

    /// Upper members with the sentinel mapped to `+inf`.
    pub fn ys(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.y.as_f64()).collect()
    }

    /// True when no pair is truncated.
    pub fn is_complete(&self) -> bool {
        self.pairs.iter().all(|p| p.y == UpperBound::Unbounded)
    }

    /// Multiplies every `x` by `cx` and every finite `y` by `cy`.
    pub fn rescaled(&self, cx: f64, cy: f64) -> Result<Self> {
        Self::new(
            self.pairs
                .iter()
                .map(|p| Observation {
                    x: p.x * cx,
                    y: match p.y {
                        UpperBound::Finite(y) => UpperBound::Finite(y * cy),
                        UpperBound::Unbounded => UpperBound::Unbounded,
                    },
                })
                .collect(),
        )
    }

    /// Reads a CSV with header `x,y`; `y` may be the token `inf`.
    ///
    /// Row numbers in errors are 1-based file line numbers.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers = rdr.headers().map_err(|e| Error::InvalidObservation {
            row: 1,
            reason: e.to_string(),
        })?;
        if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "y" {
            return Err(Error::InvalidObservation {
                row: 1,
                reason: format!("expected header `x,y`, found `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
        let mut pairs = Vec::new();
        for record in rdr.records() {
            let record = record.map_err(|e| Error::InvalidObservation {
                row: e.position().map_or(0, |p| p.line() as usize),
                reason: e.to_string(),
            })?;
            let row = record.position().map_or(0, |p| p.line() as usize);
            if record.len() != 2 {
                return Err(Error::InvalidObservation {
                    row,
                    reason: format!("expected 2 fields, found {}", record.len()),
                });
            }
            let x: f64 = record[0].parse().map_err(|_| Error::InvalidObservation {
                row,
                reason: format!("cannot parse x = `{}`", &record[0]),
            })?;
            let y = match &record[1] {
                "inf" | "Inf" | "INF" | "+inf" => UpperBound::Unbounded,
                s => UpperBound::Finite(s.parse().map_err(|_| Error::InvalidObservation {
                    row,
                    reason: format!("cannot parse y = `{s}`"),
                })?),
            };
            check_pair(row, x, y)?;
            pairs.push(Observation { x, y });
        }
        Self::new(pairs)
    }
}

fn check_pair(row: usize, x: f64, y: UpperBound) -> Result<()> {
    let bad = |reason: String| Err(Error::InvalidObservation { row, reason });
    if !(x.is_finite() && x > 0.0) {
        return bad(format!("x = {x} must be finite and > 0"));
    }
    if let UpperBound::Finite(y) = y {
        if !(y.is_finite() && y > 0.0) {
            return bad(format!("y = {y} must be finite and > 0"));
        }
        if x > y {
            return bad(format!("x = {x} exceeds y = {y}"));
        }
    }
    Ok(())
}

/// Draws `N` latent pairs by inverse transform and keeps those with `x <= y`.
pub fn sample_truncated(design: &TruncationDesign, seed: u64) -> Result<ObservedSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::with_capacity(design.capital_n);
    for _ in 0..design.capital_n {
        let ux: f64 = rng.sample(Open01);
        let uy: f64 = rng.sample(Open01);
        let x = design.truncated.quantile(ux)?;
        let y = match design.truncating {
            Truncation::Burr(spec) => UpperBound::Finite(spec.quantile(uy)?),
            Truncation::None => UpperBound::Unbounded,
        };
        if y.covers(x) && x > 0.0 {
            pairs.push(Observation { x, y });
        }
    }
    if pairs.is_empty() {
        return Err(Error::EmptySample);
    }
    Ok(ObservedSample { pairs })
}

/// Wraps complete (untruncated) data: every pair carries the unbounded sentinel.
pub fn complete_data_mode(xs: &[f64]) -> Result<ObservedSample> {
    ObservedSample::new(
        xs.iter()
            .map(|&x| Observation {
                x,
                y: UpperBound::Unbounded,
            })
            .collect(),
    )
}

/// SplitMix64 finaliser.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a master seed and a path of counters.
pub fn derive_seed(master: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(master), |acc, &c| mix64(acc ^ mix64(c)))
}
