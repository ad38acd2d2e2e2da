//! Monte Carlo replication over a grid of (N, p, kernel) cells.
//!
//! Every replicate draws one truncated Burr sample and runs each estimator on
//! it with its own stability-selected `k`. Replicate seeds depend only on the
//! master seed, `N`, `p`, the replicate index and a resampling counter, so a
//! cell gives the same numbers whichever grid it sits in and whatever the
//! thread count. All kernels of a cell share the same samples.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{DfRule, EstimatorKind, EstimatorOptions, PreparedSample, TailConvention};
use crate::kernels::{BuiltinKernel, Kernel};
use crate::model::{derive_seed, sample_truncated, TruncationDesign};
use crate::threshold::{select_k_from_trajectory, RtConfig};

/// Give up on a replicate after this many empty samples in a row.
const MAX_RESAMPLES: u64 = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub gamma1: f64,
    pub p_values: Vec<f64>,
    pub n_values: Vec<usize>,
    pub replicates: usize,
    pub delta: f64,
    pub kernels: Vec<BuiltinKernel>,
    pub estimators: Vec<EstimatorKind>,
    pub master_seed: u64,
    pub rt: RtConfig,
    pub options: EstimatorOptions,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            gamma1: 0.6,
            p_values: vec![0.7, 0.8, 0.9],
            n_values: vec![150, 200, 300, 500, 1000, 1500, 2000],
            replicates: 1000,
            delta: 0.25,
            kernels: vec![BuiltinKernel::Biweight],
            estimators: vec![EstimatorKind::Kernel, EstimatorKind::Bmn, EstimatorKind::Gs],
            master_seed: 0,
            rt: RtConfig::default(),
            options: EstimatorOptions::default(),
        }
    }
}

fn config_err(line: usize, key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        line,
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn parse_one<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e: T::Err| config_err(line, key, format!("cannot parse `{}`: {e}", value.trim())))
}

fn parse_list<T: std::str::FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    let items: Vec<T> = value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_one(line, key, s))
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(config_err(line, key, "empty list"));
    }
    Ok(items)
}

fn join<T: std::fmt::Display>(items: &[T]) -> String {
    items.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ")
}

impl SimulationConfig {
    /// Parses a flat `key = value` file. `#` starts a comment; lists are
    /// comma-separated. Missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = std::collections::HashSet::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(config_err(line, content, "expected `key = value`"));
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(config_err(line, key, "duplicate key"));
            }
            match key {
                "gamma1" => cfg.gamma1 = parse_one(line, key, value)?,
                "p_values" => cfg.p_values = parse_list(line, key, value)?,
                "n_values" => cfg.n_values = parse_list(line, key, value)?,
                "replicates" => cfg.replicates = parse_one(line, key, value)?,
                "delta" => cfg.delta = parse_one(line, key, value)?,
                "kernels" => cfg.kernels = parse_list(line, key, value)?,
                "estimators" => cfg.estimators = parse_list(line, key, value)?,
                "master_seed" => cfg.master_seed = parse_one(line, key, value)?,
                "rt_theta" => cfg.rt.theta = parse_one(line, key, value)?,
                "rt_k_min" => cfg.rt.k_min = parse_one(line, key, value)?,
                "rt_k_max" => {
                    cfg.rt.k_max = match value {
                        "auto" => None,
                        v => Some(parse_one(line, key, v)?),
                    }
                }
                "rt_min_window" => {
                    cfg.rt.min_window = match value {
                        "auto" => None,
                        v => Some(parse_one(line, key, v)?),
                    }
                }
                "tail_convention" => cfg.options.tail = parse_one::<TailConvention>(line, key, value)?,
                "df_rule" => cfg.options.df = parse_one::<DfRule>(line, key, value)?,
                _ => return Err(config_err(line, key, "unknown key")),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> std::io::Result<Result<Self>> {
        Ok(Self::parse(&std::fs::read_to_string(path)?))
    }

    /// Serialises to the same flat format; `parse(to_config_string())` is the identity.
    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let tail = match self.options.tail {
            TailConvention::PartialSum => "partial-sum",
            TailConvention::Product => "product",
        };
        let df = match self.options.df {
            DfRule::Auto => "auto",
            DfRule::Woodroofe => "woodroofe",
        };
        let _ = writeln!(s, "gamma1 = {}", self.gamma1);
        let _ = writeln!(s, "p_values = {}", join(&self.p_values));
        let _ = writeln!(s, "n_values = {}", join(&self.n_values));
        let _ = writeln!(s, "replicates = {}", self.replicates);
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "kernels = {}", join(&self.kernels));
        let _ = writeln!(s, "estimators = {}", join(&self.estimators));
        let _ = writeln!(s, "master_seed = {}", self.master_seed);
        let _ = writeln!(s, "rt_theta = {}", self.rt.theta);
        let _ = writeln!(s, "rt_k_min = {}", self.rt.k_min);
        match self.rt.k_max {
            Some(k) => {
                let _ = writeln!(s, "rt_k_max = {k}");
            }
            None => {
                let _ = writeln!(s, "rt_k_max = auto");
            }
        }
        match self.rt.min_window {
            Some(w) => {
                let _ = writeln!(s, "rt_min_window = {w}");
            }
            None => {
                let _ = writeln!(s, "rt_min_window = auto");
            }
        }
        let _ = writeln!(s, "tail_convention = {tail}");
        let _ = writeln!(s, "df_rule = {df}");
        s
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, reason: &str| Err(config_err(0, key, reason));
        if !(self.gamma1 > 0.0 && self.gamma1.is_finite()) {
            return bad("gamma1", "must be positive");
        }
        if self.p_values.is_empty() || self.p_values.iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return bad("p_values", "each p must lie in (0, 1)");
        }
        if self.n_values.is_empty() || self.n_values.contains(&0) {
            return bad("n_values", "each N must be positive");
        }
        if self.replicates == 0 {
            return bad("replicates", "must be >= 1");
        }
        if !(self.delta > 0.0 && self.delta.is_finite()) {
            return bad("delta", "must be positive");
        }
        if self.kernels.is_empty() {
            return bad("kernels", "empty list");
        }
        if self.estimators.is_empty() {
            return bad("estimators", "empty list");
        }
        self.rt.validate().map_err(|e| config_err(0, "rt", e.to_string()))
    }

    pub fn cells(&self) -> Vec<Cell> {
        let mut out = Vec::new();
        for &kernel in &self.kernels {
            for &p in &self.p_values {
                for &capital_n in &self.n_values {
                    out.push(Cell { capital_n, p, kernel });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub capital_n: usize,
    pub p: f64,
    pub kernel: BuiltinKernel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(rename = "N")]
    pub capital_n: usize,
    pub mean_n: f64,
    pub p: f64,
    pub gamma1: f64,
    pub kernel: BuiltinKernel,
    pub estimator: EstimatorKind,
    /// `NaN` when every replicate failed.
    pub abs_bias: f64,
    pub rmse: f64,
    pub failures: usize,
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellMoments {
    pub abs_bias: f64,
    pub rmse: f64,
    pub failures: usize,
}

impl CellMoments {
    /// `|mean - gamma1|` and `sqrt(mean (est - gamma1)^2)` over the successful replicates.
    pub fn from_estimates(gamma1: f64, estimates: &[Option<f64>]) -> Result<Self> {
        let (mut err, mut sq) = (CompensatedSum::default(), CompensatedSum::default());
        let mut ok = 0usize;
        for e in estimates.iter().flatten() {
            let d = e - gamma1;
            err.add(d);
            sq.add(d * d);
            ok += 1;
        }
        if ok == 0 {
            return Err(Error::CellFailed);
        }
        let m = ok as f64;
        Ok(Self {
            abs_bias: (err.value() / m).abs(),
            rmse: (sq.value() / m).sqrt(),
            failures: estimates.len() - ok,
        })
    }
}

/// One replicate: the observed size and one estimate per estimator.
#[derive(Debug, Clone)]
struct Replicate {
    n: usize,
    estimates: Vec<Option<f64>>,
}

/// Applies the stability rule to `kind` on a prepared sample and returns `gamma_hat(k*)`.
pub fn rt_estimate(
    prepared: &PreparedSample,
    kind: EstimatorKind,
    kernel: &dyn Kernel,
    rt: &RtConfig,
) -> Result<(usize, f64)> {
    let (k_min, k_max) = rt.range_for(prepared.n())?;
    let trajectory: Vec<Option<f64>> = prepared
        .trajectory(kind, kernel, k_min, k_max)
        .into_iter()
        .map(|r| r.ok())
        .collect();
    let k = select_k_from_trajectory(&trajectory, k_min, prepared.n(), rt)?;
    let value = trajectory[k - k_min].ok_or(Error::NoValidK { k_min, k_max })?;
    Ok((k, value))
}

fn replicate_seed(cfg: &SimulationConfig, cell: &Cell, index: u64, attempt: u64) -> u64 {
    derive_seed(cfg.master_seed, &[cell.capital_n as u64, cell.p.to_bits(), index, attempt])
}

fn run_replicate(cfg: &SimulationConfig, cell: &Cell, design: &TruncationDesign, index: u64) -> Replicate {
    let mut attempt = 0;
    let sample = loop {
        match sample_truncated(design, replicate_seed(cfg, cell, index, attempt)) {
            Ok(s) => break Some(s),
            Err(Error::EmptySample) if attempt + 1 < MAX_RESAMPLES => attempt += 1,
            Err(_) => break None,
        }
    };
    let Some(sample) = sample else {
        return Replicate {
            n: 0,
            estimates: vec![None; cfg.estimators.len()],
        };
    };
    let prepared = PreparedSample::new(&sample, cfg.options);
    let estimates = cfg
        .estimators
        .iter()
        .map(|&kind| rt_estimate(&prepared, kind, &cell.kernel, &cfg.rt).ok().map(|(_, v)| v))
        .collect();
    Replicate {
        n: sample.len(),
        estimates,
    }
}

/// Runs one cell; rows follow `cfg.estimators`. An estimator that failed on
/// every replicate yields a row with `NaN` moments.
pub fn run_cell(cfg: &SimulationConfig, cell: &Cell) -> Result<Vec<ReportRow>> {
    cfg.validate()?;
    let design = TruncationDesign::from_observed_fraction(cfg.gamma1, cell.p, cfg.delta, cell.capital_n)?;
    let replicates: Vec<Replicate> = (0..cfg.replicates as u64)
        .into_par_iter()
        .map(|i| run_replicate(cfg, cell, &design, i))
        .collect();

    let mut n_sum = CompensatedSum::default();
    for r in &replicates {
        n_sum.add(r.n as f64);
    }
    let mean_n = n_sum.value() / replicates.len() as f64;

    let mut rows = Vec::with_capacity(cfg.estimators.len());
    let mut any_ok = false;
    for (j, &estimator) in cfg.estimators.iter().enumerate() {
        let column: Vec<Option<f64>> = replicates.iter().map(|r| r.estimates[j]).collect();
        let moments = CellMoments::from_estimates(cfg.gamma1, &column);
        any_ok |= moments.is_ok();
        let m = moments.unwrap_or(CellMoments {
            abs_bias: f64::NAN,
            rmse: f64::NAN,
            failures: column.len(),
        });
        rows.push(ReportRow {
            capital_n: cell.capital_n,
            mean_n,
            p: cell.p,
            gamma1: cfg.gamma1,
            kernel: cell.kernel,
            estimator,
            abs_bias: m.abs_bias,
            rmse: m.rmse,
            failures: m.failures,
        });
    }
    if !any_ok {
        return Err(Error::CellFailed);
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellError {
    pub cell: Cell,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub rows: Vec<ReportRow>,
    pub errors: Vec<CellError>,
}

/// Runs every cell in order; a failing cell is recorded and the grid continues.
pub fn run_grid(cfg: &SimulationConfig) -> Result<SimulationReport> {
    cfg.validate()?;
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for cell in cfg.cells() {
        match run_cell(cfg, &cell) {
            Ok(r) => rows.extend(r),
            Err(error) => errors.push(CellError { cell, error }),
        }
    }
    Ok(SimulationReport { rows, errors })
}

impl SimulationReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        for row in &self.rows {
            w.serialize(row).expect("in-memory csv write");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
    }

    /// Text table: one block per (kernel, p), one line per N, two columns per estimator.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let mut blocks: Vec<(BuiltinKernel, f64, f64)> = Vec::new();
        for r in &self.rows {
            if !blocks.iter().any(|&(k, p, _)| k == r.kernel && p == r.p) {
                blocks.push((r.kernel, r.p, r.gamma1));
            }
        }
        for (kernel, p, gamma1) in blocks {
            let block: Vec<&ReportRow> = self.rows.iter().filter(|r| r.kernel == kernel && r.p == p).collect();
            let mut estimators: Vec<EstimatorKind> = Vec::new();
            let mut ns: Vec<usize> = Vec::new();
            for r in &block {
                if !estimators.contains(&r.estimator) {
                    estimators.push(r.estimator);
                }
                if !ns.contains(&r.capital_n) {
                    ns.push(r.capital_n);
                }
            }
            let _ = writeln!(out, "kernel = {kernel}, gamma1 = {gamma1}, p = {p}");
            let _ = write!(out, "{:>6} {:>8}", "N", "n");
            for e in &estimators {
                let _ = write!(out, " | {:>9} {:>9} {:>4}", format!("{e} bias"), "rmse", "fail");
            }
            out.push('\n');
            for n in ns {
                let first = block.iter().find(|r| r.capital_n == n).expect("row exists");
                let _ = write!(out, "{:>6} {:>8.1}", n, first.mean_n);
                for e in &estimators {
                    match block.iter().find(|r| r.capital_n == n && r.estimator == *e) {
                        Some(r) => {
                            let _ = write!(out, " | {:>9.3} {:>9.3} {:>4}", r.abs_bias, r.rmse, r.failures);
                        }
                        None => {
                            let _ = write!(out, " | {:>9} {:>9} {:>4}", "-", "-", "-");
                        }
                    }
                }
                out.push('\n');
            }
            out.push('\n');
        }
        for e in &self.errors {
            let _ = writeln!(
                out,
                "cell N = {}, p = {}, kernel = {} failed: {}",
                e.cell.capital_n, e.cell.p, e.cell.kernel, e.error
            );
        }
        out
    }
}
