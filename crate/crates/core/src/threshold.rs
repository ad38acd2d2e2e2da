//! Data-driven choice of the number `k` of top order statistics.
//!
//! The stability criterion for a trajectory `k -> gamma_hat(k)` is
//!
//! ```text
//! crit(k) = (1/k) * sum_{i = k_min}^{k} i^theta * |gamma_hat(i) - med(k)|
//! med(k)  = median { gamma_hat(k_min), ..., gamma_hat(k) }
//! ```
//!
//! and the selected `k` minimises it over the admissible candidates, ties going
//! to the smallest `k`. A window of a single point has criterion zero, so
//! candidates must span at least `min_window` trajectory points.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::estimators::Total;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RtConfig {
    /// Stability exponent, in `[0, 0.5]`.
    pub theta: f64,
    pub k_min: usize,
    /// `None` means `floor(0.9 n)`, clipped to `n - 1`.
    pub k_max: Option<usize>,
    /// Smallest number of trajectory points a candidate window may hold;
    /// `None` means `max(10, ceil(sqrt(n)))`.
    pub min_window: Option<usize>,
}

impl Default for RtConfig {
    fn default() -> Self {
        Self {
            theta: 0.3,
            k_min: 2,
            k_max: None,
            min_window: None,
        }
    }
}

/// Floor of the automatic window. With very short windows the criterion is
/// dominated by the first few noisy trajectory points and tends to return a
/// tiny `k`, so that the error no longer shrinks as `n` grows.
pub const MIN_WINDOW_FLOOR: usize = 10;

/// Growth of the automatic window, `WINDOW_SCALE * sqrt(n)`.
pub const WINDOW_SCALE: f64 = 0.75;

impl RtConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=0.5).contains(&self.theta) {
            return Err(invalid("rt_theta", format!("must lie in [0, 0.5], got {}", self.theta)));
        }
        if self.k_min < 2 {
            return Err(invalid("rt_k_min", "must be >= 2"));
        }
        if self.min_window == Some(0) {
            return Err(invalid("rt_min_window", "must be >= 1"));
        }
        if let Some(k_max) = self.k_max {
            if k_max <= self.k_min {
                return Err(invalid("rt_k_max", "must exceed rt_k_min"));
            }
        }
        Ok(())
    }

    /// Window length used for a sample of size `n`.
    pub fn window_for(&self, n: usize) -> usize {
        self.min_window
            .unwrap_or_else(|| MIN_WINDOW_FLOOR.max((WINDOW_SCALE * (n as f64).sqrt()).ceil() as usize))
    }

    /// Candidate range `[k_min, k_max]` for a sample of size `n`.
    pub fn range_for(&self, n: usize) -> Result<(usize, usize)> {
        self.validate()?;
        let upper = n.saturating_sub(1);
        let k_max = self
            .k_max
            .unwrap_or((0.9 * n as f64).floor() as usize)
            .min(upper);
        if k_max <= self.k_min {
            return Err(invalid(
                "n",
                format!("sample of size {n} leaves no k range above k_min = {}", self.k_min),
            ));
        }
        Ok((self.k_min, k_max))
    }
}

/// Fenwick tree over value ranks holding counts, weight sums and weighted values.
struct RankTree {
    count: Vec<usize>,
    weight: Vec<f64>,
    weighted: Vec<f64>,
}

impl RankTree {
    fn new(size: usize) -> Self {
        Self {
            count: vec![0; size + 1],
            weight: vec![0.0; size + 1],
            weighted: vec![0.0; size + 1],
        }
    }

    fn insert(&mut self, rank: usize, w: f64, value: f64) {
        let mut i = rank + 1;
        while i < self.count.len() {
            self.count[i] += 1;
            self.weight[i] += w;
            self.weighted[i] += w * value;
            i += i & i.wrapping_neg();
        }
    }

    /// Sums over ranks `< rank`.
    fn prefix(&self, rank: usize) -> (usize, f64, f64) {
        let (mut c, mut w, mut wv) = (0, 0.0, 0.0);
        let mut i = rank;
        while i > 0 {
            c += self.count[i];
            w += self.weight[i];
            wv += self.weighted[i];
            i -= i & i.wrapping_neg();
        }
        (c, w, wv)
    }

    /// Smallest rank whose cumulative count reaches `target` (1-based).
    fn find_by_count(&self, mut target: usize) -> usize {
        let size = self.count.len() - 1;
        let mut pos = 0;
        let mut step = size.next_power_of_two();
        while step > 0 {
            let next = pos + step;
            if next <= size && self.count[next] < target {
                pos = next;
                target -= self.count[next];
            }
            step >>= 1;
        }
        pos
    }
}

/// Criterion value for every candidate end point, computed incrementally.
///
/// `trajectory[j]` is `gamma_hat(k_min + j)`; `None` marks a failed evaluation,
/// which is skipped. Entry `j` of the result is `crit(k_min + j)`, or `None`
/// when the window holds fewer than one valid point.
pub fn criterion_path(trajectory: &[Option<f64>], k_min: usize, theta: f64) -> Vec<Option<f64>> {
    let mut ranked: Vec<(Total, usize)> = trajectory
        .iter()
        .enumerate()
        .filter_map(|(j, v)| v.map(|v| (Total(v), j)))
        .collect();
    ranked.sort();
    let mut rank_of = vec![usize::MAX; trajectory.len()];
    let sorted_values: Vec<f64> = ranked.iter().map(|(v, _)| v.0).collect();
    for (r, &(_, j)) in ranked.iter().enumerate() {
        rank_of[j] = r;
    }

    let mut tree = RankTree::new(ranked.len());
    let (mut seen, mut total_w, mut total_wv) = (0usize, 0.0, 0.0);
    let mut out = Vec::with_capacity(trajectory.len());
    for (j, v) in trajectory.iter().enumerate() {
        let k = k_min + j;
        if let Some(v) = *v {
            let w = (k as f64).powf(theta);
            tree.insert(rank_of[j], w, v);
            seen += 1;
            total_w += w;
            total_wv += w * v;
        }
        if seen == 0 {
            out.push(None);
            continue;
        }
        let median = if seen % 2 == 1 {
            sorted_values[tree.find_by_count(seen / 2 + 1)]
        } else {
            0.5 * (sorted_values[tree.find_by_count(seen / 2)] + sorted_values[tree.find_by_count(seen / 2 + 1)])
        };
        // split at the first rank holding a value >= median
        let split = sorted_values.partition_point(|&x| x < median);
        let (_, w_lo, wv_lo) = tree.prefix(split);
        let (w_hi, wv_hi) = (total_w - w_lo, total_wv - wv_lo);
        let dispersion = (median * w_lo - wv_lo) + (wv_hi - median * w_hi);
        out.push(Some(dispersion.max(0.0) / k as f64));
    }
    out
}

/// Picks `k` in `[k_min, k_max]` from a trajectory evaluated on that range,
/// for a sample of size `n`.
pub fn select_k_from_trajectory(trajectory: &[Option<f64>], k_min: usize, n: usize, cfg: &RtConfig) -> Result<usize> {
    let window = cfg.window_for(n);
    let k_max = k_min + trajectory.len().saturating_sub(1);
    if trajectory.iter().all(Option::is_none) {
        return Err(Error::NoValidK { k_min, k_max });
    }
    let path = criterion_path(trajectory, k_min, cfg.theta);
    let mut valid_points = 0usize;
    let mut best: Option<(f64, usize)> = None;
    let mut fallback = None;
    for (j, (crit, v)) in path.iter().zip(trajectory).enumerate() {
        if v.is_some() {
            valid_points += 1;
            fallback.get_or_insert(k_min + j);
        }
        let Some(c) = *crit else { continue };
        if valid_points < window || v.is_none() {
            continue;
        }
        if best.is_none_or(|(b, _)| c < b) {
            best = Some((c, k_min + j));
        }
    }
    // fewer valid points than the window: take the first valid k
    best.map(|(_, k)| k)
        .or(fallback)
        .ok_or(Error::NoValidK { k_min, k_max })
}

/// Evaluates `estimator` over `[k_min, k_max]` and applies the stability rule.
pub fn select_k<F>(estimator: F, n: usize, cfg: &RtConfig) -> Result<usize>
where
    F: Fn(usize) -> Result<f64>,
{
    let (k_min, k_max) = cfg.range_for(n)?;
    let trajectory: Vec<Option<f64>> = (k_min..=k_max).map(|k| estimator(k).ok()).collect();
    select_k_from_trajectory(&trajectory, k_min, n, cfg)
}
