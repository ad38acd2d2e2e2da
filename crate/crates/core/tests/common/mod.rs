//! Naive transcriptions of the estimator formulas, written without the
//! library's sorted views, prefix sums or kernel code.

#![allow(dead_code)]

use trunctail::model::ObservedSample;

pub struct Naive {
    xs: Vec<f64>,
    ys: Vec<f64>,
    n: f64,
}

impl Naive {
    pub fn new(sample: &ObservedSample) -> Self {
        Self {
            xs: sample.xs(),
            ys: sample.ys(),
            n: sample.len() as f64,
        }
    }

    /// `C_n(x) = n^-1 #{i : X_i <= x <= Y_i}`.
    pub fn cn(&self, x: f64) -> f64 {
        let hits = self.xs.iter().zip(&self.ys).filter(|(&xi, &yi)| xi <= x && x <= yi).count();
        hits as f64 / self.n
    }

    /// Woodroofe: `prod_{X_i > x} exp(-1 / (n C_n(X_i)))`.
    pub fn df(&self, x: f64) -> f64 {
        self.xs
            .iter()
            .filter(|&&xi| xi > x)
            .map(|&xi| (-1.0 / (self.n * self.cn(xi))).exp())
            .product()
    }

    /// Sum-form tail `n^-1 sum_{X_i > z} F_n(X_i) / C_n(X_i)`.
    pub fn tail(&self, z: f64) -> f64 {
        self.xs
            .iter()
            .filter(|&&xi| xi > z)
            .map(|&xi| self.df(xi) / self.cn(xi))
            .sum::<f64>()
            / self.n
    }

    fn desc(v: &[f64]) -> Vec<f64> {
        let mut s = v.to_vec();
        s.sort_by(|a, b| b.partial_cmp(a).unwrap());
        s
    }

    /// `(X_{n-i+1:n})_{i=1..=k}` and `X_{n-k:n}`.
    fn top(&self, k: usize) -> (Vec<f64>, f64) {
        let d = Self::desc(&self.xs);
        (d[..k].to_vec(), d[k])
    }

    pub fn weight(&self, x: f64) -> f64 {
        self.df(x) / self.cn(x)
    }

    pub fn bmn(&self, k: usize) -> f64 {
        let (top, thr) = self.top(k);
        let num: f64 = top.iter().map(|&x| self.weight(x) * (x / thr).ln()).sum();
        let den: f64 = top.iter().map(|&x| self.weight(x)).sum();
        num / den
    }

    pub fn kernel(&self, k: usize, g: impl Fn(f64) -> f64) -> f64 {
        let (top, thr) = self.top(k);
        let base = self.tail(thr);
        let num: f64 = top
            .iter()
            .map(|&x| self.weight(x) * g(self.tail(x) / base) * (x / thr).ln())
            .sum();
        let den: f64 = top.iter().map(|&x| self.weight(x)).sum();
        num / den
    }

    pub fn gs(&self, k: usize) -> f64 {
        let (xt, xk) = self.top(k);
        let yd = Self::desc(&self.ys);
        let (yt, yk) = (&yd[..k], yd[k]);
        let sx: f64 = xt.iter().map(|x| (x / xk).ln()).sum();
        let sy: f64 = yt.iter().map(|y| (y / yk).ln()).sum();
        let den: f64 = xt.iter().zip(yt).map(|(x, y)| (xk * y / (yk * x)).ln()).sum();
        sx * sy / (k as f64 * den)
    }
}

pub fn hill(xs: &[f64], k: usize) -> f64 {
    let mut d = xs.to_vec();
    d.sort_by(|a, b| b.partial_cmp(a).unwrap());
    d[..k].iter().map(|x| (x / d[k]).ln()).sum::<f64>() / k as f64
}

/// `d/ds [s K(s)]` from the expanded polynomials of `s K(s)`.
pub fn g_biweight(s: f64) -> f64 {
    if !(0.0..1.0).contains(&s) {
        return 0.0;
    }
    15.0 / 8.0 * (1.0 - 6.0 * s * s + 5.0 * s.powi(4))
}

pub fn g_triweight(s: f64) -> f64 {
    if !(0.0..1.0).contains(&s) {
        return 0.0;
    }
    35.0 / 16.0 * (1.0 - 9.0 * s * s + 15.0 * s.powi(4) - 7.0 * s.powi(6))
}

pub fn g_indicator(s: f64) -> f64 {
    if (0.0..1.0).contains(&s) {
        1.0
    } else {
        0.0
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * b.abs().max(1.0)
}
