use std::collections::BTreeMap;

use ccg_core::dense::{solve_small, SmallMatrix};
use ccg_core::Algo;
use serde::{Deserialize, Serialize};

use crate::aggregate::mean;
use crate::error::{BenchError, Result};
use crate::sweep::ExperimentRecord;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub slope: f64,
    pub intercept: f64,
    /// Residual sum of squares in the fitted coordinates.
    pub rss: f64,
    pub samples: usize,
}

/// Ordinary least squares line through `(xs, ys)`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    if xs.len() != ys.len() {
        return Err(BenchError::Fit(format!("{} abscissae for {} ordinates", xs.len(), ys.len())));
    }
    if xs.len() < 2 {
        return Err(BenchError::Fit("need at least two samples".into()));
    }
    let mx = mean(xs.to_vec());
    let my = mean(ys.to_vec());
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(BenchError::Fit("abscissae are all equal".into()));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(FitResult {
        slope,
        intercept,
        rss,
        samples: xs.len(),
    })
}

/// Least squares line through `(ln x, ln y)`.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Result<FitResult> {
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(BenchError::Fit("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    fit_line(&lx, &ly)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    /// Main loop wall time.
    Time,
    Iters,
}

impl std::str::FromStr for Metric {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "time" => Ok(Metric::Time),
            "iters" => Ok(Metric::Iters),
            other => Err(BenchError::Fit(format!("unknown metric {other:?}"))),
        }
    }
}

fn per_dimension(records: &[ExperimentRecord], algo: Algo, value: impl Fn(&ExperimentRecord) -> Option<f64>) -> BTreeMap<usize, Vec<f64>> {
    let mut by_n: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.algo == algo) {
        if let Some(v) = value(r) {
            by_n.entry(r.n).or_default().push(v);
        }
    }
    by_n
}

/// Log-log fit of the per-dimension mean of `metric` against `n` for one
/// algorithm, over converged records.
pub fn fit_metric(records: &[ExperimentRecord], algo: Algo, metric: Metric) -> Result<FitResult> {
    let by_n = per_dimension(records, algo, |r| {
        r.converged.then(|| match metric {
            Metric::Time => r.time_s(),
            Metric::Iters => r.iterations as f64,
        })
    });
    let xs: Vec<f64> = by_n.keys().map(|&n| n as f64).collect();
    let ys: Vec<f64> = by_n.into_values().map(mean).collect();
    fit_loglog(&xs, &ys)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParabolaFit {
    /// `t(n) ≈ c0 + c1 n + c2 n²` seconds per iteration.
    pub coeffs: [f64; 3],
    pub dims: Vec<usize>,
    /// Mean seconds per iteration at each dimension.
    pub iteration_time_s: Vec<f64>,
    /// Mean seconds per multiplication at each dimension.
    pub mult_time_s: Vec<f64>,
    pub mult_time_mean_s: f64,
    /// Sample standard deviation of `mult_time_s` across dimensions.
    pub mult_time_std_s: f64,
}

/// Fits a quadratic to time per iteration against `n` and estimates the
/// time of one scalar multiplication as time over counted multiplications
/// on the critical path, averaged per dimension.
pub fn fit_parabola_and_mult_time(records: &[ExperimentRecord], algo: Algo) -> Result<ParabolaFit> {
    let usable = |r: &ExperimentRecord| r.iterations > 0 && r.critical_mults > 0 && r.time_ns > 0;
    let per_iter = per_dimension(records, algo, |r| usable(r).then(|| r.time_s() / r.iterations as f64));
    let per_mult = per_dimension(records, algo, |r| usable(r).then(|| r.time_s() / r.critical_mults as f64));
    if per_iter.len() < 3 {
        return Err(BenchError::Fit(format!("need at least 3 dimensions with timings, have {}", per_iter.len())));
    }
    let dims: Vec<usize> = per_iter.keys().copied().collect();
    let iteration_time_s: Vec<f64> = per_iter.into_values().map(mean).collect();
    let mult_time_s: Vec<f64> = per_mult.into_values().map(mean).collect();

    // normal equations in the scaled variable s = n / n_max
    let scale = *dims.last().expect("nonempty") as f64;
    let mut normal = SmallMatrix::zeros(3, 3);
    let mut rhs = SmallMatrix::zeros(3, 1);
    for (&n, &t) in dims.iter().zip(&iteration_time_s) {
        let s = n as f64 / scale;
        let basis = [1.0, s, s * s];
        for i in 0..3 {
            for j in 0..3 {
                normal.set(i, j, normal.get(i, j) + basis[i] * basis[j]);
            }
            rhs.set(i, 0, rhs.get(i, 0) + basis[i] * t);
        }
    }
    let c = solve_small(&normal, &rhs, 0.0)?;
    let coeffs = [*c.get(0, 0), c.get(1, 0) / scale, c.get(2, 0) / (scale * scale)];

    let m = mean(mult_time_s.clone());
    let var = mult_time_s.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (mult_time_s.len() - 1) as f64;
    Ok(ParabolaFit {
        coeffs,
        dims,
        iteration_time_s,
        mult_time_s,
        mult_time_mean_s: m,
        mult_time_std_s: var.sqrt(),
    })
}
