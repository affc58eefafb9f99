use std::collections::BTreeMap;

use ccg_core::Algo;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{BenchError, Result};
use crate::sweep::{run_sweep, ExperimentRecord};

/// Paired comparison of CG against one cooperative algorithm at one `(n, tol)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub tol: f64,
    pub cooperative: Algo,
    pub cg_trials: usize,
    pub coop_trials: usize,
    pub cg_iters_mean: f64,
    pub coop_iters_mean: f64,
    pub cg_time_mean_s: f64,
    pub coop_time_mean_s: f64,
    /// Mean CG iterations over mean cooperative iterations.
    pub iteration_ratio: f64,
    /// Mean CG time over mean cooperative time.
    pub speedup: f64,
    /// False when any trial in the cell did not converge.
    pub all_converged: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub cells: Vec<CellSummary>,
    pub warnings: Vec<String>,
}

/// Mean that does not depend on the order of `values`.
pub(crate) fn mean(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

type CellKey = (usize, u64);

fn ratio(num: f64, den: f64) -> f64 {
    if den > 0.0 {
        num / den
    } else {
        f64::NAN
    }
}

/// Groups records by `(n, tol)` and compares CG with each cooperative
/// algorithm present. Cells lacking either side are skipped with a warning.
/// Cells are ordered by ascending `n`, then descending `tol`.
pub fn aggregate(records: &[ExperimentRecord]) -> Aggregate {
    let mut cells: BTreeMap<CellKey, BTreeMap<Algo, Vec<&ExperimentRecord>>> = BTreeMap::new();
    for r in records {
        cells.entry((r.n, r.tol.to_bits())).or_default().entry(r.algo).or_default().push(r);
    }
    let mut out = Aggregate::default();
    for ((n, tol_bits), by_algo) in cells {
        let tol = f64::from_bits(tol_bits);
        let baseline = by_algo.get(&Algo::Cg);
        let coops: Vec<Algo> = by_algo.keys().copied().filter(|a| a.is_cooperative()).collect();
        if coops.is_empty() {
            out.warnings.push(format!("n = {n}, tol = {tol:e}: no cooperative records, cell omitted"));
            continue;
        }
        let Some(baseline) = baseline else {
            out.warnings.push(format!("n = {n}, tol = {tol:e}: no cg records, cell omitted"));
            continue;
        };
        for coop in coops {
            let coop_recs = &by_algo[&coop];
            let iters = |rs: &[&ExperimentRecord]| mean(rs.iter().map(|r| r.iterations as f64).collect());
            let times = |rs: &[&ExperimentRecord]| mean(rs.iter().map(|r| r.time_s()).collect());
            let (cg_it, co_it) = (iters(baseline), iters(coop_recs));
            let (cg_t, co_t) = (times(baseline), times(coop_recs));
            out.cells.push(CellSummary {
                n,
                tol,
                cooperative: coop,
                cg_trials: baseline.len(),
                coop_trials: coop_recs.len(),
                cg_iters_mean: cg_it,
                coop_iters_mean: co_it,
                cg_time_mean_s: cg_t,
                coop_time_mean_s: co_t,
                iteration_ratio: ratio(cg_it, co_it),
                speedup: ratio(cg_t, co_t),
                all_converged: baseline.iter().chain(coop_recs).all(|r| r.converged),
            });
        }
    }
    out.cells.sort_by(|a, b| a.n.cmp(&b.n).then(b.tol.total_cmp(&a.tol)).then(a.cooperative.cmp(&b.cooperative)));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceTable {
    pub n: usize,
    /// One cell per tolerance, loosest first.
    pub rows: Vec<CellSummary>,
    pub cg_nondecreasing: bool,
    pub coop_nondecreasing: bool,
    pub warnings: Vec<String>,
}

/// Builds the tolerance table from already collected records of one
/// dimension; `tols` must be strictly decreasing.
pub fn tolerance_table(records: &[ExperimentRecord], tols: &[f64]) -> Result<ToleranceTable> {
    if tols.is_empty() || tols.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(BenchError::Config(format!("tolerances must be strictly decreasing, got {tols:?}")));
    }
    let dims: Vec<usize> = {
        let mut d: Vec<usize> = records.iter().map(|r| r.n).collect();
        d.sort_unstable();
        d.dedup();
        d
    };
    if dims.len() != 1 {
        return Err(BenchError::Config(format!("tolerance sweep needs one dimension, got {dims:?}")));
    }
    let agg = aggregate(records);
    let coop = agg.cells.first().map(|c| c.cooperative);
    let rows: Vec<CellSummary> = tols
        .iter()
        .filter_map(|t| agg.cells.iter().find(|c| c.tol == *t && Some(c.cooperative) == coop).cloned())
        .collect();
    let nondecreasing = |f: fn(&CellSummary) -> f64| rows.windows(2).all(|w| f(&w[1]) >= f(&w[0]));
    Ok(ToleranceTable {
        n: dims[0],
        cg_nondecreasing: nondecreasing(|c| c.cg_iters_mean),
        coop_nondecreasing: nondecreasing(|c| c.coop_iters_mean),
        rows,
        warnings: agg.warnings,
    })
}

/// Runs the configured sweep at its single dimension and tabulates it by tolerance.
pub fn tolerance_sweep(cfg: &ExperimentConfig) -> Result<(ToleranceTable, Vec<ExperimentRecord>)> {
    if cfg.dims.len() != 1 {
        return Err(BenchError::Config("tolerance sweep needs exactly one dimension".into()));
    }
    if cfg.tols.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(BenchError::Config(format!("tolerances must be strictly decreasing, got {:?}", cfg.tols)));
    }
    let records = run_sweep(cfg)?;
    Ok((tolerance_table(&records, &cfg.tols)?, records))
}
