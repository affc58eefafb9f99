use ccg_core::parallel::parallel_ccg;
use ccg_core::problem::{derive_seed, random_rhs_and_starts, random_spd};
use ccg_core::solvers::{ccg_solve, cg_solve, mccg_solve, steepest_descent_solve};
use ccg_core::{Algo, DenseBlock, SolveOptions, SolveTrace, SpdMatrix};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{BenchError, Result};

/// Caps the number of trials solved concurrently.
pub const MAX_THREADS_ENV: &str = "CCG_MAX_THREADS";

const TAG_MATRIX: u64 = 1;
const TAG_TRIAL: u64 = 2;

/// One solve of one algorithm on one generated problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub n: usize,
    pub cond: f64,
    pub tol: f64,
    pub algo: Algo,
    /// Agents used: `p` for cooperative algorithms, 1 otherwise.
    pub p: usize,
    pub trial: usize,
    /// Seed of `b` and `X0`; the matrix seed is part of `problem_id`.
    pub seed: u64,
    /// `matrix-seed:trial-seed` in hex; equal ids mean identical `A`, `b`, `X0`.
    pub problem_id: String,
    pub iterations: usize,
    /// Main loop wall time.
    pub time_ns: u64,
    pub converged: bool,
    /// Smallest agent residual norm at the end; absent when the solve failed.
    pub final_minres: Option<f64>,
    /// Multiplications on the critical path: all of them for sequential
    /// runs, the busiest worker's for threaded runs.
    pub critical_mults: u64,
    pub status: String,
}

impl ExperimentRecord {
    pub fn time_s(&self) -> f64 {
        self.time_ns as f64 * 1e-9
    }
}

pub fn matrix_seed(cfg: &ExperimentConfig, n: usize) -> u64 {
    derive_seed(cfg.seed, TAG_MATRIX, n as u64)
}

pub fn trial_seed(cfg: &ExperimentConfig, n: usize, trial: usize) -> u64 {
    derive_seed(cfg.seed, TAG_TRIAL, ((n as u64) << 24) | trial as u64)
}

/// Worker threads for trials: `jobs`, capped by [`MAX_THREADS_ENV`].
pub fn effective_jobs(jobs: usize) -> usize {
    let cap = std::env::var(MAX_THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|v| *v > 0);
    cap.map_or(jobs, |c| jobs.min(c)).max(1)
}

fn critical_mults<T>(algo: Algo, trace: &SolveTrace<T>) -> u64 {
    trace
        .records
        .iter()
        .map(|r| match (&r.mults_per_worker, algo) {
            (Some(per), Algo::CcgParallel) => per.iter().copied().max().unwrap_or(0),
            _ => r.mults,
        })
        .sum()
}

/// Runs `algo` once. Cooperative algorithms use every column of `x0`;
/// the others start from column 0.
pub fn solve_once(
    a: &SpdMatrix<f64>,
    b: &[f64],
    x0: &DenseBlock<f64>,
    algo: Algo,
    tol: f64,
    max_iters: Option<usize>,
) -> ccg_core::Result<SolveTrace<f64>> {
    let opts = SolveOptions {
        max_iters,
        ..SolveOptions::with_tol(tol)
    };
    match algo {
        Algo::Cg => cg_solve(a, b, x0.col(0), &opts),
        Algo::SteepestDescent => steepest_descent_solve(a, b, x0.col(0), &opts),
        Algo::Ccg => ccg_solve(a, b, x0, &opts),
        Algo::Mccg => mccg_solve(a, b, x0, &opts),
        Algo::CcgParallel => parallel_ccg(a, b, x0, &opts, x0.cols()),
    }
}

struct Job {
    tol_idx: usize,
    algo_idx: usize,
    trial: usize,
}

/// Solves every `(n, tol, algo, trial)` cell of the configuration.
///
/// The matrix depends on `n` only; `b` and `X0` depend on `(n, trial)`, so
/// all algorithms and tolerances in a trial see the same problem. Failures
/// are recorded with `converged = false` rather than aborting the sweep.
/// Records come back ordered by `n`, tolerance, algorithm and trial.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(effective_jobs(cfg.jobs))
        .build()
        .map_err(|e| BenchError::ThreadPool(e.to_string()))?;
    let mut out = Vec::with_capacity(cfg.dims.len() * cfg.tols.len() * cfg.algos.len() * cfg.trials);
    for &n in &cfg.dims {
        let mseed = matrix_seed(cfg, n);
        let a = random_spd(n, cfg.cond, mseed)?;
        let problems: Vec<(u64, Vec<f64>, DenseBlock<f64>)> = (0..cfg.trials)
            .map(|t| {
                let seed = trial_seed(cfg, n, t);
                let (b, x0) = random_rhs_and_starts(n, cfg.p, seed);
                (seed, b, x0)
            })
            .collect();
        let jobs: Vec<Job> = (0..cfg.tols.len())
            .flat_map(|tol_idx| {
                (0..cfg.algos.len())
                    .flat_map(move |algo_idx| (0..cfg.trials).map(move |trial| Job { tol_idx, algo_idx, trial }))
            })
            .collect();
        let records: Vec<ExperimentRecord> = pool.install(|| {
            jobs.par_iter()
                .map(|job| {
                    let (seed, b, x0) = &problems[job.trial];
                    let algo = cfg.algos[job.algo_idx];
                    let tol = cfg.tols[job.tol_idx];
                    let mut rec = ExperimentRecord {
                        n,
                        cond: cfg.cond,
                        tol,
                        algo,
                        p: if algo.is_cooperative() { cfg.p } else { 1 },
                        trial: job.trial,
                        seed: *seed,
                        problem_id: format!("{mseed:016x}:{seed:016x}"),
                        iterations: 0,
                        time_ns: 0,
                        converged: false,
                        final_minres: None,
                        critical_mults: 0,
                        status: String::new(),
                    };
                    match solve_once(&a, b, x0, algo, tol, cfg.max_iters) {
                        Ok(trace) => {
                            rec.iterations = trace.iterations();
                            rec.time_ns = trace.elapsed.as_nanos() as u64;
                            rec.converged = trace.status.is_converged();
                            rec.final_minres = Some(trace.final_minres());
                            rec.critical_mults = critical_mults(algo, &trace);
                            rec.status = status_name(&trace);
                        }
                        Err(e) => rec.status = format!("error: {e}"),
                    }
                    rec
                })
                .collect()
        });
        out.extend(records);
    }
    Ok(out)
}

fn status_name<T>(trace: &SolveTrace<T>) -> String {
    use ccg_core::Termination::*;
    match trace.status {
        Converged { agent } => format!("converged:{agent}"),
        RankCollapse { rank } => format!("rank-collapse:{rank}"),
        MaxIterations => "max-iterations".into(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            dims: vec![30, 60],
            cond: 100.0,
            tols: vec![1e-4],
            trials: 3,
            p: 3,
            seed: 5,
            algos: vec![Algo::Cg, Algo::Ccg],
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn record_count_is_the_cell_product() {
        let cfg = small_config();
        assert_eq!(run_sweep(&cfg).unwrap().len(), 12);
    }

    #[test]
    fn paired_algorithms_share_problems() {
        let recs = run_sweep(&small_config()).unwrap();
        for r in &recs {
            let partner = recs
                .iter()
                .find(|o| o.n == r.n && o.trial == r.trial && o.algo != r.algo)
                .unwrap();
            assert_eq!(r.problem_id, partner.problem_id);
            assert!(r.converged);
            assert!(r.final_minres.unwrap() <= r.tol);
        }
    }

    #[test]
    fn failures_are_recorded() {
        let cfg = ExperimentConfig {
            max_iters: Some(1),
            ..small_config()
        };
        let recs = run_sweep(&cfg).unwrap();
        assert!(recs.iter().all(|r| !r.converged && r.status == "max-iterations"));
    }

    #[test]
    fn threads_are_capped_by_environment() {
        assert!(effective_jobs(1) >= 1);
        assert_eq!(effective_jobs(0), 1);
    }
}
