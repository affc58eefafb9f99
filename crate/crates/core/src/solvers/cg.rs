use std::time::Instant;

use super::{a_norm_errors, check_system, true_residual_norms, Algo, History, IterationRecord, SolveOptions, SolveTrace, Termination};
use crate::complexity::count_iteration_mults;
use crate::dense::{combine_into, dot, DenseBlock, SpdMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Conjugate gradient with `r = Ax − b`, `α = −rᵀd/(dᵀAd)` and
/// `β = −r₊ᵀAd/(dᵀAd)`.
///
/// Uses the same kernels, in the same order, as the cooperative solver so
/// that a one-agent cooperative run reproduces these iterates bit for bit.
pub fn cg_solve<T: Scalar>(a: &SpdMatrix<T>, b: &[T], x0: &[T], opts: &SolveOptions<T>) -> Result<SolveTrace<T>> {
    let n = a.n();
    let start_block = DenseBlock::from_col_major(x0.len(), 1, x0.to_vec())?;
    check_system(a, b, &start_block)?;
    opts.validate()?;
    let max_iters = opts.max_iters_for(n);

    let mut x = x0.to_vec();
    let mut r = a.residual(&x, b);
    let mut d = r.clone();
    let mut ad = vec![T::zero(); n];
    let mut scratch = vec![T::zero(); n];
    let per_iter = count_iteration_mults(n, 1);

    let mut history = opts.verify.then(History::default);
    let mut records = vec![record(a, opts, 0, &x, &r, 0, 0)?];
    push_history(&mut history, &x, &r, &d);

    let started = Instant::now();
    let mut k = 0;
    let status = loop {
        if opts.meets_tol(&dot(&r, &r)) {
            break Termination::Converged { agent: 0 };
        }
        if k == max_iters {
            break Termination::MaxIterations;
        }
        let t0 = Instant::now();
        a.mul_vec_into(&d, &mut ad);
        let m = dot(&d, &ad);
        if !m.is_positive() {
            if d.iter().all(|v| v.is_zero()) {
                break Termination::RankCollapse { rank: 0 };
            }
            return Err(Error::NotPositiveDefinite(format!("dᵀAd ≤ 0 at iteration {k}")));
        }
        let alpha = -dot(&r, &d) / m.clone();
        combine_into(&mut scratch, &x, &[&d], std::slice::from_ref(&alpha));
        std::mem::swap(&mut x, &mut scratch);

        let mut mults = per_iter;
        if opts.residual_policy.recompute_after(k) {
            super::residual_into(a, &x, b, &mut scratch);
            mults += (n * n - n) as u64;
        } else {
            combine_into(&mut scratch, &r, &[&ad], std::slice::from_ref(&alpha));
        }
        std::mem::swap(&mut r, &mut scratch);

        let beta = -dot(&r, &ad) / m;
        combine_into(&mut scratch, &r, &[&d], std::slice::from_ref(&beta));
        std::mem::swap(&mut d, &mut scratch);

        k += 1;
        let elapsed = t0.elapsed().as_nanos() as u64;
        records.push(record(a, opts, k, &x, &r, mults, elapsed)?);
        push_history(&mut history, &x, &r, &d);
    };
    let elapsed = started.elapsed();

    let final_x = DenseBlock::from_col_major(n, 1, x)?;
    Ok(SolveTrace {
        algo: Algo::Cg,
        status,
        records,
        true_residual_norms: true_residual_norms(a, &final_x, b),
        final_x,
        active_agents: vec![0],
        history,
        elapsed,
    })
}

fn column<T: Scalar>(v: &[T]) -> DenseBlock<T> {
    DenseBlock::from_col_major(v.len(), 1, v.to_vec()).expect("sized")
}

fn push_history<T: Scalar>(h: &mut Option<History<T>>, x: &[T], r: &[T], d: &[T]) {
    if let Some(h) = h {
        h.x.push(column(x));
        h.r.push(column(r));
        h.d.push(column(d));
    }
}

pub(super) fn record<T: Scalar>(
    a: &SpdMatrix<T>,
    opts: &SolveOptions<T>,
    k: usize,
    x: &[T],
    r: &[T],
    mults: u64,
    elapsed_ns: u64,
) -> Result<IterationRecord> {
    let norm = dot(r, r).to_f64().sqrt();
    let a_norm_errors = match &opts.x_star {
        Some(xs) => Some(a_norm_errors(a, &column(x), xs)?),
        None => None,
    };
    Ok(IterationRecord {
        k,
        p_k: 1,
        agents: vec![0],
        residual_norms: vec![norm],
        minres: norm,
        a_norm_errors,
        mults,
        elapsed_ns,
        barrier_wait_ns: None,
        mults_per_worker: None,
    })
}
