use std::time::Instant;

use super::cg::record;
use super::{check_system, true_residual_norms, Algo, History, SolveOptions, SolveTrace, Termination};
use crate::dense::{combine_into, dot, DenseBlock, SpdMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Steepest descent with the exact line search `α = rᵀr / rᵀAr`.
pub fn steepest_descent_solve<T: Scalar>(
    a: &SpdMatrix<T>,
    b: &[T],
    x0: &[T],
    opts: &SolveOptions<T>,
) -> Result<SolveTrace<T>> {
    let n = a.n();
    let start_block = DenseBlock::from_col_major(x0.len(), 1, x0.to_vec())?;
    check_system(a, b, &start_block)?;
    opts.validate()?;
    let max_iters = opts.max_iters_for(n);

    let mut x = x0.to_vec();
    let mut r = a.residual(&x, b);
    let mut ar = vec![T::zero(); n];
    let mut scratch = vec![T::zero(); n];
    // Ar, rᵀr, rᵀAr, x and r updates
    let per_iter = (n * n + 4 * n) as u64;

    let mut history = opts.verify.then(History::default);
    let mut records = vec![record(a, opts, 0, &x, &r, 0, 0)?];
    if let Some(h) = &mut history {
        h.x.push(start_block.clone());
        h.r.push(DenseBlock::from_col_major(n, 1, r.clone())?);
    }

    let started = Instant::now();
    let mut k = 0;
    let status = loop {
        let rr = dot(&r, &r);
        if opts.meets_tol(&rr) {
            break Termination::Converged { agent: 0 };
        }
        if k == max_iters {
            break Termination::MaxIterations;
        }
        let t0 = Instant::now();
        a.mul_vec_into(&r, &mut ar);
        let rar = dot(&r, &ar);
        if !rar.is_positive() {
            return Err(Error::NotPositiveDefinite(format!("rᵀAr ≤ 0 at iteration {k}")));
        }
        let step = -(rr / rar);
        combine_into(&mut scratch, &x, &[&r], std::slice::from_ref(&step));
        std::mem::swap(&mut x, &mut scratch);
        let mut mults = per_iter;
        if opts.residual_policy.recompute_after(k) {
            super::residual_into(a, &x, b, &mut scratch);
            mults += (n * n - n) as u64;
        } else {
            combine_into(&mut scratch, &r, &[&ar], std::slice::from_ref(&step));
        }
        std::mem::swap(&mut r, &mut scratch);
        k += 1;
        records.push(record(a, opts, k, &x, &r, mults, t0.elapsed().as_nanos() as u64)?);
        if let Some(h) = &mut history {
            h.x.push(DenseBlock::from_col_major(n, 1, x.clone())?);
            h.r.push(DenseBlock::from_col_major(n, 1, r.clone())?);
        }
    };
    let elapsed = started.elapsed();
    let final_x = DenseBlock::from_col_major(n, 1, x)?;
    Ok(SolveTrace {
        algo: Algo::SteepestDescent,
        status,
        records,
        true_residual_norms: true_residual_norms(a, &final_x, b),
        final_x,
        active_agents: vec![0],
        history,
        elapsed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_scaled_identity_take_one_step() {
        let b = vec![1.0, 2.0, -3.0];
        for scale in [1.0, 7.5] {
            let a = SpdMatrix::diagonal(&[scale; 3]);
            let t = steepest_descent_solve(&a, &b, &[0.0; 3], &SolveOptions::with_tol(1e-12)).unwrap();
            assert_eq!(t.iterations(), 1, "scale {scale}");
        }
    }

    #[test]
    fn worst_case_contraction_on_two_by_two() {
        // A = diag(1, 9), b = 0, so x* = 0. Starting on (λ_max, λ_min) the
        // gradient zig-zags and every step shrinks the A-norm error by (κ-1)/(κ+1)
        let a = SpdMatrix::diagonal(&[1.0, 9.0]);
        let opts = SolveOptions {
            tol: 1e-300,
            max_iters: Some(10),
            x_star: Some(vec![0.0, 0.0]),
            ..SolveOptions::default()
        };
        let t = steepest_descent_solve(&a, &[0.0, 0.0], &[9.0, 1.0], &opts).unwrap();
        let errs: Vec<f64> = t.records.iter().map(|r| r.a_norm_errors.as_ref().unwrap()[0]).collect();
        for w in errs.windows(2) {
            assert!((w[1] / w[0] - 0.8).abs() < 1e-12, "{}", w[1] / w[0]);
        }
    }
}
