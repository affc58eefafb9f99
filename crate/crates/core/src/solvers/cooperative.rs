use std::time::Instant;

use super::{
    a_norm_errors, check_system, norms_sq, residual_block, residual_into, true_residual_norms, Algo, History,
    IterationRecord, SolveOptions, SolveTrace, StopRule, Termination,
};
use crate::complexity::count_iteration_mults;
use crate::dense::{combine_into, dot, gram, matvec_block, numerical_rank, DenseBlock, LuFactors, SmallMatrix, SmallSpd, SpdMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Step matrices of one cooperative iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct StepMatrices<T> {
    pub alpha: SmallMatrix<T>,
    pub beta: SmallMatrix<T>,
}

/// Row `i` of `α = −RᵀD (DᵀAD)⁻¹`: solves `M αᵢᵀ = −Dᵀrᵢ`.
///
/// Every entry mixes agent `i`'s residual with all agents' directions.
pub fn alpha_row<T: Scalar>(lu: &LuFactors<T>, r_i: &[T], d_cols: &[&[T]]) -> Vec<T> {
    let rhs: Vec<T> = d_cols.iter().map(|d| -dot(r_i, d)).collect();
    lu.solve(&rhs)
}

/// Row `i` of `β = −R₊ᵀAD (DᵀAD)⁻¹`: solves `M βᵢᵀ = −(AD)ᵀr₊ᵢ`.
pub fn beta_row<T: Scalar>(lu: &LuFactors<T>, r_next_i: &[T], ad_cols: &[&[T]]) -> Vec<T> {
    let rhs: Vec<T> = ad_cols.iter().map(|ad| -dot(r_next_i, ad)).collect();
    lu.solve(&rhs)
}

fn rows_to_matrix<T: Scalar>(rows: Vec<Vec<T>>, p: usize) -> SmallMatrix<T> {
    if rows.is_empty() {
        return SmallMatrix::zeros(0, p);
    }
    SmallMatrix::from_rows(rows).expect("rows have length p")
}

/// `α = −RᵀD M⁻¹` for the Gram matrix `M = DᵀAD`.
pub fn compute_alpha<T: Scalar>(r: &DenseBlock<T>, d: &DenseBlock<T>, m: &SmallSpd<T>, pivot_tol: f64) -> Result<SmallMatrix<T>> {
    if r.rows() != d.rows() || m.rows() != d.cols() {
        return Err(Error::DimensionMismatch {
            context: "alpha operands",
            expected: d.cols(),
            actual: m.rows(),
        });
    }
    let lu = LuFactors::factor(m, pivot_tol)?;
    let d_cols: Vec<&[T]> = d.columns().collect();
    Ok(rows_to_matrix(r.columns().map(|ri| alpha_row(&lu, ri, &d_cols)).collect(), d.cols()))
}

/// `β = −R₊ᵀAD M⁻¹` for the Gram matrix `M = DᵀAD`.
pub fn compute_beta<T: Scalar>(r_next: &DenseBlock<T>, ad: &DenseBlock<T>, m: &SmallSpd<T>, pivot_tol: f64) -> Result<SmallMatrix<T>> {
    if r_next.rows() != ad.rows() || m.rows() != ad.cols() {
        return Err(Error::DimensionMismatch {
            context: "beta operands",
            expected: ad.cols(),
            actual: m.rows(),
        });
    }
    let lu = LuFactors::factor(m, pivot_tol)?;
    let ad_cols: Vec<&[T]> = ad.columns().collect();
    Ok(rows_to_matrix(r_next.columns().map(|ri| beta_row(&lu, ri, &ad_cols)).collect(), ad.cols()))
}

/// Cooperative conjugate gradient with `p = X0.cols()` agents.
///
/// Each iteration sets `X₊ = X + Dαᵀ`, advances `R` by the configured
/// residual policy and sets `D₊ = R₊ + Dβᵀ`. The run stops when the stopping
/// rule is met, when `D` loses column rank (`RankCollapse`), or at the
/// iteration cap.
pub fn ccg_solve<T: Scalar>(a: &SpdMatrix<T>, b: &[T], x0: &DenseBlock<T>, opts: &SolveOptions<T>) -> Result<SolveTrace<T>> {
    cooperative(a, b, x0, opts, Algo::Ccg)
}

/// Cooperative conjugate gradient that survives rank degeneracy.
///
/// When the direction block drops to rank `p' < p_k`, a subset `J` of
/// `p'` agents whose residual columns are independent is retained (greedy
/// pivot order of [`numerical_rank`]) and the other agents are frozen. The
/// active agent count is therefore nonincreasing.
pub fn mccg_solve<T: Scalar>(a: &SpdMatrix<T>, b: &[T], x0: &DenseBlock<T>, opts: &SolveOptions<T>) -> Result<SolveTrace<T>> {
    cooperative(a, b, x0, opts, Algo::Mccg)
}

fn cooperative<T: Scalar>(
    a: &SpdMatrix<T>,
    b: &[T],
    x0: &DenseBlock<T>,
    opts: &SolveOptions<T>,
    algo: Algo,
) -> Result<SolveTrace<T>> {
    check_system(a, b, x0)?;
    opts.validate()?;
    let n = a.n();
    let p = x0.cols();
    if p >= n {
        return Err(Error::InvalidArgument(format!("agent count p = {p} must be below n = {n}")));
    }
    let allow_drop = algo == Algo::Mccg;
    let max_iters = opts.max_iters_for(n);
    let rank_tol = opts.effective_rank_tol();

    let mut agents: Vec<usize> = (0..p).collect();
    let mut full_x = x0.clone();
    let mut x = x0.clone();
    let mut r = residual_block(a, &x, b);
    let mut d = r.clone();

    let mut history = opts.verify.then(History::default);
    let mut records = vec![record_block(a, opts, 0, &agents, &x, &r, 0, 0)?];
    push_history(&mut history, &x, &r, &d);

    let started = Instant::now();
    let mut first_converged: Option<usize> = None;
    let mut k = 0;
    let status = loop {
        let met: Vec<bool> = norms_sq(&r).iter().map(|v| opts.meets_tol(v)).collect();
        if first_converged.is_none() {
            first_converged = met.iter().position(|m| *m).map(|pos| agents[pos]);
        }
        let stop = match opts.stop_rule {
            StopRule::AnyAgent => met.iter().any(|m| *m),
            StopRule::AllAgents => met.iter().all(|m| *m),
        };
        if stop {
            break Termination::Converged {
                agent: first_converged.expect("some agent met the tolerance"),
            };
        }
        if k == max_iters {
            break Termination::MaxIterations;
        }

        let rank = numerical_rank(&d, rank_tol);
        if rank.rank < agents.len() {
            if !allow_drop {
                break Termination::RankCollapse { rank: rank.rank };
            }
            if rank.rank == 0 {
                return Err(Error::Breakdown {
                    iteration: k,
                    reason: "no independent direction left before convergence".into(),
                });
            }
            let mut keep = numerical_rank(&r, rank_tol).columns;
            keep.truncate(rank.rank);
            keep.sort_unstable();
            for (pos, &agent) in agents.iter().enumerate() {
                full_x.col_mut(agent).clone_from_slice(x.col(pos));
            }
            agents = keep.iter().map(|&pos| agents[pos]).collect();
            x = x.select_columns(&keep);
            r = r.select_columns(&keep);
            d = d.select_columns(&keep);
            // the restricted starting point is what the next iteration sees
            if let Some(last) = records.last_mut() {
                let rec = record_block(a, opts, k, &agents, &x, &r, last.mults, last.elapsed_ns)?;
                *last = rec;
            }
            if let Some(h) = &mut history {
                h.x.pop();
                h.r.pop();
                h.d.pop();
            }
            push_history(&mut history, &x, &r, &d);
        }

        let t0 = Instant::now();
        let pk = agents.len();
        let ad = matvec_block(a, &d)?;
        let m = gram(&d, &ad)?;
        if (0..pk).any(|j| !m.get(j, j).is_positive()) {
            return Err(Error::NotPositiveDefinite(format!("dᵀAd ≤ 0 at iteration {k}")));
        }
        let lu = match LuFactors::factor(&m, opts.pivot_tol) {
            Ok(lu) => lu,
            Err(Error::Singular { .. }) if !allow_drop => break Termination::RankCollapse { rank: rank.rank },
            Err(Error::Singular { pivot }) => {
                return Err(Error::Breakdown {
                    iteration: k,
                    reason: format!("Gram matrix singular at pivot {pivot} despite full rank test"),
                })
            }
            Err(e) => return Err(e),
        };

        let d_cols: Vec<&[T]> = d.columns().collect();
        let ad_cols: Vec<&[T]> = ad.columns().collect();
        let recompute = opts.residual_policy.recompute_after(k);
        let mut x_next = DenseBlock::zeros(n, pk);
        let mut r_next = DenseBlock::zeros(n, pk);
        let mut d_next = DenseBlock::zeros(n, pk);
        for i in 0..pk {
            let alpha_i = alpha_row(&lu, r.col(i), &d_cols);
            combine_into(x_next.col_mut(i), x.col(i), &d_cols, &alpha_i);
            if recompute {
                let xi = x_next.col(i).to_vec();
                residual_into(a, &xi, b, r_next.col_mut(i));
            } else {
                combine_into(r_next.col_mut(i), r.col(i), &ad_cols, &alpha_i);
            }
        }
        for i in 0..pk {
            let beta_i = beta_row(&lu, r_next.col(i), &ad_cols);
            combine_into(d_next.col_mut(i), r_next.col(i), &d_cols, &beta_i);
        }
        x = x_next;
        r = r_next;
        d = d_next;
        k += 1;

        let mut mults = pk as u64 * count_iteration_mults(n, pk);
        if recompute {
            mults += (pk * (n * n - n * pk)) as u64;
        }
        records.push(record_block(a, opts, k, &agents, &x, &r, mults, t0.elapsed().as_nanos() as u64)?);
        push_history(&mut history, &x, &r, &d);
    };
    let elapsed = started.elapsed();

    for (pos, &agent) in agents.iter().enumerate() {
        full_x.col_mut(agent).clone_from_slice(x.col(pos));
    }
    Ok(SolveTrace {
        algo,
        status,
        records,
        true_residual_norms: true_residual_norms(a, &full_x, b),
        final_x: full_x,
        active_agents: agents,
        history,
        elapsed,
    })
}

fn push_history<T: Scalar>(h: &mut Option<History<T>>, x: &DenseBlock<T>, r: &DenseBlock<T>, d: &DenseBlock<T>) {
    if let Some(h) = h {
        h.x.push(x.clone());
        h.r.push(r.clone());
        h.d.push(d.clone());
    }
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn record_block<T: Scalar>(
    a: &SpdMatrix<T>,
    opts: &SolveOptions<T>,
    k: usize,
    agents: &[usize],
    x: &DenseBlock<T>,
    r: &DenseBlock<T>,
    mults: u64,
    elapsed_ns: u64,
) -> Result<IterationRecord> {
    let residual_norms: Vec<f64> = norms_sq(r).iter().map(|v| v.to_f64().sqrt()).collect();
    let minres = residual_norms.iter().cloned().fold(f64::INFINITY, f64::min);
    let a_norm_errors = match &opts.x_star {
        Some(xs) => Some(a_norm_errors(a, x, xs)?),
        None => None,
    };
    Ok(IterationRecord {
        k,
        p_k: agents.len(),
        agents: agents.to_vec(),
        residual_norms,
        minres,
        a_norm_errors,
        mults,
        elapsed_ns,
        barrier_wait_ns: None,
        mults_per_worker: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::DEFAULT_PIVOT_TOL;
    use crate::problem::{direct_solve, float_instance, integer_rhs_and_starts, integer_spd, Mode, ProblemSpec};
    use crate::scalar::Rational;
    use crate::solvers::cg_solve;
    use num_traits::Zero;

    fn instance(n: usize, p: usize, seed: u64) -> crate::problem::ProblemInstance<f64> {
        float_instance(&ProblemSpec {
            n,
            p,
            cond: 100.0,
            seed,
            mode: Mode::Float,
        })
        .unwrap()
    }

    #[test]
    fn alpha_reduces_to_scalar_step() {
        let inst = instance(8, 1, 1);
        let r = residual_block(&inst.a, &inst.x0, &inst.b);
        let ad = matvec_block(&inst.a, &r).unwrap();
        let m = gram(&r, &ad).unwrap();
        let alpha = compute_alpha(&r, &r, &m, DEFAULT_PIVOT_TOL).unwrap();
        let expected = -dot(r.col(0), r.col(0)) / dot(r.col(0), ad.col(0));
        assert_eq!(*alpha.get(0, 0), expected);
    }

    #[test]
    fn alpha_with_orthogonal_residues_and_diagonal_gram() {
        // A = diag(1, 2, 3, 4), residues along e1 and e2: D = R, DᵀAD diagonal
        let a = SpdMatrix::diagonal(&[1.0, 2.0, 3.0, 4.0]);
        let r = DenseBlock::from_columns(vec![vec![2.0, 0.0, 0.0, 0.0], vec![0.0, 3.0, 0.0, 0.0]]).unwrap();
        let ad = matvec_block(&a, &r).unwrap();
        let m = gram(&r, &ad).unwrap();
        let alpha = compute_alpha(&r, &r, &m, DEFAULT_PIVOT_TOL).unwrap();
        assert_eq!(*alpha.get(0, 0), -4.0 / 4.0);
        assert_eq!(*alpha.get(1, 1), -9.0 / 18.0);
        assert_eq!(*alpha.get(0, 1), 0.0);
        assert_eq!(*alpha.get(1, 0), 0.0);
    }

    #[test]
    fn one_step_orthogonality_relations() {
        let inst = instance(8, 2, 5);
        let (a, b) = (&inst.a, &inst.b);
        let r = residual_block(a, &inst.x0, b);
        let d = r.clone();
        let ad = matvec_block(a, &d).unwrap();
        let m = gram(&d, &ad).unwrap();
        let alpha = compute_alpha(&r, &d, &m, DEFAULT_PIVOT_TOL).unwrap();
        let x_next = {
            let step = d.mul_small(&alpha.transpose()).unwrap();
            let mut x = inst.x0.clone();
            for j in 0..2 {
                for i in 0..8 {
                    x.set(i, j, x.get(i, j) + step.get(i, j));
                }
            }
            x
        };
        let r_next = residual_block(a, &x_next, b);
        let scale = r.max_abs() * d.max_abs();
        assert!(r_next.transpose_mul(&d).unwrap().max_abs() <= 1e-10 * scale * 8.0);

        let beta = compute_beta(&r_next, &ad, &m, DEFAULT_PIVOT_TOL).unwrap();
        let mut d_next = d.mul_small(&beta.transpose()).unwrap();
        for j in 0..2 {
            for i in 0..8 {
                d_next.set(i, j, d_next.get(i, j) + r_next.get(i, j));
            }
        }
        let cross = d_next.transpose_mul(&ad).unwrap();
        let bound = 1e-10 * a.max_abs() * d_next.max_abs() * d.max_abs() * 8.0;
        assert!(cross.max_abs() <= bound, "{} > {bound}", cross.max_abs());
    }

    #[test]
    fn zero_next_residual_gives_zero_beta() {
        let a = SpdMatrix::diagonal(&[1.0, 2.0, 3.0]);
        let d = DenseBlock::from_columns(vec![vec![1.0, 1.0, 0.0]]).unwrap();
        let ad = matvec_block(&a, &d).unwrap();
        let m = gram(&d, &ad).unwrap();
        let beta = compute_beta(&DenseBlock::zeros(3, 1), &ad, &m, DEFAULT_PIVOT_TOL).unwrap();
        assert!(beta.get(0, 0).is_zero());
    }

    #[test]
    fn single_agent_matches_cg_bitwise() {
        let inst = instance(60, 1, 9);
        let opts = SolveOptions {
            tol: 1e-300,
            max_iters: Some(50),
            ..SolveOptions::default()
        };
        let cg = cg_solve(&inst.a, &inst.b, inst.x0.col(0), &opts).unwrap();
        let ccg = ccg_solve(&inst.a, &inst.b, &inst.x0, &opts).unwrap();
        assert_eq!(cg.iterations(), ccg.iterations());
        for (u, v) in cg.records.iter().zip(&ccg.records) {
            assert_eq!(u.minres.to_bits(), v.minres.to_bits());
        }
        assert_eq!(cg.final_x, ccg.final_x);
    }

    #[test]
    fn identity_system_converges_in_one_iteration() {
        let a = SpdMatrix::<f64>::identity(6);
        let b = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let x0 = DenseBlock::from_columns(vec![vec![0.0; 6], vec![1.0, 0.0, 2.0, 0.0, 3.0, 1.0]]).unwrap();
        let opts = SolveOptions {
            stop_rule: StopRule::AllAgents,
            ..SolveOptions::with_tol(1e-12)
        };
        let t = ccg_solve(&a, &b, &x0, &opts).unwrap();
        assert_eq!(t.iterations(), 1);
        assert!(t.true_residual_norms.iter().all(|v| *v < 1e-12));
    }

    #[test]
    fn exact_run_ends_in_n_over_p_steps() {
        let a = integer_spd(6, 1).unwrap();
        let (b, x0) = integer_rhs_and_starts(6, 3, 1);
        let t = ccg_solve(&a, &b, &x0, &SolveOptions::default()).unwrap();
        assert_eq!(t.iterations(), 2);
        let x_star = direct_solve(&a, &b).unwrap();
        for j in 0..3 {
            assert_eq!(t.final_x.col(j), x_star.as_slice());
        }
    }

    #[test]
    fn duplicate_start_columns() {
        let a = integer_spd(6, 3).unwrap();
        let (b, x0) = integer_rhs_and_starts(6, 3, 3);
        let mut cols: Vec<Vec<Rational>> = x0.columns().map(<[Rational]>::to_vec).collect();
        cols[2] = cols[0].clone();
        let x0 = DenseBlock::from_columns(cols).unwrap();

        let plain = ccg_solve(&a, &b, &x0, &SolveOptions::default()).unwrap();
        assert_eq!(plain.status, Termination::RankCollapse { rank: 2 });
        assert_eq!(plain.iterations(), 0);

        let t = mccg_solve(&a, &b, &x0, &SolveOptions::default()).unwrap();
        assert!(t.status.is_converged());
        assert_eq!(t.records[0].p_k, 2);
        assert!(t.p_sequence().windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(t.iterations(), 3);
        let x_star = direct_solve(&a, &b).unwrap();
        for &j in &t.active_agents {
            assert_eq!(t.final_x.col(j), x_star.as_slice());
        }
    }

    #[test]
    fn planted_solution_agent_is_dropped() {
        let a = integer_spd(6, 4).unwrap();
        let (b, x0) = integer_rhs_and_starts(6, 3, 4);
        let x_star = direct_solve(&a, &b).unwrap();
        let mut cols: Vec<Vec<Rational>> = x0.columns().map(<[Rational]>::to_vec).collect();
        cols[1] = x_star.clone();
        let x0 = DenseBlock::from_columns(cols).unwrap();
        let opts = SolveOptions {
            stop_rule: StopRule::AllAgents,
            ..SolveOptions::default()
        };
        let t = mccg_solve(&a, &b, &x0, &opts).unwrap();
        assert_eq!(t.records[0].agents, vec![0, 2]);
        assert_eq!(t.status, Termination::Converged { agent: 1 });
        for j in 0..3 {
            assert_eq!(t.final_x.col(j), x_star.as_slice());
        }
    }

    #[test]
    fn mccg_follows_ccg_while_rank_is_full() {
        let inst = instance(40, 3, 2);
        let opts = SolveOptions::with_tol(1e-6);
        let u = ccg_solve(&inst.a, &inst.b, &inst.x0, &opts).unwrap();
        let v = mccg_solve(&inst.a, &inst.b, &inst.x0, &opts).unwrap();
        assert!(v.status.is_converged());
        let shared = match u.status {
            Termination::RankCollapse { .. } => u.records.len() - 1,
            _ => u.records.len(),
        };
        for (a, b) in u.records[..shared].iter().zip(&v.records) {
            assert_eq!(a.minres.to_bits(), b.minres.to_bits());
            assert_eq!(a.p_k, b.p_k);
        }
        if u.status.is_converged() {
            assert_eq!(u.final_x, v.final_x);
        }
    }

    #[test]
    fn rejects_too_many_agents() {
        let inst = instance(5, 2, 1);
        let x0 = DenseBlock::zeros(5, 5);
        assert!(ccg_solve(&inst.a, &inst.b, &x0, &SolveOptions::default()).is_err());
    }
}
