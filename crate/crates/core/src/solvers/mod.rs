//! Sequential reference solvers: conjugate gradient, the cooperative
//! block variant with matrix-valued steps, its rank-dropping modification,
//! and steepest descent as a baseline.

mod cg;
mod cooperative;
mod sd;
mod trace;
pub mod verify;

pub use cg::cg_solve;
pub use cooperative::{alpha_row, beta_row, ccg_solve, compute_alpha, compute_beta, mccg_solve, StepMatrices};
pub(crate) use cooperative::record_block;
pub use sd::steepest_descent_solve;
pub use trace::{Algo, History, IterationRecord, SolveTrace, Termination};
pub use verify::{max_objective_increase, optimality_defect, orthogonality_report, subspace_dimension, OrthogonalityReport};

use crate::dense::{a_norm, dot, DenseBlock, SpdMatrix, DEFAULT_PIVOT_TOL, DEFAULT_RANK_TOL};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// How residuals are advanced between iterations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResidualPolicy {
    /// `R₊ = R + AD·αᵀ`, replaced by the true residual `AX₊ − b` every
    /// `refresh_every` iterations (`0` disables the refresh).
    Recurrence { refresh_every: usize },
    /// Always `R₊ = AX₊ − b`.
    Recompute,
}

impl Default for ResidualPolicy {
    fn default() -> Self {
        ResidualPolicy::Recurrence { refresh_every: 50 }
    }
}

impl ResidualPolicy {
    /// True when the residual after iteration `k` (0-based) is recomputed.
    pub fn recompute_after(&self, k: usize) -> bool {
        match *self {
            ResidualPolicy::Recompute => true,
            ResidualPolicy::Recurrence { refresh_every: 0 } => false,
            ResidualPolicy::Recurrence { refresh_every } => (k + 1).is_multiple_of(refresh_every),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StopRule {
    /// Stop as soon as one agent meets the tolerance (`minres <= tol`).
    #[default]
    AnyAgent,
    /// Keep iterating until every active agent meets the tolerance.
    AllAgents,
}

#[derive(Debug, Clone)]
pub struct SolveOptions<T> {
    /// Residual 2-norm tolerance. `0` means an exactly zero residual.
    pub tol: f64,
    /// Defaults to `2n` in floating point and `n` in exact arithmetic.
    pub max_iters: Option<usize>,
    pub residual_policy: ResidualPolicy,
    /// Relative tolerance of the rank test; forced to `0` in exact mode.
    pub rank_tol: f64,
    /// Relative LU pivot tolerance; ignored in exact mode.
    pub pivot_tol: f64,
    pub stop_rule: StopRule,
    /// Keep every `X_k, R_k, D_k` in the trace.
    pub verify: bool,
    /// Known solution, enables A-norm error tracking.
    pub x_star: Option<Vec<T>>,
}

impl<T: Scalar> Default for SolveOptions<T> {
    fn default() -> Self {
        SolveOptions {
            tol: if T::EXACT { 0.0 } else { 1e-8 },
            max_iters: None,
            residual_policy: ResidualPolicy::default(),
            rank_tol: if T::EXACT { 0.0 } else { DEFAULT_RANK_TOL },
            pivot_tol: if T::EXACT { 0.0 } else { DEFAULT_PIVOT_TOL },
            stop_rule: StopRule::default(),
            verify: false,
            x_star: None,
        }
    }
}

impl<T: Scalar> SolveOptions<T> {
    pub fn with_tol(tol: f64) -> Self {
        SolveOptions {
            tol,
            ..Self::default()
        }
    }

    pub fn max_iters_for(&self, n: usize) -> usize {
        self.max_iters.unwrap_or(if T::EXACT { n } else { 2 * n })
    }

    pub(crate) fn effective_rank_tol(&self) -> f64 {
        if T::EXACT {
            0.0
        } else {
            self.rank_tol
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.tol >= 0.0) {
            return Err(Error::InvalidArgument(format!("tolerance {} must be >= 0", self.tol)));
        }
        if !T::EXACT && self.tol == 0.0 {
            return Err(Error::InvalidArgument("floating-point runs need tol > 0".into()));
        }
        Ok(())
    }

    /// Agent `‖r‖² ` meets the stopping tolerance.
    pub(crate) fn meets_tol(&self, norm_sq: &T) -> bool {
        norm_sq.is_zero() || (self.tol > 0.0 && norm_sq.to_f64().sqrt() <= self.tol)
    }
}

pub(crate) fn check_system<T: Scalar>(a: &SpdMatrix<T>, b: &[T], x0: &DenseBlock<T>) -> Result<()> {
    if b.len() != a.n() {
        return Err(Error::DimensionMismatch {
            context: "right-hand side length",
            expected: a.n(),
            actual: b.len(),
        });
    }
    if x0.rows() != a.n() {
        return Err(Error::DimensionMismatch {
            context: "starting block rows",
            expected: a.n(),
            actual: x0.rows(),
        });
    }
    if x0.cols() == 0 {
        return Err(Error::InvalidArgument("at least one agent is required".into()));
    }
    Ok(())
}

/// Residual block `A X − 1ᵀb`.
pub(crate) fn residual_block<T: Scalar>(a: &SpdMatrix<T>, x: &DenseBlock<T>, b: &[T]) -> DenseBlock<T> {
    let mut r = DenseBlock::zeros(x.rows(), x.cols());
    for j in 0..x.cols() {
        residual_into(a, x.col(j), b, r.col_mut(j));
    }
    r
}

pub(crate) fn residual_into<T: Scalar>(a: &SpdMatrix<T>, x: &[T], b: &[T], out: &mut [T]) {
    a.mul_vec_into(x, out);
    for (o, bi) in out.iter_mut().zip(b) {
        *o -= bi.clone();
    }
}

pub(crate) fn norms_sq<T: Scalar>(r: &DenseBlock<T>) -> Vec<T> {
    r.columns().map(|c| dot(c, c)).collect()
}

pub(crate) fn a_norm_errors<T: Scalar>(a: &SpdMatrix<T>, x: &DenseBlock<T>, x_star: &[T]) -> Result<Vec<f64>> {
    x.columns()
        .map(|c| {
            let e: Vec<T> = c.iter().zip(x_star).map(|(u, v)| u.clone() - v.clone()).collect();
            a_norm(a, &e)
        })
        .collect()
}

pub(crate) fn true_residual_norms<T: Scalar>(a: &SpdMatrix<T>, x: &DenseBlock<T>, b: &[T]) -> Vec<f64> {
    norms_sq(&residual_block(a, x, b))
        .iter()
        .map(|v| v.to_f64().sqrt())
        .collect()
}
