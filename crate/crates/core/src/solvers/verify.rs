//! Checks run on a verification-mode history: mutual orthogonality of the
//! residual blocks, mutual A-orthogonality of the direction blocks, the
//! dimension of the explored subspace, optimality of the iterates and
//! monotone decrease of the objective.

use crate::dense::{dot, numerical_rank, DenseBlock, SpdMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::History;

#[derive(Debug, Clone, PartialEq)]
pub struct OrthogonalityReport {
    /// `max_{i≠j} ‖R_iᵀR_j‖_max / max_i max_col ‖R_i e‖²`.
    pub residual_ratio: f64,
    /// `max_{i≠j} ‖D_iᵀAD_j‖_max / max_i max_col ‖D_i e‖_A²`.
    pub direction_ratio: f64,
    /// All cross products are exactly zero (meaningful in exact arithmetic).
    pub exact: bool,
    pub blocks: usize,
}

fn max_cross<T: Scalar>(left: &[DenseBlock<T>], right: &[DenseBlock<T>]) -> Result<T> {
    let mut worst = T::zero();
    for (i, l) in left.iter().enumerate() {
        for (j, r) in right.iter().enumerate() {
            if i == j {
                continue;
            }
            let c = l.transpose_mul(r)?.max_abs();
            if c > worst {
                worst = c;
            }
        }
    }
    Ok(worst)
}

fn max_col_product<T: Scalar>(left: &[DenseBlock<T>], right: &[DenseBlock<T>]) -> T {
    let mut best = T::zero();
    for (l, r) in left.iter().zip(right) {
        for j in 0..l.cols() {
            let v = dot(l.col(j), r.col(j));
            if v > best {
                best = v;
            }
        }
    }
    best
}

fn ratio<T: Scalar>(num: &T, den: &T) -> f64 {
    if num.is_zero() {
        0.0
    } else {
        num.to_f64() / den.to_f64()
    }
}

/// Orthogonality measures over the first `blocks` stored iterations
/// (all of them when `None`).
pub fn orthogonality_report<T: Scalar>(
    a: &SpdMatrix<T>,
    history: &History<T>,
    blocks: Option<usize>,
) -> Result<OrthogonalityReport> {
    let count = blocks.unwrap_or(history.r.len()).min(history.r.len());
    let r = &history.r[..count];
    let d = &history.d[..count.min(history.d.len())];
    let ad: Vec<DenseBlock<T>> = d
        .iter()
        .map(|blk| crate::dense::matvec_block(a, blk))
        .collect::<Result<_>>()?;

    let r_cross = max_cross(r, r)?;
    let d_cross = max_cross(d, &ad)?;
    let r_scale = max_col_product(r, r);
    let d_scale = max_col_product(d, &ad);
    Ok(OrthogonalityReport {
        residual_ratio: ratio(&r_cross, &r_scale),
        direction_ratio: ratio(&d_cross, &d_scale),
        exact: r_cross.is_zero() && d_cross.is_zero(),
        blocks: count,
    })
}

/// Rank of `[D_0 … D_k]`.
pub fn subspace_dimension<T: Scalar>(history: &History<T>, k: usize, tol: f64) -> Result<usize> {
    if k >= history.d.len() {
        return Err(Error::InvalidArgument(format!(
            "history holds {} direction blocks, asked for {}",
            history.d.len(),
            k + 1
        )));
    }
    let all = DenseBlock::concat(&history.d[..=k])?;
    Ok(numerical_rank(&all, tol).rank)
}

/// Largest `|D_iᵀ(A x − b)|` over stored directions `D_i`, `i ≤ k`, and
/// agents `x = X_{k+1} e_j`, normalized by the column norms involved.
/// Returns `(normalized, exact_zero)`.
pub fn optimality_defect<T: Scalar>(a: &SpdMatrix<T>, b: &[T], history: &History<T>) -> Result<(f64, bool)> {
    let mut worst = 0.0f64;
    let mut exact = true;
    for k in 1..history.x.len() {
        let x = &history.x[k];
        for j in 0..x.cols() {
            let g = a.residual(x.col(j), b);
            let g_norm = dot(&g, &g).to_f64().sqrt();
            for d in &history.d[..k] {
                for dc in d.columns() {
                    let v = dot(dc, &g);
                    if v.is_zero() {
                        continue;
                    }
                    exact = false;
                    let d_norm = dot(dc, dc).to_f64().sqrt();
                    worst = worst.max(v.to_f64().abs() / (d_norm * g_norm));
                }
            }
        }
    }
    Ok((worst, exact))
}

/// Largest increase `f(X_{k+1} e_j) − f(X_k e_j)` over the history,
/// relative to `|f(X_k e_j)|`; nonpositive when the objective never rises.
pub fn max_objective_increase<T: Scalar>(a: &SpdMatrix<T>, b: &[T], history: &History<T>) -> f64 {
    let mut worst = f64::NEG_INFINITY;
    for w in history.x.windows(2) {
        if w[0].cols() != w[1].cols() {
            continue;
        }
        for j in 0..w[0].cols() {
            let before = a.objective(w[0].col(j), b);
            let after = a.objective(w[1].col(j), b);
            let rise = (after - before.clone()).to_f64() / before.to_f64().abs().max(f64::MIN_POSITIVE);
            worst = worst.max(rise);
        }
    }
    worst
}
