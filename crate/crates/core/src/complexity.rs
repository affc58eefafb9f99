//! Multiplication-count model of the multithreaded cooperative solver.
//!
//! One iteration costs each of the `p` workers
//! `n² + 6np + p(p+1)(2p+1)/3` scalar multiplications; assuming `n/p`
//! iterations gives the per-worker total
//! `N(p) = n³/p + 6n² + n(p+1)(2p+1)/3`. Totals are kept as exact
//! rationals so identities can be checked with `==`.

use num_rational::Ratio;
use num_traits::{Signed, Zero};
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};

pub type Exact = Ratio<i128>;

/// Largest `n` for which [`gain_holds`] compares all `p` explicitly.
pub const EXHAUSTIVE_GAIN_LIMIT: usize = 10_000;

/// Multiplications for one `p × p` LU solve: `p(p+1)(2p+1)/6`.
pub fn lu_solve_mults(p: usize) -> u64 {
    let p = p as u64;
    p * (p + 1) * (2 * p + 1) / 6
}

/// Per-worker multiplications of one iteration: `n² + 6np + p(p+1)(2p+1)/3`.
pub fn count_iteration_mults(n: usize, p: usize) -> u64 {
    let (n, p64) = (n as u64, p as u64);
    n * n + 6 * n * p64 + 2 * lu_solve_mults(p)
}

fn serialize_exact<S: Serializer>(v: &Exact, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&format!("{}/{}", v.numer(), v.denom()))
}

pub fn exact_to_f64(v: &Exact) -> f64 {
    *v.numer() as f64 / *v.denom() as f64
}

/// `N(p)` for a system of size `n`.
pub fn total_mults(n: usize, p: usize) -> Exact {
    let (n, p) = (n as i128, p as i128);
    Exact::new(n * n * n, p) + Exact::from_integer(6 * n * n) + Exact::new(n * (p + 1) * (2 * p + 1), 3)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComplexityEstimate {
    pub n: usize,
    pub p: usize,
    /// `N(p)`, using the continuous iteration count `n/p`.
    #[serde(serialize_with = "serialize_exact")]
    pub total_mults: Exact,
    pub total_mults_f64: f64,
    pub per_iteration: u64,
    /// `⌊n/p⌋`.
    pub iterations_assumed: usize,
    /// `⌊n/p⌋ · per_iteration`.
    pub integer_total: u128,
}

pub fn worst_case_mults(n: usize, p: usize) -> Result<ComplexityEstimate> {
    if p == 0 || p > n {
        return Err(Error::InvalidArgument(format!("need 1 <= p <= n, got p = {p}, n = {n}")));
    }
    let total = total_mults(n, p);
    let per_iteration = count_iteration_mults(n, p);
    Ok(ComplexityEstimate {
        n,
        p,
        total_mults_f64: exact_to_f64(&total),
        total_mults: total,
        per_iteration,
        iterations_assumed: n / p,
        integer_total: (n / p) as u128 * per_iteration as u128,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GainReport {
    pub n: usize,
    /// `N(1) ≥ N(p)` for every `1 ≤ p ≤ n`.
    pub holds: bool,
    /// `N(1) − N(n)`, which equals `n(n−1)(n−5)/3`.
    #[serde(serialize_with = "serialize_exact")]
    pub witness: Exact,
    /// Whether every `p` was compared explicitly.
    pub exhaustive: bool,
}

/// Decides whether any number of workers `p ≤ n` beats a single worker.
///
/// Up to [`EXHAUSTIVE_GAIN_LIMIT`] every `p` is compared; beyond, convexity
/// of `N` puts the maximum over `[1, n]` at an endpoint, so the sign of the
/// witness decides.
pub fn gain_holds(n: usize) -> Result<GainReport> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let n1 = total_mults(n, 1);
    let witness = n1 - total_mults(n, n);
    let (holds, exhaustive) = if n <= EXHAUSTIVE_GAIN_LIMIT {
        ((1..=n).all(|p| total_mults(n, p) <= n1), true)
    } else {
        (!witness.is_negative(), false)
    };
    Ok(GainReport {
        n,
        holds,
        witness,
        exhaustive,
    })
}

/// Integer minimizer of `N(p)` over `1 ≤ p ≤ n`, ties to the smaller `p`.
///
/// Brackets the real stationary point `n² = p²(4p/3 + 1)` by bisection and
/// compares the neighbouring integers exactly.
pub fn optimal_p(n: usize) -> Result<(usize, Exact)> {
    if n == 0 {
        return Err(Error::InvalidArgument("n must be positive".into()));
    }
    let target = (n as f64).powi(2);
    let g = |p: f64| p * p * (4.0 * p / 3.0 + 1.0) - target;
    let (mut lo, mut hi) = (0.0f64, n as f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let centre = lo.floor() as i64;
    let mut best: Option<(usize, Exact)> = None;
    for cand in (centre - 1)..=(centre + 2) {
        if cand < 1 || cand as usize > n {
            continue;
        }
        let p = cand as usize;
        let v = total_mults(n, p);
        if best.as_ref().is_none_or(|(_, b)| v < *b) {
            best = Some((p, v));
        }
    }
    Ok(best.unwrap_or_else(|| (1, total_mults(n, 1))))
}

/// Asymptotic optimum `(3/4)^{1/3} n^{2/3}`.
pub fn asymptotic_optimal_p(n: usize) -> f64 {
    0.75f64.cbrt() * (n as f64).powf(2.0 / 3.0)
}

/// Asymptotic constant `(4/3)^{1/3} + (2/3)(3/4)^{2/3}` in `N(p*) ≈ c·n^{7/3}`.
pub fn asymptotic_constant() -> f64 {
    (4.0f64 / 3.0).cbrt() + 2.0 / 3.0 * 0.75f64.powf(2.0 / 3.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundMethod {
    SteepestDescent,
    ConjugateGradient,
}

/// A-norm error bound after `k` steps from initial error `e0`:
/// `((κ−1)/(κ+1))^k e0` for steepest descent and
/// `2((√κ−1)/(√κ+1))^k e0` for conjugate gradient.
pub fn error_bound(kappa: f64, k: u32, e0: f64, method: BoundMethod) -> Result<f64> {
    if !(kappa >= 1.0) {
        return Err(Error::InvalidArgument(format!("condition number {kappa} < 1")));
    }
    if !(e0 >= 0.0) {
        return Err(Error::InvalidArgument(format!("initial error {e0} < 0")));
    }
    Ok(match method {
        BoundMethod::SteepestDescent => ((kappa - 1.0) / (kappa + 1.0)).powi(k as i32) * e0,
        BoundMethod::ConjugateGradient => {
            let s = kappa.sqrt();
            2.0 * ((s - 1.0) / (s + 1.0)).powi(k as i32) * e0
        }
    })
}

/// `N(p)` is strictly convex on the integers `1..=n`.
pub fn is_strictly_convex(n: usize) -> bool {
    (2..n).all(|p| {
        let second = total_mults(n, p - 1) + total_mults(n, p + 1) - total_mults(n, p) * Exact::from_integer(2);
        second > Exact::zero()
    })
}
