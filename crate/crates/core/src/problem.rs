//! Seeded test problems.
//!
//! Floating-point problems follow the rotated-spectrum recipe: a diagonal
//! spectrum drawn uniformly on `[1, cond]`, rotated by a Haar-distributed
//! orthogonal matrix. Right-hand sides and starting points are uniform on
//! `[-10, 10]`. Exact problems use small integer matrices `BᵀB + nI`.
//!
//! All randomness comes from ChaCha8 with one stream per artifact, so that
//! e.g. changing the agent count `p` leaves `A` and `b` untouched.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dense::{dot, DenseBlock, LuFactors, SpdMatrix};
use crate::error::{Error, Result};
use crate::scalar::{Rational, Scalar};

const STREAM_ORTHOGONAL: u64 = 1;
const STREAM_SPECTRUM: u64 = 2;
const STREAM_RHS: u64 = 3;
const STREAM_STARTS: u64 = 4;
const STREAM_INTEGER: u64 = 5;
const STREAM_DERIVED: u64 = 6;

/// Largest dimension accepted by [`integer_spd`].
pub const MAX_EXACT_DIM: usize = 64;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Child seed number `index` of `base` on a named `tag`, for experiments
/// that need many independent problems from one configured seed.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut rng = stream(base, STREAM_DERIVED + (tag << 8));
    rng.set_word_pos(2 * index as u128);
    rng.next_u64()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Float,
    Rational,
}

impl std::str::FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "float" => Ok(Mode::Float),
            "rational" => Ok(Mode::Rational),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    pub n: usize,
    pub p: usize,
    pub cond: f64,
    pub seed: u64,
    pub mode: Mode,
}

impl ProblemSpec {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.p >= self.n {
            return Err(Error::InvalidArgument(format!(
                "agent count must satisfy 1 <= p < n (p = {}, n = {})",
                self.p, self.n
            )));
        }
        if !(self.cond >= 1.0) {
            return Err(Error::InvalidArgument(format!("condition number {} < 1", self.cond)));
        }
        if self.mode == Mode::Rational && self.n > MAX_EXACT_DIM {
            return Err(Error::InvalidArgument(format!(
                "rational problems are limited to n <= {MAX_EXACT_DIM}"
            )));
        }
        Ok(())
    }
}

/// A generated system together with its starting block.
#[derive(Debug, Clone)]
pub struct ProblemInstance<T> {
    pub a: SpdMatrix<T>,
    pub b: Vec<T>,
    pub x0: DenseBlock<T>,
    pub x_star: Option<Vec<T>>,
    /// Realized `λ_max / λ_min`, when the spectrum is known.
    pub cond: Option<f64>,
}

/// Haar-distributed orthogonal matrix, row-major.
///
/// Orthogonalizes the columns of an i.i.d. standard normal matrix with
/// modified Gram–Schmidt (applied twice for stability). Gram–Schmidt keeps
/// every triangular pivot positive, which is the sign fix that makes the
/// QR factor Haar distributed.
pub fn haar_orthogonal(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, STREAM_ORTHOGONAL);
    // cols[j] is column j of the Gaussian matrix
    let mut cols: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..n).map(|_| rng.sample(StandardNormal)).collect())
        .collect();
    for j in 0..n {
        let (done, rest) = cols.split_at_mut(j);
        let v = &mut rest[0];
        for _ in 0..2 {
            for q in done.iter() {
                let c = dot(q, v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= c * qi;
                }
            }
        }
        let norm = dot(v, v).sqrt();
        for vi in v.iter_mut() {
            *vi /= norm;
        }
    }
    let mut out = vec![0.0; n * n];
    for (j, c) in cols.iter().enumerate() {
        for (i, v) in c.iter().enumerate() {
            out[i * n + j] = *v;
        }
    }
    out
}

/// Spectrum on `[1, cond]` whose extremes are pinned to exactly `1` and `cond`.
pub fn random_spectrum(n: usize, cond: f64, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, STREAM_SPECTRUM);
    let mut lambda: Vec<f64> = (0..n)
        .map(|_| if cond > 1.0 { rng.random_range(1.0..=cond) } else { 1.0 })
        .collect();
    if n >= 2 && cond > 1.0 {
        let argmin = (0..n).fold(0, |m, i| if lambda[i] < lambda[m] { i } else { m });
        let argmax = (0..n).fold(if argmin == 0 { 1 } else { 0 }, |m, i| {
            if i != argmin && lambda[i] > lambda[m] {
                i
            } else {
                m
            }
        });
        lambda[argmin] = 1.0;
        lambda[argmax] = cond;
    } else if n == 1 {
        lambda[0] = 1.0;
    }
    lambda
}

/// Random SPD matrix `U Λ Uᵀ` with condition number `cond`; also returns
/// the rotation (row-major) and the spectrum.
pub fn random_spd_with_factors(n: usize, cond: f64, seed: u64) -> Result<(SpdMatrix<f64>, Vec<f64>, Vec<f64>)> {
    if n == 0 {
        return Err(Error::InvalidArgument("dimension must be positive".into()));
    }
    if !(cond >= 1.0) {
        return Err(Error::InvalidArgument(format!("condition number {cond} < 1")));
    }
    let u = haar_orthogonal(n, seed);
    let lambda = random_spectrum(n, cond, seed);
    // (UΛ) as rows, then row_i · row_j of U gives (UΛUᵀ)_ij
    let mut ul = u.clone();
    for i in 0..n {
        for (j, l) in lambda.iter().enumerate() {
            ul[i * n + j] *= l;
        }
    }
    let mut data = vec![0.0; n * n];
    for i in 0..n {
        let uli = &ul[i * n..(i + 1) * n];
        for j in i..n {
            let v = dot(uli, &u[j * n..(j + 1) * n]);
            data[i * n + j] = v;
            data[j * n + i] = v;
        }
    }
    let a = SpdMatrix::new(n, data)?;
    Ok((a, u, lambda))
}

pub fn random_spd(n: usize, cond: f64, seed: u64) -> Result<SpdMatrix<f64>> {
    random_spd_with_factors(n, cond, seed).map(|(a, _, _)| a)
}

/// Right-hand side and starting block, entries i.i.d. uniform on `[-10, 10]`.
///
/// Columns of `X0` are drawn one after another, so column `j` does not
/// depend on `p`.
pub fn random_rhs_and_starts(n: usize, p: usize, seed: u64) -> (Vec<f64>, DenseBlock<f64>) {
    let mut rhs = stream(seed, STREAM_RHS);
    let b = (0..n).map(|_| rhs.random_range(-10.0..=10.0)).collect();
    let mut starts = stream(seed, STREAM_STARTS);
    let data = (0..n * p).map(|_| starts.random_range(-10.0..=10.0)).collect();
    let x0 = DenseBlock::from_col_major(n, p, data).expect("sized");
    (b, x0)
}

/// Exact instance `BᵀB + nI` with integer entries of `B` in `[-3, 3]`.
pub fn integer_spd(n: usize, seed: u64) -> Result<SpdMatrix<Rational>> {
    if n == 0 || n > MAX_EXACT_DIM {
        return Err(Error::InvalidArgument(format!(
            "integer instances need 1 <= n <= {MAX_EXACT_DIM}"
        )));
    }
    let mut rng = stream(seed, STREAM_INTEGER);
    let b: Vec<i64> = (0..n * n).map(|_| rng.random_range(-3..=3)).collect();
    Ok(integer_gram_plus_shift(n, &b))
}

/// `BᵀB + nI` for a row-major integer matrix `B`.
pub fn integer_gram_plus_shift(n: usize, b: &[i64]) -> SpdMatrix<Rational> {
    let mut data = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let mut s: i64 = (0..n).map(|l| b[l * n + i] * b[l * n + j]).sum();
            if i == j {
                s += n as i64;
            }
            data.push(<Rational as Scalar>::from_i64(s));
        }
    }
    SpdMatrix::new(n, data).expect("BᵀB + nI is symmetric positive definite")
}

/// Integer right-hand side and starts in `[-10, 10]`, for exact runs.
pub fn integer_rhs_and_starts(n: usize, p: usize, seed: u64) -> (Vec<Rational>, DenseBlock<Rational>) {
    let mut rhs = stream(seed, STREAM_RHS);
    let b = (0..n).map(|_| <Rational as Scalar>::from_i64(rhs.random_range(-10..=10))).collect();
    let mut starts = stream(seed, STREAM_STARTS);
    let data = (0..n * p)
        .map(|_| <Rational as Scalar>::from_i64(starts.random_range(-10..=10)))
        .collect();
    (b, DenseBlock::from_col_major(n, p, data).expect("sized"))
}

/// Solves `A x = b` directly (LU), exactly in the rational field.
pub fn direct_solve<T: Scalar>(a: &SpdMatrix<T>, b: &[T]) -> Result<Vec<T>> {
    let lu = LuFactors::factor(&a.to_small(), 0.0)?;
    Ok(lu.solve(b))
}

/// Floating-point instance following the rotated-spectrum recipe.
pub fn float_instance(spec: &ProblemSpec) -> Result<ProblemInstance<f64>> {
    spec.validate()?;
    let (a, u, lambda) = random_spd_with_factors(spec.n, spec.cond, spec.seed)?;
    let (b, x0) = random_rhs_and_starts(spec.n, spec.p, spec.seed);
    Ok(ProblemInstance {
        x_star: Some(rotated_solve(&u, &lambda, &b)),
        cond: Some(realized_cond(&lambda)),
        a,
        b,
        x0,
    })
}

/// Exact instance built from [`integer_spd`] and integer data.
pub fn rational_instance(spec: &ProblemSpec) -> Result<ProblemInstance<Rational>> {
    spec.validate()?;
    let a = integer_spd(spec.n, spec.seed)?;
    let (b, x0) = integer_rhs_and_starts(spec.n, spec.p, spec.seed);
    let x_star = direct_solve(&a, &b)?;
    Ok(ProblemInstance {
        a,
        b,
        x0,
        x_star: Some(x_star),
        cond: None,
    })
}

/// `x* = U Λ⁻¹ Uᵀ b` for `A = U Λ Uᵀ` (U row-major).
pub fn rotated_solve(u: &[f64], lambda: &[f64], b: &[f64]) -> Vec<f64> {
    let n = lambda.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        for (j, yj) in y.iter_mut().enumerate() {
            *yj += u[i * n + j] * b[i];
        }
    }
    for (yj, l) in y.iter_mut().zip(lambda) {
        *yj /= l;
    }
    (0..n).map(|i| dot(&u[i * n..(i + 1) * n], &y)).collect()
}

pub fn realized_cond(lambda: &[f64]) -> f64 {
    let max = lambda.iter().cloned().fold(f64::MIN, f64::max);
    let min = lambda.iter().cloned().fold(f64::MAX, f64::min);
    max / min
}
