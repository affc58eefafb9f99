//! Dense kernels: the system matrix, n×p column blocks, p×p Gram systems,
//! LU with partial pivoting and a pivoted Gram–Schmidt rank test.
//!
//! Every kernel sums in a fixed order so that a sequential and a
//! multithreaded caller produce bitwise identical results.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default relative tolerance of [`numerical_rank`] in floating point.
pub const DEFAULT_RANK_TOL: f64 = 1e-10;
/// Default relative pivot tolerance of [`LuFactors::factor`] in floating point.
pub const DEFAULT_PIVOT_TOL: f64 = 1e-14;

const SPOT_CHECKS: usize = 8;
const SPOT_SEED: u64 = 0x5_eed0_fa11;

#[inline]
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b) {
        T::mul_acc(&mut acc, x, y);
    }
    acc
}

/// `out[i] = base[i] + sum_l coeffs[l] * cols[l][i]`, accumulated left to right.
pub fn combine_into<T: Scalar>(out: &mut [T], base: &[T], cols: &[&[T]], coeffs: &[T]) {
    debug_assert_eq!(cols.len(), coeffs.len());
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = base[i].clone();
        for (col, c) in cols.iter().zip(coeffs) {
            T::mul_acc(&mut acc, &col[i], c);
        }
        *o = acc;
    }
}

/// Dense symmetric positive definite matrix, full row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct SpdMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> SpdMatrix<T> {
    /// Builds the matrix from `n*n` row-major entries.
    ///
    /// Floating-point input is symmetrized as `(M + Mᵀ)/2`; rational input
    /// must already be exactly symmetric. Positive definiteness is spot
    /// checked with a handful of pseudo-random probe vectors.
    pub fn new(n: usize, mut data: Vec<T>) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("matrix dimension must be positive".into()));
        }
        if data.len() != n * n {
            return Err(Error::DimensionMismatch {
                context: "matrix entries",
                expected: n * n,
                actual: data.len(),
            });
        }
        for i in 0..n {
            for j in (i + 1)..n {
                if T::EXACT {
                    if data[i * n + j] != data[j * n + i] {
                        return Err(Error::NotSymmetric { row: i, col: j });
                    }
                } else {
                    let m = T::midpoint(&data[i * n + j], &data[j * n + i]);
                    data[i * n + j] = m.clone();
                    data[j * n + i] = m;
                }
            }
        }
        let a = SpdMatrix { n, data };
        a.spot_check()?;
        Ok(a)
    }

    pub fn identity(n: usize) -> Self {
        Self::diagonal(&vec![T::one(); n])
    }

    pub fn diagonal(diag: &[T]) -> Self {
        let n = diag.len();
        let mut data = vec![T::zero(); n * n];
        for (i, d) in diag.iter().enumerate() {
            data[i * n + i] = d.clone();
        }
        SpdMatrix { n, data }
    }

    fn spot_check(&self) -> Result<()> {
        for i in 0..self.n {
            if !self.get(i, i).is_positive() {
                return Err(Error::NotPositiveDefinite(format!("diagonal entry {i} is not positive")));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(SPOT_SEED);
        for probe in 0..SPOT_CHECKS {
            let x: Vec<T> = if T::EXACT {
                (0..self.n).map(|_| T::from_i64(rng.random_range(-5..=5))).collect()
            } else {
                (0..self.n).map(|_| T::from_f64(rng.random_range(-1.0..1.0))).collect()
            };
            if x.iter().all(|v| v.is_zero()) {
                continue;
            }
            if !self.quad_form(&x).is_positive() {
                return Err(Error::NotPositiveDefinite(format!("probe {probe} gave xᵀAx ≤ 0")));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn entries(&self) -> &[T] {
        &self.data
    }

    pub fn max_abs(&self) -> T {
        let mut m = T::zero();
        for v in &self.data {
            let a = v.abs();
            if a > m {
                m = a;
            }
        }
        m
    }

    /// `out = A x`, one row dot product per entry.
    pub fn mul_vec_into(&self, x: &[T], out: &mut [T]) {
        debug_assert_eq!(x.len(), self.n);
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(i), x);
        }
    }

    pub fn mul_vec(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.n];
        self.mul_vec_into(x, &mut out);
        out
    }

    pub fn quad_form(&self, x: &[T]) -> T {
        dot(x, &self.mul_vec(x))
    }

    /// Residual `A x - b`.
    pub fn residual(&self, x: &[T], b: &[T]) -> Vec<T> {
        let mut r = self.mul_vec(x);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri -= bi.clone();
        }
        r
    }

    /// Objective `½ xᵀAx − bᵀx` whose minimizer solves `Ax = b`.
    pub fn objective(&self, x: &[T], b: &[T]) -> T {
        let half = T::from_f64(0.5);
        T::mul_ref(&half, &self.quad_form(x)) - dot(b, x)
    }

    pub fn to_small(&self) -> SmallMatrix<T> {
        SmallMatrix {
            rows: self.n,
            cols: self.n,
            data: self.data.clone(),
        }
    }
}

/// `rows × cols` block stored column by column, so that each agent's
/// column is one contiguous slice.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> DenseBlock<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseBlock {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn from_columns(columns: Vec<Vec<T>>) -> Result<Self> {
        let rows = columns.first().map_or(0, Vec::len);
        let cols = columns.len();
        let mut data = Vec::with_capacity(rows * cols);
        for c in columns {
            if c.len() != rows {
                return Err(Error::DimensionMismatch {
                    context: "block column length",
                    expected: rows,
                    actual: c.len(),
                });
            }
            data.extend(c);
        }
        Ok(DenseBlock { rows, cols, data })
    }

    /// Column-major entries.
    pub fn from_col_major(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                context: "block entries",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        Ok(DenseBlock { rows, cols, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn col(&self, j: usize) -> &[T] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn col_mut(&mut self, j: usize) -> &mut [T] {
        &mut self.data[j * self.rows..(j + 1) * self.rows]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[j * self.rows + i]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[j * self.rows + i] = v;
    }

    pub fn columns(&self) -> impl Iterator<Item = &[T]> {
        (0..self.cols).map(move |j| self.col(j))
    }

    pub fn col_major(&self) -> &[T] {
        &self.data
    }

    pub fn select_columns(&self, keep: &[usize]) -> Self {
        let mut data = Vec::with_capacity(self.rows * keep.len());
        for &j in keep {
            data.extend_from_slice(self.col(j));
        }
        DenseBlock {
            rows: self.rows,
            cols: keep.len(),
            data,
        }
    }

    /// Horizontal concatenation `[B_0 B_1 … B_k]`.
    pub fn concat(blocks: &[DenseBlock<T>]) -> Result<Self> {
        let rows = blocks.first().map_or(0, |b| b.rows);
        let mut cols = Vec::new();
        for b in blocks {
            if b.rows != rows {
                return Err(Error::DimensionMismatch {
                    context: "concatenated block rows",
                    expected: rows,
                    actual: b.rows,
                });
            }
            cols.extend(b.columns().map(<[T]>::to_vec));
        }
        if cols.is_empty() {
            return Ok(DenseBlock::zeros(rows, 0));
        }
        DenseBlock::from_columns(cols)
    }

    /// `selfᵀ · other`, entry `(i, j)` is `dot(self_i, other_j)`.
    pub fn transpose_mul(&self, other: &DenseBlock<T>) -> Result<SmallMatrix<T>> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                context: "transpose product rows",
                expected: self.rows,
                actual: other.rows,
            });
        }
        let mut out = SmallMatrix::zeros(self.cols, other.cols);
        for i in 0..self.cols {
            for j in 0..other.cols {
                out.set(i, j, dot(self.col(i), other.col(j)));
            }
        }
        Ok(out)
    }

    /// `self · c` for a `cols × q` coefficient matrix.
    pub fn mul_small(&self, c: &SmallMatrix<T>) -> Result<DenseBlock<T>> {
        if c.rows() != self.cols {
            return Err(Error::DimensionMismatch {
                context: "block times small matrix",
                expected: self.cols,
                actual: c.rows(),
            });
        }
        let zero = vec![T::zero(); self.rows];
        let cols: Vec<&[T]> = self.columns().collect();
        let mut out = DenseBlock::zeros(self.rows, c.cols());
        for j in 0..c.cols() {
            let coeffs: Vec<T> = (0..c.rows()).map(|l| c.get(l, j).clone()).collect();
            combine_into(out.col_mut(j), &zero, &cols, &coeffs);
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> T {
        let mut m = T::zero();
        for v in &self.data {
            let a = v.abs();
            if a > m {
                m = a;
            }
        }
        m
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }
}

/// Small dense matrix, row-major. Holds Gram matrices and step matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct SmallMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

/// Gram matrix `DᵀAD`; symmetric, and positive definite when `D` has full column rank.
pub type SmallSpd<T> = SmallMatrix<T>;

impl<T: Scalar> SmallMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SmallMatrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, T::one());
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<T>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            if row.len() != c {
                return Err(Error::DimensionMismatch {
                    context: "small matrix row length",
                    expected: c,
                    actual: row.len(),
                });
            }
            data.extend(row);
        }
        Ok(SmallMatrix { rows: r, cols: c, data })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> &T {
        &self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j).clone());
            }
        }
        t
    }

    pub fn mul(&self, other: &SmallMatrix<T>) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                context: "small matrix product",
                expected: self.cols,
                actual: other.rows,
            });
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for j in 0..other.cols {
                let mut acc = T::zero();
                for l in 0..self.cols {
                    T::mul_acc(&mut acc, self.get(i, l), other.get(l, j));
                }
                out.set(i, j, acc);
            }
        }
        Ok(out)
    }

    pub fn max_abs(&self) -> T {
        let mut m = T::zero();
        for v in &self.data {
            let a = v.abs();
            if a > m {
                m = a;
            }
        }
        m
    }

    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols
            && (0..self.rows).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

/// `A · D`, column by column.
pub fn matvec_block<T: Scalar>(a: &SpdMatrix<T>, d: &DenseBlock<T>) -> Result<DenseBlock<T>> {
    if d.rows() != a.n() {
        return Err(Error::DimensionMismatch {
            context: "matvec block rows",
            expected: a.n(),
            actual: d.rows(),
        });
    }
    let mut out = DenseBlock::zeros(d.rows(), d.cols());
    for j in 0..d.cols() {
        a.mul_vec_into(d.col(j), out.col_mut(j));
    }
    Ok(out)
}

/// `DᵀAD` from `D` and a precomputed `AD`, symmetrized entrywise.
pub fn gram<T: Scalar>(d: &DenseBlock<T>, ad: &DenseBlock<T>) -> Result<SmallSpd<T>> {
    if d.rows() != ad.rows() || d.cols() != ad.cols() {
        return Err(Error::DimensionMismatch {
            context: "gram operands",
            expected: d.rows() * d.cols(),
            actual: ad.rows() * ad.cols(),
        });
    }
    let raw = d.transpose_mul(ad)?;
    Ok(symmetrize(&raw))
}

/// `(M + Mᵀ)/2`; the identity on exactly symmetric input.
pub fn symmetrize<T: Scalar>(m: &SmallMatrix<T>) -> SmallMatrix<T> {
    let p = m.rows();
    let mut out = m.clone();
    for i in 0..p {
        for j in (i + 1)..p {
            let v = T::midpoint(m.get(i, j), m.get(j, i));
            out.set(i, j, v.clone());
            out.set(j, i, v);
        }
    }
    out
}

/// LU factorization with partial (row) pivoting of a square matrix.
#[derive(Debug, Clone)]
pub struct LuFactors<T> {
    n: usize,
    lu: Vec<T>,
    perm: Vec<usize>,
}

impl<T: Scalar> LuFactors<T> {
    /// Factors `m`. A pivot is rejected when it is exactly zero or, in
    /// floating point, when `|pivot| <= pivot_tol * max|m_ij|`.
    pub fn factor(m: &SmallMatrix<T>, pivot_tol: f64) -> Result<Self> {
        let n = m.rows();
        if m.cols() != n {
            return Err(Error::DimensionMismatch {
                context: "LU of non-square matrix",
                expected: n,
                actual: m.cols(),
            });
        }
        let threshold = if T::EXACT {
            T::zero()
        } else {
            T::mul_ref(&T::from_f64(pivot_tol), &m.max_abs())
        };
        let mut lu = m.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut best = k;
            let mut best_abs = lu[k * n + k].abs();
            for i in (k + 1)..n {
                let v = lu[i * n + k].abs();
                if v > best_abs {
                    best = i;
                    best_abs = v;
                }
            }
            if best_abs.is_zero() || best_abs <= threshold {
                return Err(Error::Singular { pivot: k });
            }
            if best != k {
                for j in 0..n {
                    lu.swap(k * n + j, best * n + j);
                }
                perm.swap(k, best);
            }
            let pivot = lu[k * n + k].clone();
            for i in (k + 1)..n {
                if lu[i * n + k].is_zero() {
                    continue;
                }
                let factor = lu[i * n + k].clone() / pivot.clone();
                for j in (k + 1)..n {
                    let delta = T::mul_ref(&factor, &lu[k * n + j]);
                    lu[i * n + j] -= delta;
                }
                lu[i * n + k] = factor;
            }
        }
        Ok(LuFactors { n, lu, perm })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `M x = rhs`.
    pub fn solve(&self, rhs: &[T]) -> Vec<T> {
        let n = self.n;
        debug_assert_eq!(rhs.len(), n);
        let mut y: Vec<T> = self.perm.iter().map(|&i| rhs[i].clone()).collect();
        for i in 0..n {
            for j in 0..i {
                let delta = T::mul_ref(&self.lu[i * n + j], &y[j]);
                y[i] -= delta;
            }
        }
        for i in (0..n).rev() {
            for j in (i + 1)..n {
                let delta = T::mul_ref(&self.lu[i * n + j], &y[j]);
                y[i] -= delta;
            }
            y[i] = y[i].clone() / self.lu[i * n + i].clone();
        }
        y
    }
}

/// Solves `M X = B` for a `p × q` right-hand side.
pub fn solve_small<T: Scalar>(m: &SmallSpd<T>, b: &SmallMatrix<T>, pivot_tol: f64) -> Result<SmallMatrix<T>> {
    if b.rows() != m.rows() {
        return Err(Error::DimensionMismatch {
            context: "small solve right-hand side",
            expected: m.rows(),
            actual: b.rows(),
        });
    }
    let lu = LuFactors::factor(m, pivot_tol)?;
    let mut out = SmallMatrix::zeros(b.rows(), b.cols());
    for j in 0..b.cols() {
        let col: Vec<T> = (0..b.rows()).map(|i| b.get(i, j).clone()).collect();
        for (i, v) in lu.solve(&col).into_iter().enumerate() {
            out.set(i, j, v);
        }
    }
    Ok(out)
}

/// Result of [`numerical_rank`]: the rank and the pivot columns in the
/// order they were selected.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankInfo {
    pub rank: usize,
    pub columns: Vec<usize>,
}

/// Column-pivoted Gram–Schmidt rank.
///
/// At each step the remaining column with the largest residual norm is
/// taken as pivot (lowest index on ties). A pivot counts when its norm
/// exceeds `tol` times the first (largest) pivot norm; `tol = 0` turns this
/// into an exact nonzero test, which is what rational callers use.
pub fn numerical_rank<T: Scalar>(d: &DenseBlock<T>, tol: f64) -> RankInfo {
    let p = d.cols();
    let mut work: Vec<Vec<T>> = d.columns().map(<[T]>::to_vec).collect();
    let mut norms: Vec<T> = work.iter().map(|c| dot(c, c)).collect();
    let mut remaining: Vec<usize> = (0..p).collect();
    let mut columns = Vec::new();
    let tol_sq = T::from_f64(tol * tol);
    let mut first: Option<T> = None;

    while !remaining.is_empty() {
        let (pos, &j) = remaining
            .iter()
            .enumerate()
            .fold(None::<(usize, &usize)>, |best, (pos, j)| match best {
                Some((_, b)) if norms[*b] >= norms[*j] => best,
                _ => Some((pos, j)),
            })
            .expect("non-empty");
        let pivot_norm = norms[j].clone();
        let threshold = match &first {
            None => T::zero(),
            Some(f) => T::mul_ref(&tol_sq, f),
        };
        if !(pivot_norm > threshold) || pivot_norm.is_zero() {
            break;
        }
        if first.is_none() {
            first = Some(pivot_norm.clone());
        }
        remaining.remove(pos);
        columns.push(j);
        let q = work[j].clone();
        for &l in &remaining {
            let coeff = dot(&q, &work[l]) / pivot_norm.clone();
            if coeff.is_zero() {
                continue;
            }
            for (w, qi) in work[l].iter_mut().zip(&q) {
                *w -= T::mul_ref(&coeff, qi);
            }
            norms[l] = dot(&work[l], &work[l]);
        }
    }
    RankInfo {
        rank: columns.len(),
        columns,
    }
}

/// `‖x‖_A = (xᵀAx)^{1/2}`, evaluated in the field and returned as binary64.
pub fn a_norm<T: Scalar>(a: &SpdMatrix<T>, x: &[T]) -> Result<f64> {
    if x.len() != a.n() {
        return Err(Error::DimensionMismatch {
            context: "a_norm vector",
            expected: a.n(),
            actual: x.len(),
        });
    }
    let q = a.quad_form(x);
    if q.is_negative() {
        let value = q.to_f64();
        // round-off may push a tiny square below zero
        let scale: f64 = x.iter().map(|v| v.to_f64().abs()).sum::<f64>().powi(2) * a.max_abs().to_f64();
        if T::EXACT || value < -1e-12 * scale {
            return Err(Error::NotPositiveDefinite(format!("xᵀAx = {value}")));
        }
        return Ok(0.0);
    }
    Ok(q.to_f64().sqrt())
}
