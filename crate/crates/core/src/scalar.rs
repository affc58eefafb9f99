//! Scalar field abstraction shared by every kernel.
//!
//! Two fields are supported: IEEE binary64 and arbitrary-precision rationals.
//! The rational field makes the finite-termination and orthogonality
//! properties of the solvers checkable with `==` instead of tolerances.

use std::fmt::{Debug, Display};
use std::ops::{AddAssign, SubAssign};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub trait Scalar:
    Clone
    + Debug
    + Display
    + PartialOrd
    + Signed
    + AddAssign
    + SubAssign
    + Send
    + Sync
    + 'static
{
    /// True when arithmetic is exact (no rounding).
    const EXACT: bool;
    /// Short name used in file headers and CLI flags.
    const FIELD: &'static str;

    /// Converts a binary64 value; exact for both fields.
    fn from_f64(v: f64) -> Self;
    fn from_i64(v: i64) -> Self;
    fn to_f64(&self) -> f64;

    /// `acc += a * b` without cloning the operands.
    fn mul_acc(acc: &mut Self, a: &Self, b: &Self);
    fn mul_ref(a: &Self, b: &Self) -> Self;

    /// Midpoint `(a + b) / 2`, used to symmetrize.
    fn midpoint(a: &Self, b: &Self) -> Self;

    fn parse(s: &str) -> Option<Self>;
    /// Textual form that [`Scalar::parse`] reads back without loss.
    fn render(&self) -> String;
}

impl Scalar for f64 {
    const EXACT: bool = false;
    const FIELD: &'static str = "real";

    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    #[inline]
    fn to_f64(&self) -> f64 {
        *self
    }
    #[inline(always)]
    fn mul_acc(acc: &mut Self, a: &Self, b: &Self) {
        *acc += *a * *b;
    }
    #[inline(always)]
    fn mul_ref(a: &Self, b: &Self) -> Self {
        *a * *b
    }
    #[inline]
    fn midpoint(a: &Self, b: &Self) -> Self {
        (*a + *b) / 2.0
    }
    fn parse(s: &str) -> Option<Self> {
        f64::from_str(s).ok()
    }
    fn render(&self) -> String {
        // shortest representation that round-trips
        format!("{self:?}")
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;
    const FIELD: &'static str = "rational";

    fn from_f64(v: f64) -> Self {
        <Rational as FromPrimitive>::from_f64(v).expect("finite value")
    }
    fn from_i64(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    #[inline]
    fn mul_acc(acc: &mut Self, a: &Self, b: &Self) {
        if a.is_zero() || b.is_zero() {
            return;
        }
        *acc += a * b;
    }
    fn mul_ref(a: &Self, b: &Self) -> Self {
        a * b
    }
    fn midpoint(a: &Self, b: &Self) -> Self {
        (a + b) / Rational::from_integer(BigInt::from(2))
    }
    fn parse(s: &str) -> Option<Self> {
        let s = s.trim();
        match s.split_once('/') {
            Some((num, den)) => {
                let num = BigInt::from_str(num.trim()).ok()?;
                let den = BigInt::from_str(den.trim()).ok()?;
                if den.is_zero() {
                    return None;
                }
                Some(Rational::new(num, den))
            }
            None => BigInt::from_str(s).ok().map(Rational::from_integer),
        }
    }
    fn render(&self) -> String {
        format!("{}/{}", self.numer(), self.denom())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_text_round_trip() {
        let q = Rational::new(BigInt::from(-7), BigInt::from(12));
        assert_eq!(q.render(), "-7/12");
        assert_eq!(<Rational as Scalar>::parse(&q.render()), Some(q));
        assert_eq!(
            <Rational as Scalar>::parse("5"),
            Some(<Rational as Scalar>::from_i64(5))
        );
        assert_eq!(<Rational as Scalar>::parse("1/0"), None);
    }

    #[test]
    fn f64_conversion_into_rational_is_exact() {
        let q = <Rational as Scalar>::from_f64(0.1);
        assert_eq!(Scalar::to_f64(&q), 0.1);
        assert_ne!(q, Rational::new(BigInt::from(1), BigInt::from(10)));
    }

    #[test]
    fn float_render_round_trips() {
        for v in [0.1, -3.5e-300, 1.0 / 3.0, 12345.678] {
            assert_eq!(<f64 as Scalar>::parse(&v.render()), Some(v));
        }
    }
}
