//! Arithmetic abstraction so the simplex runs over `f64` or exact rationals.

use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use std::fmt::Debug;

pub trait Scalar: Clone + Debug + PartialOrd {
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_rational(r: &BigRational) -> Self;
    fn from_i64(v: i64) -> Self;
    fn to_f64(&self) -> f64;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn abs(&self) -> Self;
    /// `self -= f * x`
    fn sub_mul_assign(&mut self, f: &Self, x: &Self);
    /// Values this small are treated as structural zeros of the tableau.
    fn negligible(&self) -> bool;
    /// Primal feasibility tolerance.
    fn feas_tol() -> Self;
    /// Reduced-cost (dual feasibility) tolerance.
    fn opt_tol() -> Self;
    /// Smallest acceptable pivot magnitude.
    fn pivot_tol() -> Self;
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_rational(r: &BigRational) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(if r.is_negative() { f64::MIN } else { f64::MAX })
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    #[inline]
    fn sub_mul_assign(&mut self, f: &Self, x: &Self) {
        *self -= f * x;
    }
    #[inline]
    fn negligible(&self) -> bool {
        f64::abs(*self) < 1e-12
    }
    fn feas_tol() -> Self {
        1e-9
    }
    fn opt_tol() -> Self {
        1e-9
    }
    fn pivot_tol() -> Self {
        1e-9
    }
}

impl Scalar for BigRational {
    const EXACT: bool = true;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_rational(r: &BigRational) -> Self {
        r.clone()
    }
    fn from_i64(v: i64) -> Self {
        BigRational::from_integer(v.into())
    }
    fn to_f64(&self) -> f64 {
        f64::from_rational(self)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    fn sub_mul_assign(&mut self, f: &Self, x: &Self) {
        *self -= f * x;
    }
    fn negligible(&self) -> bool {
        self.is_zero()
    }
    fn feas_tol() -> Self {
        Zero::zero()
    }
    fn opt_tol() -> Self {
        Zero::zero()
    }
    fn pivot_tol() -> Self {
        Zero::zero()
    }
}
