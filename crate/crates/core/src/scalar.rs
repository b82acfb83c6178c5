use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::{BigRational, Ratio};
use num_traits::{Float, FromPrimitive, Num, ToPrimitive};

/// Numeric type usable by the influence and gap computations.
///
/// Implemented for `f32`, `f64`, `Ratio<i64>` and `BigRational`. Only ring
/// operations, division and exact construction from a ratio are required.
pub trait Scalar: Num + Clone + Debug + PartialOrd {
    fn from_ratio(num: i64, den: i64) -> Self;
    fn as_f64(&self) -> f64;

    fn from_count(n: usize) -> Self {
        Self::from_ratio(n as i64, 1)
    }
}

impl Scalar for f64 {
    fn from_ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }
    fn as_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    fn from_ratio(num: i64, den: i64) -> Self {
        (num as f64 / den as f64) as f32
    }
    fn as_f64(&self) -> f64 {
        *self as f64
    }
}

impl Scalar for Ratio<i64> {
    fn from_ratio(num: i64, den: i64) -> Self {
        Ratio::new(num, den)
    }
    fn as_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

impl Scalar for BigRational {
    fn from_ratio(num: i64, den: i64) -> Self {
        BigRational::new(BigInt::from(num), BigInt::from(den))
    }
    fn as_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
}

/// Floating-point scalar for statistics that need square roots.
pub trait RealScalar: Float + FromPrimitive + Scalar + Send + Sync {}

impl RealScalar for f32 {}
impl RealScalar for f64 {}
