//! Floating point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the models and metrics are generic over.
///
/// Implemented for `f32` and `f64`. Training defaults to `f64`; the
/// tolerances quoted throughout the test suite assume double precision.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Floor applied to probabilities before taking a logarithm.
    const LOG_FLOOR: f64 = 1e-12;

    /// Lossless for `f64`, rounding for `f32`.
    fn of(v: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    fn from_count(n: usize) -> Self {
        Self::of(n as f64)
    }

    /// `ln(max(self, LOG_FLOOR))`.
    fn guarded_ln(self) -> Self {
        self.max(Self::of(Self::LOG_FLOOR)).ln()
    }
}

impl Scalar for f64 {
    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self as f64
    }
}
