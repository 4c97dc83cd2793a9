use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FloatConst, FromPrimitive, Num, NumCast};

/// Ordered field elements: enough arithmetic for the polynomial estimators.
///
/// Implemented for `f32`, `f64` and [`crate::Rational`].
pub trait Field: Num + Clone + PartialOrd + FromPrimitive + Debug {}

impl<T> Field for T where T: Num + Clone + PartialOrd + FromPrimitive + Debug {}

/// Floating-point scalars: `f32` or `f64`.
pub trait Scalar:
    Field + Float + FloatConst + NumCast + Copy + Display + LowerExp + Send + Sync + 'static
{
    /// Lossless-enough conversion from a bucket count, which may exceed `u64`.
    fn from_count(v: u128) -> Self {
        <Self as NumCast>::from(v).expect("float conversion from u128 is total")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
