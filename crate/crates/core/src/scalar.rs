//! Scalar abstraction: the whole toolkit is generic over `f32`/`f64`.

use num_traits::{Float, FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar the toolkit operates on.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossless-enough conversion from `f64` literals and intermediate
    /// computations (RNG output, accumulated statistics).
    fn from_f64_lit(x: f64) -> Self {
        Self::from_f64(x).expect("finite f64 converts to any Scalar")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand used throughout the crate for numeric literals.
#[inline]
pub(crate) fn num<T: Scalar>(x: f64) -> T {
    T::from_f64_lit(x)
}
