//! Scalar abstraction for the scoring and evaluation math.
//!
//! Everything numeric below the wire format (quality scores, F1, correlation
//! coefficients, p-values) is written against [`Scalar`] so it runs in `f32`
//! or `f64`. The on-disk schema stores `f64`.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Relative tolerance used to terminate series and continued fractions.
    const SERIES_EPS: Self;

    /// Lossy conversion from a literal. Panics only if the type cannot
    /// represent ordinary finite `f64` values, which never happens for
    /// `f32`/`f64`.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("finite literal representable in scalar type")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl Scalar for f32 {
    const SERIES_EPS: Self = 1.0e-7;
}

impl Scalar for f64 {
    const SERIES_EPS: Self = 1.0e-15;
}
