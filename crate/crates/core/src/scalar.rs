//! Scalar abstraction shared by the metric and geometry kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, NumCast};

/// Floating point scalar accepted by scores, ratios and box geometry (f32 or f64).
pub trait Scalar:
    'static
    + Float
    + FromPrimitive
    + NumCast
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
{
    /// `num / den` for counts; `den == 0` yields zero.
    fn ratio(num: usize, den: usize) -> Self {
        if den == 0 {
            return Self::zero();
        }
        Self::from_usize(num).unwrap_or_else(Self::zero) / Self::from_usize(den).unwrap_or_else(Self::one)
    }

    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
