use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Arithmetic needed by the balancing regularizer: the four field operations
/// and an ordering for the denominator floor. Implemented by floats and by
/// exact rationals such as `num_rational::Ratio<i128>`.
pub trait Field: LinalgScalar + PartialOrd + Debug + Send + Sync {}

impl<T> Field for T where T: LinalgScalar + PartialOrd + Debug + Send + Sync {}

/// Floating-point scalar used by the solver: `f32` or `f64`.
pub trait Scalar:
    Field + Float + FromPrimitive + ToPrimitive + ScalarOperand + Sum + Display + LowerExp
{
    /// Converts an `f64` literal. Every `f64` is representable (possibly
    /// rounded) in both supported float types.
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
