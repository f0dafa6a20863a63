//! Floating-point scalar abstraction: every numerical routine in this crate
//! is generic over [`Real`], instantiated as `f32` or `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssign};

/// Scalar type for the linear algebra and statistics routines.
pub trait Real:
    Float + FromPrimitive + NumAssign + Sum + ScalarOperand + Debug + Display + Send + Sync + 'static
{
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + NumAssign
        + Sum
        + ScalarOperand
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

/// Converts an `f64` constant into `T`.
///
/// Only used for finite literals baked into the algorithms, where the
/// conversion cannot fail.
#[inline]
pub(crate) fn cst<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("finite f64 constant")
}
