//! Scalar abstraction shared by the numerical kernels.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        // from_f64 is total for both f32 and f64 (rounding / overflow to inf).
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite cast to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Scales a tolerance calibrated for `f64` to the precision of `T`.
#[inline]
pub fn precision_tol<T: Real>(tol_f64: f64) -> T {
    T::lit(tol_f64 * (T::epsilon().as_f64() / f64::EPSILON))
}
