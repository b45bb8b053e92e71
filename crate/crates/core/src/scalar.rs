//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive};

/// Real floating-point scalar: `f32` or `f64`.
///
/// The per-type constants set the default tolerances. They are tight for `f64`
/// (the closed forms are exact algebra) and loose enough for `f32` that the
/// same checks remain meaningful in single precision.
pub trait Real:
    Float + FloatConst + FromPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Default equality / PSD tolerance.
    const DEFAULT_TOL: f64;
    /// Off-diagonal Frobenius mass at which the Jacobi sweep stops.
    const JACOBI_OFF_TOL: f64;

    /// Convert an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f64 {
    const DEFAULT_TOL: f64 = 1e-10;
    const JACOBI_OFF_TOL: f64 = 1e-14;
}

impl Real for f32 {
    const DEFAULT_TOL: f64 = 1e-4;
    const JACOBI_OFF_TOL: f64 = 1e-6;
}

/// Complex scalar over a [`Real`].
pub type C<T> = Complex<T>;

#[inline]
pub(crate) fn re<T: Real>(x: T) -> C<T> {
    Complex::new(x, T::zero())
}

#[inline]
pub(crate) fn cplx<T: Real>(re: f64, im: f64) -> C<T> {
    Complex::new(T::lit(re), T::lit(im))
}
