//! Scalar abstraction shared by the theory kernels.
//!
//! The steady-state, coefficient, propagation and correlation code is written
//! once against [`Real`] and instantiated for `f64` (the default everywhere)
//! and `f32` (useful for quick sweeps and for checking conditioning).

use std::fmt::{Debug, Display};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point type usable by the theory kernels.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + rustfft::FftNum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal. Never fails for the supported types.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Relative precision used when a kernel needs a "numerically zero" cut.
    fn tiny() -> Self;
}

impl Real for f64 {
    #[inline]
    fn tiny() -> Self {
        1e-300
    }
}

impl Real for f32 {
    #[inline]
    fn tiny() -> Self {
        1e-37
    }
}

pub type Cplx<T> = Complex<T>;

#[inline]
pub(crate) fn c<T: Real>(re: T, im: T) -> Cplx<T> {
    Complex::new(re, im)
}

#[inline]
pub(crate) fn re<T: Real>(x: T) -> Cplx<T> {
    Complex::new(x, T::zero())
}

/// Purely imaginary `i * x`.
#[inline]
pub(crate) fn im<T: Real>(x: T) -> Cplx<T> {
    Complex::new(T::zero(), x)
}
