//! Floating-point abstraction shared by every numerical module.
//!
//! All simulation types are generic over [`Real`], which is implemented for
//! `f32` and `f64`. Concrete aliases for double precision live at the crate
//! root.

use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Real scalar usable by the propagator, the linear algebra and the FFT.
pub trait Real:
    Float
    + FloatConst
    + FftNum
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Default
    + Display
    + LowerExp
    + Debug
    + Send
    + Sync
    + 'static
{
    const NAME: &'static str;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize representable")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {
    const NAME: &'static str = "f32";
}

impl Real for f64 {
    const NAME: &'static str = "f64";
}

/// Complex amplitude over a [`Real`].
pub type Cplx<T> = Complex<T>;

/// `exp(-i * phase)`, the only exponential the propagator needs.
#[inline]
pub fn phase_factor<T: Real>(phase: T) -> Cplx<T> {
    let (s, c) = phase.sin_cos();
    Complex::new(c, -s)
}

#[inline]
pub(crate) fn czero<T: Real>() -> Cplx<T> {
    Complex::new(T::zero(), T::zero())
}

#[inline]
pub(crate) fn cone<T: Real>() -> Cplx<T> {
    Complex::new(T::one(), T::zero())
}

/// Widens an `f64` tolerance for single precision.
pub fn tolerance<T: Real>(for_f64: f64) -> f64 {
    if T::epsilon().to_f64_lossy() > 1e-10 {
        for_f64.max(1e-3)
    } else {
        for_f64
    }
}
