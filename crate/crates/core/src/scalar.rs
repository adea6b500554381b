//! Scalar abstractions.
//!
//! Two layers are used throughout the crate:
//!
//! * [`Real`] is the floating-point value type the estimators run on (`f32`
//!   or `f64`). It carries the `nalgebra` field bound for the dense linear
//!   algebra and `num-traits` conversions for literals.
//! * [`Scalar`] is what dynamics, sensors and costs are written against. Every
//!   [`Real`] is a [`Scalar`], and so are the forward-mode types in
//!   [`crate::autodiff`], which is how Jacobians and Hessians of user models
//!   are obtained without symbolic input.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use nalgebra::{ComplexField, RealField};
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating-point value type: `f32` or `f64`.
pub trait Real:
    RealField + Copy + Default + FromPrimitive + ToPrimitive + Send + Sync + 'static
{
    /// Converts an `f64` literal. Infallible for the supported types.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite conversion to f64")
    }

    #[inline]
    fn infinity() -> Self {
        Self::lit(f64::INFINITY)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Arithmetic a model needs from its number type.
///
/// Implemented for every [`Real`] and for the dual-number types, so a single
/// generic `step`/`state_cost` serves plain rollouts and differentiation.
pub trait Scalar:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    type Real: Real;

    fn from_real(v: Self::Real) -> Self;

    /// Value part (strips derivative channels).
    fn value(self) -> Self::Real;

    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;

    /// True when the value and every derivative channel are finite.
    fn all_finite(self) -> bool;

    #[inline]
    fn num(v: f64) -> Self {
        Self::from_real(<Self::Real as Real>::lit(v))
    }

    #[inline]
    fn zero() -> Self {
        Self::from_real(<Self::Real as num_traits::Zero>::zero())
    }

    #[inline]
    fn scale(self, k: Self::Real) -> Self {
        self * Self::from_real(k)
    }

    #[inline]
    fn powi(self, n: u32) -> Self {
        let mut acc = Self::from_real(<Self::Real as num_traits::One>::one());
        for _ in 0..n {
            acc *= self;
        }
        acc
    }
}

impl<R: Real> Scalar for R {
    type Real = R;

    #[inline]
    fn from_real(v: R) -> Self {
        v
    }
    #[inline]
    fn value(self) -> R {
        self
    }
    #[inline]
    fn sin(self) -> Self {
        ComplexField::sin(self)
    }
    #[inline]
    fn cos(self) -> Self {
        ComplexField::cos(self)
    }
    #[inline]
    fn exp(self) -> Self {
        ComplexField::exp(self)
    }
    #[inline]
    fn ln(self) -> Self {
        ComplexField::ln(self)
    }
    #[inline]
    fn sqrt(self) -> Self {
        ComplexField::sqrt(self)
    }
    #[inline]
    fn all_finite(self) -> bool {
        ComplexField::is_finite(&self)
    }
}
