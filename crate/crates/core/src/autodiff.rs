//! Forward-mode differentiation scalars.
//!
//! [`Dual`] carries one tangent direction (`a + b·ε`, `ε² = 0`) and gives
//! directional first derivatives. [`HyperDual`] carries two nilpotent units
//! `ε₁, ε₂` with `ε₁² = ε₂² = 0` but `ε₁ε₂ ≠ 0`, i.e. a second-order truncated
//! polynomial; seeding `ε₁` along `eᵢ` and `ε₂` along `eⱼ` makes the `ε₁ε₂`
//! channel the exact mixed partial `∂²f/∂xᵢ∂xⱼ`.

use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use nalgebra::ComplexField;

use crate::scalar::{Real, Scalar};

/// First-order dual number.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual<R> {
    pub re: R,
    pub eps: R,
}

impl<R: Real> Dual<R> {
    #[inline]
    pub fn new(re: R, eps: R) -> Self {
        Self { re, eps }
    }

    #[inline]
    pub fn constant(re: R) -> Self {
        Self { re, eps: R::zero() }
    }

    /// A variable seeded with unit tangent.
    #[inline]
    pub fn variable(re: R) -> Self {
        Self { re, eps: R::one() }
    }

    #[inline]
    fn chain(self, f: R, df: R) -> Self {
        Self { re: f, eps: df * self.eps }
    }
}

impl<R: Real> Add for Dual<R> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.eps + o.eps)
    }
}

impl<R: Real> Sub for Dual<R> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.eps - o.eps)
    }
}

impl<R: Real> Mul for Dual<R> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl<R: Real> Div for Dual<R> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = R::one() / o.re;
        let q = self.re * inv;
        Self::new(q, (self.eps - q * o.eps) * inv)
    }
}

impl<R: Real> Neg for Dual<R> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}

macro_rules! assign_ops {
    ($t:ident) => {
        impl<R: Real> AddAssign for $t<R> {
            #[inline]
            fn add_assign(&mut self, o: Self) {
                *self = *self + o;
            }
        }
        impl<R: Real> SubAssign for $t<R> {
            #[inline]
            fn sub_assign(&mut self, o: Self) {
                *self = *self - o;
            }
        }
        impl<R: Real> MulAssign for $t<R> {
            #[inline]
            fn mul_assign(&mut self, o: Self) {
                *self = *self * o;
            }
        }
        impl<R: Real> DivAssign for $t<R> {
            #[inline]
            fn div_assign(&mut self, o: Self) {
                *self = *self / o;
            }
        }
    };
}

assign_ops!(Dual);
assign_ops!(HyperDual);

impl<R: Real> Scalar for Dual<R> {
    type Real = R;

    #[inline]
    fn from_real(v: R) -> Self {
        Self::constant(v)
    }
    #[inline]
    fn value(self) -> R {
        self.re
    }
    #[inline]
    fn sin(self) -> Self {
        let (s, c) = ComplexField::sin_cos(self.re);
        self.chain(s, c)
    }
    #[inline]
    fn cos(self) -> Self {
        let (s, c) = ComplexField::sin_cos(self.re);
        self.chain(c, -s)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = ComplexField::exp(self.re);
        self.chain(e, e)
    }
    #[inline]
    fn ln(self) -> Self {
        self.chain(ComplexField::ln(self.re), R::one() / self.re)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = ComplexField::sqrt(self.re);
        self.chain(s, R::lit(0.5) / s)
    }
    #[inline]
    fn all_finite(self) -> bool {
        ComplexField::is_finite(&self.re) && ComplexField::is_finite(&self.eps)
    }
}

/// Second-order hyper-dual number `re + e1·ε₁ + e2·ε₂ + e12·ε₁ε₂`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HyperDual<R> {
    pub re: R,
    pub e1: R,
    pub e2: R,
    pub e12: R,
}

impl<R: Real> HyperDual<R> {
    #[inline]
    pub fn new(re: R, e1: R, e2: R, e12: R) -> Self {
        Self { re, e1, e2, e12 }
    }

    #[inline]
    pub fn constant(re: R) -> Self {
        Self::new(re, R::zero(), R::zero(), R::zero())
    }

    /// Seeds the two unit directions with the given tangent weights.
    #[inline]
    pub fn seeded(re: R, along_first: R, along_second: R) -> Self {
        Self::new(re, along_first, along_second, R::zero())
    }

    /// Applies a scalar function given its value and first two derivatives.
    #[inline]
    fn chain(self, f: R, df: R, d2f: R) -> Self {
        Self {
            re: f,
            e1: df * self.e1,
            e2: df * self.e2,
            e12: df * self.e12 + d2f * self.e1 * self.e2,
        }
    }
}

impl<R: Real> Add for HyperDual<R> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.e1 + o.e1, self.e2 + o.e2, self.e12 + o.e12)
    }
}

impl<R: Real> Sub for HyperDual<R> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.e1 - o.e1, self.e2 - o.e2, self.e12 - o.e12)
    }
}

impl<R: Real> Mul for HyperDual<R> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Self::new(
            self.re * o.re,
            self.re * o.e1 + self.e1 * o.re,
            self.re * o.e2 + self.e2 * o.re,
            self.re * o.e12 + self.e1 * o.e2 + self.e2 * o.e1 + self.e12 * o.re,
        )
    }
}

impl<R: Real> Div for HyperDual<R> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let inv = R::one() / o.re;
        let recip = o.chain(inv, -inv * inv, R::lit(2.0) * inv * inv * inv);
        self * recip
    }
}

impl<R: Real> Neg for HyperDual<R> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.re, -self.e1, -self.e2, -self.e12)
    }
}

impl<R: Real> Scalar for HyperDual<R> {
    type Real = R;

    #[inline]
    fn from_real(v: R) -> Self {
        Self::constant(v)
    }
    #[inline]
    fn value(self) -> R {
        self.re
    }
    #[inline]
    fn sin(self) -> Self {
        let (s, c) = ComplexField::sin_cos(self.re);
        self.chain(s, c, -s)
    }
    #[inline]
    fn cos(self) -> Self {
        let (s, c) = ComplexField::sin_cos(self.re);
        self.chain(c, -s, -c)
    }
    #[inline]
    fn exp(self) -> Self {
        let e = ComplexField::exp(self.re);
        self.chain(e, e, e)
    }
    #[inline]
    fn ln(self) -> Self {
        let inv = R::one() / self.re;
        self.chain(ComplexField::ln(self.re), inv, -inv * inv)
    }
    #[inline]
    fn sqrt(self) -> Self {
        let s = ComplexField::sqrt(self.re);
        let d = R::lit(0.5) / s;
        self.chain(s, d, -d / (R::lit(2.0) * self.re))
    }
    #[inline]
    fn all_finite(self) -> bool {
        ComplexField::is_finite(&self.re)
            && ComplexField::is_finite(&self.e1)
            && ComplexField::is_finite(&self.e2)
            && ComplexField::is_finite(&self.e12)
    }
}
