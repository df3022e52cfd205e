use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::scalar::Real;

/// Forward-mode dual number `value + tangent·ε` with `ε² = 0`.
///
/// The component type is itself [`Real`], so duals nest: `Dual<Dual<f64>>`
/// carries a time tangent and a parameter-direction tangent at once, and
/// `Dual<Var>` records the tangent computation on a reverse-mode tape.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub value: T,
    pub tangent: T,
}

impl<T: Real> Dual<T> {
    #[inline]
    pub fn new(value: T, tangent: T) -> Self {
        Self { value, tangent }
    }

    /// A value with zero tangent.
    #[inline]
    pub fn constant(value: T) -> Self {
        Self {
            value,
            tangent: T::lift(0.0),
        }
    }

    /// An independent variable seeded with the given tangent.
    #[inline]
    pub fn seeded(value: T, seed: T) -> Self {
        Self {
            value,
            tangent: seed,
        }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    #[inline]
    fn add(self, rhs: Self) -> Self {
        Self::new(self.value + rhs.value, self.tangent + rhs.tangent)
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    #[inline]
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.value - rhs.value, self.tangent - rhs.tangent)
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        Self::new(
            self.value * rhs.value,
            self.tangent * rhs.value + self.value * rhs.tangent,
        )
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let q = self.value / rhs.value;
        Self::new(q, (self.tangent - q * rhs.tangent) / rhs.value)
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.value, -self.tangent)
    }
}

impl<T: Real> Real for Dual<T> {
    #[inline]
    fn lift(x: f64) -> Self {
        Self::constant(T::lift(x))
    }

    #[inline]
    fn primal(&self) -> f64 {
        self.value.primal()
    }

    #[inline]
    fn tanh_ad(self) -> Self {
        let th = self.value.tanh_ad();
        Self::new(th, (T::lift(1.0) - th * th) * self.tangent)
    }

    #[inline]
    fn sqrt_ad(self) -> Self {
        let r = self.value.sqrt_ad();
        Self::new(r, self.tangent / (T::lift(2.0) * r))
    }
}
