//! Scalar abstractions shared by the network, physics and autodiff layers.
//!
//! Two traits are used throughout the crate:
//!
//! * [`Real`] is the minimal arithmetic needed to *evaluate* the network and
//!   the model residuals. It is implemented by plain floats, by forward-mode
//!   [`Dual`](crate::autodiff::Dual) numbers and by reverse-mode tape
//!   variables, so one generic evaluation path serves every derivative route.
//! * [`Scalar`] is what parameters and stored trajectories are made of: a
//!   real `num_traits::Float` (`f32` or `f64`) that is also a [`Real`].

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

pub trait Real:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// Lift a constant into this scalar type.
    fn lift(x: f64) -> Self;

    /// The primal value, used for branch predicates and diagnostics.
    fn primal(&self) -> f64;

    fn tanh_ad(self) -> Self;

    fn sqrt_ad(self) -> Self;

    #[inline]
    fn square(self) -> Self {
        self * self
    }
}

macro_rules! impl_real_for_float {
    ($($t:ty),*) => {$(
        impl Real for $t {
            #[inline]
            fn lift(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn primal(&self) -> f64 {
                *self as f64
            }

            #[inline]
            fn tanh_ad(self) -> Self {
                <$t>::tanh(self)
            }

            #[inline]
            fn sqrt_ad(self) -> Self {
                <$t>::sqrt(self)
            }
        }
    )*};
}

impl_real_for_float!(f32, f64);

/// Storage scalar for parameters, states and optimizer buffers.
pub trait Scalar:
    Float
    + Real
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Sum
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Convert from `f64` (rounding for `f32`).
    #[inline]
    fn of(x: f64) -> Self {
        <Self as Real>::lift(x)
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.primal()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
