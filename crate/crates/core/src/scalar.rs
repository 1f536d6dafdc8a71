//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use nalgebra as na;
use num_traits as nt;

/// Real floating point type the simulations are generic over (`f32` or `f64`).
pub trait Real:
    na::RealField
    + Copy
    + nt::FloatConst
    + nt::FromPrimitive
    + nt::ToPrimitive
    + FromStr
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as nt::FromPrimitive>::from_f64(x).expect("finite literal")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        <Self as nt::ToPrimitive>::to_f64(&self).unwrap_or(f64::NAN)
    }

    /// A tolerance no tighter than what the type can resolve.
    #[inline]
    fn tol(x: f64) -> Self {
        let floor = Self::default_epsilon() * Self::lit(1e3);
        let t = Self::lit(x);
        if t > floor {
            t
        } else {
            floor
        }
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Complex<T> = na::Complex<T>;
