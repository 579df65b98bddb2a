//! Scalar abstraction shared by every numeric module.

use std::fmt::{Debug, Display};

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync {}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(v: f64) -> T {
    T::from_f64(v).expect("f64 literal representable in scalar type")
}

#[inline]
pub fn to_f64<T: Real>(v: T) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

#[inline]
pub fn from_usize<T: Real>(v: usize) -> T {
    T::from_usize(v).expect("count representable in scalar type")
}

/// Relative tolerance `base`, widened to a few ulps for low-precision scalars.
#[inline]
pub fn rel_tol<T: Real>(base: f64) -> T {
    let floor = T::default_epsilon() * lit(64.0);
    let base = lit::<T>(base);
    if base > floor {
        base
    } else {
        floor
    }
}
