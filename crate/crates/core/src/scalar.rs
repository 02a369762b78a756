use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Scalar type accepted by every solver in this crate.
///
/// `f64` is the working precision; `f32` compiles and runs, but the
/// tolerances quoted throughout the docs assume double precision.
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive {}

impl<T> Real for T where T: RealField + Copy + FromPrimitive + ToPrimitive {}

/// Converts an `f64` literal into `S`.
#[inline]
pub fn lit<S: Real>(v: f64) -> S {
    S::from_f64(v).expect("f64 literal representable in scalar type")
}

#[inline]
pub fn to_f64<S: Real>(v: S) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}
