//! Scalar abstraction shared by every numerical module.
//!
//! All of the channel, reservoir and estimation code is written against
//! [`Real`], so the same pipeline can be instantiated in `f64` (the default
//! used by the harness) or `f32`. Random draws are always taken in `f64` and
//! cast down, which keeps a seeded run identical across precisions up to
//! rounding.

use std::fmt::{Debug, Display};

use nalgebra::{DMatrix, DVector, RealField};
use num_complex::Complex;
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real floating-point scalar: `f32` or `f64`.
pub trait Real:
    RealField
    + Copy
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + Serialize
    + DeserializeOwned
    + Send
    + Sync
    + Debug
    + Display
    + 'static
{
    /// Lossy conversion from `f64`.
    #[inline]
    fn of(x: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(x).expect("f64 is representable")
    }

    /// Widening conversion to `f64`.
    #[inline]
    fn f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

pub type Cx<T> = Complex<T>;
pub type CMatrix<T> = DMatrix<Complex<T>>;
pub type CVector<T> = DVector<Complex<T>>;

/// Squared Frobenius norm of a complex matrix.
pub fn frob_sq<T: Real>(m: &CMatrix<T>) -> T {
    m.iter().fold(T::zero(), |acc, z| acc + z.norm_sqr())
}

/// `e^{j theta}`
#[inline]
pub fn cis<T: Real>(theta: T) -> Complex<T> {
    Complex::new(theta.cos(), theta.sin())
}

/// `|z|`; `Complex::norm` needs `num_traits::Float`, which `Real` does not
/// imply.
#[inline]
pub fn cabs<T: Real>(z: Complex<T>) -> T {
    z.norm_sqr().sqrt()
}
