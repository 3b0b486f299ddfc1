//! Scalar abstraction shared by every numerical module.
//!
//! All math is written against [`Real`], which is implemented for `f32` and
//! `f64`. Transcendental functions come from [`nalgebra::RealField`]; avoid
//! importing `num_traits::Float` alongside it or method calls become
//! ambiguous.

use std::fmt;

use nalgebra::{Complex, ComplexField, RealField};
use num_traits::ToPrimitive;

/// Real floating point scalar: `f32` or `f64`.
pub trait Real:
    RealField + Copy + ToPrimitive + fmt::LowerExp + Default + Send + Sync + 'static
{
    /// Converts an `f64` literal into `Self`.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        nalgebra::convert(n as f64)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite real scalar")
    }

    /// Machine epsilon of the concrete type.
    fn eps() -> Self;
}

impl Real for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}

/// Complex scalar over `T`.
pub type C<T> = Complex<T>;

#[inline]
pub fn c<T: Real>(re: T, im: T) -> C<T> {
    Complex::new(re, im)
}

#[inline]
pub fn c_re<T: Real>(re: T) -> C<T> {
    Complex::new(re, T::zero())
}

/// `e^{i phase}`.
#[inline]
pub fn cis<T: Real>(phase: T) -> C<T> {
    Complex::new(phase.cos(), phase.sin())
}

#[inline]
pub fn cexp<T: Real>(z: C<T>) -> C<T> {
    cis(z.im) * z.re.exp()
}

#[inline]
pub fn cabs<T: Real>(z: C<T>) -> T {
    ComplexField::modulus(z)
}

#[inline]
pub fn carg<T: Real>(z: C<T>) -> T {
    z.im.atan2(z.re)
}

/// Raises `z` to a non-negative integer power by repeated squaring.
pub fn cpowi<T: Real>(z: C<T>, mut n: u32) -> C<T> {
    let mut base = z;
    let mut acc = c_re(T::one());
    while n > 0 {
        if n & 1 == 1 {
            acc *= base;
        }
        base = base * base;
        n >>= 1;
    }
    acc
}
