//! Scalar abstraction: the whole library is generic over the floating-point
//! type through [`Real`], so states, couplings and integrators work with
//! `f32` or `f64` alike.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign};

/// Complex number over the library's scalar type.
pub type C<T> = Complex<T>;

/// Floating-point scalar usable throughout the library.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + NumAssign
    + Sum<Self>
    + Debug
    + Display
    + Send
    + Sync
    + 'static
    + crate::linalg::MatElem<Re = Self>
{
    /// Shorthand for converting an `f64` literal into the scalar type.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("literal not representable in scalar type")
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }

    fn half() -> Self {
        Self::one() / Self::two()
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `x + 0i`.
pub fn cr<T: Real>(x: T) -> C<T> {
    Complex::new(x, T::zero())
}

/// `0 + x*i`.
pub fn ci<T: Real>(x: T) -> C<T> {
    Complex::new(T::zero(), x)
}

/// Natural log of `n!`, summed term by term.
///
/// Factorials overflow `f64` near `n = 171`; everything downstream
/// (coherent amplitudes, Poisson weights, Husimi overlaps) therefore works
/// with `ln n!` and exponentiates at the end.
pub fn ln_factorial<T: Real>(n: usize) -> T {
    let mut acc = T::zero();
    for k in 2..=n {
        acc += T::of(k as f64).ln();
    }
    acc
}

/// Table of `ln k!` for `k = 0..n_max` (inclusive), for hot loops.
pub fn ln_factorial_table<T: Real>(n_max: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut acc = T::zero();
    out.push(acc);
    for k in 1..=n_max {
        acc += T::of(k as f64).ln();
        out.push(acc);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_factorial_small_values() {
        assert_eq!(ln_factorial::<f64>(0), 0.0);
        assert_eq!(ln_factorial::<f64>(1), 0.0);
        assert!((ln_factorial::<f64>(5) - 120.0f64.ln()).abs() < 1e-12);
        assert!((ln_factorial::<f64>(10) - 3628800.0f64.ln()).abs() < 1e-11);
    }

    #[test]
    fn ln_factorial_table_matches_scalar() {
        let table = ln_factorial_table::<f64>(40);
        for (k, &v) in table.iter().enumerate() {
            assert!((v - ln_factorial::<f64>(k)).abs() < 1e-10);
        }
    }
}
