//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display};

use num_complex::Complex;
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point type the physics is written against (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// `e^{iφ}`.
pub fn phase<T: Real>(phi: T) -> Complex<T> {
    Complex::new(phi.cos(), phi.sin())
}

/// `2π·x`, the conversion used for every "2π × value" frequency.
pub fn two_pi<T: Real>(x: T) -> T {
    T::TAU() * x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phase_has_unit_modulus() {
        for k in 0..16 {
            let z = phase(0.37 * k as f64);
            assert!((z.norm() - 1.0).abs() < 1e-15);
        }
        let z32 = phase(1.0f32);
        assert!((z32.norm() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn literals() {
        assert_eq!(f32::lit(0.5), 0.5f32);
        assert_eq!(two_pi(1.0f64), std::f64::consts::TAU);
    }
}
