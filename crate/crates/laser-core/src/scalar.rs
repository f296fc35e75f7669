//! Floating-point abstraction for the numeric core.
//!
//! Everything numeric in this crate is generic over [`Scalar`], so the same
//! code runs in `f32` or `f64`. Concrete aliases live at the crate root.

use ndarray::ScalarOperand;
use num_traits::{Float, FromPrimitive, NumAssign};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating-point scalar: `f32` or `f64`.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + Sum
    + ScalarOperand
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Convert from `f64`, saturating to infinity when out of range.
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap_or_else(|| {
            if v > 0.0 {
                Self::infinity()
            } else {
                Self::neg_infinity()
            }
        })
    }

    /// Convert to `f64` (exact for `f32` and `f64`).
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Convert from a count.
    fn from_usize_lossy(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).unwrap_or_else(Self::infinity)
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + NumAssign
        + Sum
        + ScalarOperand
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn both_float_widths_are_scalars() {
        fn mean<F: Scalar>(xs: &[F]) -> F {
            xs.iter().copied().sum::<F>() / F::from_usize_lossy(xs.len())
        }
        assert_eq!(mean(&[1.0f32, 3.0]), 2.0f32);
        assert_eq!(mean(&[1.0f64, 3.0]), 2.0f64);
    }

    #[test]
    fn lossy_conversions_round_trip() {
        assert_eq!(f32::from_f64_lossy(0.5).to_f64_lossy(), 0.5);
        assert!(f32::from_f64_lossy(1e300).is_infinite());
    }
}
