//! Floating-point abstraction shared by every numerical module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar the discretizations are generic over.
///
/// Implemented for `f32` and `f64`. Benchmark parameters are stored as
/// `f64` and converted on entry with [`Scalar::of`].
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Converts an `f64` literal or parameter.
    fn of(x: f64) -> Self;

    fn to_f64_lossy(self) -> f64;

    fn from_count(n: usize) -> Self {
        Self::of(n as f64)
    }

    /// Total order used where determinism matters (NaN sorts last).
    fn total_cmp_scalar(&self, other: &Self) -> std::cmp::Ordering;
}

macro_rules! impl_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn of(x: f64) -> Self {
                x as $t
            }

            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }

            #[inline]
            fn total_cmp_scalar(&self, other: &Self) -> std::cmp::Ordering {
                self.total_cmp(other)
            }
        }
    };
}

impl_scalar!(f32);
impl_scalar!(f64);

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conversions() {
        assert_eq!(f32::of(0.5), 0.5f32);
        assert_eq!(f64::from_count(7), 7.0);
        assert_eq!(1.5f32.to_f64_lossy(), 1.5);
        assert_eq!(f64::NAN.total_cmp_scalar(&1.0), std::cmp::Ordering::Greater);
    }
}
