//! Scalar abstraction for the numeric operator kernels.

use std::fmt::Debug;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point type the numeric kernels are generic over.
pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Default + 'static {
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where T: Float + FromPrimitive + ToPrimitive + Debug + Default + 'static {}

/// Left-to-right arithmetic mean; `None` on empty input.
pub fn mean<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let sum = values.iter().fold(T::zero(), |acc, v| acc + *v);
    Some(sum / T::from_usize(values.len())?)
}
