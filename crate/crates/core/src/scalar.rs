//! Scalar abstraction shared by the numeric parts of the crate.
//!
//! Learners, standardizers and the dense linear algebra are written against
//! [`Real`] so they run in either `f32` or `f64`. Data files, currency amounts
//! and reports stay in `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Floating-point scalar usable by every model in the crate.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
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
    /// Lossy conversion from `f64`; panics only for values the target cannot represent at all.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 not representable in scalar type")
    }

    fn of_usize(value: usize) -> Self {
        Self::from_usize(value).expect("usize not representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar not representable as f64")
    }
}

impl<T> Real for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
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
}

/// Arithmetic mean; `None` for an empty slice.
pub fn mean<T: Real>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let sum: T = values.iter().copied().sum();
    Some(sum / T::of_usize(values.len()))
}

/// Population standard deviation (divides by n), two-pass.
pub fn population_std<T: Real>(values: &[T]) -> Option<T> {
    let m = mean(values)?;
    let ss: T = values.iter().map(|&v| (v - m) * (v - m)).sum();
    Some((ss / T::of_usize(values.len())).sqrt())
}
