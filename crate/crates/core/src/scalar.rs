use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the teaching model is generic over.
///
/// Implemented for `f32` and `f64`. The model needs `exp`/`ln`, so exact
/// rational types are not supported.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    fn half() -> Self {
        Self::from_f64_lossy(0.5)
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Sum
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// `ln(1 + e^x)` without overflow for large `x`.
pub(crate) fn softplus<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Neumaier-compensated sum; keeps probability vectors summing to 1 within
/// a few ulps even for a few hundred entries.
pub(crate) fn stable_sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut comp = T::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp = comp + ((sum - t) + v);
        } else {
            comp = comp + ((v - t) + sum);
        }
        sum = t;
    }
    sum + comp
}

/// Index drawn from a probability vector by inverse-CDF with a single
/// uniform draw `u` in [0, 1). Entries need not sum exactly to one; the
/// last index with positive mass absorbs any rounding slack.
pub(crate) fn sample_index<T: Scalar>(probs: &[T], u: f64) -> usize {
    let total: f64 = probs.iter().map(|p| p.to_f64_lossy()).sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, p) in probs.iter().enumerate() {
        let p = p.to_f64_lossy();
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last_positive = i;
        if target < acc {
            return i;
        }
    }
    last_positive
}
