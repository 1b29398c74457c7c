//! Scalar abstraction shared by the likelihood, penalty, optimizer and
//! inference code.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the model can be evaluated in (`f32` or `f64`).
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn to_f64_lossy(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl<T> Scalar for T where
    T: Float
        + FromPrimitive
        + ToPrimitive
        + Sum
        + AddAssign
        + SubAssign
        + MulAssign
        + DivAssign
        + Debug
        + Display
        + Default
        + Send
        + Sync
        + 'static
{
}

/// `log(1 + exp(x))` without overflow.
#[inline]
pub fn softplus<S: Scalar>(x: S) -> S {
    if x > S::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `log(sum(exp(values)))`, returning `-inf` for an empty or all `-inf` slice.
pub fn log_sum_exp<S: Scalar>(values: &[S]) -> S {
    let max = values
        .iter()
        .copied()
        .fold(S::neg_infinity(), |a, b| if b > a { b } else { a });
    if max == S::neg_infinity() {
        return max;
    }
    let sum: S = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_is_stable_at_extremes() {
        assert_eq!(softplus(800.0_f64), 800.0);
        assert!(softplus(-800.0_f64) >= 0.0);
        assert!((softplus(0.0_f64) - 2f64.ln()).abs() < 1e-15);
        assert!(softplus(100.0_f32).is_finite());
    }

    #[test]
    fn log_sum_exp_handles_neg_infinity() {
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
        let v = log_sum_exp(&[f64::NEG_INFINITY, 0.0]);
        assert_eq!(v, 0.0);
        let v = log_sum_exp(&[1000.0, 1000.0]);
        assert!((v - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
