use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the analytic model is written against: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }

    fn from_count(k: u64) -> Self {
        Self::from_u64(k).expect("count representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `x^k` for a non-negative integer exponent with `0^0 = 1`, as a natural log.
pub(crate) fn ln_pow<T: Scalar>(x: T, k: u32) -> T {
    if k == 0 {
        T::zero()
    } else {
        T::from_count(k as u64) * x.ln()
    }
}

/// Table of `ln(k!)` for `k = 0..=max`.
#[derive(Debug, Clone)]
pub(crate) struct LnFactorials<T> {
    values: Vec<T>,
}

impl<T: Scalar> LnFactorials<T> {
    pub(crate) fn new(max: u32) -> Self {
        let mut values = Vec::with_capacity(max as usize + 1);
        let mut acc = 0.0f64;
        values.push(T::zero());
        for k in 1..=max {
            acc += (k as f64).ln();
            values.push(T::lit(acc));
        }
        LnFactorials { values }
    }

    /// `ln C(n, k)`; callers guarantee `k <= n <= max`.
    pub(crate) fn ln_choose(&self, n: u32, k: u32) -> T {
        debug_assert!(k <= n);
        self.values[n as usize] - self.values[k as usize] - self.values[(n - k) as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ln_choose_matches_small_binomials() {
        let lf = LnFactorials::<f64>::new(80);
        assert!((lf.ln_choose(5, 2).exp() - 10.0).abs() < 1e-12);
        assert!((lf.ln_choose(78, 39).exp() / 2.721_701_486_919_903e22 - 1.0).abs() < 1e-10);
        assert_eq!(lf.ln_choose(7, 0), 0.0);
    }

    #[test]
    fn zero_to_the_zero_is_one() {
        assert_eq!(ln_pow(0.0f64, 0).exp(), 1.0);
        assert_eq!(ln_pow(0.0f64, 3).exp(), 0.0);
        assert_eq!(ln_pow(1.0f32, 0), 0.0);
    }
}
