//! Per-stage backoff/deferral race.
//!
//! At a stage with window `W` and deferral initializer `M`, a node draws a
//! backoff `b` uniformly from `{0..=W}` and counts it down one slot at a time
//! while every slot is independently busy with probability `p_b`. Busy slots
//! consume the deferral counter; the `(M+1)`-th busy slot before the backoff
//! expires makes the node defer. Two quantities drive the analytic model:
//!
//! * the probability that the stage ends in a defer, and
//! * the expected number of slots spent at the stage (the deferring slot is
//!   counted, the transmission slot is not).
//!
//! Binomial weights are combined in log space so that `W = 63, M = 15` stays
//! well inside floating-point range across all of `p_b ∈ [0, 1]`.

mod oracle;
mod table;

pub use oracle::{mc_oracle, OracleEstimate};
pub use table::{build_table, KernelTable, DEFAULT_STEP};

use crate::error::{Error, Result};
use crate::mac::{Deferral, Stage};
use crate::scalar::{ln_pow, LnFactorials, Scalar};

/// Kernel outputs for one stage at one overhearing probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageValues<T> {
    pub p_defer: T,
    pub slots: T,
}

fn check_domain<T: Scalar>(window: u32, deferral: u32, p_b: T) -> Result<()> {
    if !(p_b >= T::zero() && p_b <= T::one()) {
        return Err(Error::Domain(format!(
            "overhearing probability {p_b} outside [0, 1]"
        )));
    }
    if deferral > window {
        return Err(Error::Domain(format!(
            "deferral initializer {deferral} exceeds window {window}"
        )));
    }
    Ok(())
}

/// Evaluates both double sums in a single pass.
pub fn stage_values_exact<T: Scalar>(window: u32, deferral: u32, p_b: T) -> Result<StageValues<T>> {
    check_domain(window, deferral, p_b)?;
    let (w, m) = (window, deferral);
    let lf = LnFactorials::<T>::new(w + m + 1);
    let ln_busy = p_b.ln();
    let ln_idle = (T::one() - p_b).ln();
    let ln_busy_m1 = ln_pow(p_b, m + 1);

    let mut defer = T::zero();
    let mut slots = T::from_count(u64::from(m) * u64::from(m + 1)) / T::lit(2.0);

    for k in 1..=(w - m) {
        // Defer on the (M+1)-th busy slot after l idle slots, l < k.
        for l in 0..k {
            let ln_term = lf.ln_choose(m + l, l) + mul_ln(l, ln_idle) + ln_busy_m1;
            let term = ln_term.exp();
            defer = defer + term;
            slots = slots + term * T::from_count(u64::from(l + m + 1));
        }
        // Backoff b = k + M expires after k + l idle and M - l busy slots.
        let elapsed = T::from_count(u64::from(k + m));
        for l in 0..=m {
            let ln_term =
                lf.ln_choose(m + k, k + l) + mul_ln(k + l, ln_idle) + mul_ln(m - l, ln_busy);
            slots = slots + ln_term.exp() * elapsed;
        }
    }

    let norm = T::from_count(u64::from(w) + 1);
    Ok(StageValues {
        p_defer: clamp(defer / norm, T::zero(), T::one()),
        slots: clamp(slots / norm, T::zero(), T::from_count(u64::from(w))),
    })
}

/// Same quantities as [`stage_values_exact`], from the distribution of the
/// defer time instead of the double sums.
///
/// With backoff `b` uniform on `0..=W` and `T` the slot holding the
/// `(M+1)`-th busy slot, the node defers iff `T <= b` and waits `min(b, T)`
/// slots, so both values only need `P(Bin(t, p_b) <= M)` for `t < W`, which a
/// truncated pmf recursion gives in `O(W M)`.
pub fn stage_values_by_cdf<T: Scalar>(window: u32, deferral: u32, p_b: T) -> Result<StageValues<T>> {
    check_domain(window, deferral, p_b)?;
    let (w, m) = (window as usize, deferral as usize);
    let q = T::one() - p_b;
    let mut pmf = vec![T::zero(); m + 1];
    pmf[0] = T::one();
    // cdf = P(T > t) = P(at most M busy slots among the first t).
    let mut cdf = T::one();
    let mut survive = T::zero();
    let mut slots = T::zero();
    for t in 0..w {
        // P(b > t) = (W - t) / (W + 1); the 1/(W+1) is applied at the end.
        let tail = T::from_count((w - t) as u64);
        slots = slots + tail * cdf;
        for k in (1..=m).rev() {
            pmf[k] = pmf[k] * q + pmf[k - 1] * p_b;
        }
        pmf[0] = pmf[0] * q;
        cdf = pmf.iter().fold(T::zero(), |a, &x| a + x);
        // T > t + 1 for b = t + 1.
        survive = survive + cdf;
    }
    let norm = T::from_count(w as u64 + 1);
    // b = 0 never defers; b = t + 1 defers with 1 - P(T > t + 1).
    let defer = (T::from_count(w as u64) - survive) / norm;
    Ok(StageValues {
        p_defer: clamp(defer, T::zero(), T::one()),
        slots: clamp(slots / norm, T::zero(), T::from_count(w as u64)),
    })
}

#[inline]
fn mul_ln<T: Scalar>(k: u32, ln_x: T) -> T {
    if k == 0 {
        T::zero()
    } else {
        T::from_count(u64::from(k)) * ln_x
    }
}

fn clamp<T: Scalar>(x: T, lo: T, hi: T) -> T {
    x.max(lo).min(hi)
}

/// Probability that the deferral counter runs out before the backoff expires.
pub fn p_defer_exact<T: Scalar>(window: u32, deferral: u32, p_b: T) -> Result<T> {
    check_domain(window, deferral, p_b)?;
    let (w, m) = (window, deferral);
    let lf = LnFactorials::<T>::new(w + m + 1);
    let ln_idle = (T::one() - p_b).ln();
    let ln_busy_m1 = ln_pow(p_b, m + 1);
    let mut sum = T::zero();
    for k in 1..=(w - m) {
        for l in 0..k {
            sum = sum + (lf.ln_choose(m + l, l) + mul_ln(l, ln_idle) + ln_busy_m1).exp();
        }
    }
    Ok(clamp(sum / T::from_count(u64::from(w) + 1), T::zero(), T::one()))
}

/// Expected number of slots spent waiting at the stage.
pub fn expected_slots_exact<T: Scalar>(window: u32, deferral: u32, p_b: T) -> Result<T> {
    Ok(stage_values_exact(window, deferral, p_b)?.slots)
}

/// Defer probability when backoff and deferral countdowns are both replaced by
/// exponential clocks with rates `2/W` and `p_b/(M+1)`.
pub fn p_defer_exp_approx<T: Scalar>(window: u32, deferral: u32, p_b: T) -> Result<T> {
    if window == 0 {
        return Err(Error::Domain("window 0 has no backoff rate".into()));
    }
    if !(p_b >= T::zero() && p_b <= T::one()) {
        return Err(Error::Domain(format!(
            "overhearing probability {p_b} outside [0, 1]"
        )));
    }
    if p_b == T::zero() {
        return Ok(T::zero());
    }
    let beta = T::lit(2.0) / T::from_count(u64::from(window));
    let gamma = p_b / T::from_count(u64::from(deferral) + 1);
    Ok(gamma / (beta + gamma))
}

/// Kernel values for a stage that never defers.
pub fn no_deferral_values<T: Scalar>(window: u32) -> StageValues<T> {
    StageValues {
        p_defer: T::zero(),
        slots: (T::from_count(u64::from(window)) + T::one()) / T::lit(2.0),
    }
}

/// Exact kernel for a schedule stage, bypassing the sums for `M = ∞`.
pub fn stage_values<T: Scalar>(stage: Stage, p_b: T) -> Result<StageValues<T>> {
    match stage.deferral {
        Deferral::Finite(m) => stage_values_exact(stage.window, m, p_b),
        Deferral::Infinite => {
            if !(p_b >= T::zero() && p_b <= T::one()) {
                return Err(Error::Domain(format!(
                    "overhearing probability {p_b} outside [0, 1]"
                )));
            }
            Ok(no_deferral_values(stage.window))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // Frozen from an exact rational evaluation of both double sums.
    const FROZEN: &[(u32, u32, f64, f64, f64)] = &[
        (7, 0, 0.5, 0.7509765625, 1.501953125),
        (15, 3, 0.6, 0.583445449875456, 4.93076836521984),
        (15, 1, 0.3, 0.5894656002836763, 4.606082065568477),
        (63, 15, 0.5, 0.5000005296315405, 23.500001457057223),
        (31, 15, 0.9, 0.4444444444933934, 12.5308641975906),
        (63, 15, 1.0, 0.75, 13.875),
        (15, 15, 1.0, 0.0, 7.5),
        (31, 15, 1.0, 0.5, 11.75),
    ];

    #[test]
    fn matches_rational_evaluation() {
        for &(w, m, pb, defer, slots) in FROZEN {
            let v = stage_values_exact(w, m, pb).unwrap();
            assert_relative_eq!(v.p_defer, defer, max_relative = 1e-11, epsilon = 1e-14);
            assert_relative_eq!(v.slots, slots, max_relative = 1e-11);
            assert_relative_eq!(p_defer_exact(w, m, pb).unwrap(), defer, max_relative = 1e-11, epsilon = 1e-14);
        }
    }

    #[test]
    fn closed_form_for_zero_deferral() {
        // (1/(W+1)) Σ_{k=1..W} (1 - (1-p)^k)
        let p = 0.5f64;
        let closed: f64 = (1..=7).map(|k| 1.0 - (1.0 - p).powi(k)).sum::<f64>() / 8.0;
        assert!((p_defer_exact(7, 0, p).unwrap() - closed).abs() < 1e-15);
        assert!((p_defer_exact(7, 0, p).unwrap() - 0.75097656).abs() < 1e-8);
    }

    #[test]
    fn endpoints() {
        for m in 0..=7 {
            assert_eq!(p_defer_exact(7, m, 0.0f64).unwrap(), 0.0);
            assert_relative_eq!(expected_slots_exact(7, m, 0.0f64).unwrap(), 3.5, max_relative = 1e-14);
        }
        assert_relative_eq!(expected_slots_exact(7, 0, 1.0f64).unwrap(), 0.875, max_relative = 1e-14);
    }

    #[test]
    fn domain_errors() {
        assert!(matches!(p_defer_exact(7, 0, 1.5f64), Err(Error::Domain(_))));
        assert!(matches!(p_defer_exact(7, 0, -0.1f64), Err(Error::Domain(_))));
        assert!(matches!(expected_slots_exact(3, 4, 0.5f64), Err(Error::Domain(_))));
        assert!(matches!(p_defer_exp_approx(0, 0, 0.5f64), Err(Error::Domain(_))));
        assert!(p_defer_exact(7, 0, f64::NAN).is_err());
    }

    #[test]
    fn exponential_approximation() {
        assert_relative_eq!(p_defer_exp_approx(7, 0, 0.5f64).unwrap(), 0.5 / (0.5 + 2.0 / 7.0));
        assert!((p_defer_exp_approx(7, 0, 0.5f64).unwrap() - 0.636_363_6).abs() < 1e-6);
        assert!((p_defer_exp_approx(15, 3, 0.5f64).unwrap() - 0.483_870_9).abs() < 1e-6);
        assert_eq!(p_defer_exp_approx(31, 15, 0.0f64).unwrap(), 0.0);
    }

    #[test]
    fn approximation_error_grows_with_deferral_initializer() {
        let err = |w, m| {
            (p_defer_exp_approx(w, m, 0.5f64).unwrap() - p_defer_exact(w, m, 0.5f64).unwrap()).abs()
        };
        assert!(err(31, 15) > err(7, 0));
    }

    #[test]
    fn largest_preset_stage_is_finite_everywhere() {
        for j in 0..=1000 {
            let pb = j as f64 / 1000.0;
            let v = stage_values_exact(63, 15, pb).unwrap();
            assert!(v.p_defer.is_finite() && (0.0..=1.0).contains(&v.p_defer));
            assert!(v.slots.is_finite() && (0.0..=63.0).contains(&v.slots));
        }
    }

    #[test]
    fn single_precision_tracks_double() {
        let a = stage_values_exact(31, 15, 0.3f32).unwrap();
        let b = stage_values_exact(31, 15, 0.3f64).unwrap();
        assert!((a.p_defer as f64 - b.p_defer).abs() < 1e-4);
        assert!((a.slots as f64 - b.slots).abs() < 1e-3);
    }

    #[test]
    fn infinite_deferral_bypasses_sums() {
        let s = Stage { window: 15, deferral: Deferral::Infinite };
        let v = stage_values(s, 0.7f64).unwrap();
        assert_eq!(v.p_defer, 0.0);
        assert_eq!(v.slots, 8.0);
    }

    proptest! {
        #[test]
        fn bounded(w in 0u32..64, m_frac in 0.0f64..=1.0, pb in 0.0f64..=1.0) {
            let m = (m_frac * w as f64).floor() as u32;
            let v = stage_values_exact(w, m, pb).unwrap();
            prop_assert!((0.0..=1.0).contains(&v.p_defer));
            prop_assert!(v.slots >= 0.0 && v.slots <= w as f64);
            prop_assert!((v.p_defer - p_defer_exact(w, m, pb).unwrap()).abs() < 1e-12);
        }

        #[test]
        fn defer_probability_monotone(w in 1u32..64, m_frac in 0.0f64..=1.0, a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let m = (m_frac * w as f64).floor() as u32;
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let d_lo = p_defer_exact(w, m, lo).unwrap();
            let d_hi = p_defer_exact(w, m, hi).unwrap();
            prop_assert!(d_lo <= d_hi + 1e-12);
        }

        #[test]
        fn binomial_tail_agrees_with_double_sums(w in 0u32..64, m_frac in 0.0f64..=1.0, pb in 0.0f64..=1.0) {
            let m = (m_frac * w as f64).floor() as u32;
            let a = stage_values_exact(w, m, pb).unwrap();
            let b = stage_values_by_cdf(w, m, pb).unwrap();
            prop_assert!((a.p_defer - b.p_defer).abs() < 1e-12, "{a:?} {b:?}");
            prop_assert!((a.slots - b.slots).abs() < 1e-10 * (1.0 + w as f64), "{a:?} {b:?}");
        }

        #[test]
        fn idle_channel_mean_is_half_window(w in 0u32..64, m_frac in 0.0f64..=1.0) {
            let m = (m_frac * w as f64).floor() as u32;
            prop_assert_eq!(p_defer_exact(w, m, 0.0).unwrap(), 0.0);
            let s = expected_slots_exact(w, m, 0.0).unwrap();
            prop_assert!((s - w as f64 / 2.0).abs() < 1e-12 * (1.0 + w as f64));
        }
    }
}
