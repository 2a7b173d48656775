use crate::error::Result;
use crate::mac::Scenario;

use super::{run_sim, SimStats};

/// Single change-point detector on a per-interval series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionDetector {
    /// Minimum normalized mean difference, in pooled standard deviations.
    pub threshold: f64,
    /// Minimum number of intervals on each side of a split.
    pub min_segment: usize,
}

impl Default for TransitionDetector {
    fn default() -> Self {
        TransitionDetector {
            threshold: 3.0,
            min_segment: 5,
        }
    }
}

/// A detected change point: `index` is the first interval of the second segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub index: usize,
    pub score: f64,
    pub mean_before: f64,
    pub mean_after: f64,
}

impl TransitionDetector {
    pub fn detect(&self, series: &[f64]) -> Option<Transition> {
        let n = series.len();
        let min_seg = self.min_segment.max(1);
        if n < 2 * min_seg {
            return None;
        }
        // Prefix sums make each split O(1).
        let mut sum = vec![0.0; n + 1];
        let mut sum_sq = vec![0.0; n + 1];
        for (i, &x) in series.iter().enumerate() {
            sum[i + 1] = sum[i] + x;
            sum_sq[i + 1] = sum_sq[i] + x * x;
        }
        let mut best: Option<Transition> = None;
        for k in min_seg..=n - min_seg {
            let (na, nb) = (k as f64, (n - k) as f64);
            let mean_a = sum[k] / na;
            let mean_b = (sum[n] - sum[k]) / nb;
            let ss_a = (sum_sq[k] - na * mean_a * mean_a).max(0.0);
            let ss_b = (sum_sq[n] - sum_sq[k] - nb * mean_b * mean_b).max(0.0);
            let dof = (na + nb - 2.0).max(1.0);
            let pooled = ((ss_a + ss_b) / dof).sqrt();
            let diff = (mean_a - mean_b).abs();
            // Rounding leaves residue in the sums of a flat series.
            let scale = mean_a.abs().max(mean_b.abs()).max(f64::MIN_POSITIVE);
            if diff <= 1e-12 * scale {
                continue;
            }
            let score = if pooled <= 1e-12 * scale {
                f64::INFINITY
            } else {
                diff / pooled
            };
            if best.map_or(true, |b| score > b.score) {
                best = Some(Transition {
                    index: k,
                    score,
                    mean_before: mean_a,
                    mean_after: mean_b,
                });
            }
        }
        best.filter(|b| b.score > self.threshold)
    }
}

/// [`TransitionDetector::detect`] with default settings, returning the index.
pub fn detect_transition(series: &[f64]) -> Option<usize> {
    TransitionDetector::default().detect(series).map(|t| t.index)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransitoryProbe {
    pub stats: SimStats,
    pub transition: Option<Transition>,
    /// Start of the first post-transition interval, s.
    pub transition_time_s: Option<f64>,
    /// First interval whose maximum queue sits at the cap.
    pub first_full_index: Option<usize>,
}

impl TransitoryProbe {
    /// Every interval from `index` on has its largest queue at the cap.
    pub fn pinned_at_cap_from(&self, index: usize, cap: u32) -> bool {
        self.stats.intervals[index..].iter().all(|i| i.qmax >= cap)
    }

    /// First interval from which the largest queue stays at the cap until the
    /// end of the run. While the last nodes are still filling, a full node
    /// that just delivered can briefly leave `qmax` one or two below the cap,
    /// so this can come later than `first_full_index`.
    pub fn pinned_index(&self, cap: u32) -> Option<usize> {
        let intervals = &self.stats.intervals;
        let k = intervals.iter().rposition(|i| i.qmax < cap).map_or(0, |k| k + 1);
        (k < intervals.len()).then_some(k)
    }
}

/// Empty-start run without warmup, followed by change-point detection on the
/// interval throughput.
pub fn run_transitory_probe(
    scenario: &Scenario<f64>,
    duration_s: f64,
    seed: u64,
    detector: &TransitionDetector,
) -> Result<TransitoryProbe> {
    let stats = run_sim(scenario, duration_s, 0.0, seed)?;
    let transition = detector.detect(&stats.throughput_series());
    let cap = scenario.queue_cap;
    let first_full_index = stats.intervals.iter().position(|i| i.qmax >= cap);
    Ok(TransitoryProbe {
        transition_time_s: transition.map(|t| stats.intervals[t.index].time_s),
        transition,
        first_full_index,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mac::Category;
    use crate::solver::{mu_sat, SolverSettings};

    #[test]
    fn exact_step() {
        let mut s = vec![1.0; 10];
        s.extend(vec![0.5; 10]);
        assert_eq!(detect_transition(&s), Some(10));
    }

    #[test]
    fn flat_and_short_series() {
        assert_eq!(detect_transition(&[2.5; 40]), None);
        assert_eq!(detect_transition(&[1.0]), None);
        assert_eq!(detect_transition(&[1.0, 1.0, 1.0, 0.0, 0.0, 0.0]), None);
    }

    #[test]
    fn noisy_step_is_located() {
        let s: Vec<f64> = (0..60)
            .map(|i| {
                let wobble = if i % 2 == 0 { 0.05 } else { -0.05 };
                if i < 37 {
                    3.0 + wobble
                } else {
                    2.4 + wobble
                }
            })
            .collect();
        let t = TransitionDetector::default().detect(&s).unwrap();
        assert_eq!(t.index, 37);
        assert!(t.mean_before > t.mean_after);
    }

    #[test]
    fn threshold_controls_sensitivity() {
        let s: Vec<f64> = (0..40).map(|i| if i % 3 == 0 { 1.2 } else { 1.0 } + if i >= 20 { 0.05 } else { 0.0 }).collect();
        assert!(TransitionDetector::default().detect(&s).is_none());
        let loose = TransitionDetector {
            threshold: 0.1,
            min_segment: 5,
        };
        assert!(loose.detect(&s).is_some());
    }

    #[test]
    fn deep_saturation_fills_queues_early() {
        let base = Scenario::saturated(10, Category::Ca32);
        let mu = mu_sat(&base, &SolverSettings::default()).unwrap();
        let sc = base.with_rate(3.0 * mu).with_queue_cap(100);
        let probe = run_transitory_probe(&sc, 100.0, 4, &TransitionDetector::default()).unwrap();
        let first = probe.first_full_index.expect("queues never filled");
        assert!(first < 10, "{first}");
    }

    #[test]
    fn stable_load_has_no_transition() {
        let base = Scenario::saturated(10, Category::Ca32);
        let mu = mu_sat(&base, &SolverSettings::default()).unwrap();
        let probe = run_transitory_probe(&base.with_rate(0.5 * mu), 120.0, 9, &TransitionDetector::default()).unwrap();
        assert!(probe.transition.is_none());
        assert!(probe.first_full_index.is_none());
        assert!(probe.stats.totals.iter().all(|t| t.dropped == 0));
    }
}
