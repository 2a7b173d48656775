//! Renewal-reward fixed point for the per-node attempt rate.
//!
//! One sweep of the map takes an attempt rate `tau` and recomputes, in order:
//! collision/overhearing probability, per-stage kernel values, expected
//! backoff slots, attempts per frame, mean slot duration, service time, queue
//! occupancy, idle slots and finally the next attempt rate. The iteration is
//! damped and declared converged on the attempt-rate residual alone.
//!
//! In the unsaturated regime the map can have two attracting fixed points just
//! above the stability limit. Which one is reached depends on the initial idle
//! guess, so the solver exposes that guess instead of hiding it.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::kernel::{self, KernelTable, StageValues};
use crate::mac::{Arrivals, Deferral, PhyTimings, Scenario, StageSchedule};
use crate::scalar::Scalar;

const US_PER_S: f64 = 1e6;
/// Last-stage failure probability treated as certain failure.
const DIVERGENCE_GUARD: f64 = 1e-12;
/// Halvings of tau allowed when an iterate lands in the divergent region.
const MAX_BACKOFFS: usize = 64;

/// How per-stage defer probabilities and waiting slots are evaluated.
#[derive(Debug, Clone)]
pub enum KernelMode<T> {
    /// Direct evaluation of both double sums.
    Exact,
    /// Linear interpolation in a precomputed table.
    Table(Arc<KernelTable<T>>),
    /// Exponential-race defer probability; waiting slots stay exact (evaluated
    /// through the binomial tail, which is cheaper than the double sum).
    ExpApprox,
}

impl<T: Scalar> KernelMode<T> {
    pub fn label(&self) -> &'static str {
        match self {
            KernelMode::Exact => "exact",
            KernelMode::Table(_) => "table",
            KernelMode::ExpApprox => "exp",
        }
    }

    /// Builds a table for `schedule` at the given grid step.
    pub fn table(schedule: &StageSchedule, step: T) -> Result<Self> {
        Ok(KernelMode::Table(Arc::new(KernelTable::build(schedule, step)?)))
    }

    pub fn stage_values(&self, schedule: &StageSchedule, stage: usize, p_b: T) -> Result<StageValues<T>> {
        let s = schedule.stage(stage);
        match self {
            KernelMode::Exact => kernel::stage_values(s, p_b),
            KernelMode::Table(table) => {
                if !table.covers(schedule) {
                    return Err(Error::Config(
                        "kernel table was built for a different schedule".into(),
                    ));
                }
                table.lookup(stage, p_b)
            }
            KernelMode::ExpApprox => match s.deferral {
                Deferral::Infinite => kernel::stage_values(s, p_b),
                Deferral::Finite(m) => Ok(StageValues {
                    p_defer: kernel::p_defer_exp_approx(s.window, m, p_b)?,
                    slots: kernel::stage_values_by_cdf(s.window, m, p_b)?.slots,
                }),
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolverSettings<T> {
    /// Idle slots assumed when seeding the first iterate.
    pub init_idle: T,
    /// Convergence threshold on `|tau_next - tau|`.
    pub tolerance: T,
    pub max_iterations: usize,
    /// Weight of the new iterate in `tau <- θ·tau_next + (1-θ)·tau`.
    pub damping: T,
    pub kernel: KernelMode<T>,
}

impl<T: Scalar> Default for SolverSettings<T> {
    fn default() -> Self {
        SolverSettings {
            init_idle: T::zero(),
            tolerance: T::lit(1e-9).max(T::epsilon() * T::lit(100.0)),
            max_iterations: 100_000,
            damping: T::lit(0.5),
            kernel: KernelMode::Exact,
        }
    }
}

impl<T: Scalar> SolverSettings<T> {
    pub fn with_init_idle(mut self, init_idle: T) -> Self {
        self.init_idle = init_idle;
        self
    }

    pub fn with_kernel(mut self, kernel: KernelMode<T>) -> Self {
        self.kernel = kernel;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tolerance > T::zero()) {
            return Err(Error::Config("tolerance must be > 0".into()));
        }
        if !(self.damping > T::zero() && self.damping <= T::one()) {
            return Err(Error::Config("damping must lie in (0, 1]".into()));
        }
        if !(self.init_idle >= T::zero()) {
            return Err(Error::Config("initial idle slots must be >= 0".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::Config("max_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Probabilities that a slot seen by a backlogged node is a success, empty or
/// a collision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotProbabilities<T> {
    pub success: T,
    pub empty: T,
    pub collision: T,
}

pub fn slot_probabilities<T: Scalar>(tau: T, n: u32) -> SlotProbabilities<T> {
    if n <= 1 {
        return SlotProbabilities {
            success: T::zero(),
            empty: T::one(),
            collision: T::zero(),
        };
    }
    let others = (n - 1) as i32;
    let idle = T::one() - tau;
    let success = T::from_count(u64::from(n - 1)) * tau * idle.powi(others - 1);
    let empty = idle.powi(others);
    let collision = (T::one() - success - empty).max(T::zero());
    SlotProbabilities {
        success,
        empty,
        collision,
    }
}

/// Probability that at least one of the other `n - 1` nodes transmits.
pub fn collision_prob<T: Scalar>(tau: T, n: u32) -> T {
    if n <= 1 {
        return T::zero();
    }
    T::one() - (T::one() - tau).powi((n - 1) as i32)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageBreakdown<T> {
    pub slots: T,
    pub p_defer: T,
    pub p_fail: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackoffSummary<T> {
    /// Expected backoff slots over all stages until success.
    pub mean_slots: T,
    pub stages: Vec<StageBreakdown<T>>,
}

/// Expected backoff slots per packet, weighting each stage by the
/// probability of failing every earlier stage; the last stage repeats until
/// success.
pub fn mean_backoff_slots<T: Scalar>(
    schedule: &StageSchedule,
    p: T,
    p_b: T,
    kernel: &KernelMode<T>,
) -> Result<BackoffSummary<T>> {
    let m = schedule.m();
    let mut stages = Vec::with_capacity(m);
    for i in 1..=m {
        let v = kernel.stage_values(schedule, i, p_b)?;
        let p_bo = T::one() - v.p_defer;
        stages.push(StageBreakdown {
            slots: v.slots,
            p_defer: v.p_defer,
            p_fail: p * p_bo + v.p_defer,
        });
    }

    let last = stages[m - 1];
    if last.p_fail >= T::one() - T::lit(DIVERGENCE_GUARD) {
        return Err(Error::Divergence {
            p_fail: last.p_fail.as_f64(),
        });
    }

    let mut reach = T::one();
    let mut mean = T::zero();
    for (idx, st) in stages.iter().enumerate() {
        if idx + 1 < m {
            mean = mean + st.slots * reach;
            reach = reach * st.p_fail;
        } else {
            mean = mean + st.slots * reach / (T::one() - st.p_fail);
        }
    }
    Ok(BackoffSummary {
        mean_slots: mean,
        stages,
    })
}

/// Head-of-line to delivery time: backoff slots, failed attempts, success.
pub fn service_time<T: Scalar>(mean_slots: T, alpha: T, n_t: T, t_s: T, t_c: T) -> T {
    mean_slots * alpha + (n_t - T::one()) * t_c + t_s
}

/// Converged model outputs for one scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionPoint<T> {
    /// Attempt rate per slot.
    pub tau: T,
    /// Conditional collision probability.
    pub p: T,
    /// Overhearing probability while in backoff.
    pub p_b: T,
    /// Probability the queue is non-empty.
    pub rho: T,
    /// Mean idle slots per renewal cycle.
    pub idle: T,
    /// Mean backoff slots per packet.
    pub ew: T,
    /// Mean attempts per packet.
    pub n_t: T,
    /// Mean slot duration during backoff, µs.
    pub alpha: T,
    /// Service time, µs.
    pub x: T,
    /// Per-node throughput, bits/µs (= Mbps).
    pub s: T,
    pub stages: Vec<StageBreakdown<T>>,
    pub converged: bool,
    pub iterations: usize,
    pub residual: T,
}

impl<T: Scalar> SolutionPoint<T> {
    /// Throughput summed over `n` nodes, Mbps.
    pub fn aggregate_throughput(&self, n: u32) -> T {
        self.s * T::from_count(u64::from(n))
    }

    /// `1 / X` in packets per second.
    pub fn service_rate(&self) -> T {
        T::lit(US_PER_S) / self.x
    }

    fn close_to(&self, other: &Self, tol: T) -> bool {
        let abs = |a: T, b: T| (a - b).abs() <= tol;
        let rel = |a: T, b: T| {
            let scale = a.abs().max(b.abs());
            (a - b).abs() <= tol * scale.max(T::min_positive_value()) || a == b
        };
        abs(self.tau, other.tau)
            && abs(self.p, other.p)
            && abs(self.p_b, other.p_b)
            && abs(self.rho, other.rho)
            && rel(self.ew, other.ew)
            && rel(self.n_t, other.n_t)
            && rel(self.alpha, other.alpha)
            && rel(self.x, other.x)
            && rel(self.s, other.s)
            && (rel(self.idle, other.idle) || abs(self.idle, other.idle))
    }
}

#[derive(Debug, Clone, Copy)]
enum Load<T> {
    Saturated,
    /// Packets per µs.
    PerMicro(T),
}

struct Model<'a, T> {
    n: u32,
    schedule: &'a StageSchedule,
    timings: &'a PhyTimings<T>,
    t_s: T,
    t_c: T,
    kernel: &'a KernelMode<T>,
    load: Load<T>,
}

/// Every quantity derived from one attempt rate.
#[derive(Debug, Clone)]
struct Sweep<T> {
    tau: T,
    p: T,
    backoff: BackoffSummary<T>,
    n_t: T,
    alpha: T,
    x: T,
    rho: T,
    idle: T,
    next_tau: T,
}

impl<'a, T: Scalar> Model<'a, T> {
    fn new(scenario: &'a Scenario<T>, kernel: &'a KernelMode<T>, load: Load<T>) -> Self {
        let (t_s, t_c) = scenario.timings.frame_durations();
        Model {
            n: scenario.n,
            schedule: &scenario.schedule,
            timings: &scenario.timings,
            t_s,
            t_c,
            kernel,
            load,
        }
    }

    fn sweep(&self, tau: T, idle_override: Option<T>) -> Result<Sweep<T>> {
        let p = collision_prob(tau, self.n);
        // Homogeneous nodes: overhearing and collision probabilities coincide.
        let p_b = p;
        let backoff = mean_backoff_slots(self.schedule, p, p_b, self.kernel)?;
        let n_t = T::one() / (T::one() - p);
        let probs = slot_probabilities(tau, self.n);
        let alpha =
            probs.success * self.t_s + probs.collision * self.t_c + probs.empty * self.timings.sigma;
        let x = service_time(backoff.mean_slots, alpha, n_t, self.t_s, self.t_c);
        let (rho, idle) = match self.load {
            Load::Saturated => (T::one(), T::zero()),
            Load::PerMicro(lambda) => {
                let rho = (lambda * x).min(T::one());
                let arrival_in_slot = -(-(lambda * alpha)).exp_m1();
                let idle = ((T::one() - rho) / arrival_in_slot).max(T::zero());
                (rho, idle)
            }
        };
        let idle = idle_override.unwrap_or(idle);
        let next_tau = n_t / (backoff.mean_slots + n_t + idle);
        Ok(Sweep {
            tau,
            p,
            backoff,
            n_t,
            alpha,
            x,
            rho,
            idle,
            next_tau,
        })
    }

    fn into_point(&self, sw: Sweep<T>, iterations: usize) -> SolutionPoint<T> {
        let residual = (sw.next_tau - sw.tau).abs();
        SolutionPoint {
            tau: sw.tau,
            p: sw.p,
            p_b: sw.p,
            rho: sw.rho,
            idle: sw.idle,
            ew: sw.backoff.mean_slots,
            n_t: sw.n_t,
            alpha: sw.alpha,
            x: sw.x,
            s: sw.rho * self.timings.payload_bits / sw.x,
            stages: sw.backoff.stages,
            converged: true,
            iterations,
            residual,
        }
    }

    fn solve(&self, settings: &SolverSettings<T>) -> Result<SolutionPoint<T>> {
        settings.validate()?;
        if let Load::PerMicro(l) = self.load {
            if l == T::zero() {
                let sw = self.sweep(T::zero(), None)?;
                return Ok(self.into_point(sw, 0));
            }
        }

        // Seed: an empty channel with the requested idle gap.
        let mut tau = self.sweep(T::zero(), Some(settings.init_idle))?.next_tau;
        let theta = settings.damping;
        let mut last_residual = T::infinity();
        let mut backoffs = 0;
        for it in 1..=settings.max_iterations {
            // An early iterate can put p so close to 1 that E[w] overflows
            // although the fixed point is finite; halving tau lowers p.
            let sw = match self.sweep(tau, None) {
                Err(Error::Divergence { .. }) if backoffs < MAX_BACKOFFS => {
                    backoffs += 1;
                    tau = tau / T::lit(2.0);
                    continue;
                }
                other => other?,
            };
            let residual = (sw.next_tau - tau).abs();
            last_residual = residual;
            if residual <= settings.tolerance {
                let damped = theta * sw.next_tau + (T::one() - theta) * tau;
                let polished = self.polish(sw, damped)?;
                return Ok(self.into_point(polished, it));
            }
            tau = theta * sw.next_tau + (T::one() - theta) * tau;
        }
        Err(Error::NonConvergence {
            iterations: settings.max_iterations,
            residual: last_residual.as_f64(),
            tau: tau.as_f64(),
        })
    }

    /// Secant refinement of `tau = F(tau)` from a converged iterate, keeping
    /// only steps that shrink the residual.
    fn polish(&self, best: Sweep<T>, other_tau: T) -> Result<Sweep<T>> {
        let g = |sw: &Sweep<T>| sw.next_tau - sw.tau;
        let floor = T::epsilon() * T::lit(4.0);
        let mut best = best;
        if g(&best).abs() <= floor || other_tau == best.tau {
            return Ok(best);
        }
        let mut prev = match self.sweep(other_tau, None) {
            Ok(sw) => sw,
            Err(_) => return Ok(best),
        };
        for _ in 0..32 {
            let (ga, gb) = (g(&prev), g(&best));
            if ga == gb {
                break;
            }
            let cand = best.tau - gb * (best.tau - prev.tau) / (gb - ga);
            if !(cand >= T::zero() && cand <= T::one()) {
                break;
            }
            let Ok(sw) = self.sweep(cand, None) else { break };
            if g(&sw).abs() >= gb.abs() {
                break;
            }
            prev = std::mem::replace(&mut best, sw);
            if g(&best).abs() <= floor {
                break;
            }
        }
        Ok(best)
    }
}

pub fn solve_saturated<T: Scalar>(scenario: &Scenario<T>, settings: &SolverSettings<T>) -> Result<SolutionPoint<T>> {
    scenario.validate()?;
    Model::new(scenario, &settings.kernel, Load::Saturated).solve(settings)
}

/// Solves with Poisson arrivals; a saturated scenario is solved as such.
pub fn solve_unsaturated<T: Scalar>(scenario: &Scenario<T>, settings: &SolverSettings<T>) -> Result<SolutionPoint<T>> {
    scenario.validate()?;
    let load = match scenario.arrivals {
        Arrivals::Saturated => Load::Saturated,
        Arrivals::Rate(l) => Load::PerMicro(l / T::lit(US_PER_S)),
    };
    Model::new(scenario, &settings.kernel, load).solve(settings)
}

/// Saturated service rate `1 / X_sat`, packets per second.
pub fn mu_sat<T: Scalar>(scenario: &Scenario<T>, settings: &SolverSettings<T>) -> Result<T> {
    Ok(solve_saturated(scenario, settings)?.service_rate())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stability {
    /// `λ < μ_sat`: queues stay bounded.
    Stable,
    /// `λ ≥ μ_sat`: all queues eventually grow; the long-term operating point
    /// is the lowest-throughput solution.
    Unstable,
}

impl Stability {
    pub fn label(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
        }
    }
}

/// Initial idle guesses for a lightly and a heavily loaded start.
pub const DEFAULT_INIT_IDLE: [f64; 2] = [0.0, 1000.0];

#[derive(Debug, Clone)]
pub struct Branch<T> {
    pub init_idle: T,
    pub outcome: Result<SolutionPoint<T>>,
    /// Index of an earlier branch this one coincides with.
    pub duplicate_of: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct SolutionSet<T> {
    pub mu_sat: T,
    pub stability: Stability,
    pub branches: Vec<Branch<T>>,
}

impl<T: Scalar> SolutionSet<T> {
    /// Converged, mutually distinct solutions in branch order.
    pub fn distinct(&self) -> impl Iterator<Item = (T, &SolutionPoint<T>)> {
        self.branches.iter().filter_map(|b| match (&b.outcome, b.duplicate_of) {
            (Ok(sol), None) => Some((b.init_idle, sol)),
            _ => None,
        })
    }

    pub fn distinct_count(&self) -> usize {
        self.distinct().count()
    }

    /// The lowest-throughput solution, which is the one the network settles
    /// into over the long run.
    pub fn long_term(&self) -> Option<&SolutionPoint<T>> {
        self.distinct()
            .map(|(_, s)| s)
            .min_by(|a, b| a.s.partial_cmp(&b.s).unwrap_or(std::cmp::Ordering::Equal))
    }
}

pub fn find_solutions<T: Scalar>(scenario: &Scenario<T>, settings: &SolverSettings<T>) -> Result<SolutionSet<T>> {
    let inits = DEFAULT_INIT_IDLE.map(T::lit);
    find_solutions_from(scenario, settings, &inits)
}

/// Solves once per initial idle guess and classifies stability against the
/// saturated service rate.
pub fn find_solutions_from<T: Scalar>(
    scenario: &Scenario<T>,
    settings: &SolverSettings<T>,
    inits: &[T],
) -> Result<SolutionSet<T>> {
    let Arrivals::Rate(lambda) = scenario.arrivals else {
        return Err(Error::Config("dual-solution search needs a finite arrival rate".into()));
    };
    if inits.is_empty() {
        return Err(Error::Config("no initial idle guesses given".into()));
    }
    let mu = mu_sat(scenario, settings)?;
    let stability = if lambda < mu {
        Stability::Stable
    } else {
        Stability::Unstable
    };
    let dedup_tol = settings.tolerance * T::lit(10.0);
    let mut branches: Vec<Branch<T>> = Vec::with_capacity(inits.len());
    for &init in inits {
        let s = settings.clone().with_init_idle(init);
        let outcome = solve_unsaturated(scenario, &s);
        let duplicate_of = match &outcome {
            Ok(sol) => branches.iter().position(|b| {
                b.duplicate_of.is_none()
                    && matches!(&b.outcome, Ok(o) if o.close_to(sol, dedup_tol))
            }),
            Err(_) => None,
        };
        branches.push(Branch {
            init_idle: init,
            outcome,
            duplicate_of,
        });
    }
    Ok(SolutionSet {
        mu_sat: mu,
        stability,
        branches,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mac::{Category, Variant};
    use approx::assert_relative_eq;

    #[test]
    fn slot_probability_cases() {
        assert_eq!(
            slot_probabilities(0.0f64, 7),
            SlotProbabilities { success: 0.0, empty: 1.0, collision: 0.0 }
        );
        let two = slot_probabilities(0.5f64, 2);
        assert_eq!((two.success, two.empty, two.collision), (0.5, 0.5, 0.0));
        let three = slot_probabilities(0.5f64, 3);
        assert_eq!((three.success, three.empty, three.collision), (0.5, 0.25, 0.25));
        let one = slot_probabilities(0.9f64, 1);
        assert_eq!(one.empty, 1.0);
    }

    #[test]
    fn collision_probability_cases() {
        assert_eq!(collision_prob(0.7f64, 1), 0.0);
        assert_eq!(collision_prob(1.0f64, 5), 1.0);
        assert_eq!(collision_prob(0.25f64, 2), 0.25);
    }

    #[test]
    fn service_time_cases() {
        assert_relative_eq!(service_time(3.5, 35.84, 1.0, 1359.02, 1359.02), 1484.46, max_relative = 1e-12);
        assert_eq!(service_time(0.0, 99.0, 1.0, 1359.02, 1359.02), 1359.02);
        assert_eq!(service_time(0.0, 99.0, 2.0, 100.0, 100.0), 200.0);
    }

    #[test]
    fn backoff_without_failures_stays_in_first_stage() {
        let sched = StageSchedule::preset(Category::Ca32);
        let b = mean_backoff_slots(&sched, 0.0f64, 0.0, &KernelMode::Exact).unwrap();
        assert_relative_eq!(b.mean_slots, 3.5, max_relative = 1e-14);
    }

    #[test]
    fn no_deferral_backoff_is_geometric_in_p() {
        let sched = StageSchedule::preset(Category::Ca10).with_variant(Variant::NoDeferral);
        let p = 0.37f64;
        let b = mean_backoff_slots(&sched, p, p, &KernelMode::Exact).unwrap();
        let w = [7.0, 15.0, 31.0, 63.0].map(|w: f64| (w + 1.0) / 2.0);
        let expected = w[0] + w[1] * p + w[2] * p * p + w[3] * p.powi(3) / (1.0 - p);
        assert_relative_eq!(b.mean_slots, expected, max_relative = 1e-14);
        assert!(b.stages.iter().all(|s| s.p_defer == 0.0 && s.p_fail == p));
    }

    #[test]
    fn certain_last_stage_failure_diverges() {
        let sched = StageSchedule::preset(Category::Ca32);
        assert!(matches!(
            mean_backoff_slots(&sched, 1.0f64, 1.0, &KernelMode::Exact),
            Err(Error::Divergence { .. })
        ));
    }

    #[test]
    fn single_node_closed_form() {
        for cat in Category::ALL {
            let sc = Scenario::<f64>::saturated(1, cat);
            let sol = solve_saturated(&sc, &SolverSettings::default()).unwrap();
            assert_relative_eq!(sol.tau, 1.0 / 4.5, max_relative = 1e-12);
            assert_relative_eq!(sol.x, 1484.46, max_relative = 1e-12);
            assert_relative_eq!(sol.s, 12000.0 / 1484.46, max_relative = 1e-12);
            assert_relative_eq!(sol.service_rate(), 673.65, max_relative = 1e-5);
            assert_eq!(sol.rho, 1.0);
        }
    }

    #[test]
    fn idle_solution_for_zero_rate() {
        let sc = Scenario::<f64>::saturated(10, Category::Ca32).with_rate(0.0);
        let sol = solve_unsaturated(&sc, &SolverSettings::default()).unwrap();
        assert_eq!((sol.rho, sol.s, sol.p, sol.tau), (0.0, 0.0, 0.0, 0.0));
        assert!(sol.converged);
    }

    #[test]
    fn near_zero_rate_is_nearly_idle() {
        let sc = Scenario::<f64>::saturated(10, Category::Ca32).with_rate(1e-6);
        let sol = solve_unsaturated(&sc, &SolverSettings::default()).unwrap();
        assert!(sol.rho < 1e-8 && sol.s < 1e-7 && sol.p < 1e-9);
    }

    #[test]
    fn saturated_performance_falls_with_n() {
        for cat in Category::ALL {
            let mut prev: Option<SolutionPoint<f64>> = None;
            for n in (5..=50).step_by(5) {
                let sol = solve_saturated(&Scenario::saturated(n, cat), &SolverSettings::default()).unwrap();
                if let Some(p) = &prev {
                    assert!(sol.aggregate_throughput(n) < p.aggregate_throughput(n - 5));
                    assert!(sol.x > p.x);
                }
                prev = Some(sol);
            }
        }
    }

    #[test]
    fn invalid_settings_are_rejected() {
        let sc = Scenario::<f64>::saturated(3, Category::Ca32);
        let mut s = SolverSettings::default();
        s.damping = 0.0;
        assert!(matches!(solve_saturated(&sc, &s), Err(Error::Config(_))));
        let mut s = SolverSettings::<f64>::default();
        s.tolerance = -1.0;
        assert!(solve_saturated(&sc, &s).is_err());
    }

    #[test]
    fn iteration_budget_exhaustion_reports_last_iterate() {
        let sc = Scenario::<f64>::saturated(20, Category::Ca32);
        let mut s = SolverSettings::default();
        s.max_iterations = 2;
        match solve_saturated(&sc, &s) {
            Err(Error::NonConvergence { iterations, tau, .. }) => {
                assert_eq!(iterations, 2);
                assert!(tau > 0.0 && tau < 1.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn table_kernel_must_match_schedule() {
        let sc = Scenario::<f64>::saturated(5, Category::Ca32);
        let other = StageSchedule::preset(Category::Ca10);
        let s = SolverSettings::default().with_kernel(KernelMode::table(&other, 0.01).unwrap());
        assert!(matches!(solve_saturated(&sc, &s), Err(Error::Config(_))));
    }

    #[test]
    fn single_precision_solver() {
        let sc = Scenario::<f32>::saturated(1, Category::Ca32);
        let sol = solve_saturated(&sc, &SolverSettings::default()).unwrap();
        assert!((sol.x - 1484.46).abs() < 1e-2);
        let sc = Scenario::<f32>::saturated(20, Category::Ca10);
        let a = solve_saturated(&sc, &SolverSettings::default()).unwrap();
        let b = solve_saturated(&sc.cast::<f64>(), &SolverSettings::default()).unwrap();
        assert!(((a.x as f64) / b.x - 1.0).abs() < 1e-4);
    }
}
