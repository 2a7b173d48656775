//! Slot-synchronous simulation of `n` homogeneous contending nodes.
//!
//! Each slot is idle (σ), a success (T_s) or a collision (T_c = T_s). Nodes
//! with a packet and `bc = 0` transmit; every other backlogged node reacts to
//! the slot through [`NodeState::observe`]. Arrivals are per-node Poisson
//! processes in continuous time, appended at the end of the slot they fall
//! in. Runs of idle slots are advanced in one step when no node can
//! transmit, no arrival is due and no interval boundary is crossed.
//!
//! Randomness: node `i` owns two ChaCha streams (backoff draws and arrival
//! times) derived from the master seed, so results are bit-reproducible and
//! adding nodes leaves the existing nodes' draws untouched.

mod node;
mod transition;

pub use node::{NodeState, Reaction};
pub use transition::{
    detect_transition, run_transitory_probe, Transition, TransitionDetector, TransitoryProbe,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mac::{Arrivals, Scenario, StageSchedule};

const US_PER_S: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlotKind {
    Idle,
    Success,
    Collision,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotOutcome {
    pub kind: SlotKind,
    /// µs
    pub duration: f64,
    pub transmitters: usize,
}

impl SlotOutcome {
    pub fn classify(transmitters: usize, sigma: f64, t_s: f64, t_c: f64) -> Self {
        let (kind, duration) = match transmitters {
            0 => (SlotKind::Idle, sigma),
            1 => (SlotKind::Success, t_s),
            _ => (SlotKind::Collision, t_c),
        };
        SlotOutcome {
            kind,
            duration,
            transmitters,
        }
    }
}

/// One 1-second measurement interval.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalStats {
    /// Interval start, s.
    pub time_s: f64,
    /// Aggregate delivered payload over the interval, Mbps.
    pub throughput_mbps: f64,
    /// Queue lengths across nodes, sampled at the end of the interval.
    pub qmin: u32,
    pub qavg: f64,
    pub qmax: u32,
}

/// Whole-run packet accounting for one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct NodeTotals {
    pub preload: u64,
    pub arrived: u64,
    pub dropped: u64,
    pub delivered: u64,
    pub queued: u64,
}

impl NodeTotals {
    /// Every preloaded or arrived packet was delivered, dropped or is queued.
    pub fn balanced(&self) -> bool {
        self.preload + self.arrived == self.delivered + self.dropped + self.queued
    }
}

/// Statistics of one simulation run. Rates and counts cover the measured
/// window `[warmup, duration)` unless stated otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct SimStats {
    pub sim_duration_s: f64,
    pub warmup_s: f64,
    /// Aggregate payload throughput, Mbps.
    pub long_run_throughput: f64,
    /// Mean head-of-line to delivery time, µs; `None` without deliveries.
    pub mean_service_time: Option<f64>,
    pub intervals: Vec<IntervalStats>,
    pub delivered_per_node: Vec<u64>,
    pub defer_events: u64,
    pub collision_slots: u64,
    /// Transmissions that took part in a collision.
    pub collided_attempts: u64,
    pub success_slots: u64,
    pub idle_slots: u64,
    /// Packet accounting over the whole run, warmup included.
    pub totals: Vec<NodeTotals>,
    /// Whether arrivals were saturated (queues not tracked).
    pub saturated: bool,
}

impl SimStats {
    pub fn measured_s(&self) -> f64 {
        self.sim_duration_s - self.warmup_s
    }

    pub fn total_slots(&self) -> u64 {
        self.idle_slots + self.success_slots + self.collision_slots
    }

    pub fn idle_fraction(&self) -> f64 {
        let total = self.total_slots();
        if total == 0 {
            0.0
        } else {
            self.idle_slots as f64 / total as f64
        }
    }

    /// Mean delivered packets per second per node.
    pub fn per_node_rate(&self) -> f64 {
        let delivered: u64 = self.delivered_per_node.iter().sum();
        delivered as f64 / self.delivered_per_node.len().max(1) as f64 / self.measured_s()
    }

    /// Fraction of transmissions that collided; `None` without any.
    pub fn collision_fraction(&self) -> Option<f64> {
        let attempts = self.collided_attempts + self.success_slots;
        (attempts > 0).then(|| self.collided_attempts as f64 / attempts as f64)
    }

    pub fn conserved(&self) -> bool {
        self.saturated || self.totals.iter().all(NodeTotals::balanced)
    }

    pub fn throughput_series(&self) -> Vec<f64> {
        self.intervals.iter().map(|i| i.throughput_mbps).collect()
    }
}

fn node_rng(seed: u64, node: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * node as u64 + stream);
    rng
}

fn exp_sample<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    // gen::<f64>() is in [0, 1), so 1 - u is in (0, 1].
    -(1.0 - rng.gen::<f64>()).ln() / rate
}

struct Node {
    state: NodeState,
    backoff_rng: ChaCha8Rng,
    arrival_rng: ChaCha8Rng,
    next_arrival: f64,
    totals: NodeTotals,
    delivered_in_window: u64,
}

impl Node {
    fn backlogged(&self, saturated: bool) -> bool {
        saturated || self.state.queue_len > 0
    }
}

struct Window {
    warmup_us: f64,
    end_us: f64,
}

impl Window {
    fn contains(&self, t: f64) -> bool {
        t >= self.warmup_us && t < self.end_us
    }
}

/// Runs the slot loop for `duration_s` simulated seconds; statistics start at
/// `warmup_s`.
pub fn run_sim(scenario: &Scenario<f64>, duration_s: f64, warmup_s: f64, seed: u64) -> Result<SimStats> {
    scenario.validate()?;
    if !(warmup_s >= 0.0 && duration_s > warmup_s && duration_s.is_finite()) {
        return Err(Error::Config(format!(
            "need duration > warmup >= 0 (got duration {duration_s}, warmup {warmup_s})"
        )));
    }
    Simulation::new(scenario, seed).run(duration_s, warmup_s)
}

struct Simulation<'a> {
    schedule: &'a StageSchedule,
    sigma: f64,
    t_s: f64,
    t_c: f64,
    payload_bits: f64,
    saturated: bool,
    /// Packets per µs.
    lambda: f64,
    queue_cap: u32,
    nodes: Vec<Node>,
    clock: f64,
}

impl<'a> Simulation<'a> {
    fn new(scenario: &'a Scenario<f64>, seed: u64) -> Self {
        let (t_s, t_c) = scenario.timings.frame_durations();
        let (saturated, lambda) = match scenario.arrivals {
            Arrivals::Saturated => (true, 0.0),
            Arrivals::Rate(l) => (false, l / US_PER_S),
        };
        let schedule = &scenario.schedule;
        let nodes = (0..scenario.n as usize)
            .map(|i| {
                let mut backoff_rng = node_rng(seed, i, 0);
                let mut arrival_rng = node_rng(seed, i, 1);
                let queue_len = if saturated {
                    scenario.queue_cap
                } else {
                    scenario.preload
                };
                let mut state = NodeState::idle(queue_len);
                if saturated || queue_len > 0 {
                    state.enter_stage(1, schedule, &mut backoff_rng);
                }
                let next_arrival = if lambda > 0.0 {
                    exp_sample(&mut arrival_rng, lambda)
                } else {
                    f64::INFINITY
                };
                Node {
                    state,
                    backoff_rng,
                    arrival_rng,
                    next_arrival,
                    totals: NodeTotals {
                        preload: if saturated { 0 } else { u64::from(scenario.preload) },
                        ..NodeTotals::default()
                    },
                    delivered_in_window: 0,
                }
            })
            .collect();
        Simulation {
            schedule,
            sigma: scenario.timings.sigma,
            t_s,
            t_c,
            payload_bits: scenario.timings.payload_bits,
            saturated,
            lambda,
            queue_cap: scenario.queue_cap,
            nodes,
            clock: 0.0,
        }
    }

    fn queue_snapshot(&self) -> (u32, f64, u32) {
        let mut qmin = u32::MAX;
        let mut qmax = 0;
        let mut sum = 0u64;
        for n in &self.nodes {
            let q = n.state.queue_len;
            qmin = qmin.min(q);
            qmax = qmax.max(q);
            sum += u64::from(q);
        }
        (qmin, sum as f64 / self.nodes.len() as f64, qmax)
    }

    /// Appends every arrival that happened before the current clock.
    fn admit_arrivals(&mut self) {
        if self.saturated || self.lambda <= 0.0 {
            return;
        }
        let clock = self.clock;
        for node in &mut self.nodes {
            while node.next_arrival < clock {
                node.totals.arrived += 1;
                if node.state.queue_len >= self.queue_cap {
                    node.totals.dropped += 1;
                } else {
                    node.state.queue_len += 1;
                    if node.state.queue_len == 1 {
                        node.state.enter_stage(1, self.schedule, &mut node.backoff_rng);
                        node.state.service_start = clock;
                    }
                }
                node.next_arrival += exp_sample(&mut node.arrival_rng, self.lambda);
            }
        }
    }

    fn run(mut self, duration_s: f64, warmup_s: f64) -> Result<SimStats> {
        let window = Window {
            warmup_us: warmup_s * US_PER_S,
            end_us: duration_s * US_PER_S,
        };
        let mut intervals = Vec::new();
        let mut next_boundary = US_PER_S;
        let mut interval_bits = 0.0;
        let mut window_bits = 0.0;
        let mut service_sum = 0.0;
        let mut service_count = 0u64;
        let (mut defers, mut collisions, mut successes, mut idles) = (0u64, 0u64, 0u64, 0u64);
        let mut collided_attempts = 0u64;
        let mut transmitters: Vec<usize> = Vec::new();
        let saturated = self.saturated;

        while self.clock < window.end_us {
            transmitters.clear();
            let mut min_bc = u32::MAX;
            for (i, n) in self.nodes.iter().enumerate() {
                if n.backlogged(saturated) {
                    if n.state.bc == 0 {
                        transmitters.push(i);
                    }
                    min_bc = min_bc.min(n.state.bc);
                }
            }

            let outcome = SlotOutcome::classify(transmitters.len(), self.sigma, self.t_s, self.t_c);
            // Idle slots can be batched up to the next transmission, arrival
            // or interval boundary.
            let batch = if outcome.kind == SlotKind::Idle {
                let mut k = u64::from(min_bc);
                let first_arrival = self
                    .nodes
                    .iter()
                    .map(|n| n.next_arrival)
                    .fold(f64::INFINITY, f64::min);
                if first_arrival.is_finite() {
                    k = k.min(((first_arrival - self.clock) / self.sigma).floor().max(0.0) as u64 + 1);
                }
                let to_boundary = ((next_boundary - self.clock) / self.sigma).ceil().max(1.0) as u64;
                k.min(to_boundary).max(1)
            } else {
                1
            };
            let end = self.clock + outcome.duration * batch as f64;

            while end >= next_boundary {
                let start = next_boundary - US_PER_S;
                if start >= window.warmup_us && next_boundary <= window.end_us {
                    let (qmin, qavg, qmax) = self.queue_snapshot();
                    intervals.push(IntervalStats {
                        time_s: start / US_PER_S,
                        throughput_mbps: interval_bits / US_PER_S,
                        qmin,
                        qavg,
                        qmax,
                    });
                }
                interval_bits = 0.0;
                next_boundary += US_PER_S;
            }
            let measured = window.contains(end);

            match outcome.kind {
                SlotKind::Idle => {
                    let k = batch as u32;
                    for n in self.nodes.iter_mut() {
                        if n.backlogged(saturated) {
                            n.state.bc -= k;
                        }
                    }
                    if measured {
                        idles += batch;
                    }
                }
                SlotKind::Success | SlotKind::Collision => {
                    let success = outcome.kind == SlotKind::Success;
                    for (i, n) in self.nodes.iter_mut().enumerate() {
                        if !n.backlogged(saturated) || transmitters.contains(&i) {
                            continue;
                        }
                        if n.state.observe(true, self.schedule, &mut n.backoff_rng) == Reaction::Deferred
                            && measured
                        {
                            defers += 1;
                        }
                    }
                    for &i in &transmitters {
                        let n = &mut self.nodes[i];
                        if !success {
                            n.state.fail(self.schedule, &mut n.backoff_rng);
                            continue;
                        }
                        n.totals.delivered += 1;
                        if measured {
                            n.delivered_in_window += 1;
                            window_bits += self.payload_bits;
                            interval_bits += self.payload_bits;
                            service_sum += end - n.state.service_start;
                            service_count += 1;
                        }
                        if !saturated {
                            n.state.queue_len -= 1;
                        }
                        n.state.service_start = end;
                        if saturated || n.state.queue_len > 0 {
                            n.state.enter_stage(1, self.schedule, &mut n.backoff_rng);
                        }
                    }
                    if measured {
                        if success {
                            successes += 1;
                        } else {
                            collisions += 1;
                            collided_attempts += transmitters.len() as u64;
                        }
                    }
                }
            }

            self.clock = end;
            self.admit_arrivals();
        }

        let totals = self
            .nodes
            .iter()
            .map(|n| NodeTotals {
                queued: if saturated { 0 } else { u64::from(n.state.queue_len) },
                ..n.totals
            })
            .collect();
        Ok(SimStats {
            sim_duration_s: duration_s,
            warmup_s,
            long_run_throughput: window_bits / (window.end_us - window.warmup_us),
            mean_service_time: (service_count > 0).then(|| service_sum / service_count as f64),
            intervals,
            delivered_per_node: self.nodes.iter().map(|n| n.delivered_in_window).collect(),
            defer_events: defers,
            collision_slots: collisions,
            collided_attempts,
            success_slots: successes,
            idle_slots: idles,
            totals,
            saturated,
        })
    }
}

/// Empirical stage race of one simulator node against Bernoulli(`p_b`) busy
/// slots: defer frequency and mean slots spent at `stage`.
pub fn probe_stage_race(schedule: &StageSchedule, stage: usize, p_b: f64, trials: u64, seed: u64) -> (f64, f64, f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut defers = 0u64;
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut node = NodeState::idle(1);
    for _ in 0..trials {
        node.enter_stage(stage, schedule, &mut rng);
        let mut elapsed = 0u64;
        while node.bc > 0 {
            elapsed += 1;
            let busy = rng.gen::<f64>() < p_b;
            if node.observe(busy, schedule, &mut rng) == Reaction::Deferred {
                defers += 1;
                break;
            }
        }
        let e = elapsed as f64;
        sum += e;
        sum_sq += e * e;
    }
    let n = trials as f64;
    let freq = defers as f64 / n;
    let mean = sum / n;
    let var = ((sum_sq - n * mean * mean) / (n - 1.0).max(1.0)).max(0.0);
    (freq, (freq * (1.0 - freq) / n).sqrt(), mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::stage_values_exact;
    use crate::mac::{Category, Variant};

    fn homeplug(n: u32) -> Scenario<f64> {
        Scenario::saturated(n, Category::Ca32)
    }

    #[test]
    fn slot_classification() {
        assert_eq!(SlotOutcome::classify(0, 1.0, 5.0, 6.0).kind, SlotKind::Idle);
        assert_eq!(SlotOutcome::classify(1, 1.0, 5.0, 6.0).duration, 5.0);
        let c = SlotOutcome::classify(3, 1.0, 5.0, 6.0);
        assert_eq!((c.kind, c.duration, c.transmitters), (SlotKind::Collision, 6.0, 3));
    }

    #[test]
    fn single_saturated_node_matches_closed_form() {
        let stats = run_sim(&homeplug(1), 200.0, 0.0, 11).unwrap();
        let x = stats.mean_service_time.unwrap();
        assert!((x / 1484.46 - 1.0).abs() < 0.01, "{x}");
        assert!((stats.long_run_throughput / 8.0837 - 1.0).abs() < 0.01);
        assert_eq!(stats.collision_slots, 0);
        assert_eq!(stats.defer_events, 0);
    }

    #[test]
    fn silent_network() {
        let stats = run_sim(&homeplug(5).with_rate(0.0), 10.0, 0.0, 1).unwrap();
        assert_eq!(stats.long_run_throughput, 0.0);
        assert_eq!(stats.idle_fraction(), 1.0);
        assert!(stats.idle_slots > 0);
        assert_eq!(stats.intervals.len(), 10);
        assert!(stats.intervals.iter().all(|i| i.qmax == 0));
        assert!(stats.mean_service_time.is_none());
    }

    #[test]
    fn deterministic_per_seed() {
        let sc = homeplug(10).with_rate(20.0).with_preload(3);
        let a = run_sim(&sc, 30.0, 5.0, 42).unwrap();
        let b = run_sim(&sc, 30.0, 5.0, 42).unwrap();
        assert_eq!(a, b);
        let c = run_sim(&sc, 30.0, 5.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn packets_are_conserved() {
        let sc = homeplug(20).with_rate(60.0).with_queue_cap(10).with_preload(4);
        let stats = run_sim(&sc, 60.0, 0.0, 5).unwrap();
        assert!(stats.conserved());
        assert!(stats.totals.iter().map(|t| t.dropped).sum::<u64>() > 0);
        assert!(stats.totals.iter().all(|t| t.queued <= 10));
    }

    #[test]
    fn interval_series_averages_to_long_run() {
        let sc = homeplug(10).with_rate(30.0);
        let stats = run_sim(&sc, 40.0, 10.0, 8).unwrap();
        assert_eq!(stats.intervals.len(), 30);
        assert_eq!(stats.intervals[0].time_s, 10.0);
        let mean = stats.throughput_series().iter().sum::<f64>() / 30.0;
        assert!((mean - stats.long_run_throughput).abs() < 1e-9);
    }

    #[test]
    fn light_load_delivers_offered_load() {
        let sc = homeplug(10).with_rate(5.0);
        let stats = run_sim(&sc, 200.0, 10.0, 3).unwrap();
        let offered = 10.0 * 5.0 * 12_000.0 / 1e6;
        assert!((stats.long_run_throughput / offered - 1.0).abs() < 0.05);
        assert_eq!(stats.totals.iter().map(|t| t.dropped).sum::<u64>(), 0);
    }

    #[test]
    fn no_deferral_variant_never_defers() {
        let sc = homeplug(10).with_variant(Variant::NoDeferral);
        let stats = run_sim(&sc, 20.0, 0.0, 2).unwrap();
        assert_eq!(stats.defer_events, 0);
        assert!(stats.collision_slots > 0);
    }

    #[test]
    fn node_race_matches_exact_kernel() {
        let sched = StageSchedule::preset(Category::Ca10);
        for (stage, p_b) in [(1, 0.5), (2, 0.3), (3, 0.7), (4, 0.6)] {
            let s = sched.stage(stage);
            let exact = stage_values_exact(s.window, s.deferral.finite().unwrap(), p_b).unwrap();
            let (freq, freq_se, mean, mean_se) = probe_stage_race(&sched, stage, p_b, 400_000, stage as u64);
            assert!((freq - exact.p_defer).abs() <= 3.0 * freq_se + 1e-12, "stage {stage}");
            assert!((mean - exact.slots).abs() <= 3.0 * mean_se, "stage {stage}");
        }
    }

    #[test]
    fn rejects_bad_durations() {
        assert!(run_sim(&homeplug(2), 10.0, 10.0, 0).is_err());
        assert!(run_sim(&homeplug(2), 10.0, -1.0, 0).is_err());
    }
}
