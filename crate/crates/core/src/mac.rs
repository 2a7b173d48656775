//! Protocol parameters shared by the analytic model and the simulator.
//!
//! Stages are numbered `1..=m`, with stage 1 the one a fresh packet starts in.
//! All durations are in microseconds; arrival rates in packets per second.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Initial value of the deferral counter at a backoff stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Deferral {
    /// Defer after `M + 1` overheard busy slots.
    Finite(u32),
    /// Never defer; the stage behaves like plain DCF backoff.
    Infinite,
}

impl Deferral {
    pub fn finite(self) -> Option<u32> {
        match self {
            Deferral::Finite(m) => Some(m),
            Deferral::Infinite => None,
        }
    }
}

impl fmt::Display for Deferral {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Deferral::Finite(m) => write!(f, "{m}"),
            Deferral::Infinite => f.write_str("inf"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Stage {
    /// Maximum of the uniform backoff draw `{0..=window}`.
    pub window: u32,
    pub deferral: Deferral,
}

/// Contention windows and deferral initializers for each backoff stage.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StageSchedule {
    stages: Vec<Stage>,
}

impl StageSchedule {
    pub fn new(windows: &[u32], deferrals: &[Deferral]) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::Config("schedule needs at least one stage".into()));
        }
        if windows.len() != deferrals.len() {
            return Err(Error::Config(format!(
                "{} contention windows but {} deferral initializers",
                windows.len(),
                deferrals.len()
            )));
        }
        let stages = windows
            .iter()
            .zip(deferrals)
            .map(|(&window, &deferral)| Stage { window, deferral })
            .collect();
        Ok(StageSchedule { stages })
    }

    pub fn preset(category: Category) -> Self {
        let windows: &[u32] = match category {
            Category::Ca32 => &[7, 15, 15, 31],
            Category::Ca10 => &[7, 15, 31, 63],
        };
        let deferrals = [0, 1, 3, 15].map(Deferral::Finite);
        StageSchedule::new(windows, &deferrals).expect("preset is well formed")
    }

    /// Number of backoff stages `m`.
    pub fn m(&self) -> usize {
        self.stages.len()
    }

    /// Stage `i`, counted from 1.
    ///
    /// Panics when `i` is outside `1..=m`.
    pub fn stage(&self, i: usize) -> Stage {
        assert!(i >= 1 && i <= self.m(), "stage {i} outside 1..={}", self.m());
        self.stages[i - 1]
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    pub fn windows(&self) -> Vec<u32> {
        self.stages.iter().map(|s| s.window).collect()
    }

    pub fn deferrals(&self) -> Vec<Deferral> {
        self.stages.iter().map(|s| s.deferral).collect()
    }

    /// Stage reached after a failure at stage `i`.
    pub fn next_stage(&self, i: usize) -> usize {
        (i + 1).min(self.m())
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        let deferral = match variant {
            Variant::Standard => return self.clone(),
            Variant::NoDeferral => Deferral::Infinite,
            Variant::AlwaysDefer => Deferral::Finite(0),
        };
        StageSchedule {
            stages: self
                .stages
                .iter()
                .map(|s| Stage {
                    window: s.window,
                    deferral,
                })
                .collect(),
        }
    }

    /// Checks that every finite deferral initializer fits inside its window.
    pub fn validate(&self) -> Result<()> {
        for (idx, s) in self.stages.iter().enumerate() {
            if let Deferral::Finite(m) = s.deferral {
                if m > s.window {
                    return Err(Error::Config(format!(
                        "stage {}: deferral initializer {m} exceeds window {}",
                        idx + 1,
                        s.window
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Pair of access categories sharing a parameter set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Category {
    Ca32,
    Ca10,
}

impl Category {
    pub const ALL: [Category; 2] = [Category::Ca32, Category::Ca10];

    pub fn label(self) -> &'static str {
        match self {
            Category::Ca32 => "ca32",
            Category::Ca10 => "ca10",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ca32" | "ca3/2" | "ca3" | "ca2" => Ok(Category::Ca32),
            "ca10" | "ca1/0" | "ca1" | "ca0" => Ok(Category::Ca10),
            other => Err(Error::Config(format!(
                "unknown access category `{other}` (expected ca32 or ca10)"
            ))),
        }
    }
}

pub fn preset_schedule(category: &str) -> Result<StageSchedule> {
    Ok(StageSchedule::preset(category.parse()?))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Variant {
    #[default]
    Standard,
    /// Every deferral initializer replaced by infinity (DCF-like access).
    NoDeferral,
    /// Every deferral initializer set to zero.
    AlwaysDefer,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Variant::Standard, Variant::NoDeferral, Variant::AlwaysDefer];

    pub fn label(self) -> &'static str {
        match self {
            Variant::Standard => "standard",
            Variant::NoDeferral => "no-defer",
            Variant::AlwaysDefer => "always-defer",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(Variant::Standard),
            "no-defer" | "no_deferral" | "no-deferral" => Ok(Variant::NoDeferral),
            "always-defer" | "always_defer" => Ok(Variant::AlwaysDefer),
            other => Err(Error::Config(format!(
                "unknown variant `{other}` (expected standard, no-defer or always-defer)"
            ))),
        }
    }
}

pub fn apply_variant(schedule: &StageSchedule, variant: Variant) -> StageSchedule {
    schedule.with_variant(variant)
}

/// Physical-layer durations (µs) and payload size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhyTimings<T> {
    /// Idle slot duration.
    pub sigma: T,
    pub prs0: T,
    pub prs1: T,
    pub t_fra: T,
    pub t_res: T,
    pub rifs: T,
    pub cifs: T,
    pub payload_bits: T,
    /// Nominal PHY rate in bits/µs; informational only.
    pub data_rate: T,
}

impl<T: Scalar> PhyTimings<T> {
    /// Homeplug 1.0 values: 14 Mbps, 1500-byte frames.
    pub fn homeplug_1_0() -> Self {
        PhyTimings {
            sigma: T::lit(35.84),
            prs0: T::lit(35.84),
            prs1: T::lit(35.84),
            t_fra: T::lit(1153.5),
            t_res: T::lit(72.0),
            rifs: T::lit(26.0),
            cifs: T::lit(35.84),
            payload_bits: T::lit(12_000.0),
            data_rate: T::lit(14.0),
        }
    }

    /// Duration of a successful transmission and of a collision. Both occupy
    /// the full exchange, so the two are equal.
    pub fn frame_durations(&self) -> (T, T) {
        let t_s = self.prs0 + self.prs1 + self.t_fra + self.rifs + self.t_res + self.cifs;
        (t_s, t_s)
    }

    pub fn validate(&self) -> Result<()> {
        let durations = [
            ("sigma", self.sigma),
            ("prs0", self.prs0),
            ("prs1", self.prs1),
            ("t_fra", self.t_fra),
            ("t_res", self.t_res),
            ("rifs", self.rifs),
            ("cifs", self.cifs),
        ];
        for (name, v) in durations {
            if !(v >= T::zero()) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite and >= 0")));
            }
        }
        if !(self.sigma > T::zero()) {
            return Err(Error::Config("sigma must be > 0".into()));
        }
        if !(self.payload_bits > T::zero()) {
            return Err(Error::Config("payload_bits must be > 0".into()));
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> PhyTimings<U> {
        let c = |v: T| U::lit(v.as_f64());
        PhyTimings {
            sigma: c(self.sigma),
            prs0: c(self.prs0),
            prs1: c(self.prs1),
            t_fra: c(self.t_fra),
            t_res: c(self.t_res),
            rifs: c(self.rifs),
            cifs: c(self.cifs),
            payload_bits: c(self.payload_bits),
            data_rate: c(self.data_rate),
        }
    }
}

pub fn frame_durations<T: Scalar>(timings: &PhyTimings<T>) -> (T, T) {
    timings.frame_durations()
}

/// Per-node packet arrival process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arrivals<T> {
    /// Every node always has a packet waiting.
    Saturated,
    /// Poisson arrivals, packets per second.
    Rate(T),
}

pub const DEFAULT_QUEUE_CAP: u32 = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario<T> {
    pub n: u32,
    pub schedule: StageSchedule,
    pub timings: PhyTimings<T>,
    pub arrivals: Arrivals<T>,
    pub queue_cap: u32,
    pub preload: u32,
}

impl<T: Scalar> Scenario<T> {
    /// Saturated Homeplug 1.0 scenario for a preset category.
    pub fn saturated(n: u32, category: Category) -> Self {
        Scenario {
            n,
            schedule: StageSchedule::preset(category),
            timings: PhyTimings::homeplug_1_0(),
            arrivals: Arrivals::Saturated,
            queue_cap: DEFAULT_QUEUE_CAP,
            preload: 0,
        }
    }

    pub fn with_rate(mut self, packets_per_s: T) -> Self {
        self.arrivals = Arrivals::Rate(packets_per_s);
        self
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        self.schedule = self.schedule.with_variant(variant);
        self
    }

    pub fn with_preload(mut self, preload: u32) -> Self {
        self.preload = preload;
        self
    }

    pub fn with_queue_cap(mut self, cap: u32) -> Self {
        self.queue_cap = cap;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::Config("n must be >= 1".into()));
        }
        if let Arrivals::Rate(l) = self.arrivals {
            if !(l >= T::zero()) || !l.is_finite() {
                return Err(Error::Config(format!("arrival rate {l} must be finite and >= 0")));
            }
        }
        if self.preload > self.queue_cap {
            return Err(Error::Config(format!(
                "preload {} exceeds queue cap {}",
                self.preload, self.queue_cap
            )));
        }
        self.schedule.validate()?;
        self.timings.validate()
    }

    pub fn cast<U: Scalar>(&self) -> Scenario<U> {
        Scenario {
            n: self.n,
            schedule: self.schedule.clone(),
            timings: self.timings.cast(),
            arrivals: match self.arrivals {
                Arrivals::Saturated => Arrivals::Saturated,
                Arrivals::Rate(l) => Arrivals::Rate(U::lit(l.as_f64())),
            },
            queue_cap: self.queue_cap,
            preload: self.preload,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_follow_the_access_category_table() {
        let ca32 = preset_schedule("CA3/2").unwrap();
        assert_eq!(ca32.m(), 4);
        assert_eq!(ca32.windows(), vec![7, 15, 15, 31]);
        let ca10 = preset_schedule("ca10").unwrap();
        assert_eq!(ca10.windows(), vec![7, 15, 31, 63]);
        assert_eq!(ca32.deferrals(), ca10.deferrals());
        assert_eq!(
            ca10.deferrals(),
            [0, 1, 3, 15].map(Deferral::Finite).to_vec()
        );
        for s in [&ca32, &ca10] {
            s.validate().unwrap();
            assert!(s.windows().windows(2).all(|w| w[0] <= w[1]));
        }
    }

    #[test]
    fn unknown_category_is_a_config_error() {
        assert!(matches!(preset_schedule("ca7"), Err(Error::Config(_))));
    }

    #[test]
    fn variants_rewrite_deferral_only() {
        let ca32 = StageSchedule::preset(Category::Ca32);
        let nd = apply_variant(&ca32, Variant::NoDeferral);
        assert_eq!(nd.deferrals(), vec![Deferral::Infinite; 4]);
        assert_eq!(nd.windows(), ca32.windows());
        assert_eq!(apply_variant(&ca32, Variant::Standard), ca32);

        let ad = apply_variant(&StageSchedule::preset(Category::Ca10), Variant::AlwaysDefer);
        assert_eq!(ad.deferrals(), vec![Deferral::Finite(0); 4]);
        assert_eq!(ad.windows(), vec![7, 15, 31, 63]);

        for v in Variant::ALL {
            let once = apply_variant(&ca32, v);
            assert_eq!(apply_variant(&once, v), once);
        }
    }

    #[test]
    fn homeplug_frame_duration() {
        let (ts, tc) = frame_durations(&PhyTimings::<f64>::homeplug_1_0());
        assert!((ts - 1359.02).abs() < 1e-9);
        assert_eq!(ts, tc);

        let zero = PhyTimings {
            sigma: 0.0,
            prs0: 0.0,
            prs1: 0.0,
            t_fra: 0.0,
            t_res: 0.0,
            rifs: 0.0,
            cifs: 0.0,
            payload_bits: 1.0,
            data_rate: 0.0,
        };
        assert_eq!(zero.frame_durations(), (0.0, 0.0));
        let only_frame = PhyTimings { t_fra: 100.0, ..zero };
        assert_eq!(only_frame.frame_durations(), (100.0, 100.0));
    }

    #[test]
    fn scenario_validation() {
        let s = Scenario::<f64>::saturated(10, Category::Ca32);
        s.validate().unwrap();
        assert!(s.clone().with_preload(1001).validate().is_err());
        assert!(s.clone().with_rate(-1.0).validate().is_err());
        let mut zero = s.clone();
        zero.n = 0;
        assert!(zero.validate().is_err());
    }

    #[test]
    fn stage_indexing_is_one_based() {
        let s = StageSchedule::preset(Category::Ca10);
        assert_eq!(s.stage(1).window, 7);
        assert_eq!(s.stage(4).window, 63);
        assert_eq!(s.next_stage(4), 4);
        assert_eq!(s.next_stage(1), 2);
    }
}
