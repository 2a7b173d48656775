//! Performance analysis of the Homeplug / IEEE 1901 contention MAC.
//!
//! * [`mac`]: stage schedules, access-category presets, PHY timings.
//! * [`kernel`]: the per-stage backoff/deferral race, exact and tabulated.
//! * [`solver`]: the renewal-reward fixed point, dual solutions and the
//!   saturated service rate.
//! * [`sim`]: a slot-synchronous simulator used as ground truth.
//!
//! The analytic code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below pin it to `f64`, which is what the simulator and the CLI use.

pub mod error;
pub mod kernel;
pub mod mac;
mod scalar;
pub mod sim;
pub mod solver;

pub use error::{Error, Result};
pub use kernel::{
    build_table, expected_slots_exact, mc_oracle, p_defer_exact, p_defer_exp_approx,
    stage_values_by_cdf, stage_values_exact,
    KernelTable, OracleEstimate, StageValues,
};
pub use mac::{
    apply_variant, frame_durations, preset_schedule, Arrivals, Category, Deferral, PhyTimings,
    Scenario, Stage, StageSchedule, Variant,
};
pub use scalar::Scalar;
pub use sim::{
    detect_transition, run_sim, run_transitory_probe, SimStats, SlotKind, SlotOutcome,
    TransitionDetector, TransitoryProbe,
};
pub use solver::{
    collision_prob, find_solutions, find_solutions_from, mean_backoff_slots, mu_sat,
    service_time, slot_probabilities, solve_saturated, solve_unsaturated, KernelMode,
    SolutionPoint, SolutionSet, SolverSettings, Stability,
};

pub type Timings = PhyTimings<f64>;
pub type Scenario64 = Scenario<f64>;
pub type Table = KernelTable<f64>;
pub type Solution = SolutionPoint<f64>;
pub type Settings = SolverSettings<f64>;
pub type Solutions = SolutionSet<f64>;
pub type Kernel = KernelMode<f64>;

pub type Scenario32 = Scenario<f32>;
pub type Solution32 = SolutionPoint<f32>;
