//! Experiment driver: config parsing, sweeps, CSV output, benchmarks and
//! plot data.

pub mod bench;
pub mod config;
pub mod output;
pub mod plot;
pub mod run;
