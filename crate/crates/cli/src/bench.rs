//! Wall-clock comparison of the analytic kernels and the simulator.

use std::time::Instant;

use plcmac_core::{run_sim, solve_saturated, solve_unsaturated, Kernel, KernelTable, StageSchedule};
use serde::Serialize;

use crate::config::{Engine, ExperimentConfig};
use crate::run::{points, settings};

/// Wall times for one point. Solver columns are medians over `repetitions`
/// runs; the table build and the simulation run once. Columns for engines
/// the config leaves out stay empty.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub n: u32,
    pub lambda: Option<f64>,
    pub category: String,
    pub variant: String,
    pub repetitions: usize,
    pub exact_s: Option<f64>,
    pub exp_s: Option<f64>,
    pub table_s: Option<f64>,
    pub table_build_s: Option<f64>,
    pub sim_s: Option<f64>,
    pub sim_duration_s: Option<f64>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

fn time_it(reps: usize, mut f: impl FnMut()) -> f64 {
    median(
        (0..reps.max(1))
            .map(|_| {
                let t = Instant::now();
                f();
                t.elapsed().as_secs_f64()
            })
            .collect(),
    )
}

/// Times every point of `cfg`. The simulator uses the first seed.
pub fn benchmark_runtimes(cfg: &ExperimentConfig, reps: usize) -> anyhow::Result<Vec<BenchRow>> {
    cfg.validate()?;
    let reps = reps.max(1);
    let mut rows = Vec::new();
    for p in points(cfg) {
        let sc = p.scenario(cfg);
        let mut row = BenchRow {
            n: p.n,
            lambda: p.lambda,
            category: p.category.label().into(),
            variant: p.variant.label().into(),
            repetitions: reps,
            exact_s: None,
            exp_s: None,
            table_s: None,
            table_build_s: None,
            sim_s: None,
            sim_duration_s: None,
        };
        if cfg.engine.analysis() {
            let schedule = StageSchedule::preset(p.category).with_variant(p.variant);
            let build = Instant::now();
            let table = KernelTable::build(&schedule, cfg.table_step)?;
            row.table_build_s = Some(build.elapsed().as_secs_f64());
            let time = |kernel: Kernel| {
                let s = settings(cfg, kernel);
                // A failing point still costs time; the bench reports it.
                Some(time_it(reps, || {
                    let _ = match p.lambda {
                        Some(_) => solve_unsaturated(&sc, &s),
                        None => solve_saturated(&sc, &s),
                    };
                }))
            };
            row.exact_s = time(Kernel::Exact);
            row.exp_s = time(Kernel::ExpApprox);
            row.table_s = time(Kernel::Table(table.into()));
        }
        if cfg.engine.sim() {
            let t = Instant::now();
            run_sim(&sc, cfg.duration_s, cfg.warmup_s, cfg.seeds[0])?;
            row.sim_s = Some(t.elapsed().as_secs_f64());
            row.sim_duration_s = Some(cfg.duration_s);
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Text report with EXP/EXACT and SIM/EXACT ratios per point.
pub fn report(rows: &[BenchRow]) -> String {
    let cell = |x: Option<f64>| x.map_or_else(|| "-".into(), |v| format!("{v:.3e}"));
    let ratio = |a: Option<f64>, b: Option<f64>, digits: usize| match (a, b) {
        (Some(a), Some(b)) => format!("{:.digits$}", a / b),
        _ => "-".into(),
    };
    let mut s = format!(
        "{:<5} {:<12} {:>4} {:>6} {:>10} {:>10} {:>10} {:>10} {:>10} {:>9} {:>9}\n",
        "cat", "variant", "n", "lambda", "exact_s", "exp_s", "table_s", "build_s", "sim_s", "exp/exact", "sim/exact"
    );
    for r in rows {
        s.push_str(&format!(
            "{:<5} {:<12} {:>4} {:>6} {:>10} {:>10} {:>10} {:>10} {:>10} {:>9} {:>9}\n",
            r.category,
            r.variant,
            r.n,
            r.lambda.map_or_else(|| "sat".into(), |l| format!("{l}")),
            cell(r.exact_s),
            cell(r.exp_s),
            cell(r.table_s),
            cell(r.table_build_s),
            cell(r.sim_s),
            ratio(r.exp_s, r.exact_s, 3),
            ratio(r.sim_s, r.exact_s, 0),
        ));
    }
    s
}

pub fn default_bench_config() -> ExperimentConfig {
    ExperimentConfig {
        engine: Engine::Both,
        ns: vec![10, 50],
        categories: vec![plcmac_core::Category::Ca10],
        duration_s: 10_000.0,
        ..ExperimentConfig::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_analysis_point_gives_one_row() {
        let cfg = ExperimentConfig {
            ns: vec![5],
            table_step: 0.01,
            ..ExperimentConfig::default()
        };
        let rows = benchmark_runtimes(&cfg, 3).unwrap();
        assert_eq!(rows.len(), 1);
        let r = &rows[0];
        assert!([r.exact_s, r.exp_s, r.table_s, r.table_build_s].iter().all(|t| t.unwrap() > 0.0));
        assert_eq!(r.sim_s, None);
        assert!(report(&rows).lines().nth(1).unwrap().ends_with('-'));
    }

    #[test]
    fn sim_is_slower_than_one_solve() {
        let cfg = ExperimentConfig {
            engine: Engine::Both,
            ns: vec![20],
            duration_s: 200.0,
            table_step: 0.01,
            ..ExperimentConfig::default()
        };
        let r = &benchmark_runtimes(&cfg, 3).unwrap()[0];
        assert!(r.sim_s.unwrap() > 10.0 * r.exact_s.unwrap());
    }
}
