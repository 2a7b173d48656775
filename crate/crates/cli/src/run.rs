//! Sweep execution: the cross product of a config, evaluated by the solver,
//! the simulator or both.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;
use std::sync::Arc;
use std::time::Instant;

use plcmac_core::sim::IntervalStats;
use plcmac_core::solver::Branch;
use plcmac_core::{
    find_solutions_from, run_sim, solve_saturated, Category, Kernel, KernelTable, Scenario64,
    Settings, StageSchedule, Variant,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, KernelChoice};

/// One coordinate of the sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub category: Category,
    pub variant: Variant,
    pub n: u32,
    pub lambda: Option<f64>,
}

impl Point {
    pub fn scenario(&self, cfg: &ExperimentConfig) -> Scenario64 {
        let sc = Scenario64::saturated(self.n, self.category)
            .with_variant(self.variant)
            .with_queue_cap(cfg.queue_cap);
        match self.lambda {
            Some(l) => sc.with_rate(l).with_preload(cfg.preload),
            None => sc,
        }
    }

    /// File-name friendly coordinate tag, e.g. `ca32_standard_n50_l8`.
    pub fn tag(&self) -> String {
        let lambda = match self.lambda {
            Some(l) => format!("l{l}"),
            None => "sat".into(),
        };
        format!(
            "{}_{}_n{}_{}",
            self.category.label(),
            self.variant.label(),
            self.n,
            lambda
        )
    }
}

/// Coordinates in sorted order: category, variant, n, then λ with the
/// saturated point first.
pub fn points(cfg: &ExperimentConfig) -> Vec<Point> {
    let mut ns = cfg.ns.clone();
    ns.sort_unstable();
    ns.dedup();
    let mut lambdas = cfg.lambdas.clone();
    lambdas.sort_by(|a, b| match (a, b) {
        (None, None) => std::cmp::Ordering::Equal,
        (None, _) => std::cmp::Ordering::Less,
        (_, None) => std::cmp::Ordering::Greater,
        (Some(x), Some(y)) => x.total_cmp(y),
    });
    lambdas.dedup();
    let mut out = Vec::new();
    for &category in &cfg.categories {
        for &variant in &cfg.variants {
            for &n in &ns {
                for &lambda in &lambdas {
                    out.push(Point {
                        category,
                        variant,
                        n,
                        lambda,
                    });
                }
            }
        }
    }
    out
}

/// One output row: a coordinate evaluated by one engine branch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub n: u32,
    /// Empty for saturated points.
    pub lambda: Option<f64>,
    pub category: String,
    pub variant: String,
    pub engine: String,
    /// `analysis-sat`, `analysis-I<init>` or `sim-seed-<k>`.
    pub branch: String,
    /// Aggregate throughput, Mbps.
    pub s_mbps: Option<f64>,
    /// Mean service time, µs.
    pub x_us: Option<f64>,
    pub p: Option<f64>,
    pub rho: Option<f64>,
    /// Packets/s per node.
    pub mu_sat: Option<f64>,
    pub stability: String,
    pub converged: bool,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub n: u32,
    pub lambda: Option<f64>,
    pub category: String,
    pub variant: String,
    pub engine: String,
    pub branch: String,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub n: u32,
    pub lambda: Option<f64>,
    pub category: String,
    pub variant: String,
    pub sim_branch: String,
    pub analysis_branch: String,
    pub s_sim: f64,
    pub s_analysis: f64,
    pub s_rel_err: f64,
    pub x_sim: Option<f64>,
    pub x_analysis: Option<f64>,
    pub x_rel_err: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub tag: String,
    pub seed: u64,
    pub intervals: Vec<IntervalStats>,
}

#[derive(Debug, Clone, Default)]
pub struct ResultSet {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<TimingRow>,
    pub comparisons: Vec<ComparisonRow>,
    pub series: Vec<Series>,
}

fn init_label(init: f64) -> String {
    format!("analysis-I{init}")
}

/// Solver settings for one schedule; table kernels are built once per
/// schedule and cached on disk under `cache_dir` when given.
pub struct KernelCache {
    choice: KernelChoice,
    step: f64,
    dir: Option<std::path::PathBuf>,
    tables: HashMap<String, Arc<KernelTable<f64>>>,
}

impl KernelCache {
    pub fn new(cfg: &ExperimentConfig, dir: Option<&Path>) -> Self {
        KernelCache {
            choice: cfg.kernel,
            step: cfg.table_step,
            dir: dir.map(Path::to_owned),
            tables: HashMap::new(),
        }
    }

    pub fn kernel(&mut self, schedule: &StageSchedule) -> anyhow::Result<Kernel> {
        Ok(match self.choice {
            KernelChoice::Exact => Kernel::Exact,
            KernelChoice::Exp => Kernel::ExpApprox,
            KernelChoice::Table => Kernel::Table(self.table(schedule)?),
        })
    }

    fn table(&mut self, schedule: &StageSchedule) -> anyhow::Result<Arc<KernelTable<f64>>> {
        let key = KernelTable::<f64>::cache_key(schedule, self.step);
        if let Some(t) = self.tables.get(&key) {
            return Ok(t.clone());
        }
        let path = self.dir.as_ref().map(|d| d.join(format!("{key}.bin")));
        let cached = path
            .as_ref()
            .filter(|p| p.exists())
            .and_then(|p| File::open(p).ok())
            .and_then(|f| KernelTable::read_from(BufReader::new(f)).ok())
            .filter(|t| t.covers(schedule));
        let table = match cached {
            Some(t) => t,
            None => {
                let t = KernelTable::build(schedule, self.step)?;
                if let Some(p) = &path {
                    if let Some(parent) = p.parent() {
                        std::fs::create_dir_all(parent)?;
                    }
                    t.write_to(BufWriter::new(File::create(p)?))?;
                }
                t
            }
        };
        let table = Arc::new(table);
        self.tables.insert(key, table.clone());
        Ok(table)
    }
}

pub fn settings(cfg: &ExperimentConfig, kernel: Kernel) -> Settings {
    let mut s = Settings::default().with_kernel(kernel);
    if let Some(t) = cfg.tolerance {
        s.tolerance = t;
    }
    if let Some(m) = cfg.max_iterations {
        s.max_iterations = m;
    }
    s
}

enum Job {
    Analysis(Point),
    Sim(Point, u64),
}

struct JobOutput {
    rows: Vec<ResultRow>,
    timings: Vec<TimingRow>,
    series: Option<Series>,
}

fn base_row(p: &Point, engine: &str, branch: String) -> ResultRow {
    ResultRow {
        n: p.n,
        lambda: p.lambda,
        category: p.category.label().into(),
        variant: p.variant.label().into(),
        engine: engine.into(),
        branch,
        s_mbps: None,
        x_us: None,
        p: None,
        rho: None,
        mu_sat: None,
        stability: String::new(),
        converged: false,
        error: String::new(),
    }
}

fn timing(row: &ResultRow, wall_time_s: f64) -> TimingRow {
    TimingRow {
        n: row.n,
        lambda: row.lambda,
        category: row.category.clone(),
        variant: row.variant.clone(),
        engine: row.engine.clone(),
        branch: row.branch.clone(),
        wall_time_s,
    }
}

fn stability_label(mu: Option<f64>, lambda: Option<f64>) -> String {
    match (mu, lambda) {
        (_, None) => "saturated".into(),
        (Some(mu), Some(l)) if l < mu => "stable".into(),
        (Some(_), Some(_)) => "unstable".into(),
        (None, Some(_)) => String::new(),
    }
}

fn analysis_rows(p: &Point, cfg: &ExperimentConfig, settings: &Settings) -> (Vec<ResultRow>, Vec<TimingRow>) {
    let sc = p.scenario(cfg);
    let t = Instant::now();
    let sat = solve_saturated(&Scenario64::saturated(p.n, p.category).with_variant(p.variant), settings);
    let mu = sat.as_ref().ok().map(|s| s.service_rate());
    let stability = stability_label(mu, p.lambda);

    let fill = |row: &mut ResultRow, sol: &plcmac_core::Solution| {
        row.s_mbps = Some(sol.aggregate_throughput(p.n));
        row.x_us = Some(sol.x);
        row.p = Some(sol.p);
        row.rho = Some(sol.rho);
        row.converged = sol.converged;
    };

    let mut rows = Vec::new();
    let mut timings = Vec::new();
    match p.lambda {
        None => {
            let mut row = base_row(p, "analysis", "analysis-sat".into());
            match &sat {
                Ok(sol) => fill(&mut row, sol),
                Err(e) => row.error = e.to_string(),
            }
            row.mu_sat = mu;
            row.stability = stability;
            timings.push(timing(&row, t.elapsed().as_secs_f64()));
            rows.push(row);
        }
        Some(_) => {
            let branches: Vec<Branch<f64>> = match find_solutions_from(&sc, settings, &cfg.init_idle) {
                Ok(set) => set.branches,
                Err(e) => cfg
                    .init_idle
                    .iter()
                    .map(|&init_idle| Branch {
                        init_idle,
                        outcome: Err(e.clone()),
                        duplicate_of: None,
                    })
                    .collect(),
            };
            let elapsed = t.elapsed().as_secs_f64() / branches.len().max(1) as f64;
            for b in branches {
                let mut row = base_row(p, "analysis", init_label(b.init_idle));
                match &b.outcome {
                    Ok(sol) => fill(&mut row, sol),
                    Err(e) => row.error = e.to_string(),
                }
                row.mu_sat = mu;
                row.stability = stability.clone();
                timings.push(timing(&row, elapsed));
                rows.push(row);
            }
        }
    }
    (rows, timings)
}

fn sim_row(p: &Point, seed: u64, cfg: &ExperimentConfig, mu: Option<f64>, keep_series: bool) -> JobOutput {
    let t = Instant::now();
    let mut row = base_row(p, "sim", format!("sim-seed-{seed}"));
    row.mu_sat = mu;
    row.stability = stability_label(mu, p.lambda);
    let mut series = None;
    match run_sim(&p.scenario(cfg), cfg.duration_s, cfg.warmup_s, seed) {
        Ok(stats) => {
            row.s_mbps = Some(stats.long_run_throughput);
            row.x_us = stats.mean_service_time;
            row.p = stats.collision_fraction();
            row.converged = true;
            if keep_series {
                series = Some(Series {
                    tag: p.tag(),
                    seed,
                    intervals: stats.intervals,
                });
            }
        }
        Err(e) => row.error = e.to_string(),
    }
    let timings = vec![timing(&row, t.elapsed().as_secs_f64())];
    JobOutput {
        rows: vec![row],
        timings,
        series,
    }
}

/// Runs every point of `cfg`. Per-point failures end up in the rows; only
/// setup problems (an unbuildable table, an unwritable cache) are errors.
pub fn run_experiment(cfg: &ExperimentConfig, cache_dir: Option<&Path>, keep_series: bool) -> anyhow::Result<ResultSet> {
    cfg.validate()?;
    let pts = points(cfg);

    // One settings object per schedule, shared by every job.
    let mut cache = KernelCache::new(cfg, cache_dir);
    let mut per_schedule: HashMap<(Category, Variant), Settings> = HashMap::new();
    for p in &pts {
        if let std::collections::hash_map::Entry::Vacant(e) = per_schedule.entry((p.category, p.variant)) {
            let schedule = StageSchedule::preset(p.category).with_variant(p.variant);
            e.insert(settings(cfg, cache.kernel(&schedule)?));
        }
    }
    // μ_sat for sim rows; cheap next to any simulation.
    let mu_of = |p: &Point| {
        let s = &per_schedule[&(p.category, p.variant)];
        let sc = Scenario64::saturated(p.n, p.category).with_variant(p.variant);
        solve_saturated(&sc, s).ok().map(|x| x.service_rate())
    };

    let mut jobs = Vec::new();
    for p in &pts {
        if cfg.engine.analysis() {
            jobs.push(Job::Analysis(*p));
        }
        if cfg.engine.sim() {
            let mut seeds = cfg.seeds.clone();
            seeds.sort_unstable();
            for s in seeds {
                jobs.push(Job::Sim(*p, s));
            }
        }
    }

    // The parallel map keeps job order, so the output is sorted by
    // coordinates whatever the scheduling.
    let outputs: Vec<JobOutput> = jobs
        .par_iter()
        .map(|job| match job {
            Job::Analysis(p) => {
                let (rows, timings) = analysis_rows(p, cfg, &per_schedule[&(p.category, p.variant)]);
                JobOutput {
                    rows,
                    timings,
                    series: None,
                }
            }
            Job::Sim(p, seed) => sim_row(p, *seed, cfg, mu_of(p), keep_series),
        })
        .collect();

    let mut set = ResultSet::default();
    for o in outputs {
        set.rows.extend(o.rows);
        set.timings.extend(o.timings);
        set.series.extend(o.series);
    }
    if cfg.engine == crate::config::Engine::Both {
        set.comparisons = compare(&set.rows);
    }
    Ok(set)
}

/// Relative error of every sim row against the long-term analytic branch of
/// the same point (`analysis-I0`, or `analysis-sat` when saturated).
pub fn compare(rows: &[ResultRow]) -> Vec<ComparisonRow> {
    let same_point = |a: &ResultRow, b: &ResultRow| {
        a.n == b.n && a.lambda == b.lambda && a.category == b.category && a.variant == b.variant
    };
    let rel = |a: f64, b: f64| (a - b).abs() / b.abs();
    rows.iter()
        .filter(|r| r.engine == "sim")
        .filter_map(|sim| {
            let reference = rows.iter().find(|a| {
                a.engine == "analysis"
                    && same_point(a, sim)
                    && (a.branch == "analysis-sat" || a.branch == init_label(0.0))
            })?;
            let (s_sim, s_an) = (sim.s_mbps?, reference.s_mbps?);
            Some(ComparisonRow {
                n: sim.n,
                lambda: sim.lambda,
                category: sim.category.clone(),
                variant: sim.variant.clone(),
                sim_branch: sim.branch.clone(),
                analysis_branch: reference.branch.clone(),
                s_sim,
                s_analysis: s_an,
                s_rel_err: rel(s_sim, s_an),
                x_sim: sim.x_us,
                x_analysis: reference.x_us,
                x_rel_err: sim.x_us.zip(reference.x_us).map(|(a, b)| rel(a, b)),
            })
        })
        .collect()
}
