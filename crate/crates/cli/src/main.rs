use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use plcmac_core::{run_transitory_probe, Category, TransitionDetector, Variant};
use rayon::prelude::*;
use serde::Serialize;

use plcmac_cli::bench::{benchmark_runtimes, default_bench_config, report};
use plcmac_cli::config::{Engine, ExperimentConfig, KernelChoice};
use plcmac_cli::output::{summary, timeseries_path, write_csv, write_result_set, write_timeseries, write_with_metadata};
use plcmac_cli::plot::{emit_plot_data, PlotKind};
use plcmac_cli::run::{points, run_experiment};

/// Output directory when neither `--out` nor the config names one.
const OUT_ENV: &str = "PLCMAC_OUT";
const DEFAULT_OUT: &str = "plcmac-out";

#[derive(Parser)]
#[command(name = "plcmac", version, about = "Homeplug 1.0 MAC model, solver and simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the analytic model for every point of the sweep.
    Solve(Common),
    /// Simulate every point of the sweep.
    Simulate(Common),
    /// Run the sweep with the engine chosen by --engine or the config.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        engine: Option<Engine>,
        /// Keep per-interval series for every simulation.
        #[arg(long)]
        timeseries: bool,
    },
    /// Empty-start runs with change-point detection on interval throughput.
    ProbeTransitory {
        #[command(flatten)]
        common: Common,
        /// Minimum mean shift in pooled standard deviations.
        #[arg(long, default_value_t = 3.0)]
        threshold: f64,
        /// Minimum intervals on each side of the change point.
        #[arg(long, default_value_t = 5)]
        min_segment: usize,
    },
    /// Time the EXACT, EXP and TABLE solvers and the simulator.
    Bench {
        #[command(flatten)]
        common: Common,
        /// Defaults to both engines without a config file.
        #[arg(long, value_enum)]
        engine: Option<Engine>,
        /// Repetitions per solver timing; the median is reported.
        #[arg(long, default_value_t = 9)]
        reps: usize,
    },
    /// Turn a results directory into whitespace-separated plot files.
    PlotData {
        /// Directory holding results.csv and timeseries files.
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_enum)]
        kind: PlotKind,
        /// Defaults to `<results>/plot`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args, Default)]
struct Common {
    /// TOML experiment file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// One or more comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    #[arg(short = 'n', long = "nodes", value_delimiter = ',')]
    n: Vec<u32>,
    /// Per-node arrival rates in packets/s; omit for saturation.
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    category: Vec<Category>,
    #[arg(long, value_delimiter = ',')]
    variant: Vec<Variant>,
    #[arg(long, value_enum)]
    kernel: Option<KernelChoice>,
    /// Idle-time seeds for the unsaturated solver, in slots.
    #[arg(long = "init-I", value_delimiter = ',')]
    init_idle: Vec<f64>,
    #[arg(long)]
    duration_s: Option<f64>,
    #[arg(long)]
    warmup_s: Option<f64>,
    #[arg(long)]
    preload: Option<u32>,
    #[arg(long)]
    queue_cap: Option<u32>,
}

impl Common {
    fn config(&self, base: impl FnOnce() -> ExperimentConfig) -> anyhow::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => base(),
        };
        fn set<T: Clone>(dst: &mut Vec<T>, src: &[T]) {
            if !src.is_empty() {
                *dst = src.to_vec();
            }
        }
        set(&mut cfg.seeds, &self.seed);
        set(&mut cfg.ns, &self.n);
        set(&mut cfg.categories, &self.category);
        set(&mut cfg.variants, &self.variant);
        set(&mut cfg.init_idle, &self.init_idle);
        if !self.lambda.is_empty() {
            cfg.lambdas = self.lambda.iter().copied().map(Some).collect();
        }
        if let Some(k) = self.kernel {
            cfg.kernel = k;
        }
        cfg.duration_s = self.duration_s.unwrap_or(cfg.duration_s);
        cfg.warmup_s = self.warmup_s.unwrap_or(cfg.warmup_s);
        cfg.preload = self.preload.unwrap_or(cfg.preload);
        cfg.queue_cap = self.queue_cap.unwrap_or(cfg.queue_cap);
        if self.out.is_some() {
            cfg.out.clone_from(&self.out);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn out_dir(cfg: &ExperimentConfig) -> PathBuf {
    cfg.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

fn print_written(paths: &[PathBuf]) {
    for p in paths {
        println!("wrote {}", p.display());
    }
}

fn sweep(cfg: &ExperimentConfig, keep_series: bool) -> anyhow::Result<()> {
    let out = out_dir(cfg);
    let set = run_experiment(cfg, Some(&out.join("kernel-cache")), keep_series)?;
    print!("{}", summary(&set));
    print_written(&write_result_set(&out, &set)?);
    Ok(())
}

#[derive(Serialize)]
struct TransitionRow {
    n: u32,
    lambda: f64,
    category: &'static str,
    variant: &'static str,
    seed: u64,
    preload: u32,
    transition_s: Option<f64>,
    score: Option<f64>,
    s_before_mbps: Option<f64>,
    s_after_mbps: Option<f64>,
    first_full_s: Option<f64>,
    pinned_s: Option<f64>,
}

fn probe(cfg: &ExperimentConfig, detector: TransitionDetector) -> anyhow::Result<()> {
    if cfg.lambdas.iter().any(Option::is_none) {
        bail!("probe-transitory needs finite arrival rates (--lambda or scenario.lambda)");
    }
    let out = out_dir(cfg);
    std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
    let jobs: Vec<_> = points(cfg)
        .into_iter()
        .flat_map(|p| cfg.seeds.iter().map(move |&s| (p, s)))
        .collect();
    let probes = jobs
        .par_iter()
        .map(|(p, seed)| run_transitory_probe(&p.scenario(cfg), cfg.duration_s, *seed, &detector))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    let mut written = Vec::new();
    for ((p, seed), probe) in jobs.iter().zip(&probes) {
        let time = |k: usize| probe.stats.intervals[k].time_s;
        rows.push(TransitionRow {
            n: p.n,
            lambda: p.lambda.unwrap_or_default(),
            category: p.category.label(),
            variant: p.variant.label(),
            seed: *seed,
            preload: cfg.preload,
            transition_s: probe.transition_time_s,
            score: probe.transition.map(|t| t.score),
            s_before_mbps: probe.transition.map(|t| t.mean_before),
            s_after_mbps: probe.transition.map(|t| t.mean_after),
            first_full_s: probe.first_full_index.map(time),
            pinned_s: probe.pinned_index(cfg.queue_cap).map(time),
        });
        let path = timeseries_path(&out, &p.tag(), *seed);
        write_timeseries(&path, &probe.stats.intervals)?;
        written.push(path);
        let found = probe
            .transition_time_s
            .map_or_else(|| "none".into(), |t| format!("{t:.0} s"));
        println!("{} seed {seed}: transition {found}", p.tag());
    }
    let path = out.join("transitions.csv");
    write_csv(&path, &rows)?;
    written.insert(0, path);
    print_written(&written);
    Ok(())
}

fn bench(cfg: &ExperimentConfig, reps: usize) -> anyhow::Result<()> {
    let rows = benchmark_runtimes(cfg, reps)?;
    print!("{}", report(&rows));
    let out = out_dir(cfg);
    std::fs::create_dir_all(&out)?;
    let path = out.join("bench.csv");
    write_with_metadata(&path, "wall-clock runtimes", &rows)?;
    print_written(&[path]);
    Ok(())
}

fn plot(results: &Path, kind: PlotKind, out: Option<PathBuf>) -> anyhow::Result<()> {
    let out = out.unwrap_or_else(|| results.join("plot"));
    print_written(&emit_plot_data(results, kind, &out)?);
    Ok(())
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Solve(c) => {
            let mut cfg = c.config(ExperimentConfig::default)?;
            cfg.engine = Engine::Analysis;
            sweep(&cfg, false)
        }
        Command::Simulate(c) => {
            let mut cfg = c.config(ExperimentConfig::default)?;
            cfg.engine = Engine::Sim;
            sweep(&cfg, true)
        }
        Command::Sweep {
            common,
            engine,
            timeseries,
        } => {
            let mut cfg = common.config(ExperimentConfig::default)?;
            if let Some(e) = engine {
                cfg.engine = e;
            }
            sweep(&cfg, timeseries)
        }
        Command::ProbeTransitory {
            common,
            threshold,
            min_segment,
        } => {
            let cfg = common.config(ExperimentConfig::default)?;
            probe(&cfg, TransitionDetector { threshold, min_segment })
        }
        Command::Bench { common, engine, reps } => {
            let mut cfg = common.config(default_bench_config)?;
            if let Some(e) = engine {
                cfg.engine = e;
            }
            bench(&cfg, reps)
        }
        Command::PlotData { results, kind, out } => plot(&results, kind, out),
    }
}
