//! CSV emission. `results.csv` and `comparison.csv` depend only on the config
//! and seeds, so reruns are byte-identical; wall-clock times and timestamps go
//! to `timings.csv`, whose metadata lines start with `#`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use plcmac_core::sim::IntervalStats;
use serde::Serialize;

use crate::run::{ResultSet, Series};

pub const RESULTS_FILE: &str = "results.csv";
pub const COMPARISON_FILE: &str = "comparison.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const TIMESERIES_PREFIX: &str = "timeseries_";

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Metadata lines for non-deterministic outputs.
pub fn metadata(out: &mut impl Write, what: &str) -> std::io::Result<()> {
    writeln!(out, "# {what}")?;
    writeln!(out, "# generated {}", chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true))?;
    writeln!(out, "# plcmac {}", env!("CARGO_PKG_VERSION"))
}

pub fn write_with_metadata<T: Serialize>(path: &Path, what: &str, rows: &[T]) -> anyhow::Result<()> {
    let mut file = BufWriter::new(File::create(path)?);
    metadata(&mut file, what)?;
    let mut w = csv::Writer::from_writer(file);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct IntervalRow {
    time_s: f64,
    throughput_mbps: f64,
    qmin: u32,
    qavg: f64,
    qmax: u32,
}

pub fn timeseries_path(dir: &Path, tag: &str, seed: u64) -> PathBuf {
    dir.join(format!("{TIMESERIES_PREFIX}{tag}_seed{seed}.csv"))
}

pub fn write_timeseries(path: &Path, intervals: &[IntervalStats]) -> anyhow::Result<()> {
    let rows: Vec<IntervalRow> = intervals
        .iter()
        .map(|i| IntervalRow {
            time_s: i.time_s,
            throughput_mbps: i.throughput_mbps,
            qmin: i.qmin,
            qavg: i.qavg,
            qmax: i.qmax,
        })
        .collect();
    write_csv(path, &rows)
}

/// Writes every file of a result set into `dir` and returns their paths.
pub fn write_result_set(dir: &Path, set: &ResultSet) -> anyhow::Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let results = dir.join(RESULTS_FILE);
    write_csv(&results, &set.rows)?;
    written.push(results);
    if !set.comparisons.is_empty() {
        let p = dir.join(COMPARISON_FILE);
        write_csv(&p, &set.comparisons)?;
        written.push(p);
    }
    let timings = dir.join(TIMINGS_FILE);
    write_with_metadata(&timings, "wall-clock time per row", &set.timings)?;
    written.push(timings);
    for Series { tag, seed, intervals } in &set.series {
        let p = timeseries_path(dir, tag, *seed);
        write_timeseries(&p, intervals)?;
        written.push(p);
    }
    Ok(written)
}

fn cell(x: Option<f64>, digits: usize) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.digits$}"))
}

/// Human-readable summary of the rows for stdout.
pub fn summary(set: &ResultSet) -> String {
    let mut s = format!(
        "{:<5} {:<6} {:>4} {:>8} {:<8} {:<16} {:>9} {:>12} {:>7} {:>6} {:>8} {:<10}\n",
        "cat", "var", "n", "lambda", "engine", "branch", "S_Mbps", "X_us", "p", "rho", "mu_sat", "stability"
    );
    for r in &set.rows {
        let variant: String = r.variant.chars().take(6).collect();
        s.push_str(&format!(
            "{:<5} {:<6} {:>4} {:>8} {:<8} {:<16} {:>9} {:>12} {:>7} {:>6} {:>8} {:<10}{}\n",
            r.category,
            variant,
            r.n,
            r.lambda.map_or_else(|| "sat".into(), |l| format!("{l}")),
            r.engine,
            r.branch,
            cell(r.s_mbps, 4),
            cell(r.x_us, 2),
            cell(r.p, 4),
            cell(r.rho, 3),
            cell(r.mu_sat, 3),
            r.stability,
            if r.error.is_empty() {
                String::new()
            } else {
                format!(" error: {}", r.error)
            }
        ));
    }
    if !set.comparisons.is_empty() {
        let worst = set.comparisons.iter().map(|c| c.s_rel_err).fold(0.0, f64::max);
        s.push_str(&format!(
            "sim vs analysis: {} comparisons, worst |S_sim - S_an|/S_an = {:.2}%\n",
            set.comparisons.len(),
            100.0 * worst
        ));
    }
    s
}
