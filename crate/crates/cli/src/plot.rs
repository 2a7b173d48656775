//! Plot-ready text files derived from a results directory.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::Deserialize;

use crate::output::{RESULTS_FILE, TIMESERIES_PREFIX};
use crate::run::ResultRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    #[value(name = "S_vs_lambda")]
    SVsLambda,
    #[value(name = "X_vs_lambda")]
    XVsLambda,
    #[value(name = "S_vs_n")]
    SVsN,
    #[value(name = "X_vs_p")]
    XVsP,
    #[value(name = "mu_sat_vs_n")]
    MuSatVsN,
    #[value(name = "timeseries")]
    Timeseries,
}

impl PlotKind {
    pub fn name(self) -> &'static str {
        match self {
            PlotKind::SVsLambda => "S_vs_lambda",
            PlotKind::XVsLambda => "X_vs_lambda",
            PlotKind::SVsN => "S_vs_n",
            PlotKind::XVsP => "X_vs_p",
            PlotKind::MuSatVsN => "mu_sat_vs_n",
            PlotKind::Timeseries => "timeseries",
        }
    }
}

/// A named series: one header line plus whitespace-separated columns.
#[derive(Debug, Clone, PartialEq)]
pub struct PlotSeries {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<f64>>,
}

impl PlotSeries {
    pub fn render(&self) -> String {
        let mut s = self.header.join(" ");
        s.push('\n');
        for r in &self.rows {
            let line: Vec<String> = r.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "{}", line.join(" "));
        }
        s
    }
}

pub fn read_results(dir: &Path) -> anyhow::Result<Vec<ResultRow>> {
    let path = dir.join(RESULTS_FILE);
    let mut r = csv::Reader::from_path(&path).with_context(|| format!("reading {}", path.display()))?;
    let rows = r.deserialize().collect::<Result<Vec<ResultRow>, _>>()?;
    Ok(rows)
}

fn timeseries_files(dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|f| f.to_str())
                .is_some_and(|f| f.starts_with(TIMESERIES_PREFIX) && f.ends_with(".csv"))
        })
        .collect();
    files.sort();
    Ok(files)
}

/// Axes present in a result set, for error messages.
pub fn available_axes(rows: &[ResultRow], has_timeseries: bool) -> Vec<&'static str> {
    let mut axes = Vec::new();
    let mut push = |name, present: bool| {
        if present {
            axes.push(name);
        }
    };
    push("n", !rows.is_empty());
    push("lambda", rows.iter().any(|r| r.lambda.is_some()));
    push("S", rows.iter().any(|r| r.s_mbps.is_some()));
    push("X", rows.iter().any(|r| r.x_us.is_some()));
    push("p", rows.iter().any(|r| r.p.is_some()));
    push("mu_sat", rows.iter().any(|r| r.mu_sat.is_some()));
    push("timeseries", has_timeseries);
    axes
}

fn fmt_lambda(l: Option<f64>) -> String {
    l.map_or_else(|| "sat".into(), |l| format!("l{l}"))
}

type Key = (String, String, String, String);

fn group<F>(rows: &[ResultRow], key: impl Fn(&ResultRow) -> Key, point: F) -> BTreeMap<Key, Vec<Vec<f64>>>
where
    F: Fn(&ResultRow) -> Option<Vec<f64>>,
{
    let mut groups: BTreeMap<Key, Vec<Vec<f64>>> = BTreeMap::new();
    for r in rows {
        if let Some(pt) = point(r) {
            groups.entry(key(r)).or_default().push(pt);
        }
    }
    for pts in groups.values_mut() {
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]));
        pts.dedup_by(|a, b| a[0] == b[0]);
    }
    groups
}

fn to_series(kind: PlotKind, header: Vec<&'static str>, groups: BTreeMap<Key, Vec<Vec<f64>>>) -> Vec<PlotSeries> {
    groups
        .into_iter()
        .map(|((a, b, c, d), rows)| PlotSeries {
            name: [kind.name(), &a, &b, &c, &d]
                .iter()
                .filter(|s| !s.is_empty())
                .cloned()
                .collect::<Vec<_>>()
                .join("__"),
            header: header.clone(),
            rows,
        })
        .collect()
}

/// Builds the series for `kind`. Errors name the axes the results do have.
pub fn plot_series(kind: PlotKind, rows: &[ResultRow], timeseries: &[PathBuf]) -> anyhow::Result<Vec<PlotSeries>> {
    let axes = available_axes(rows, !timeseries.is_empty());
    let need = |axis: &str, present: bool| -> anyhow::Result<()> {
        if !present {
            bail!(
                "{} needs the '{axis}' axis, which the results lack; available axes: {}",
                kind.name(),
                axes.join(", ")
            );
        }
        Ok(())
    };
    let by_point = |r: &ResultRow| (r.category.clone(), r.variant.clone(), format!("n{}", r.n), r.branch.clone());
    let by_lambda = |r: &ResultRow| (r.category.clone(), r.variant.clone(), fmt_lambda(r.lambda), r.branch.clone());
    let series = match kind {
        PlotKind::SVsLambda | PlotKind::XVsLambda => {
            need("lambda", axes.contains(&"lambda"))?;
            let (col, pick): (&'static str, fn(&ResultRow) -> Option<f64>) = if kind == PlotKind::SVsLambda {
                ("S_mbps", |r| r.s_mbps)
            } else {
                ("X_us", |r| r.x_us)
            };
            let g = group(rows, by_point, |r| Some(vec![r.lambda?, pick(r)?]));
            to_series(kind, vec!["lambda", col], g)
        }
        PlotKind::SVsN => {
            need("S", axes.contains(&"S"))?;
            to_series(kind, vec!["n", "S_mbps"], group(rows, by_lambda, |r| Some(vec![f64::from(r.n), r.s_mbps?])))
        }
        PlotKind::XVsP => {
            need("p", axes.contains(&"p"))?;
            to_series(kind, vec!["p", "X_us"], group(rows, by_lambda, |r| Some(vec![r.p?, r.x_us?])))
        }
        PlotKind::MuSatVsN => {
            need("mu_sat", axes.contains(&"mu_sat"))?;
            let key = |r: &ResultRow| (r.category.clone(), r.variant.clone(), String::new(), String::new());
            to_series(kind, vec!["n", "mu_sat"], group(rows, key, |r| Some(vec![f64::from(r.n), r.mu_sat?])))
        }
        PlotKind::Timeseries => {
            need("timeseries", !timeseries.is_empty())?;
            let mut out = Vec::new();
            for path in timeseries {
                let mut reader = csv::Reader::from_path(path)?;
                let rows = reader
                    .deserialize::<IntervalCsv>()
                    .map(|r| r.map(|r| vec![r.time_s, r.throughput_mbps, r.qmin, r.qavg, r.qmax]))
                    .collect::<Result<Vec<_>, _>>()?;
                let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("series");
                out.push(PlotSeries {
                    name: format!("timeseries__{}", stem.trim_start_matches(TIMESERIES_PREFIX)),
                    header: vec!["time_s", "throughput_mbps", "qmin", "qavg", "qmax"],
                    rows,
                });
            }
            out
        }
    };
    if series.is_empty() {
        bail!("{}: no rows carry the requested values; available axes: {}", kind.name(), axes.join(", "));
    }
    Ok(series)
}

#[derive(Deserialize)]
struct IntervalCsv {
    time_s: f64,
    throughput_mbps: f64,
    qmin: f64,
    qavg: f64,
    qmax: f64,
}

/// Reads `results_dir`, writes one `.dat` file per series into `out_dir`.
pub fn emit_plot_data(results_dir: &Path, kind: PlotKind, out_dir: &Path) -> anyhow::Result<Vec<PathBuf>> {
    let timeseries = timeseries_files(results_dir)?;
    let rows = if results_dir.join(RESULTS_FILE).exists() {
        read_results(results_dir)?
    } else if kind == PlotKind::Timeseries {
        Vec::new()
    } else {
        bail!("no {RESULTS_FILE} in {}", results_dir.display());
    };
    let series = plot_series(kind, &rows, &timeseries)?;
    std::fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for s in series {
        let path = out_dir.join(format!("{}.dat", s.name));
        std::fs::write(&path, s.render())?;
        written.push(path);
    }
    Ok(written)
}
