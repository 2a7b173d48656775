use std::io::{Read, Write};

use super::{no_deferral_values, stage_values_exact, StageValues};
use crate::error::{Error, Result};
use crate::mac::{Deferral, Stage, StageSchedule};
use crate::scalar::Scalar;

pub const DEFAULT_STEP: f64 = 1e-4;

const MAGIC: &[u8; 8] = b"PLCKTBL\0";
const VERSION: u32 = 1;
const INFINITE_TAG: u32 = u32::MAX;

/// Stage kernel values tabulated on a uniform `p_b` grid over `[0, 1]`.
///
/// One row pair (defer probability, expected slots) is stored per distinct
/// finite `(W, M)` pair of the schedule; stages with `M = ∞` are answered
/// without a table.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelTable<T> {
    step: T,
    nodes: Vec<T>,
    stages: Vec<Stage>,
    /// Distinct finite `(W, M)` pairs in first-seen order.
    pairs: Vec<(u32, u32)>,
    /// For each stage, its row in `pairs`.
    rows: Vec<Option<usize>>,
    defer_values: Vec<Vec<T>>,
    slot_values: Vec<Vec<T>>,
}

fn grid<T: Scalar>(step: T) -> Vec<T> {
    let count = (T::one() / step - T::lit(1e-9)).ceil().to_usize().unwrap_or(0) + 1;
    (0..count)
        .map(|j| (T::from_count(j as u64) * step).min(T::one()))
        .collect()
}

fn layout(stages: &[Stage]) -> (Vec<(u32, u32)>, Vec<Option<usize>>) {
    let mut pairs: Vec<(u32, u32)> = Vec::new();
    let rows = stages
        .iter()
        .map(|s| {
            s.deferral.finite().map(|m| {
                let key = (s.window, m);
                pairs.iter().position(|&p| p == key).unwrap_or_else(|| {
                    pairs.push(key);
                    pairs.len() - 1
                })
            })
        })
        .collect();
    (pairs, rows)
}

pub fn build_table<T: Scalar>(schedule: &StageSchedule, step: T) -> Result<KernelTable<T>> {
    KernelTable::build(schedule, step)
}

impl<T: Scalar> KernelTable<T> {
    pub fn build(schedule: &StageSchedule, step: T) -> Result<Self> {
        if !(step > T::zero() && step <= T::one()) {
            return Err(Error::Config(format!("table step {step} must lie in (0, 1]")));
        }
        schedule.validate()?;
        let nodes = grid(step);
        let stages = schedule.stages().to_vec();
        let (pairs, rows) = layout(&stages);

        let mut defer_values = Vec::with_capacity(pairs.len());
        let mut slot_values = Vec::with_capacity(pairs.len());
        for &(w, m) in &pairs {
            let mut d = Vec::with_capacity(nodes.len());
            let mut s = Vec::with_capacity(nodes.len());
            for &pb in &nodes {
                let v = stage_values_exact(w, m, pb)?;
                d.push(v.p_defer);
                s.push(v.slots);
            }
            defer_values.push(d);
            slot_values.push(s);
        }
        Ok(KernelTable {
            step,
            nodes,
            stages,
            pairs,
            rows,
            defer_values,
            slot_values,
        })
    }

    pub fn step(&self) -> T {
        self.step
    }

    pub fn grid(&self) -> &[T] {
        &self.nodes
    }

    pub fn pairs(&self) -> &[(u32, u32)] {
        &self.pairs
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Tabulated `(defer, slots)` rows for a finite `(W, M)` pair.
    pub fn rows_for(&self, window: u32, deferral: u32) -> Option<(&[T], &[T])> {
        let r = self.pairs.iter().position(|&p| p == (window, deferral))?;
        Some((&self.defer_values[r], &self.slot_values[r]))
    }

    /// Whether this table was built for exactly `schedule`'s stages.
    pub fn covers(&self, schedule: &StageSchedule) -> bool {
        self.stages == schedule.stages()
    }

    /// Linearly interpolated kernel values at stage `stage` (1-based).
    pub fn lookup(&self, stage: usize, p_b: T) -> Result<StageValues<T>> {
        if stage == 0 || stage > self.stages.len() {
            return Err(Error::Domain(format!(
                "stage {stage} outside 1..={}",
                self.stages.len()
            )));
        }
        if !(p_b >= T::zero() && p_b <= T::one()) {
            return Err(Error::Domain(format!(
                "overhearing probability {p_b} outside [0, 1]"
            )));
        }
        let Some(row) = self.rows[stage - 1] else {
            return Ok(no_deferral_values(self.stages[stage - 1].window));
        };
        let last = self.nodes.len() - 1;
        if last == 0 {
            return Ok(StageValues {
                p_defer: self.defer_values[row][0],
                slots: self.slot_values[row][0],
            });
        }
        let j = (p_b / self.step).floor().to_usize().unwrap_or(0).min(last - 1);
        let (x0, x1) = (self.nodes[j], self.nodes[j + 1]);
        let t = ((p_b - x0) / (x1 - x0)).max(T::zero()).min(T::one());
        let lerp = |v: &[T]| v[j] + t * (v[j + 1] - v[j]);
        Ok(StageValues {
            p_defer: lerp(&self.defer_values[row]),
            slots: lerp(&self.slot_values[row]),
        })
    }

    /// Writes the cache format: magic, version, step, stage list, grid size,
    /// then per pair the defer row followed by the slots row (little-endian
    /// `f64`).
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&self.step.as_f64().to_le_bytes())?;
        out.write_all(&(self.stages.len() as u32).to_le_bytes())?;
        for s in &self.stages {
            out.write_all(&s.window.to_le_bytes())?;
            let m = s.deferral.finite().unwrap_or(INFINITE_TAG);
            out.write_all(&m.to_le_bytes())?;
        }
        out.write_all(&(self.nodes.len() as u32).to_le_bytes())?;
        for r in 0..self.pairs.len() {
            for v in self.defer_values[r].iter().chain(&self.slot_values[r]) {
                out.write_all(&v.as_f64().to_le_bytes())?;
            }
        }
        out.flush()
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let io = |e: std::io::Error| Error::Cache(e.to_string());
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(Error::Cache("not a kernel table file".into()));
        }
        let version = read_u32(&mut input)?;
        if version != VERSION {
            return Err(Error::Cache(format!("unsupported table version {version}")));
        }
        let step = T::lit(read_f64(&mut input)?);
        let m = read_u32(&mut input)? as usize;
        let mut stages = Vec::with_capacity(m);
        for _ in 0..m {
            let window = read_u32(&mut input)?;
            let tag = read_u32(&mut input)?;
            let deferral = if tag == INFINITE_TAG {
                Deferral::Infinite
            } else {
                Deferral::Finite(tag)
            };
            stages.push(Stage { window, deferral });
        }
        let points = read_u32(&mut input)? as usize;
        let nodes = grid(step);
        if nodes.len() != points {
            return Err(Error::Cache(format!(
                "grid of {points} points does not match step {step}"
            )));
        }
        let (pairs, rows) = layout(&stages);
        let mut defer_values = Vec::with_capacity(pairs.len());
        let mut slot_values = Vec::with_capacity(pairs.len());
        for _ in &pairs {
            defer_values.push(read_row(&mut input, points)?);
            slot_values.push(read_row(&mut input, points)?);
        }
        Ok(KernelTable {
            step,
            nodes,
            stages,
            pairs,
            rows,
            defer_values,
            slot_values,
        })
    }

    /// Cache file name keyed by the `(W, M)` pairs and the step.
    pub fn cache_key(schedule: &StageSchedule, step: T) -> String {
        let mut key = String::from("kernel");
        for s in schedule.stages() {
            key.push_str(&format!("_w{}m{}", s.window, s.deferral));
        }
        key.push_str(&format!("_step{:e}.bin", step.as_f64()));
        key
    }
}

fn read_u32<R: Read>(input: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    input
        .read_exact(&mut b)
        .map_err(|e| Error::Cache(e.to_string()))?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(input: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    input
        .read_exact(&mut b)
        .map_err(|e| Error::Cache(e.to_string()))?;
    Ok(f64::from_le_bytes(b))
}

fn read_row<T: Scalar, R: Read>(input: &mut R, points: usize) -> Result<Vec<T>> {
    (0..points).map(|_| read_f64(input).map(T::lit)).collect()
}
