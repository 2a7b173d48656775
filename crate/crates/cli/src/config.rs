//! Experiment configuration: a TOML file, optionally overridden by flags.
//!
//! ```toml
//! engine = "both"            # analysis | sim | both
//! out = "results/fig5"       # optional
//!
//! [scenario]
//! n = [10, 30, 50]
//! category = "ca32"          # or a list: ["ca32", "ca10"]
//! variant = "standard"       # standard | no-defer | always-defer, or a list
//! lambda = { from = 1.0, to = 12.0, step = 0.5 }   # or [2.0, 8.0]; omit for saturation
//! queue_cap = 1000
//! preload = 0
//!
//! [solver]
//! init_I = [0, 1000]
//! kernel = "table"           # exact | table | exp
//! tolerance = 1e-9
//! table_step = 1e-4
//!
//! [sim]
//! duration_s = 2000
//! warmup_s = 0
//! seeds = [1, 2, 3]
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use plcmac_core::{Category, Variant};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{field}: {message}")]
    Invalid { field: &'static str, message: String },
}

fn invalid(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Analysis,
    Sim,
    Both,
}

impl Engine {
    pub fn analysis(self) -> bool {
        matches!(self, Engine::Analysis | Engine::Both)
    }

    pub fn sim(self) -> bool {
        matches!(self, Engine::Sim | Engine::Both)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum KernelChoice {
    Exact,
    Table,
    Exp,
}

impl KernelChoice {
    pub fn label(self) -> &'static str {
        match self {
            KernelChoice::Exact => "exact",
            KernelChoice::Table => "table",
            KernelChoice::Exp => "exp",
        }
    }
}

impl std::str::FromStr for KernelChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "exact" => Ok(KernelChoice::Exact),
            "table" => Ok(KernelChoice::Table),
            "exp" | "exp_approx" | "exp-approx" => Ok(KernelChoice::Exp),
            other => Err(format!("unknown kernel mode {other:?} (exact, table, exp)")),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T> OneOrMany<T> {
    fn into_vec(self) -> Vec<T> {
        match self {
            OneOrMany::One(x) => vec![x],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum LambdaSpec {
    List(Vec<f64>),
    Range { from: f64, to: f64, step: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    engine: Option<Engine>,
    out: Option<PathBuf>,
    scenario: RawScenario,
    #[serde(default)]
    solver: RawSolver,
    #[serde(default)]
    sim: RawSim,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    n: OneOrMany<u32>,
    category: Option<OneOrMany<String>>,
    variant: Option<OneOrMany<String>>,
    lambda: Option<LambdaSpec>,
    queue_cap: Option<u32>,
    preload: Option<u32>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    #[serde(rename = "init_I")]
    init_idle: Option<Vec<f64>>,
    kernel: Option<String>,
    tolerance: Option<f64>,
    table_step: Option<f64>,
    max_iterations: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSim {
    duration_s: Option<f64>,
    warmup_s: Option<f64>,
    seeds: Option<Vec<u64>>,
}

/// A validated experiment: the cross product of the sweep lists.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub engine: Engine,
    pub out: Option<PathBuf>,
    pub ns: Vec<u32>,
    pub categories: Vec<Category>,
    pub variants: Vec<Variant>,
    /// `None` is the saturated point.
    pub lambdas: Vec<Option<f64>>,
    pub queue_cap: u32,
    pub preload: u32,
    pub init_idle: Vec<f64>,
    pub kernel: KernelChoice,
    pub tolerance: Option<f64>,
    pub table_step: f64,
    pub max_iterations: Option<usize>,
    pub duration_s: f64,
    pub warmup_s: f64,
    pub seeds: Vec<u64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            engine: Engine::Analysis,
            out: None,
            ns: vec![10],
            categories: vec![Category::Ca32],
            variants: vec![Variant::Standard],
            lambdas: vec![None],
            queue_cap: plcmac_core::mac::DEFAULT_QUEUE_CAP,
            preload: 0,
            init_idle: plcmac_core::solver::DEFAULT_INIT_IDLE.to_vec(),
            kernel: KernelChoice::Exact,
            tolerance: None,
            table_step: plcmac_core::kernel::DEFAULT_STEP,
            max_iterations: None,
            duration_s: 2000.0,
            warmup_s: 0.0,
            seeds: vec![1],
        }
    }
}

fn expand_lambda(spec: LambdaSpec) -> Result<Vec<f64>, ConfigError> {
    match spec {
        LambdaSpec::List(v) => Ok(v),
        LambdaSpec::Range { from, to, step } => {
            if !(step > 0.0 && step.is_finite()) {
                return Err(invalid("scenario.lambda.step", "must be positive"));
            }
            if to < from {
                return Err(invalid("scenario.lambda", "range ends before it starts"));
            }
            let count = ((to - from) / step + 1e-9).floor() as usize + 1;
            // Multiplying rather than accumulating keeps the grid free of drift.
            Ok((0..count).map(|k| from + k as f64 * step).collect())
        }
    }
}

fn parse_list<T: std::str::FromStr<Err = plcmac_core::Error>>(
    field: &'static str,
    raw: Option<OneOrMany<String>>,
    default: T,
) -> Result<Vec<T>, ConfigError> {
    match raw {
        None => Ok(vec![default]),
        Some(v) => v
            .into_vec()
            .iter()
            .map(|s| s.parse().map_err(|e: plcmac_core::Error| invalid(field, e.to_string())))
            .collect(),
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let raw: RawConfig = toml::from_str(text)?;
        let d = ExperimentConfig::default();
        let lambdas = match raw.scenario.lambda {
            None => vec![None],
            Some(spec) => expand_lambda(spec)?.into_iter().map(Some).collect(),
        };
        let kernel = match raw.solver.kernel {
            None => d.kernel,
            Some(k) => k.parse().map_err(|e: String| invalid("solver.kernel", e))?,
        };
        let cfg = ExperimentConfig {
            engine: raw.engine.unwrap_or(d.engine),
            out: raw.out,
            ns: raw.scenario.n.into_vec(),
            categories: parse_list("scenario.category", raw.scenario.category, Category::Ca32)?,
            variants: parse_list("scenario.variant", raw.scenario.variant, Variant::Standard)?,
            lambdas,
            queue_cap: raw.scenario.queue_cap.unwrap_or(d.queue_cap),
            preload: raw.scenario.preload.unwrap_or(d.preload),
            init_idle: raw.solver.init_idle.unwrap_or(d.init_idle),
            kernel,
            tolerance: raw.solver.tolerance,
            table_step: raw.solver.table_step.unwrap_or(d.table_step),
            max_iterations: raw.solver.max_iterations,
            duration_s: raw.sim.duration_s.unwrap_or(d.duration_s),
            warmup_s: raw.sim.warmup_s.unwrap_or(d.warmup_s),
            seeds: raw.sim.seeds.unwrap_or(d.seeds),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_owned(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let nonempty = |field, len: usize| {
            if len == 0 {
                Err(invalid(field, "sweep list is empty"))
            } else {
                Ok(())
            }
        };
        nonempty("scenario.n", self.ns.len())?;
        nonempty("scenario.category", self.categories.len())?;
        nonempty("scenario.variant", self.variants.len())?;
        nonempty("scenario.lambda", self.lambdas.len())?;
        nonempty("solver.init_I", self.init_idle.len())?;
        nonempty("sim.seeds", self.seeds.len())?;
        if self.ns.contains(&0) {
            return Err(invalid("scenario.n", "node counts must be at least 1"));
        }
        if self.lambdas.iter().flatten().any(|l| !(*l >= 0.0 && l.is_finite())) {
            return Err(invalid("scenario.lambda", "rates must be finite and >= 0"));
        }
        if self.preload > self.queue_cap {
            return Err(invalid("scenario.preload", "exceeds queue_cap"));
        }
        if self.init_idle.iter().any(|i| !(*i >= 0.0 && i.is_finite())) {
            return Err(invalid("solver.init_I", "values must be finite and >= 0"));
        }
        if !(self.table_step > 0.0 && self.table_step <= 1.0) {
            return Err(invalid("solver.table_step", "must lie in (0, 1]"));
        }
        if let Some(t) = self.tolerance {
            if !(t > 0.0) {
                return Err(invalid("solver.tolerance", "must be positive"));
            }
        }
        if !(self.warmup_s >= 0.0 && self.duration_s > self.warmup_s && self.duration_s.is_finite()) {
            return Err(invalid("sim.duration_s", "need duration_s > warmup_s >= 0"));
        }
        let distinct: HashSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(invalid("sim.seeds", "seeds must be distinct"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let cfg = ExperimentConfig::from_toml("[scenario]\nn = 1\n").unwrap();
        assert_eq!(cfg.ns, vec![1]);
        assert_eq!(cfg.lambdas, vec![None]);
        assert_eq!(cfg.init_idle, vec![0.0, 1000.0]);
        assert_eq!(cfg.engine, Engine::Analysis);
    }

    #[test]
    fn lambda_range_is_inclusive_and_drift_free() {
        let cfg = ExperimentConfig::from_toml(
            "[scenario]\nn = [50]\nlambda = { from = 0.5, to = 2.0, step = 0.1 }\n",
        )
        .unwrap();
        assert_eq!(cfg.lambdas.len(), 16);
        assert_eq!(cfg.lambdas[15], Some(0.5 + 15.0 * 0.1));
    }

    #[test]
    fn lists_of_categories_and_variants() {
        let cfg = ExperimentConfig::from_toml(
            "[scenario]\nn = [5]\ncategory = [\"ca32\", \"CA1/0\"]\nvariant = [\"no-defer\", \"always-defer\"]\n",
        )
        .unwrap();
        assert_eq!(cfg.categories, vec![Category::Ca32, Category::Ca10]);
        assert_eq!(cfg.variants, vec![Variant::NoDeferral, Variant::AlwaysDefer]);
    }

    #[test]
    fn empty_sweep_is_rejected() {
        let err = ExperimentConfig::from_toml("[scenario]\nn = []\n").unwrap_err();
        assert!(err.to_string().contains("scenario.n"), "{err}");
        let err = ExperimentConfig::from_toml("[scenario]\nn = 3\n[sim]\nseeds = []\n").unwrap_err();
        assert!(err.to_string().contains("sim.seeds"), "{err}");
    }

    #[test]
    fn duplicate_seeds_are_rejected() {
        let err = ExperimentConfig::from_toml("[scenario]\nn = 3\n[sim]\nseeds = [4, 4]\n").unwrap_err();
        assert!(err.to_string().contains("distinct"));
    }

    #[test]
    fn parse_errors_carry_location() {
        let err = ExperimentConfig::from_toml("[scenario]\nn = 3\nlambda = \"fast\"\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
        let err = ExperimentConfig::from_toml("[scenario]\nn = 3\nnodes = 4\n").unwrap_err();
        assert!(err.to_string().contains("nodes"), "{err}");
    }

    #[test]
    fn bad_values_name_the_field() {
        let err = ExperimentConfig::from_toml("[scenario]\nn = 3\ncategory = \"ca7\"\n").unwrap_err();
        assert!(err.to_string().starts_with("scenario.category"), "{err}");
        let err = ExperimentConfig::from_toml("[scenario]\nn = 3\n[solver]\nkernel = \"fast\"\n").unwrap_err();
        assert!(err.to_string().starts_with("solver.kernel"), "{err}");
        let err = ExperimentConfig::from_toml("[scenario]\nn = 3\n[sim]\nduration_s = 5\nwarmup_s = 10\n").unwrap_err();
        assert!(err.to_string().starts_with("sim.duration_s"), "{err}");
    }
}
