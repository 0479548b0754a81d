//! Scenario files: which instance to build, which schemes to run on it and
//! where the results go.
//!
//! ```json
//! {
//!   "format_version": 1,
//!   "instance": { "generator": "state_estimation", "seed": 3, "params": { "areas": 3 } },
//!   "schemes": ["gbs", { "scheme": "prox_jacobi", "gamma": 0.8 }],
//!   "defaults": { "max_iter": 20000 },
//!   "output_dir": "out",
//!   "trace_format": "csv"
//! }
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use mbadmm::solvers::UnknownScheme;
use mbadmm::trace::TraceFormat;
use mbadmm::{DMatrix, ProxPolicy, Scheme, SolverConfig};
use serde::Deserialize;
use serde_json::Value;

use crate::error::ScenarioError;

pub const SCENARIO_VERSION: u32 = 1;

pub const GENERATORS: [&str; 5] = ["random_qp", "state_estimation", "energy_management", "scopf", "gauss_seidel_stress"];

#[derive(Debug, Clone, PartialEq)]
pub enum InstanceSource {
    File(PathBuf),
    Generator {
        name: String,
        seed: u64,
        params: BTreeMap<String, Value>,
    },
}

/// Start point for every scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum StartPoint {
    Zero,
    /// Every coordinate of every block set to this value.
    Fill(f64),
    Blocks(Vec<Vec<f64>>),
}

#[derive(Debug, Clone)]
pub struct SchemeRun {
    pub label: String,
    pub config: SolverConfig,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub instance: InstanceSource,
    pub runs: Vec<SchemeRun>,
    pub output_dir: Option<PathBuf>,
    pub trace_format: TraceFormat,
    pub start: StartPoint,
    /// Compute the centralized optimum for relative gaps.
    pub oracle: bool,
    /// Write measured wall times; zeros make reruns byte-identical.
    pub record_wall_time: bool,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default = "version_one")]
    format_version: u32,
    instance: RawInstance,
    schemes: Vec<RawScheme>,
    #[serde(default)]
    defaults: Overrides,
    output_dir: Option<PathBuf>,
    #[serde(default)]
    trace_format: Option<String>,
    #[serde(default)]
    x0: Option<RawStart>,
    #[serde(default = "yes")]
    oracle: bool,
    #[serde(default = "yes")]
    record_wall_time: bool,
}

fn version_one() -> u32 {
    SCENARIO_VERSION
}

fn yes() -> bool {
    true
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInstance {
    file: Option<PathBuf>,
    generator: Option<String>,
    seed: Option<u64>,
    #[serde(default)]
    params: BTreeMap<String, Value>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawStart {
    Fill(f64),
    Blocks(Vec<Vec<f64>>),
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawScheme {
    Name(String),
    Detailed {
        scheme: String,
        label: Option<String>,
        #[serde(flatten)]
        overrides: Overrides,
    },
}

#[derive(Debug, Default, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct Overrides {
    rho: Option<f64>,
    alpha: Option<f64>,
    gamma: Option<f64>,
    prox_policy: Option<RawPolicy>,
    eps_abs: Option<f64>,
    eps_rel: Option<f64>,
    max_iter: Option<usize>,
    parallel_workers: Option<usize>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
enum RawPolicy {
    Zero,
    Linearized { factor: f64 },
    /// One square matrix per block, as rows.
    Custom(Vec<Vec<Vec<f64>>>),
}

impl Overrides {
    fn apply(&self, cfg: &mut SolverConfig) -> Result<(), ScenarioError> {
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = self.$f { cfg.$f = v; })*};
        }
        set!(rho, alpha, gamma, eps_abs, eps_rel, max_iter, parallel_workers);
        if let Some(p) = &self.prox_policy {
            cfg.prox_policy = match p {
                RawPolicy::Zero => ProxPolicy::Zero,
                RawPolicy::Linearized { factor } => ProxPolicy::Linearized { factor: *factor },
                RawPolicy::Custom(mats) => ProxPolicy::Custom(
                    mats.iter()
                        .enumerate()
                        .map(|(i, rows)| matrix_from_rows(rows).map_err(|e| ScenarioError::Invalid(format!("prox_policy block {}: {e}", i + 1))))
                        .collect::<Result<_, _>>()?,
                ),
            };
        }
        Ok(())
    }
}

fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>, String> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err("ragged rows".into());
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]))
}

impl fmt::Display for InstanceSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InstanceSource::File(p) => write!(f, "file {}", p.display()),
            InstanceSource::Generator { name, seed, .. } => write!(f, "{name} (seed {seed})"),
        }
    }
}

/// Reads and validates a scenario file.
pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut scenario = parse_scenario_str(&text)?;
    // relative instance files resolve against the scenario's directory
    if let InstanceSource::File(f) = &mut scenario.instance {
        if f.is_relative() {
            if let Some(dir) = path.parent() {
                *f = dir.join(&*f);
            }
        }
    }
    Ok(scenario)
}

pub fn parse_scenario_str(text: &str) -> Result<Scenario, ScenarioError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawScenario = serde_path_to_error::deserialize(de).map_err(|e| {
        let inner = e.inner();
        ScenarioError::Parse {
            field: e.path().to_string(),
            line: inner.line(),
            column: inner.column(),
            message: inner.to_string(),
        }
    })?;
    if raw.format_version != SCENARIO_VERSION {
        return Err(ScenarioError::Invalid(format!(
            "format_version {} is not supported (expected {SCENARIO_VERSION})",
            raw.format_version
        )));
    }
    let instance = match (raw.instance.file, raw.instance.generator) {
        (Some(file), None) => {
            if raw.instance.seed.is_some() || !raw.instance.params.is_empty() {
                return Err(ScenarioError::Invalid("instance.seed and instance.params only apply to generators".into()));
            }
            InstanceSource::File(file)
        }
        (None, Some(name)) => {
            check_generator(&name, &raw.instance.params)?;
            InstanceSource::Generator {
                name,
                seed: raw.instance.seed.unwrap_or(0),
                params: raw.instance.params,
            }
        }
        _ => return Err(ScenarioError::Invalid("instance needs exactly one of `file` or `generator`".into())),
    };
    if raw.schemes.is_empty() {
        return Err(ScenarioError::Invalid("schemes must not be empty".into()));
    }
    let mut runs = Vec::with_capacity(raw.schemes.len());
    for entry in &raw.schemes {
        let (name, label, overrides) = match entry {
            RawScheme::Name(n) => (n, None, None),
            RawScheme::Detailed { scheme, label, overrides } => (scheme, label.clone(), Some(overrides)),
        };
        let scheme: Scheme = name.parse().map_err(|e: UnknownScheme| ScenarioError::UnknownScheme(e))?;
        let mut config = SolverConfig::new(scheme);
        raw.defaults.apply(&mut config)?;
        if let Some(o) = overrides {
            o.apply(&mut config)?;
        }
        config
            .validate()
            .map_err(|e| ScenarioError::Invalid(format!("scheme {scheme}: {e}")))?;
        let label = label.unwrap_or_else(|| scheme.name().to_string());
        if runs.iter().any(|r: &SchemeRun| r.label == label) {
            return Err(ScenarioError::Invalid(format!("duplicate run label `{label}`; set `label` to tell runs apart")));
        }
        runs.push(SchemeRun { label, config });
    }
    let trace_format = match raw.trace_format.as_deref() {
        None => TraceFormat::Csv,
        Some(s) => s.parse().map_err(|e: String| ScenarioError::Invalid(e))?,
    };
    let start = match raw.x0 {
        None => StartPoint::Zero,
        Some(RawStart::Fill(v)) => StartPoint::Fill(v),
        Some(RawStart::Blocks(b)) => StartPoint::Blocks(b),
    };
    Ok(Scenario {
        instance,
        runs,
        output_dir: raw.output_dir,
        trace_format,
        start,
        oracle: raw.oracle,
        record_wall_time: raw.record_wall_time,
    })
}

fn required(name: &str) -> &'static [&'static str] {
    match name {
        "random_qp" => &["blocks", "rows"],
        "energy_management" => &["generators", "loads", "nets", "horizon"],
        "scopf" => &["buses", "contingencies"],
        _ => &[],
    }
}

fn known(name: &str) -> &'static [&'static str] {
    match name {
        "random_qp" => &["blocks", "rows", "max_block_dim"],
        "state_estimation" => &[
            "areas",
            "interior",
            "boundary_size",
            "edges",
            "redundancy",
            "attack_cardinality",
            "beta",
            "noise_sigma",
        ],
        "energy_management" => &[
            "generators",
            "loads",
            "nets",
            "horizon",
            "curtailable_loads",
            "storage_units",
            "load_scale",
            "lines",
        ],
        "scopf" => &["buses", "contingencies", "ramp_limit", "rating_factor", "branches", "outages"],
        _ => &[],
    }
}

fn check_generator(name: &str, params: &BTreeMap<String, Value>) -> Result<(), ScenarioError> {
    if !GENERATORS.contains(&name) {
        return Err(ScenarioError::Invalid(format!(
            "unknown generator `{name}`; expected one of {}",
            GENERATORS.join(", ")
        )));
    }
    if let Some(missing) = required(name).iter().find(|p| !params.contains_key(**p)) {
        return Err(ScenarioError::MissingParameter {
            generator: name.to_string(),
            parameter: missing.to_string(),
        });
    }
    if let Some(extra) = params.keys().find(|k| !known(name).contains(&k.as_str())) {
        return Err(ScenarioError::Invalid(format!(
            "generator `{name}` has no parameter `{extra}`; expected one of [{}]",
            known(name).join(", ")
        )));
    }
    Ok(())
}
