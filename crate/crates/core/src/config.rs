//! Experiment configuration files.
//!
//! Configs are TOML. Top-level keys:
//!
//! | key | default | meaning |
//! |-----|---------|---------|
//! | `allocation` | required | mechanism name or list of names |
//! | `choice` | required | mechanism name or list of names |
//! | `seed` | `0` | integer or list of integers |
//! | `window` | `100` | history window, in users |
//! | `list_length` | `10` | delivered list length `k` |
//! | `recommender_weight` | `1.0` | weight of the recommender's ballot |
//! | `compatibility_exponent` | `2.0` | exponent on compatibility in allocation |
//! | `[[agents]]` | required | `name`, `feature`, `target_proportion`, `delta` |
//! | `[data]` | generated with defaults | see [`DataSection`] |
//!
//! Any key given as a list becomes a grid axis. Unknown keys are errors.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::allocation::{AllocationMechanism, DEFAULT_COMPATIBILITY_EXPONENT};
use crate::choice::ChoiceMechanism;
use crate::datagen::GenSpec;
use crate::error::{Error, Result};
use crate::model::AgentSpec;
use crate::sim::{SimConfig, DEFAULT_LIST_LENGTH, DEFAULT_RECOMMENDER_WEIGHT, DEFAULT_WINDOW};

/// A scalar or a list of values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }

    fn is_list(&self) -> bool {
        matches!(self, OneOrMany::Many(_))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Generated,
    Ingested,
}

/// The `[data]` table.
///
/// `source = "generated"` takes either an inline `[data.generator]` table
/// or a `genspec` file path; with neither, the default generator is used.
/// `source = "ingested"` takes CSV paths: `recommendations` and
/// `features` are required; `compatibilities`, `profiles` and `arrivals`
/// are optional. Relative paths resolve against the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub source: DataKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genspec: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GenSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recommendations: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compatibilities: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profiles: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub arrivals: Option<PathBuf>,
}

impl Default for DataSection {
    fn default() -> Self {
        DataSection {
            source: DataKind::Generated,
            genspec: None,
            generator: None,
            recommendations: None,
            features: None,
            compatibilities: None,
            profiles: None,
            arrivals: None,
        }
    }
}

/// The file format as written by users and as echoed in manifests.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    /// Set in manifests; ignored on input.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub version: Option<String>,
    #[serde(default = "default_seed")]
    pub seed: OneOrMany<u64>,
    #[serde(default = "default_window")]
    pub window: usize,
    #[serde(default = "default_list_length")]
    pub list_length: usize,
    #[serde(default = "default_recommender_weight")]
    pub recommender_weight: f64,
    #[serde(default = "default_exponent")]
    pub compatibility_exponent: f64,
    pub allocation: OneOrMany<String>,
    pub choice: OneOrMany<String>,
    pub agents: Vec<AgentSpec>,
    #[serde(default)]
    pub data: DataSection,
}

fn default_seed() -> OneOrMany<u64> {
    OneOrMany::One(0)
}
fn default_window() -> usize {
    DEFAULT_WINDOW
}
fn default_list_length() -> usize {
    DEFAULT_LIST_LENGTH
}
fn default_recommender_weight() -> f64 {
    DEFAULT_RECOMMENDER_WEIGHT
}
fn default_exponent() -> f64 {
    DEFAULT_COMPATIBILITY_EXPONENT
}

/// Where a run's data comes from, with paths resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Generated(GenSpec),
    Ingested(IngestPaths),
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestPaths {
    pub recommendations: PathBuf,
    pub features: PathBuf,
    pub compatibilities: Option<PathBuf>,
    pub profiles: Option<PathBuf>,
    pub arrivals: Option<PathBuf>,
}

/// A validated experiment, possibly spanning a grid of cells.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub allocations: Vec<AllocationMechanism>,
    pub choices: Vec<ChoiceMechanism>,
    pub seeds: Vec<u64>,
    /// Whether cells get named subdirectories.
    pub mechanism_grid: bool,
    pub seed_grid: bool,
    pub window: usize,
    pub list_length: usize,
    pub recommender_weight: f64,
    pub compatibility_exponent: f64,
    pub agents: Vec<AgentSpec>,
    pub data: DataSource,
}

/// One point of the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    /// Subdirectory name, or `None` for a single-cell experiment.
    pub name: Option<String>,
    pub sim: SimConfig,
}

impl ExperimentConfig {
    /// Single-cell experiment on generated data.
    pub fn new(sim: SimConfig, data: DataSource) -> Self {
        ExperimentConfig {
            allocations: vec![sim.allocation],
            choices: vec![sim.choice],
            seeds: vec![sim.seed],
            mechanism_grid: false,
            seed_grid: false,
            window: sim.window,
            list_length: sim.list_length,
            recommender_weight: sim.recommender_weight,
            compatibility_exponent: sim.compatibility_exponent,
            agents: sim.agents,
            data,
        }
    }

    /// Replaces every seed with `seed`.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seeds = vec![seed];
        self.seed_grid = false;
        self
    }

    /// Every cell, allocation-major, then choice, then seed.
    pub fn cells(&self) -> Vec<Cell> {
        let mut cells = Vec::new();
        for &allocation in &self.allocations {
            for &choice in &self.choices {
                for &seed in &self.seeds {
                    let mut parts = Vec::new();
                    if self.mechanism_grid {
                        parts.push(format!("{allocation}_{choice}"));
                    }
                    if self.seed_grid {
                        parts.push(format!("seed{seed}"));
                    }
                    let name = (!parts.is_empty()).then(|| parts.join("_"));
                    cells.push(Cell {
                        name,
                        sim: SimConfig {
                            agents: self.agents.clone(),
                            allocation,
                            choice,
                            recommender_weight: self.recommender_weight,
                            compatibility_exponent: self.compatibility_exponent,
                            window: self.window,
                            list_length: self.list_length,
                            seed,
                        },
                    });
                }
            }
        }
        cells
    }

    pub fn is_grid(&self) -> bool {
        self.mechanism_grid || self.seed_grid
    }

    /// Config file that reproduces exactly one cell.
    pub fn manifest_for(&self, cell: &SimConfig) -> ConfigFile {
        let data = match &self.data {
            DataSource::Generated(spec) => DataSection {
                generator: Some(spec.clone()),
                ..DataSection::default()
            },
            DataSource::Ingested(p) => DataSection {
                source: DataKind::Ingested,
                recommendations: Some(p.recommendations.clone()),
                features: Some(p.features.clone()),
                compatibilities: p.compatibilities.clone(),
                profiles: p.profiles.clone(),
                arrivals: p.arrivals.clone(),
                ..DataSection::default()
            },
        };
        ConfigFile {
            version: Some(env!("CARGO_PKG_VERSION").to_owned()),
            seed: OneOrMany::One(cell.seed),
            window: cell.window,
            list_length: cell.list_length,
            recommender_weight: cell.recommender_weight,
            compatibility_exponent: cell.compatibility_exponent,
            allocation: OneOrMany::One(cell.allocation.name().to_owned()),
            choice: OneOrMany::One(cell.choice.name().to_owned()),
            agents: cell.agents.clone(),
            data,
        }
    }
}

fn toml_de<T: for<'de> Deserialize<'de>>(text: &str, origin: &str) -> Result<T> {
    let de =
        toml::Deserializer::parse(text).map_err(|e| Error::Config(format!("{origin}: {e}")))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.message().to_owned();
        if path == "." {
            Error::Config(format!("{origin}: {message}"))
        } else {
            Error::Config(format!("{origin}: {path}: {message}"))
        }
    })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn base_dir(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Reads a generator spec file.
pub fn parse_genspec(path: impl AsRef<Path>) -> Result<GenSpec> {
    let path = path.as_ref();
    parse_genspec_str(&read_text(path)?, &path.display().to_string())
}

pub fn parse_genspec_str(text: &str, origin: &str) -> Result<GenSpec> {
    // manifests written by `generate` carry a version key
    let mut table: toml::Table = toml_de(text, origin)?;
    table.remove("version");
    let spec: GenSpec = toml_de(&table.to_string(), origin)?;
    spec.validate()
        .map_err(|e| Error::Config(format!("{origin}: {}", strip_prefix(e))))?;
    Ok(spec)
}

fn strip_prefix(e: Error) -> String {
    match e {
        Error::Config(m) => m,
        other => other.to_string(),
    }
}

/// Reads and validates an experiment config file.
pub fn parse_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    parse_config_str(
        &read_text(path)?,
        &base_dir(path),
        &path.display().to_string(),
    )
}

/// Parses config text; relative data paths resolve against `base`.
pub fn parse_config_str(text: &str, base: &Path, origin: &str) -> Result<ExperimentConfig> {
    let file: ConfigFile = toml_de(text, origin)?;
    validate(file, base, origin)
}

fn parse_names<T: FromStr<Err = Error>>(
    key: &str,
    names: &OneOrMany<String>,
    origin: &str,
) -> Result<Vec<T>> {
    let values = names.values();
    if values.is_empty() {
        return Err(Error::Config(format!("{origin}: {key}: list is empty")));
    }
    values
        .iter()
        .map(|n| {
            n.parse::<T>()
                .map_err(|e| Error::Config(format!("{origin}: {key}: {}", strip_prefix(e))))
        })
        .collect()
}

fn validate(file: ConfigFile, base: &Path, origin: &str) -> Result<ExperimentConfig> {
    let fail = |msg: String| Error::Config(format!("{origin}: {msg}"));
    let allocations: Vec<AllocationMechanism> =
        parse_names("allocation", &file.allocation, origin)?;
    let choices: Vec<ChoiceMechanism> = parse_names("choice", &file.choice, origin)?;
    let seeds = file.seed.values();
    if seeds.is_empty() {
        return Err(fail("seed: list is empty".into()));
    }
    if file.agents.is_empty() {
        return Err(fail("agents: at least one agent is required".into()));
    }
    for (i, a) in file.agents.iter().enumerate() {
        a.validate()
            .map_err(|e| fail(format!("agents[{i}]: {}", strip_prefix(e))))?;
        if file.agents[..i].iter().any(|b| b.name == a.name) {
            return Err(fail(format!(
                "agents[{i}].name: duplicate agent name {:?}",
                a.name
            )));
        }
    }
    if file.window == 0 {
        return Err(fail("window: must be >= 1".into()));
    }
    if file.list_length == 0 {
        return Err(fail("list_length: must be >= 1".into()));
    }
    if !(file.recommender_weight >= 0.0 && file.recommender_weight.is_finite()) {
        return Err(fail(
            "recommender_weight: must be a finite value >= 0".into(),
        ));
    }
    if !(file.compatibility_exponent >= 0.0 && file.compatibility_exponent.is_finite()) {
        return Err(fail(
            "compatibility_exponent: must be a finite value >= 0".into(),
        ));
    }

    let d = &file.data;
    let data = match d.source {
        DataKind::Generated => {
            for (key, set) in [
                ("recommendations", d.recommendations.is_some()),
                ("features", d.features.is_some()),
                ("compatibilities", d.compatibilities.is_some()),
                ("profiles", d.profiles.is_some()),
                ("arrivals", d.arrivals.is_some()),
            ] {
                if set {
                    return Err(fail(format!(
                        "data.{key}: not used with source = \"generated\""
                    )));
                }
            }
            let spec = match (&d.genspec, &d.generator) {
                (Some(_), Some(_)) => {
                    return Err(fail(
                        "data: give either genspec or generator, not both".into(),
                    ))
                }
                (Some(p), None) => parse_genspec(resolve(base, p))?,
                (None, Some(g)) => {
                    g.validate()
                        .map_err(|e| fail(format!("data.generator: {}", strip_prefix(e))))?;
                    g.clone()
                }
                (None, None) => GenSpec::default(),
            };
            for (i, a) in file.agents.iter().enumerate() {
                if !spec.feature_names.contains(&a.protected_feature) {
                    return Err(fail(format!(
                        "agents[{i}].feature: {:?} is not a generated feature {:?}",
                        a.protected_feature, spec.feature_names
                    )));
                }
            }
            DataSource::Generated(spec)
        }
        DataKind::Ingested => {
            if d.genspec.is_some() || d.generator.is_some() {
                return Err(fail(
                    "data: genspec/generator not used with source = \"ingested\"".into(),
                ));
            }
            let required = |key: &str, p: &Option<PathBuf>| {
                p.as_deref()
                    .map(|p| resolve(base, p))
                    .ok_or_else(|| fail(format!("data.{key}: required with source = \"ingested\"")))
            };
            DataSource::Ingested(IngestPaths {
                recommendations: required("recommendations", &d.recommendations)?,
                features: required("features", &d.features)?,
                compatibilities: d.compatibilities.as_deref().map(|p| resolve(base, p)),
                profiles: d.profiles.as_deref().map(|p| resolve(base, p)),
                arrivals: d.arrivals.as_deref().map(|p| resolve(base, p)),
            })
        }
    };

    Ok(ExperimentConfig {
        mechanism_grid: file.allocation.is_list() || file.choice.is_list(),
        seed_grid: file.seed.is_list(),
        allocations,
        choices,
        seeds,
        window: file.window,
        list_length: file.list_length,
        recommender_weight: file.recommender_weight,
        compatibility_exponent: file.compatibility_exponent,
        agents: file.agents,
        data,
    })
}

/// Serializes a config file, e.g. a manifest.
pub fn to_toml(file: &ConfigFile) -> Result<String> {
    toml::to_string(file).map_err(|e| Error::Config(format!("cannot serialize config: {e}")))
}
