//! Command-line front end for the tag-to-tag network models: named
//! scenarios, layered JSON configuration, and reproducible artifact
//! directories.

pub mod artifact;
pub mod overrides;
pub mod scenarios;

use clap::ValueEnum;
use serde_json::Value;
use thiserror::Error;

use artifact::Artifact;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or arguments; exit code 2.
    #[error("config error: {0}")]
    Config(String),
    /// Failure while running or writing results; exit code 3.
    #[error("runtime error: {0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

/// Model-layer errors all describe impossible setups (bad geometry,
/// out-of-range parameters, unknown tags), so they surface as config
/// errors.
impl From<t2t_core::Error> for CliError {
    fn from(e: t2t_core::Error) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScenarioKind {
    /// Random-placement connectivity sweep over tag counts.
    Coverage,
    /// Analytic maximum-range ladder for a relay line.
    Range,
    /// Deployed relay lines checked against their link graphs.
    LineRange,
    /// Per-cell link coverage map around a fixed tag.
    GridCoverage,
    /// Discrete-event MAC simulation on a mesh or chain.
    MacSim,
    /// Strategy cost table, optionally simulator-validated.
    Efficiency,
    /// Two-exciter relay bridge carried end to end by the MAC.
    Bridge,
}

impl ScenarioKind {
    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::Coverage => "coverage",
            ScenarioKind::Range => "range",
            ScenarioKind::LineRange => "line-range",
            ScenarioKind::GridCoverage => "grid-coverage",
            ScenarioKind::MacSim => "mac-sim",
            ScenarioKind::Efficiency => "efficiency",
            ScenarioKind::Bridge => "bridge",
        }
    }

    pub fn all() -> [ScenarioKind; 7] {
        [
            ScenarioKind::Coverage,
            ScenarioKind::Range,
            ScenarioKind::LineRange,
            ScenarioKind::GridCoverage,
            ScenarioKind::MacSim,
            ScenarioKind::Efficiency,
            ScenarioKind::Bridge,
        ]
    }
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("config serializes")
}

fn from_value<T: serde::de::DeserializeOwned>(v: &Value) -> Result<T, CliError> {
    serde_json::from_value(v.clone()).map_err(|e| CliError::Config(e.to_string()))
}

/// The complete default configuration of a scenario, as the JSON object
/// that config files and `--set` flags patch.
pub fn default_config(kind: ScenarioKind) -> Value {
    match kind {
        ScenarioKind::Coverage => to_value(&scenarios::coverage::Config::default()),
        ScenarioKind::Range => to_value(&scenarios::range::Config::default()),
        ScenarioKind::LineRange => to_value(&scenarios::line_range::Config::default()),
        ScenarioKind::GridCoverage => to_value(&scenarios::grid_coverage::Config::default()),
        ScenarioKind::MacSim => to_value(&scenarios::mac_sim::Config::default()),
        ScenarioKind::Efficiency => to_value(&scenarios::efficiency::Config::default()),
        ScenarioKind::Bridge => to_value(&scenarios::bridge::Config::default()),
    }
}

#[derive(Debug)]
pub struct ScenarioRun {
    pub artifacts: Vec<Artifact>,
    pub effective_config: Value,
}

/// Parse the merged configuration and execute the scenario. `seed`
/// feeds all randomness; scenarios without any ignore it.
pub fn run_scenario(kind: ScenarioKind, config: &Value, seed: u64) -> Result<ScenarioRun, CliError> {
    let artifacts = match kind {
        ScenarioKind::Coverage => {
            scenarios::coverage::run(&from_value(config)?, seed)?
        }
        ScenarioKind::Range => scenarios::range::run(&from_value(config)?)?,
        ScenarioKind::LineRange => scenarios::line_range::run(&from_value(config)?)?,
        ScenarioKind::GridCoverage => scenarios::grid_coverage::run(&from_value(config)?)?,
        ScenarioKind::MacSim => scenarios::mac_sim::run(&from_value(config)?, seed)?,
        ScenarioKind::Efficiency => scenarios::efficiency::run(&from_value(config)?, seed)?,
        ScenarioKind::Bridge => scenarios::bridge::run(&from_value(config)?, seed)?,
    };
    Ok(ScenarioRun {
        artifacts,
        effective_config: config.clone(),
    })
}

/// Layer an optional config file and `--set` overrides onto a
/// scenario's defaults.
pub fn layered_config(
    kind: ScenarioKind,
    file_patch: Option<&Value>,
    sets: &[String],
) -> Result<Value, CliError> {
    let mut config = default_config(kind);
    if let Some(patch) = file_patch {
        overrides::merge_config(&mut config, patch, "")?;
    }
    for spec in sets {
        overrides::apply_set(&mut config, spec)?;
    }
    Ok(config)
}
