//! Study configuration files.
//!
//! A study file is TOML with these top-level sections, all optional:
//!
//! ```toml
//! output = "runs"                 # output root
//!
//! [[trajectories]]                # one of: circuit, file, segments
//! circuit = "C1"
//! constraints = "S1"              # preset name or a table
//!
//! [vehicle]                       # overrides of the default vehicle
//! [sensor]
//! [simulation]
//! [metrics]
//! [controller]                    # preset = "...", or type = "pid" | "mfc" | "samfc" + gains
//! [optimizer]                     # controller, budget, seed, bounds, box
//! ```
//!
//! Unknown keys are rejected everywhere. Speeds carry a unit ("35 km/h").

use std::path::{Path, PathBuf};

use mfclab_core::circuits;
use mfclab_core::controllers::{ControllerConfig, ControllerKind, CONTROL_PERIOD};
use mfclab_core::metrics::SpectralConfig;
use mfclab_core::pareto_opt::{AcceptableBox, ParameterSpec, SearchOptions};
use mfclab_core::path_track::{plan_speed, DynamicConstraints, PathSpec, Segment, Trajectory};
use mfclab_core::vehicle_sim::{SensorModel, SimOptions, VehicleParams};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Either a named constraint preset or explicit limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConstraintsRef {
    Preset(String),
    Explicit(DynamicConstraints),
}

impl ConstraintsRef {
    fn resolve(&self) -> Result<DynamicConstraints, CliError> {
        match self {
            ConstraintsRef::Preset(name) => DynamicConstraints::preset(name)
                .ok_or_else(|| CliError::Config(format!("unknown constraint preset `{name}` (expected T1-T3, S1, S2)"))),
            ConstraintsRef::Explicit(c) => Ok(*c),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Built-in circuit name.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit: Option<String>,
    /// Path definition file, relative to the study file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repeat: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segments: Option<Vec<Segment>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraints: Option<ConstraintsRef>,
}

impl TrajectoryEntry {
    pub fn circuit(name: &str) -> Self {
        TrajectoryEntry {
            name: None,
            circuit: Some(name.to_string()),
            file: None,
            closed: None,
            repeat: None,
            segments: None,
            constraints: None,
        }
    }

    pub fn label(&self, index: usize) -> String {
        self.name
            .clone()
            .or_else(|| self.circuit.clone())
            .or_else(|| self.file.as_ref().and_then(|f| f.file_stem()).map(|s| s.to_string_lossy().into_owned()))
            .unwrap_or_else(|| format!("path{index}"))
    }

    fn resolve(&self, index: usize, base: &Path) -> Result<Trajectory, CliError> {
        let ctx = |m: String| CliError::Config(format!("trajectories[{index}]: {m}"));
        let sources = [self.circuit.is_some(), self.file.is_some(), self.segments.is_some()];
        if sources.iter().filter(|s| **s).count() != 1 {
            return Err(ctx("give exactly one of `circuit`, `file` or `segments`".into()));
        }
        if self.segments.is_none() && (self.closed.is_some() || self.repeat.is_some()) {
            return Err(ctx("`closed` and `repeat` only apply to inline `segments`".into()));
        }
        let spec = if let Some(name) = &self.circuit {
            circuits::spec(name).ok_or_else(|| ctx(format!("unknown circuit `{name}` (expected C1, C2 or C3)")))?
        } else if let Some(file) = &self.file {
            let path = base.join(file);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| ctx(format!("cannot read `{}`: {e}", path.display())))?;
            toml::from_str::<PathSpec>(&text).map_err(|e| ctx(format!("{}: {e}", path.display())))?
        } else {
            PathSpec {
                name: self.name.clone(),
                closed: self.closed.unwrap_or(false),
                repeat: self.repeat.unwrap_or(1),
                constraints: None,
                segments: self.segments.clone().unwrap_or_default(),
            }
        };
        let constraints = match &self.constraints {
            Some(c) => c.resolve().map_err(|e| ctx(e.to_string()))?,
            None => spec.constraints.ok_or_else(|| ctx("no `constraints` given and the path defines none".into()))?,
        };
        let path = spec.build().map_err(|e| ctx(e.to_string()))?;
        Ok(plan_speed(&path, &constraints))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub controller: ControllerKind,
    #[serde(default = "default_budget")]
    pub budget: usize,
    #[serde(default)]
    pub seed: u64,
    /// Overrides the default search ranges; must list every parameter.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bounds: Option<ParameterSpec>,
    #[serde(default, rename = "box")]
    pub acceptable_box: AcceptableBox,
}

fn default_budget() -> usize {
    400
}

impl OptimizerConfig {
    pub fn parameter_spec(&self) -> ParameterSpec {
        self.bounds.clone().unwrap_or_else(|| ParameterSpec::default_for(self.controller))
    }

    pub fn search_options(&self) -> SearchOptions {
        SearchOptions { budget: self.budget, seed: self.seed, ..Default::default() }
    }
}

/// A fully validated study configuration. Serializing it and parsing the
/// result yields an equal value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub trajectories: Vec<TrajectoryEntry>,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub sensor: SensorModel,
    #[serde(default)]
    pub simulation: SimOptions,
    #[serde(default)]
    pub metrics: SpectralConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub controller: Option<ControllerConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerConfig>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        StudyConfig {
            output: None,
            trajectories: Vec::new(),
            vehicle: VehicleParams::default(),
            sensor: SensorModel::default(),
            simulation: SimOptions::default(),
            metrics: SpectralConfig::default(),
            controller: None,
            optimizer: None,
        }
    }
}

/// Same as [`StudyConfig`] but with the controller section kept raw, so a
/// preset reference or a missing `type` can be reported precisely.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStudy {
    #[serde(default)]
    output: Option<PathBuf>,
    #[serde(default)]
    trajectories: Vec<TrajectoryEntry>,
    #[serde(default)]
    vehicle: VehicleParams,
    #[serde(default)]
    sensor: SensorModel,
    #[serde(default)]
    simulation: SimOptions,
    #[serde(default)]
    metrics: SpectralConfig,
    #[serde(default)]
    controller: Option<toml::Table>,
    #[serde(default)]
    optimizer: Option<OptimizerConfig>,
}

fn parse_controller(table: toml::Table) -> Result<ControllerConfig, CliError> {
    if let Some(preset) = table.get("preset") {
        if table.len() > 1 {
            return Err(CliError::Config("controller: `preset` cannot be combined with other keys".into()));
        }
        let name = preset.as_str().ok_or_else(|| CliError::Config("controller.preset must be a string".into()))?;
        return preset_config(name);
    }
    if !table.contains_key("type") {
        return Err(CliError::Config("controller.type required".into()));
    }
    ControllerConfig::deserialize(toml::Value::Table(table)).map_err(|e| CliError::Config(format!("controller: {e}")))
}

pub fn preset_config(name: &str) -> Result<ControllerConfig, CliError> {
    ControllerConfig::preset(name).ok_or_else(|| {
        CliError::Config(format!("unknown controller preset `{name}` (expected one of {:?})", ControllerConfig::PRESETS))
    })
}

impl StudyConfig {
    /// Parses and validates a study file.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let raw: RawStudy = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        let controller = raw.controller.map(parse_controller).transpose()?;
        let config = StudyConfig {
            output: raw.output,
            trajectories: raw.trajectories,
            vehicle: raw.vehicle,
            sensor: raw.sensor,
            simulation: raw.simulation,
            metrics: raw.metrics,
            controller,
            optimizer: raw.optimizer,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read `{}`: {e}", path.display())))?;
        let config = Self::parse(&text)?;
        // Relative trajectory files are resolved against the study file.
        let base = path.parent().unwrap_or(Path::new("."));
        let mut config = config;
        for t in &mut config.trajectories {
            if let Some(f) = &t.file {
                if f.is_relative() {
                    t.file = Some(base.join(f));
                }
            }
        }
        config.trajectories(Path::new("."))?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("study configurations serialize")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.vehicle.validate().map_err(|e| CliError::Config(format!("vehicle: {e}")))?;
        if !(self.sensor.sigma_xy >= 0.0 && self.sensor.sigma_psi >= 0.0) {
            return Err(CliError::Config("sensor: sigmas must be non-negative".into()));
        }
        self.metrics.validate().map_err(|e| CliError::Config(format!("metrics: {e}")))?;
        if (self.simulation.control_period - CONTROL_PERIOD).abs() > 1e-12 {
            return Err(CliError::Config(format!("simulation.control_period must be {CONTROL_PERIOD} s")));
        }
        if (self.metrics.fs * self.simulation.control_period - 1.0).abs() > 1e-9 {
            return Err(CliError::Config("metrics.fs must equal the control rate".into()));
        }
        if let Some(c) = &self.controller {
            c.validate(self.simulation.control_period).map_err(|e| CliError::Config(format!("controller: {e}")))?;
        }
        if let Some(o) = &self.optimizer {
            let spec = o.parameter_spec();
            spec.validate().map_err(|e| CliError::Config(format!("optimizer.bounds: {e}")))?;
            if spec.names() != o.controller.parameter_names() {
                return Err(CliError::Config(format!(
                    "optimizer.bounds: {} needs bounds for {:?} in that order",
                    o.controller.name(),
                    o.controller.parameter_names()
                )));
            }
            o.search_options().validate().map_err(|e| CliError::Config(format!("optimizer: {e}")))?;
            o.acceptable_box.validate().map_err(|e| CliError::Config(format!("optimizer.box: {e}")))?;
        }
        Ok(())
    }

    /// Trajectory entries, defaulting to the three built-in circuits.
    pub fn trajectory_entries(&self) -> Vec<TrajectoryEntry> {
        if self.trajectories.is_empty() {
            circuits::NAMES.iter().map(|n| TrajectoryEntry::circuit(n)).collect()
        } else {
            self.trajectories.clone()
        }
    }

    /// Planned trajectories with their labels.
    pub fn trajectories(&self, base: &Path) -> Result<Vec<(String, Trajectory)>, CliError> {
        let mut out: Vec<(String, Trajectory)> = Vec::new();
        for (i, entry) in self.trajectory_entries().iter().enumerate() {
            let label = entry.label(i);
            if out.iter().any(|(l, _)| *l == label) {
                return Err(CliError::Config(format!("trajectories[{i}]: duplicate name `{label}`")));
            }
            out.push((label, entry.resolve(i, base)?));
        }
        Ok(out)
    }
}
