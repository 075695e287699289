use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{DeviceParams, DeviceState, MAX_DEVICE_VOLTAGE, MIN_KINETICS_TEMPERATURE};
use crate::engine::PulseProgram;
use crate::thermal::{CrossbarGeometry, ThermalSettings, SPACING_BOUNDS_NM};
use crate::{Cell, CellGrid};

/// Highest ambient temperature accepted in a config or sweep (K).
pub const MAX_AMBIENT_K: f64 = 1000.0;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("invalid config:\n{0}")]
    Validation(Violations),
}

/// Every violated invariant of a config, as `(field path, message)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Violations(pub Vec<(String, String)>);

impl Violations {
    pub fn fields(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(f, _)| f.as_str())
    }
}

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (field, msg) in &self.0 {
            writeln!(f, "  {field}: {msg}")?;
        }
        Ok(())
    }
}

/// Initial state of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitState {
    Named(NamedState),
    X(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NamedState {
    #[serde(rename = "LRS")]
    Lrs,
    #[serde(rename = "HRS")]
    Hrs,
}

impl InitState {
    pub fn x(self, params: &DeviceParams) -> f64 {
        match self {
            InitState::Named(NamedState::Lrs) => params.x_max,
            InitState::Named(NamedState::Hrs) => params.x_min,
            InitState::X(x) => x,
        }
    }
}

/// Where the crosstalk kernel comes from.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(from = "String", into = "String")]
pub enum AlphaSource {
    #[default]
    Compute,
    /// Kernel artifact; relative paths are resolved against the config file.
    File(PathBuf),
}

impl From<String> for AlphaSource {
    fn from(s: String) -> Self {
        if s == "compute" {
            AlphaSource::Compute
        } else {
            AlphaSource::File(PathBuf::from(s))
        }
    }
}

impl From<AlphaSource> for String {
    fn from(a: AlphaSource) -> Self {
        match a {
            AlphaSource::Compute => "compute".into(),
            AlphaSource::File(p) => p.to_string_lossy().into_owned(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    /// Values in ns.
    PulseLength,
    /// Electrode spacing, values in nm.
    Spacing,
    /// Values in K.
    Ambient,
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVariable::PulseLength => "pulse_length",
            SweepVariable::Spacing => "spacing",
            SweepVariable::Ambient => "ambient",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

fn default_v_set() -> f64 {
    1.05
}
fn default_pulse_length_ns() -> f64 {
    50.0
}
fn default_duty_cycle() -> f64 {
    0.5
}
fn default_max_pulses() -> u64 {
    100_000
}
fn default_ambient() -> f64 {
    300.0
}

/// Hammering stimulus as written in a config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramConfig {
    #[serde(default)]
    pub aggressors: Vec<Cell>,
    #[serde(default)]
    pub victim: Cell,
    #[serde(default = "default_v_set")]
    pub v_set: f64,
    #[serde(default = "default_pulse_length_ns")]
    pub pulse_length_ns: f64,
    #[serde(default = "default_duty_cycle")]
    pub duty_cycle: f64,
    #[serde(default = "default_max_pulses")]
    pub max_pulses: u64,
    /// Integration step; defaults to a twentieth of the pulse, at most 1 ns.
    #[serde(default)]
    pub dt_ns: Option<f64>,
}

impl Default for ProgramConfig {
    fn default() -> Self {
        Self {
            aggressors: Vec::new(),
            victim: Cell::new(0, 0),
            v_set: default_v_set(),
            pulse_length_ns: default_pulse_length_ns(),
            duty_cycle: default_duty_cycle(),
            max_pulses: default_max_pulses(),
            dt_ns: None,
        }
    }
}

impl ProgramConfig {
    pub fn to_program(&self) -> PulseProgram {
        PulseProgram {
            aggressors: self.aggressors.clone(),
            victim: self.victim,
            v_set: self.v_set,
            pulse_length: self.pulse_length_ns * 1e-9,
            duty_cycle: self.duty_cycle,
            max_pulses: self.max_pulses,
            dt: self.dt_ns.map(|d| d * 1e-9),
        }
    }
}

/// One experiment: array, device, stimulus and optional sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub geometry: CrossbarGeometry,
    #[serde(default)]
    pub thermal: ThermalSettings,
    #[serde(default)]
    pub device: DeviceParams,
    #[serde(rename = "ambient_K", default = "default_ambient")]
    pub ambient: f64,
    #[serde(default)]
    pub program: ProgramConfig,
    /// Per-cell initial states; by default aggressors start in LRS and every
    /// other cell in HRS.
    #[serde(default)]
    pub init_states: Option<CellGrid<InitState>>,
    #[serde(default)]
    pub alpha_source: AlphaSource,
    #[serde(default)]
    pub wire_resistance_ohm: f64,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    /// Config with every default and the given target cells.
    pub fn with_targets(aggressors: Vec<Cell>, victim: Cell) -> Self {
        Self {
            geometry: CrossbarGeometry::default(),
            thermal: ThermalSettings::default(),
            device: DeviceParams::default(),
            ambient: default_ambient(),
            program: ProgramConfig {
                aggressors,
                victim,
                ..ProgramConfig::default()
            },
            init_states: None,
            alpha_source: AlphaSource::Compute,
            wire_resistance_ohm: 0.0,
            sweep: None,
            base_dir: PathBuf::new(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Resolved kernel artifact path, if the kernel is read from a file.
    pub fn alpha_path(&self) -> Option<PathBuf> {
        match &self.alpha_source {
            AlphaSource::Compute => None,
            AlphaSource::File(p) if p.is_absolute() => Some(p.clone()),
            AlphaSource::File(p) => Some(self.base_dir.join(p)),
        }
    }

    /// Initial cell states at ambient temperature.
    pub fn initial_states(&self) -> CellGrid<DeviceState> {
        let (rows, cols) = (self.geometry.rows, self.geometry.cols);
        let p = &self.device;
        match &self.init_states {
            Some(grid) => grid.map(|s| DeviceState::with_x(p, s.x(p), self.ambient)),
            None => CellGrid::from_fn(rows, cols, |c| {
                if self.program.aggressors.contains(&c) {
                    DeviceState::lrs(p, self.ambient)
                } else {
                    DeviceState::hrs(p, self.ambient)
                }
            }),
        }
    }

    /// Violations that matter for kernel extraction alone.
    pub fn thermal_violations(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = Vec::new();
        let mut push = |f: String, m: String| out.push((f, m));
        for (f, m) in self.geometry.violations() {
            push(format!("geometry.{f}"), m);
        }
        let th = &self.thermal;
        if !(th.voxel_size_nm.is_finite() && th.voxel_size_nm > 0.0) {
            push(
                "thermal.voxel_size_nm".into(),
                format!("must be positive, got {}", th.voxel_size_nm),
            );
        }
        if !(th.tol > 0.0 && th.tol <= 1e-4) {
            push(
                "thermal.tol".into(),
                format!("{} outside (0, 1e-4]", th.tol),
            );
        }
        let mut powers = th.powers_uw.clone();
        powers.sort_by(f64::total_cmp);
        powers.dedup();
        if th.powers_uw.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            push(
                "thermal.powers_uw".into(),
                "powers must be finite and non-negative".into(),
            );
        } else if powers.len() < 4 || powers[0] != 0.0 {
            push(
                "thermal.powers_uw".into(),
                "need at least 4 distinct powers including 0".into(),
            );
        }
        if !(self.ambient.is_finite()
            && (MIN_KINETICS_TEMPERATURE..=MAX_AMBIENT_K).contains(&self.ambient))
        {
            push(
                "ambient_K".into(),
                format!(
                    "{} K outside [{MIN_KINETICS_TEMPERATURE}, {MAX_AMBIENT_K}] K",
                    self.ambient
                ),
            );
        }
        out
    }

    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = self.thermal_violations();
        let mut push = |f: String, m: String| out.push((f, m));
        for (f, m) in self.device.violations() {
            push(format!("device.{f}"), m);
        }
        if !(self.wire_resistance_ohm.is_finite() && self.wire_resistance_ohm >= 0.0) {
            push(
                "wire_resistance_ohm".into(),
                format!("must be non-negative, got {}", self.wire_resistance_ohm),
            );
        }

        let (rows, cols) = (self.geometry.rows, self.geometry.cols);
        let in_range = |c: Cell| c.row < rows && c.col < cols;
        let pr = &self.program;
        if pr.aggressors.is_empty() {
            push(
                "program.aggressors".into(),
                "at least one aggressor is required".into(),
            );
        }
        for (k, &a) in pr.aggressors.iter().enumerate() {
            if !in_range(a) {
                push(
                    format!("program.aggressors[{k}]"),
                    format!("{a} outside the {rows}x{cols} array"),
                );
            }
        }
        if !in_range(pr.victim) {
            push(
                "program.victim".into(),
                format!("{} outside the {rows}x{cols} array", pr.victim),
            );
        }
        if pr.aggressors.contains(&pr.victim) {
            push(
                "program.victim".into(),
                format!("{} is also an aggressor", pr.victim),
            );
        }
        if !(pr.v_set.abs() <= MAX_DEVICE_VOLTAGE) {
            push(
                "program.v_set".into(),
                format!("{} V outside ±{MAX_DEVICE_VOLTAGE} V", pr.v_set),
            );
        }
        if !(pr.pulse_length_ns.is_finite() && pr.pulse_length_ns > 0.0) {
            push(
                "program.pulse_length_ns".into(),
                format!("must be positive, got {}", pr.pulse_length_ns),
            );
        }
        if let Some(dt) = pr.dt_ns {
            if !(dt.is_finite() && dt > 0.0) {
                push(
                    "program.dt_ns".into(),
                    format!("must be positive, got {dt}"),
                );
            } else if dt > pr.pulse_length_ns {
                push(
                    "program.dt_ns".into(),
                    format!("{dt} ns exceeds the pulse length"),
                );
            }
        }
        if !(pr.duty_cycle > 0.0 && pr.duty_cycle <= 1.0) {
            push(
                "program.duty_cycle".into(),
                format!("{} outside (0, 1]", pr.duty_cycle),
            );
        }
        if pr.max_pulses == 0 {
            push("program.max_pulses".into(), "must be at least 1".into());
        }

        if let Some(init) = &self.init_states {
            if init.shape() != (rows, cols) {
                push(
                    "init_states".into(),
                    format!(
                        "expected a {rows}x{cols} grid, got {}x{}",
                        init.rows(),
                        init.cols()
                    ),
                );
            } else {
                for (c, s) in init.iter() {
                    if let InitState::X(x) = s {
                        if !(x.is_finite() && *x >= self.device.x_min && *x <= self.device.x_max) {
                            push(
                                format!("init_states[{}][{}]", c.row, c.col),
                                format!(
                                    "{x} outside [{}, {}]",
                                    self.device.x_min, self.device.x_max
                                ),
                            );
                        }
                    }
                }
            }
        }

        if let Some(sw) = &self.sweep {
            if sw.values.is_empty() {
                push("sweep.values".into(), "must not be empty".into());
            }
            for (k, &v) in sw.values.iter().enumerate() {
                let field = format!("sweep.values[{k}]");
                let ok = v.is_finite()
                    && match sw.variable {
                        SweepVariable::PulseLength => {
                            v > 0.0 && pr.dt_ns.map_or(true, |dt| dt <= v)
                        }
                        SweepVariable::Spacing => {
                            (SPACING_BOUNDS_NM.0..=SPACING_BOUNDS_NM.1).contains(&v)
                        }
                        SweepVariable::Ambient => {
                            (MIN_KINETICS_TEMPERATURE..=MAX_AMBIENT_K).contains(&v)
                        }
                    };
                if !ok {
                    let bounds = match sw.variable {
                        SweepVariable::PulseLength => {
                            "a positive pulse length no shorter than dt_ns".to_string()
                        }
                        SweepVariable::Spacing => format!(
                            "a spacing in [{}, {}] nm",
                            SPACING_BOUNDS_NM.0, SPACING_BOUNDS_NM.1
                        ),
                        SweepVariable::Ambient => format!(
                            "a temperature in [{MIN_KINETICS_TEMPERATURE}, {MAX_AMBIENT_K}] K"
                        ),
                    };
                    push(field, format!("{v} is not {bounds}"));
                } else if sw.values[..k].contains(&v) {
                    push(field, format!("duplicate value {v}"));
                }
            }
            if sw.variable == SweepVariable::Spacing && self.alpha_source != AlphaSource::Compute {
                push(
                    "sweep.variable".into(),
                    "spacing sweeps need alpha_source \"compute\"".into(),
                );
            }
        }
        out
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        as_result(self.violations())
    }

    pub fn validate_thermal(&self) -> Result<(), ConfigError> {
        as_result(self.thermal_violations())
    }
}

fn as_result(v: Vec<(String, String)>) -> Result<(), ConfigError> {
    if v.is_empty() {
        Ok(())
    } else {
        Err(ConfigError::Validation(Violations(v)))
    }
}

/// Reads, fills defaults and validates a config file.
pub fn load_experiment(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let cfg = read_experiment(path)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Reads a config file and fills defaults without validating it.
pub fn read_experiment(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut cfg = ExperimentConfig::from_json(&text).map_err(|source| ConfigError::Parse {
        path: path.to_path_buf(),
        source,
    })?;
    cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok(cfg)
}
