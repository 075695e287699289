//! Config files, kernel resolution and the commands behind the CLI.

mod calibrate;
mod config;
mod run;

pub use calibrate::{
    calibrate_kinetics, cmd_calibrate, predict_pulses, Calibration, FreeParam, ReferencePoint,
    ReferenceSet, ResidualRow, FIT_TOL,
};
pub use config::{
    load_experiment, read_experiment, AlphaSource, ConfigError, ExperimentConfig, InitState,
    NamedState, ProgramConfig, SweepConfig, SweepVariable, Violations, MAX_AMBIENT_K,
};
pub use run::{
    build_instance, cached_kernel, cmd_extract_alpha, cmd_simulate, cmd_sweep, config_for_value,
    geometry_hash, resolve_kernel, run_sweep, simulate, SweepResult, SweepRow, CACHE_DIR_ENV,
};

use std::path::PathBuf;

use thiserror::Error;

use crate::circuit::CircuitError;
use crate::engine::EngineError;
use crate::thermal::ThermalError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Thermal(#[from] ThermalError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config has no sweep block")]
    NoSweep,
    #[error("invalid reference data: {0}")]
    Reference(String),
    #[error("calibration failed: {0}")]
    FitDiverged(String),
}
