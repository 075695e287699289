//! Steady-state thermal model of the crossbar stack and alpha-kernel
//! extraction.
//!
//! The crossbar is voxelized ([`build_grid`]), each filament is treated as a
//! uniform volumetric heat source, and the 7-point finite-difference form of
//! `-div(kappa grad T) = q` is solved with a Jacobi-preconditioned conjugate
//! gradient ([`solve_steady_heat`]). Sweeping the source power and regressing
//! cell temperatures against it yields the thermal resistance of the heated
//! cell and the coupling coefficients of its neighbours ([`AlphaKernel`]).

mod extract;
mod geometry;
mod grid;
mod kernel;
mod solver;

pub use extract::{
    default_power_sweep, extract_alpha_kernel, extract_kernel_for_geometry, fit_thermal_resistance,
    linear_fit, sweep_power, KernelExtraction, LinearFit, PowerSweepSamples, ThermalFit,
    ThermalSettings, KERNEL_CUTOFF,
};
pub(crate) use geometry::SPACING_BOUNDS_NM;
pub use geometry::{CrossbarGeometry, MaterialConductivities};
pub use grid::{build_grid, Layer, ThermalGrid, MAX_VOXELS};
pub use kernel::{AlphaEntry, AlphaKernel};
pub use solver::{
    solve_steady_heat, solve_steady_heat_with, HeatOperator, HeatSource, SolveStats, SolverOptions,
    TemperatureField,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ThermalError {
    #[error("grid of {voxels} voxels exceeds the budget of {limit}")]
    GridTooLarge { voxels: usize, limit: usize },
    #[error("inconsistent geometry: {0}")]
    GeometryInconsistent(String),
    #[error("conjugate gradient did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("singular system: no Dirichlet voxels pin the temperature")]
    SingularSystem,
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("inconsistent fit: {0}")]
    InconsistentFit(String),
    #[error("invalid heat source: {0}")]
    InvalidSource(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
