//! Electro-thermal simulation of thermal-crosstalk bit-flip attacks on passive
//! ReRAM crossbars.
//!
//! The pipeline runs in three stages:
//!
//! 1. [`thermal`] solves the steady heat equation on a voxelized crossbar and
//!    extracts the thermal resistance of a heated cell together with the
//!    relative coupling coefficients (the *alpha kernel*) to its neighbours.
//! 2. [`device`], [`circuit`] and [`hub`] form the circuit-level model: a
//!    compact VCM cell with Joule self-heating and Arrhenius-accelerated
//!    switching, the V/2 biasing of the crossbar, and the crosstalk hub that
//!    feeds neighbour temperatures back into each cell.
//! 3. [`engine`] hammers an aggressor cell with write pulses and counts the
//!    pulses until a half-selected victim flips; [`experiment`] wraps this in
//!    config files, parameter sweeps and calibration.

pub mod circuit;
pub mod device;
pub mod engine;
pub mod experiment;
pub mod hub;
pub mod thermal;

mod cells;

pub use cells::{Cell, CellGrid};

/// Boltzmann constant in eV/K.
pub const BOLTZMANN_EV: f64 = 8.617333e-5;
