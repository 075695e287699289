//! Compact model of a filamentary VCM ReRAM cell.
//!
//! The cell state `x` interpolates the conductance linearly between the high
//! resistive state (`x_min`) and the low resistive state (`x_max`). Current is
//! ohmic. Dissipated power heats the filament through an effective thermal
//! resistance, and the state drifts at an Arrhenius rate that is accelerated
//! by the applied voltage through a `sinh` term:
//!
//! ```text
//! T     = T0 + R_th,eff * P + T_in
//! dx/dt = k0 * exp(-E_a / (k_B T)) * sinh(V / V0)
//! ```
//!
//! Positive voltage drives the SET direction (increasing `x`); the rate is
//! zero once the state is saturated in the direction of drift.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::BOLTZMANN_EV;

/// Largest voltage magnitude for which the model is considered valid.
pub const MAX_DEVICE_VOLTAGE: f64 = 2.0;
/// Lowest filament temperature accepted by the kinetics.
pub const MIN_KINETICS_TEMPERATURE: f64 = 200.0;

/// Largest state change per integration sub-step, as a fraction of the state
/// range.
const MAX_SUBSTEP_FRACTION: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("|V| = {0} V exceeds the model range of {MAX_DEVICE_VOLTAGE} V")]
    VoltageOutOfRange(f64),
    #[error("filament temperature {0} K below {MIN_KINETICS_TEMPERATURE} K")]
    TemperatureOutOfRange(f64),
}

/// Compact-model constants in SI units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    /// LRS conductance (S).
    pub g_lrs: f64,
    /// HRS conductance (S).
    pub g_hrs: f64,
    /// Attempt rate (1/s).
    pub k0: f64,
    /// Activation energy (eV).
    pub e_a: f64,
    /// Voltage scale of the field acceleration (V).
    pub v0: f64,
    /// Effective thermal resistance of the filament (K/W).
    pub r_th_eff: f64,
    pub x_min: f64,
    pub x_max: f64,
    /// State at or above which the cell reads as flipped to LRS.
    pub flip_threshold: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        Self {
            g_lrs: 1e-4,
            g_hrs: 1e-6,
            k0: DEFAULT_K0,
            e_a: 0.6,
            v0: 0.25,
            r_th_eff: 5e6,
            x_min: 0.0,
            x_max: 1.0,
            flip_threshold: 0.5,
        }
    }
}

/// Attempt rate fitted so that the default 5×5, 50 nm, 300 K configuration
/// needs 943 pulses of 50 ns to flip the victim next to a hammered cell.
pub const DEFAULT_K0: f64 = 2.4e12;

impl DeviceParams {
    /// Lists every violated invariant as `field: message`.
    pub fn violations(&self) -> Vec<(String, String)> {
        let mut out = Vec::new();
        let mut check = |ok: bool, field: &str, msg: String| {
            if !ok {
                out.push((field.to_string(), msg));
            }
        };
        let pos = |v: f64| v.is_finite() && v > 0.0;
        check(
            pos(self.g_hrs),
            "g_hrs",
            format!("must be positive, got {}", self.g_hrs),
        );
        check(
            self.g_lrs.is_finite() && self.g_lrs > self.g_hrs,
            "g_lrs",
            format!("must exceed g_hrs ({}), got {}", self.g_hrs, self.g_lrs),
        );
        check(
            pos(self.k0),
            "k0",
            format!("must be positive, got {}", self.k0),
        );
        check(
            pos(self.e_a),
            "e_a",
            format!("must be positive, got {}", self.e_a),
        );
        check(
            pos(self.v0),
            "v0",
            format!("must be positive, got {}", self.v0),
        );
        check(
            pos(self.r_th_eff),
            "r_th_eff",
            format!("must be positive, got {}", self.r_th_eff),
        );
        check(
            self.x_min.is_finite() && self.x_max.is_finite() && self.x_min < self.x_max,
            "x_max",
            format!("state bounds [{}, {}] are empty", self.x_min, self.x_max),
        );
        check(
            self.x_min < self.flip_threshold && self.flip_threshold < self.x_max,
            "flip_threshold",
            format!(
                "{} must lie strictly inside ({}, {})",
                self.flip_threshold, self.x_min, self.x_max
            ),
        );
        out
    }

    pub fn state_range(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn clamp_state(&self, x: f64) -> f64 {
        x.clamp(self.x_min, self.x_max)
    }

    /// Arrhenius factor `k0 * exp(-E_a / (k_B T))`, unchecked.
    #[inline]
    pub(crate) fn thermal_rate(&self, t: f64) -> f64 {
        self.k0 * (-self.e_a / (BOLTZMANN_EV * t)).exp()
    }

    /// Rate with saturation at the bounds, unchecked.
    #[inline]
    pub(crate) fn rate_unchecked(&self, v: f64, t: f64, x: f64) -> f64 {
        if v == 0.0 || (v > 0.0 && x >= self.x_max) || (v < 0.0 && x <= self.x_min) {
            return 0.0;
        }
        self.thermal_rate(t) * (v / self.v0).sinh()
    }
}

/// Dynamic state of one cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceState {
    /// Normalized filament state; `x_max` is LRS, `x_min` is HRS.
    pub x: f64,
    /// Filament temperature (K).
    pub t_fil: f64,
}

impl DeviceState {
    pub fn lrs(params: &DeviceParams, ambient: f64) -> Self {
        Self {
            x: params.x_max,
            t_fil: ambient,
        }
    }

    pub fn hrs(params: &DeviceParams, ambient: f64) -> Self {
        Self {
            x: params.x_min,
            t_fil: ambient,
        }
    }

    pub fn with_x(params: &DeviceParams, x: f64, ambient: f64) -> Self {
        Self {
            x: params.clamp_state(x),
            t_fil: ambient,
        }
    }
}

/// Linear conductance map between `g_hrs` at `x_min` and `g_lrs` at `x_max`.
/// Out-of-range states are clamped first.
#[inline]
pub fn conductance(x: f64, params: &DeviceParams) -> f64 {
    let x = params.clamp_state(x);
    let frac = (x - params.x_min) / params.state_range();
    params.g_hrs + frac * (params.g_lrs - params.g_hrs)
}

/// Ohmic current `G(x) V`.
pub fn device_current(v: f64, x: f64, params: &DeviceParams) -> Result<f64, DeviceError> {
    if !(v.abs() <= MAX_DEVICE_VOLTAGE) {
        return Err(DeviceError::VoltageOutOfRange(v));
    }
    Ok(conductance(x, params) * v)
}

/// Filament temperature from its own dissipation plus the crosstalk rise
/// `t_in` received from neighbouring cells.
#[inline]
pub fn filament_temperature(p_d: f64, t_in: f64, ambient: f64, params: &DeviceParams) -> f64 {
    ambient + params.r_th_eff * p_d + t_in
}

/// State drift rate `dx/dt` in 1/s.
pub fn state_rate(v: f64, t: f64, x: f64, params: &DeviceParams) -> Result<f64, DeviceError> {
    if !(t >= MIN_KINETICS_TEMPERATURE) {
        return Err(DeviceError::TemperatureOutOfRange(t));
    }
    Ok(params.rate_unchecked(v, t, x))
}

/// Advances `x` by `dt` seconds at fixed voltage and temperature.
///
/// The step is split so that no sub-step moves the state by more than 1 % of
/// its range; the state is clamped to its bounds after every sub-step.
pub fn integrate_state(
    x: f64,
    v: f64,
    t: f64,
    dt: f64,
    params: &DeviceParams,
) -> Result<f64, DeviceError> {
    let rate = state_rate(v, t, x, params)?;
    Ok(integrate_with_rate(x, rate, dt, params))
}

#[inline]
pub(crate) fn integrate_with_rate(x: f64, rate: f64, dt: f64, params: &DeviceParams) -> f64 {
    if rate == 0.0 || dt <= 0.0 {
        return x;
    }
    let max_step = MAX_SUBSTEP_FRACTION * params.state_range();
    let total = rate * dt;
    let substeps = (total.abs() / max_step).ceil().max(1.0);
    if substeps == 1.0 {
        return params.clamp_state(x + total);
    }
    // The rate does not depend on x away from the bounds; once clamped
    // it stays saturated.
    let h = dt / substeps;
    let mut x = x;
    for _ in 0..substeps as u64 {
        let next = params.clamp_state(x + rate * h);
        if next == x {
            break;
        }
        x = next;
    }
    x
}
