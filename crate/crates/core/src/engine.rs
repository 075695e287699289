//! Hammering engine.
//!
//! A program repeatedly writes one or more aggressor cells with V/2-biased
//! pulses. During each integration step the engine
//!
//! 1. computes cell voltages and Joule powers,
//! 2. relaxes the coupled filament temperatures to the fixed point
//!    `T = T0 + R_th,eff · P + Σ α · (T_neighbour − T0)`,
//! 3. advances every cell's state with the temperature-accelerated kinetics,
//!
//! and after each pulse checks whether the victim has crossed the flip
//! threshold. Temperatures follow power instantaneously, so idle time between
//! pulses only resets them to ambient.

use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{
    bias_lines, bias_lines_multi, cell_powers, CircuitError, CrossbarInstance, LineVoltages,
};
use crate::device::{
    conductance, integrate_with_rate, state_rate, DeviceError, DeviceParams, DeviceState,
    MAX_DEVICE_VOLTAGE,
};
use crate::hub::CouplingMatrix;
use crate::{Cell, CellGrid};

/// Default convergence threshold of the temperature fixed point (K).
pub const DEFAULT_RELAX_TOL: f64 = 0.01;
/// Iteration cap of the temperature fixed point.
pub const MAX_RELAX_ITERATIONS: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("temperature relaxation did not converge in {iterations} iterations (last change {residual:.3e} K); kernel coupling sum {coupling_sum:.3} is not a contraction")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        coupling_sum: f64,
    },
    #[error("invalid attack configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Circuit(#[from] CircuitError),
    #[error(transparent)]
    Device(#[from] DeviceError),
}

/// Default integration step: a twentieth of the pulse, at most 1 ns.
pub fn default_dt(pulse_length: f64) -> f64 {
    (pulse_length / 20.0).min(1e-9)
}

/// Hammering stimulus. Times are in seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseProgram {
    pub aggressors: Vec<Cell>,
    pub victim: Cell,
    /// Pulse amplitude on the selected word line (V).
    pub v_set: f64,
    pub pulse_length: f64,
    /// Fraction of each period the pulse is on. With the quasi-static thermal
    /// model the idle part has no effect on pulse counts.
    pub duty_cycle: f64,
    pub max_pulses: u64,
    /// Integration step; `None` selects [`default_dt`].
    pub dt: Option<f64>,
}

impl PulseProgram {
    pub fn single(
        aggressor: Cell,
        victim: Cell,
        v_set: f64,
        pulse_length: f64,
        max_pulses: u64,
    ) -> Self {
        Self {
            aggressors: vec![aggressor],
            victim,
            v_set,
            pulse_length,
            duty_cycle: 0.5,
            max_pulses,
            dt: None,
        }
    }

    pub fn dt(&self) -> f64 {
        self.dt.unwrap_or_else(|| default_dt(self.pulse_length))
    }

    /// Idle time following each pulse.
    pub fn idle_length(&self) -> f64 {
        self.pulse_length * (1.0 - self.duty_cycle) / self.duty_cycle
    }
}

/// Per-pulse sample recorded at the end of each pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceSample {
    pub pulse_index: u64,
    pub victim_x: f64,
    #[serde(rename = "victim_T_K")]
    pub victim_t: f64,
    #[serde(rename = "aggressor_T_K")]
    pub aggressor_t: f64,
}

/// Outcome of a hammering run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttackResult {
    pub flipped: bool,
    /// First pulse after which the victim read as flipped.
    pub pulses_to_flip: Option<u64>,
    /// Accumulated pulse-on time at the moment the victim crossed the
    /// threshold, interpolated inside the integration step (s).
    #[serde(rename = "stress_time_to_flip_s")]
    pub stress_time_to_flip: Option<f64>,
    pub pulses_applied: u64,
    pub final_states: CellGrid<DeviceState>,
    #[serde(skip)]
    pub trace: Option<Vec<TraceSample>>,
}

impl AttackResult {
    /// Pulse count to flip as a continuous quantity: stress time divided by
    /// pulse length.
    pub fn fractional_pulses(&self, pulse_length: f64) -> Option<f64> {
        self.stress_time_to_flip.map(|t| t / pulse_length)
    }

    pub fn trace_csv(&self) -> String {
        let mut out = String::from("pulse_index,victim_x,victim_T_K,aggressor_T_K\n");
        for s in self.trace.iter().flatten() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                s.pulse_index, s.victim_x, s.victim_t, s.aggressor_t
            ));
        }
        out
    }
}

/// True when the cell reads as LRS, i.e. `x ≥ flip_threshold`.
pub fn detect_flip(state: &DeviceState, params: &DeviceParams) -> bool {
    state.x >= params.flip_threshold
}

/// Threshold crossing watched during an interval.
#[derive(Debug, Clone, Copy)]
struct Watch {
    flat: usize,
    threshold: f64,
}

/// Owns one crossbar and advances it in time.
#[derive(Debug, Clone)]
pub struct Engine {
    xbar: CrossbarInstance,
    coupling: CouplingMatrix,
    relax_tol: f64,
    theta: Vec<f64>,
    base: Vec<f64>,
    next: Vec<f64>,
    coupled: Vec<f64>,
    power: Vec<f64>,
    relax_iterations: u64,
}

impl Engine {
    pub fn new(xbar: CrossbarInstance) -> Self {
        let n = xbar.states.len();
        let coupling = CouplingMatrix::new(&xbar.kernel, xbar.rows(), xbar.cols());
        Self {
            xbar,
            coupling,
            relax_tol: DEFAULT_RELAX_TOL,
            theta: vec![0.0; n],
            base: vec![0.0; n],
            next: vec![0.0; n],
            coupled: vec![0.0; n],
            power: vec![0.0; n],
            relax_iterations: 0,
        }
    }

    pub fn with_relax_tol(mut self, tol: f64) -> Self {
        assert!(tol > 0.0, "relax tolerance must be positive");
        self.relax_tol = tol;
        self
    }

    pub fn xbar(&self) -> &CrossbarInstance {
        &self.xbar
    }

    pub fn xbar_mut(&mut self) -> &mut CrossbarInstance {
        &mut self.xbar
    }

    pub fn into_xbar(self) -> CrossbarInstance {
        self.xbar
    }

    /// Total fixed-point iterations performed so far.
    pub fn relax_iterations(&self) -> u64 {
        self.relax_iterations
    }

    /// Solves the coupled filament temperatures for fixed cell voltages,
    /// starting from the uncoupled self-heating solution. Updates every
    /// cell's `t_fil` and returns the temperatures.
    pub fn relax(
        &mut self,
        cell_v: &CellGrid<f64>,
        tol: f64,
    ) -> Result<CellGrid<f64>, EngineError> {
        if !(tol > 0.0) {
            return Err(EngineError::ConfigInvalid(format!(
                "relax tolerance {tol} must be positive"
            )));
        }
        let p = cell_powers(cell_v, &self.xbar)?;
        self.power.copy_from_slice(p.as_slice());
        self.relax_from_power(tol, false)?;
        Ok(self.xbar.states.map(|s| s.t_fil))
    }

    fn relax_from_power(&mut self, tol: f64, warm: bool) -> Result<usize, EngineError> {
        let r_th = self.xbar.params.r_th_eff;
        for (b, p) in self.base.iter_mut().zip(&self.power) {
            *b = r_th * p;
        }
        if !warm {
            self.theta.copy_from_slice(&self.base);
        }
        let mut residual = f64::INFINITY;
        for it in 1..=MAX_RELAX_ITERATIONS {
            self.coupling.apply(&self.theta, &mut self.coupled);
            residual = 0.0;
            for k in 0..self.theta.len() {
                let t = self.base[k] + self.coupled[k];
                residual = f64::max(residual, (t - self.theta[k]).abs());
                self.next[k] = t;
            }
            std::mem::swap(&mut self.theta, &mut self.next);
            if residual <= tol {
                self.relax_iterations += it as u64;
                let ambient = self.xbar.ambient;
                for (s, th) in self.xbar.states.as_mut_slice().iter_mut().zip(&self.theta) {
                    s.t_fil = ambient + th;
                }
                return Ok(it);
            }
        }
        Err(EngineError::NoConvergence {
            iterations: MAX_RELAX_ITERATIONS,
            residual,
            coupling_sum: self.coupling.max_row_sum(),
        })
    }

    fn reset_to_ambient(&mut self) {
        self.theta.fill(0.0);
        let ambient = self.xbar.ambient;
        for s in self.xbar.states.as_mut_slice() {
            s.t_fil = ambient;
        }
    }

    /// Holds `lines` for `duration` seconds in steps of `dt`; the final step
    /// is shortened to end exactly at `duration`.
    pub fn advance_interval(
        &mut self,
        lines: &LineVoltages,
        duration: f64,
        dt: f64,
    ) -> Result<(), EngineError> {
        self.advance(lines, duration, dt, None).map(|_| ())
    }

    /// Returns the time into the interval at which the watched cell crossed
    /// its threshold, if it did.
    fn advance(
        &mut self,
        lines: &LineVoltages,
        duration: f64,
        dt: f64,
        watch: Option<Watch>,
    ) -> Result<Option<f64>, EngineError> {
        if !(duration >= 0.0) || !(dt > 0.0) {
            return Err(EngineError::ConfigInvalid(format!(
                "interval {duration} s with step {dt} s"
            )));
        }
        if duration == 0.0 {
            return Ok(None);
        }
        if lines.is_idle() {
            // zero bias everywhere: no power, no drift
            self.xbar.cell_voltages(lines)?;
            self.reset_to_ambient();
            return Ok(None);
        }
        let steps = ((duration / dt) * (1.0 - 1e-12)).ceil().max(1.0) as u64;
        let ideal = self.xbar.wire_resistance == 0.0;
        let mut volts = self.xbar.cell_voltages(lines)?.into_vec();
        if let Some(v) = volts.iter().find(|v| !(v.abs() <= MAX_DEVICE_VOLTAGE)) {
            return Err(DeviceError::VoltageOutOfRange(*v).into());
        }
        let ambient = self.xbar.ambient;
        let mut crossing = None;
        let mut elapsed = 0.0;
        for step in 0..steps {
            let h = if step + 1 == steps {
                duration - dt * (steps - 1) as f64
            } else {
                dt
            };
            if !ideal && step > 0 {
                volts = self.xbar.cell_voltages(lines)?.into_vec();
            }
            let params = &self.xbar.params;
            for ((p, s), v) in self
                .power
                .iter_mut()
                .zip(self.xbar.states.as_slice())
                .zip(&volts)
            {
                *p = v * v * conductance(s.x, params);
            }
            self.relax_from_power(self.relax_tol, true)?;

            let params = &self.xbar.params;
            for (k, (s, &v)) in self
                .xbar
                .states
                .as_mut_slice()
                .iter_mut()
                .zip(&volts)
                .enumerate()
            {
                if v == 0.0 {
                    continue;
                }
                let t = ambient + self.theta[k];
                let rate = state_rate(v, t, s.x, params)?;
                let x0 = s.x;
                s.x = integrate_with_rate(x0, rate, h, params);
                if let Some(w) = watch {
                    if crossing.is_none() && w.flat == k && x0 < w.threshold && s.x >= w.threshold {
                        crossing = Some(elapsed + h * (w.threshold - x0) / (s.x - x0));
                    }
                }
            }
            elapsed += h;
        }
        Ok(crossing)
    }

    fn validate(&self, program: &PulseProgram) -> Result<Vec<(LineVoltages, Cell)>, EngineError> {
        let bad = |m: String| Err(EngineError::ConfigInvalid(m));
        let (rows, cols) = (self.xbar.rows(), self.xbar.cols());
        if program.aggressors.is_empty() {
            return bad("no aggressor cells".into());
        }
        for &c in program
            .aggressors
            .iter()
            .chain(std::iter::once(&program.victim))
        {
            if !self.xbar.contains(c) {
                return bad(format!("cell {c} outside the {rows}x{cols} array"));
            }
        }
        if program.aggressors.contains(&program.victim) {
            return bad(format!("victim {} is also an aggressor", program.victim));
        }
        if !(program.pulse_length > 0.0 && program.pulse_length.is_finite()) {
            return bad(format!("pulse length {} s", program.pulse_length));
        }
        let dt = program.dt();
        if !(dt > 0.0) || dt > program.pulse_length {
            return bad(format!(
                "integration step {dt} s must be in (0, pulse length]"
            ));
        }
        if !(program.duty_cycle > 0.0 && program.duty_cycle <= 1.0) {
            return bad(format!("duty cycle {} outside (0, 1]", program.duty_cycle));
        }
        if program.max_pulses == 0 {
            return bad("max_pulses must be at least 1".into());
        }
        if !(program.v_set.abs() <= MAX_DEVICE_VOLTAGE) {
            return bad(format!(
                "v_set {} V outside ±{MAX_DEVICE_VOLTAGE} V",
                program.v_set
            ));
        }

        let half_selected = program
            .aggressors
            .iter()
            .any(|a| a.shares_line_with(program.victim));
        if !half_selected {
            let coupled = program.aggressors.iter().any(|a| {
                let (di, dj) = a.offset_from(program.victim);
                self.xbar.kernel.alpha(di, dj).is_some_and(|x| x > 0.0)
            });
            if !coupled {
                return bad(format!(
                    "victim {} is neither half-selected nor thermally coupled to any aggressor",
                    program.victim
                ));
            }
            warn!(
                "victim {} shares no line with an aggressor and receives no V/2 stress",
                program.victim
            );
        }

        let schedule = match bias_lines_multi(&program.aggressors, program.v_set, rows, cols)? {
            Some(lines) => vec![(lines, program.aggressors[0])],
            None => program
                .aggressors
                .iter()
                .map(|&a| Ok((bias_lines(a, program.v_set, rows, cols)?, a)))
                .collect::<Result<_, CircuitError>>()?,
        };
        Ok(schedule)
    }

    /// Hammers until the victim flips or `max_pulses` is reached.
    pub fn run_attack(&mut self, program: &PulseProgram) -> Result<AttackResult, EngineError> {
        self.run(program, true, false)
    }

    /// Applies all `max_pulses` pulses without stopping at the flip,
    /// optionally recording a per-pulse trace.
    pub fn run_pulse_train(
        &mut self,
        program: &PulseProgram,
        record_trace: bool,
    ) -> Result<AttackResult, EngineError> {
        self.run(program, false, record_trace)
    }

    fn run(
        &mut self,
        program: &PulseProgram,
        stop_at_flip: bool,
        record: bool,
    ) -> Result<AttackResult, EngineError> {
        let schedule = self.validate(program)?;
        let dt = program.dt();
        let idle_len = program.idle_length();
        let idle = LineVoltages::grounded(self.xbar.rows(), self.xbar.cols());
        let victim_flat = self.xbar.states.flat_index(program.victim);
        let watch = Watch {
            flat: victim_flat,
            threshold: self.xbar.params.flip_threshold,
        };
        self.reset_to_ambient();

        let already = detect_flip(&self.xbar.states[program.victim], &self.xbar.params);
        let mut stress_time = already.then_some(0.0);
        let mut pulses_to_flip = None;
        let mut trace = record.then(Vec::new);
        let mut applied = 0;

        for k in 1..=program.max_pulses {
            let (lines, aggressor) = &schedule[((k - 1) % schedule.len() as u64) as usize];
            let crossing = self.advance(lines, program.pulse_length, dt, Some(watch))?;
            applied = k;
            if stress_time.is_none() {
                if let Some(t) = crossing {
                    stress_time = Some((k - 1) as f64 * program.pulse_length + t);
                }
            }
            if let Some(tr) = trace.as_mut() {
                tr.push(TraceSample {
                    pulse_index: k,
                    victim_x: self.xbar.states[program.victim].x,
                    victim_t: self.xbar.states[program.victim].t_fil,
                    aggressor_t: self.xbar.states[*aggressor].t_fil,
                });
            }
            if pulses_to_flip.is_none()
                && detect_flip(&self.xbar.states[program.victim], &self.xbar.params)
            {
                pulses_to_flip = Some(k);
            }
            if idle_len > 0.0 {
                self.advance(&idle, idle_len, dt, None)?;
            }
            if stop_at_flip && pulses_to_flip.is_some() {
                break;
            }
        }
        if pulses_to_flip.is_none() {
            stress_time = None;
        }
        Ok(AttackResult {
            flipped: pulses_to_flip.is_some(),
            pulses_to_flip,
            stress_time_to_flip: stress_time,
            pulses_applied: applied,
            final_states: self.xbar.states.clone(),
            trace,
        })
    }
}

/// Fixed point of the coupled filament temperatures for fixed cell voltages.
pub fn electrothermal_relax(
    xbar: &CrossbarInstance,
    cell_v: &CellGrid<f64>,
    tol: f64,
) -> Result<CellGrid<f64>, EngineError> {
    Engine::new(xbar.clone()).relax(cell_v, tol)
}

/// Runs [`Engine::run_attack`] on a copy of `xbar`.
pub fn run_attack(
    xbar: &CrossbarInstance,
    program: &PulseProgram,
) -> Result<AttackResult, EngineError> {
    Engine::new(xbar.clone()).run_attack(program)
}

/// Runs [`Engine::run_pulse_train`] on a copy of `xbar`.
pub fn run_pulse_train(
    xbar: &CrossbarInstance,
    program: &PulseProgram,
    record_trace: bool,
) -> Result<AttackResult, EngineError> {
    Engine::new(xbar.clone()).run_pulse_train(program, record_trace)
}
