//! Least-squares fit of kinetic parameters to reference pulse counts.
//!
//! The forward model is the full engine. Residuals are
//! `ln(N_model) − ln(N_ref)`, where `N_model` is the stress time to flip
//! divided by the pulse length, a continuous version of the pulse count.
//! Parameters are fitted in `(ln k0, e_a, ln r_th_eff)` coordinates with a
//! Levenberg–Marquardt iteration on a forward-difference Jacobian.

use std::fmt;
use std::path::Path;

use log::debug;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{build_instance, resolve_kernel};
use super::ExperimentError;
use crate::device::DeviceParams;
use crate::engine::Engine;
use crate::thermal::AlphaKernel;

/// Convergence threshold: the accepted step moves every log prediction by
/// less than this.
pub const FIT_TOL: f64 = 1e-3;
const MAX_ITERATIONS: usize = 60;
/// Forward model runs at most this many times the reference count.
const PULSE_HEADROOM: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeParam {
    K0,
    EA,
    RThEff,
}

impl FreeParam {
    fn get(self, p: &DeviceParams) -> f64 {
        match self {
            FreeParam::K0 => p.k0.ln(),
            FreeParam::EA => p.e_a,
            FreeParam::RThEff => p.r_th_eff.ln(),
        }
    }

    fn set(self, p: &mut DeviceParams, v: f64) {
        match self {
            FreeParam::K0 => p.k0 = v.exp(),
            FreeParam::EA => p.e_a = v,
            FreeParam::RThEff => p.r_th_eff = v.exp(),
        }
    }

    fn fd_step(self) -> f64 {
        match self {
            FreeParam::EA => 1e-4,
            _ => 1e-3,
        }
    }
}

impl fmt::Display for FreeParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FreeParam::K0 => "k0",
            FreeParam::EA => "e_a",
            FreeParam::RThEff => "r_th_eff",
        })
    }
}

impl std::str::FromStr for FreeParam {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "k0" => Ok(FreeParam::K0),
            "e_a" => Ok(FreeParam::EA),
            "r_th_eff" => Ok(FreeParam::RThEff),
            _ => Err(format!(
                "unknown parameter {s:?}; expected k0, e_a or r_th_eff"
            )),
        }
    }
}

/// One measured operating point. Missing conditions take the config values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferencePoint {
    #[serde(default)]
    pub pulse_length_ns: Option<f64>,
    #[serde(rename = "ambient_K", default)]
    pub ambient: Option<f64>,
    pub pulses: f64,
}

/// Contents of a reference file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSet {
    pub points: Vec<ReferencePoint>,
    #[serde(default = "default_free")]
    pub free: Vec<FreeParam>,
}

fn default_free() -> Vec<FreeParam> {
    vec![FreeParam::K0]
}

impl ReferenceSet {
    pub fn load(path: &Path) -> Result<Self, ExperimentError> {
        let text = std::fs::read_to_string(path).map_err(|source| ExperimentError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        serde_json::from_str(&text)
            .map_err(|e| ExperimentError::Reference(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualRow {
    pub pulse_length_ns: f64,
    #[serde(rename = "ambient_K")]
    pub ambient: f64,
    pub reference_pulses: f64,
    /// Continuous pulse count of the fitted model.
    pub predicted_pulses: f64,
    pub pulses_to_flip: Option<u64>,
    pub log_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub device: DeviceParams,
    pub free: Vec<FreeParam>,
    pub iterations: usize,
    /// Half the sum of squared log residuals.
    pub cost: f64,
    pub residuals: Vec<ResidualRow>,
}

/// Model pulse count for one operating point: continuous count and integer
/// pulses to flip, or `None` if the victim survives the pulse budget.
pub fn predict_pulses(
    cfg: &ExperimentConfig,
    kernel: &AlphaKernel,
    device: &DeviceParams,
    point: &ReferencePoint,
) -> Result<Option<(f64, u64)>, ExperimentError> {
    let mut c = cfg.clone();
    c.device = device.clone();
    if let Some(l) = point.pulse_length_ns {
        c.program.pulse_length_ns = l;
    }
    if let Some(a) = point.ambient {
        c.ambient = a;
    }
    c.program.max_pulses = c
        .program
        .max_pulses
        .max((point.pulses * PULSE_HEADROOM).ceil() as u64);
    let xbar = build_instance(&c, kernel.with_ambient(c.ambient))?;
    let program = c.program.to_program();
    let r = Engine::new(xbar).run_attack(&program)?;
    Ok(r.fractional_pulses(program.pulse_length)
        .zip(r.pulses_to_flip))
}

fn check_reference(
    cfg: &ExperimentConfig,
    points: &[ReferencePoint],
    free: &[FreeParam],
) -> Result<(), ExperimentError> {
    let bad = |m: String| Err(ExperimentError::Reference(m));
    if free.is_empty() {
        return bad("no free parameters".into());
    }
    if (1..free.len()).any(|k| free[..k].contains(&free[k])) {
        return bad("free parameters repeat".into());
    }
    if points.len() < free.len() {
        return bad(format!(
            "{} reference points cannot determine {} free parameters",
            points.len(),
            free.len()
        ));
    }
    for (k, p) in points.iter().enumerate() {
        if !(p.pulses.is_finite() && p.pulses >= 1.0) {
            return bad(format!("points[{k}].pulses must be at least 1"));
        }
        let mut c = cfg.clone();
        if let Some(l) = p.pulse_length_ns {
            c.program.pulse_length_ns = l;
        }
        if let Some(a) = p.ambient {
            c.ambient = a;
        }
        let v = c.violations();
        if let Some((field, msg)) = v.first() {
            return bad(format!(
                "points[{k}] gives an invalid config: {field}: {msg}"
            ));
        }
    }
    Ok(())
}

struct Problem<'a> {
    cfg: &'a ExperimentConfig,
    kernel: &'a AlphaKernel,
    points: &'a [ReferencePoint],
    free: &'a [FreeParam],
    base: DeviceParams,
}

impl Problem<'_> {
    fn device(&self, theta: &[f64]) -> DeviceParams {
        let mut d = self.base.clone();
        for (p, &v) in self.free.iter().zip(theta) {
            p.set(&mut d, v);
        }
        d
    }

    fn admissible(&self, theta: &[f64]) -> bool {
        self.device(theta).violations().is_empty()
    }

    /// Log residuals; `None` when some point does not flip in budget.
    fn residuals_many(
        &self,
        thetas: &[Vec<f64>],
    ) -> Result<Vec<Option<DVector<f64>>>, ExperimentError> {
        let n = self.points.len();
        let jobs: Vec<(usize, usize)> = (0..thetas.len())
            .flat_map(|t| (0..n).map(move |k| (t, k)))
            .collect();
        let devices: Vec<DeviceParams> = thetas.iter().map(|t| self.device(t)).collect();
        let preds = jobs
            .par_iter()
            .map(|&(t, k)| predict_pulses(self.cfg, self.kernel, &devices[t], &self.points[k]))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(preds
            .chunks(n)
            .map(|chunk| {
                chunk
                    .iter()
                    .zip(self.points)
                    .map(|(p, r)| {
                        p.map(|(frac, _)| frac.max(f64::MIN_POSITIVE).ln() - r.pulses.ln())
                    })
                    .collect::<Option<Vec<f64>>>()
                    .map(DVector::from_vec)
            })
            .collect())
    }

    fn residuals(&self, theta: &[f64]) -> Result<Option<DVector<f64>>, ExperimentError> {
        Ok(self.residuals_many(&[theta.to_vec()])?.pop().flatten())
    }
}

/// Fits the `free` parameters of `cfg.device` to the reference points.
pub fn calibrate_kinetics(
    cfg: &ExperimentConfig,
    kernel: &AlphaKernel,
    points: &[ReferencePoint],
    free: &[FreeParam],
) -> Result<Calibration, ExperimentError> {
    cfg.validate()?;
    check_reference(cfg, points, free)?;
    let prob = Problem {
        cfg,
        kernel,
        points,
        free,
        base: cfg.device.clone(),
    };
    let mut theta: Vec<f64> = free.iter().map(|p| p.get(&cfg.device)).collect();
    let mut r = prob.residuals(&theta)?.ok_or_else(|| {
        ExperimentError::FitDiverged(
            "initial parameters do not flip the victim within the pulse budget".into(),
        )
    })?;
    let mut cost = 0.5 * r.norm_squared();
    let mut lambda = 1e-3;
    let np = free.len();
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_ITERATIONS {
        iterations += 1;
        debug!("iteration {iterations}: cost {cost:.3e}, theta {theta:?}");
        if r.amax() < 1e-9 {
            converged = true;
            break;
        }
        let shifted: Vec<Vec<f64>> = (0..np)
            .map(|j| {
                let mut t = theta.clone();
                t[j] += free[j].fd_step();
                t
            })
            .collect();
        let cols = prob.residuals_many(&shifted)?;
        let mut jac = DMatrix::zeros(points.len(), np);
        for (j, col) in cols.iter().enumerate() {
            let col = col.as_ref().ok_or_else(|| {
                ExperimentError::FitDiverged(format!("no flip when perturbing {}", free[j]))
            })?;
            jac.set_column(j, &((col - &r) / free[j].fd_step()));
        }
        let a = jac.transpose() * &jac;
        let g = jac.transpose() * &r;

        let mut accepted = None;
        while lambda < 1e10 {
            let mut m = a.clone();
            for i in 0..np {
                m[(i, i)] += lambda * a[(i, i)].max(1e-12);
            }
            let Some(chol) = m.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            let delta = chol.solve(&(-&g));
            let trial: Vec<f64> = theta.iter().zip(delta.iter()).map(|(t, d)| t + d).collect();
            if prob.admissible(&trial) {
                if let Some(rt) = prob.residuals(&trial)? {
                    let ct = 0.5 * rt.norm_squared();
                    if ct < cost {
                        accepted = Some((trial, rt, ct, delta));
                        lambda = (lambda / 3.0).max(1e-12);
                        break;
                    }
                }
            }
            lambda *= 4.0;
        }
        let Some((trial, rt, ct, delta)) = accepted else {
            // no descent direction left: stationary point
            converged = g.amax() < 1e-6 * (1.0 + cost);
            break;
        };
        let moved = (&jac * &delta).amax();
        theta = trial;
        r = rt;
        cost = ct;
        if moved < FIT_TOL {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(ExperimentError::FitDiverged(format!(
            "no convergence after {iterations} iterations (cost {cost:.3e})"
        )));
    }

    let device = prob.device(&theta);
    let preds = points
        .par_iter()
        .map(|p| predict_pulses(cfg, kernel, &device, p))
        .collect::<Result<Vec<_>, _>>()?;
    let residuals = points
        .iter()
        .zip(preds)
        .map(|(p, pred)| {
            let (frac, n) = pred.map_or((f64::NAN, None), |(f, n)| (f, Some(n)));
            ResidualRow {
                pulse_length_ns: p.pulse_length_ns.unwrap_or(cfg.program.pulse_length_ns),
                ambient: p.ambient.unwrap_or(cfg.ambient),
                reference_pulses: p.pulses,
                predicted_pulses: frac,
                pulses_to_flip: n,
                log_residual: frac.ln() - p.pulses.ln(),
            }
        })
        .collect();
    Ok(Calibration {
        device,
        free: free.to_vec(),
        iterations,
        cost,
        residuals,
    })
}

/// Fits against a reference file and writes the result to `out`.
pub fn cmd_calibrate(
    cfg: &ExperimentConfig,
    reference: &Path,
    free_override: Option<&[FreeParam]>,
    out: &Path,
) -> Result<Calibration, ExperimentError> {
    let set = ReferenceSet::load(reference)?;
    let free = free_override.unwrap_or(&set.free);
    let kernel = resolve_kernel(cfg)?;
    let cal = calibrate_kinetics(cfg, &kernel, &set.points, free)?;
    let body = serde_json::to_string_pretty(&cal).expect("calibration serializes");
    std::fs::write(out, body).map_err(|source| ExperimentError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    Ok(cal)
}
