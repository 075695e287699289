use serde::{Deserialize, Serialize};

use super::solver::field_from_over_temperature;
use super::{
    build_grid, AlphaKernel, CrossbarGeometry, HeatOperator, HeatSource, SolveStats, SolverOptions,
    ThermalError, ThermalGrid,
};
use crate::{Cell, CellGrid};

/// Offsets whose coupling falls below this are dropped from extracted kernels.
pub const KERNEL_CUTOFF: f64 = 1e-3;

/// Largest tolerated deviation (K) between the zero-power intercept of the
/// thermal-resistance fit and the ambient temperature.
const INTERCEPT_TOL_K: f64 = 0.1;

/// Eight powers evenly spaced over 0–200 µW, in watts.
pub fn default_power_sweep() -> Vec<f64> {
    (0..8).map(|k| 200e-6 * k as f64 / 7.0).collect()
}

/// Cell temperatures recorded while heating one source cell at several powers.
#[derive(Debug, Clone)]
pub struct PowerSweepSamples {
    pub source_cell: Cell,
    pub ambient: f64,
    /// Ascending source powers (W).
    pub powers: Vec<f64>,
    /// Probe temperatures (K), one snapshot per power.
    pub temperatures: Vec<CellGrid<f64>>,
    pub stats: Vec<SolveStats>,
}

impl PowerSweepSamples {
    /// Wraps externally produced samples (e.g. synthetic data).
    pub fn new(
        source_cell: Cell,
        ambient: f64,
        powers: Vec<f64>,
        temperatures: Vec<CellGrid<f64>>,
    ) -> Result<Self, ThermalError> {
        if powers.len() != temperatures.len() {
            return Err(ThermalError::InvalidArgument(format!(
                "{} powers but {} temperature snapshots",
                powers.len(),
                temperatures.len()
            )));
        }
        let shape = temperatures.first().map(CellGrid::shape);
        if temperatures.iter().any(|t| Some(t.shape()) != shape) {
            return Err(ThermalError::InvalidArgument(
                "snapshot shapes differ".into(),
            ));
        }
        if let Some(t) = temperatures.first() {
            if !t.contains(source_cell) {
                return Err(ThermalError::InvalidArgument(format!(
                    "source cell {source_cell} outside the sampled array"
                )));
            }
        }
        let stats = vec![SolveStats::default(); powers.len()];
        Ok(Self {
            source_cell,
            ambient,
            powers,
            temperatures,
            stats,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        self.temperatures.first().map_or((0, 0), CellGrid::shape)
    }

    /// `(power, temperature)` pairs for one cell.
    pub fn series(&self, cell: Cell) -> Vec<(f64, f64)> {
        self.powers
            .iter()
            .zip(&self.temperatures)
            .map(|(&p, t)| (p, t[cell]))
            .collect()
    }
}

/// Heats `source_cell` at each power and records every cell's probe
/// temperature.
///
/// Powers are sorted ascending. Each solve after the first non-zero power is
/// warm-started from the previous solution scaled by the power ratio, which
/// is exact for the linear problem up to the solver tolerance.
pub fn sweep_power(
    grid: &ThermalGrid,
    source_cell: Cell,
    powers: &[f64],
    ambient: f64,
    opts: &SolverOptions,
) -> Result<PowerSweepSamples, ThermalError> {
    if let Some(p) = powers.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
        return Err(ThermalError::InvalidArgument(format!(
            "invalid sweep power {p}"
        )));
    }
    let mut sorted = powers.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut distinct = sorted.clone();
    distinct.dedup();
    if distinct.len() < 4 {
        return Err(ThermalError::InvalidArgument(format!(
            "power sweep needs at least 4 distinct values, got {}",
            distinct.len()
        )));
    }
    if sorted[0] != 0.0 {
        return Err(ThermalError::InvalidArgument(
            "power sweep must include 0 W".into(),
        ));
    }

    let op = HeatOperator::new(grid)?;
    let unit = HeatSource::for_cell(grid, source_cell, 1.0)?;
    let mut temperatures = Vec::with_capacity(sorted.len());
    let mut stats = Vec::with_capacity(sorted.len());
    let mut prev: Option<(f64, Vec<f64>)> = None;
    for &p in &sorted {
        let b = op.rhs(&[unit.with_power(p)?])?;
        let mut theta = match &prev {
            Some((p0, th)) if p > 0.0 => th.iter().map(|t| t * (p / p0)).collect(),
            _ => vec![0.0; op.len()],
        };
        let st = op.solve(&b, &mut theta, opts)?;
        let field = field_from_over_temperature(grid, &theta, ambient, st);
        temperatures.push(field.cell_temperatures);
        stats.push(st);
        if p > 0.0 {
            prev = Some((p, theta));
        }
    }
    Ok(PowerSweepSamples {
        source_cell,
        ambient,
        powers: sorted,
        temperatures,
        stats,
    })
}

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(points: &[(f64, f64)]) -> Result<LinearFit, ThermalError> {
    let n = points.len();
    if n < 2 {
        return Err(ThermalError::DegenerateFit(format!(
            "{n} samples, need at least 2"
        )));
    }
    let nf = n as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in points {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(ThermalError::DegenerateFit(
            "all abscissae are equal".into(),
        ));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = points
        .iter()
        .map(|&(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let r_squared = if syy > 0.0 {
        1.0 - ss_res / syy
    } else if ss_res == 0.0 {
        1.0
    } else {
        0.0
    };
    Ok(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Thermal resistance of the source cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThermalFit {
    /// K/W.
    pub r_th: f64,
    /// Zero-power temperature (K).
    pub intercept: f64,
    pub r_squared: f64,
}

/// Regresses the source-cell temperature on power; the slope is `R_th`.
///
/// The intercept must reproduce the ambient within 0.1 K.
pub fn fit_thermal_resistance(samples: &PowerSweepSamples) -> Result<ThermalFit, ThermalError> {
    let fit = linear_fit(&samples.series(samples.source_cell))?;
    if (fit.intercept - samples.ambient).abs() > INTERCEPT_TOL_K {
        return Err(ThermalError::InconsistentFit(format!(
            "intercept {:.4} K differs from ambient {:.4} K",
            fit.intercept, samples.ambient
        )));
    }
    Ok(ThermalFit {
        r_th: fit.slope,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
    })
}

/// Regresses every cell's temperature on `r_th * P`; the slope is that
/// cell's alpha, keyed by its offset from the source.
///
/// The source entry is kept unconditionally; other offsets with alpha below
/// [`KERNEL_CUTOFF`] are dropped.
pub fn extract_alpha_kernel(
    samples: &PowerSweepSamples,
    r_th: f64,
) -> Result<AlphaKernel, ThermalError> {
    if !(r_th.is_finite() && r_th > 0.0) {
        return Err(ThermalError::InvalidArgument(format!(
            "r_th must be positive, got {r_th}"
        )));
    }
    let (rows, cols) = samples.shape();
    let mut kernel = AlphaKernel::empty(samples.ambient, r_th);
    kernel.source_cell = Some(samples.source_cell);
    for row in 0..rows {
        for col in 0..cols {
            let cell = Cell::new(row, col);
            let pts: Vec<(f64, f64)> = samples
                .series(cell)
                .into_iter()
                .map(|(p, t)| (r_th * p, t))
                .collect();
            let fit = linear_fit(&pts)?;
            let offset = cell.offset_from(samples.source_cell);
            if offset == (0, 0) || fit.slope >= KERNEL_CUTOFF {
                kernel.insert(offset, fit.slope, fit.r_squared);
            }
        }
    }
    Ok(kernel)
}

/// Thermal model settings used for kernel extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThermalSettings {
    pub voxel_size_nm: f64,
    /// Source powers of the sweep, in µW.
    pub powers_uw: Vec<f64>,
    /// Relative residual target of each solve.
    pub tol: f64,
}

impl Default for ThermalSettings {
    fn default() -> Self {
        Self {
            voxel_size_nm: 5.0,
            powers_uw: default_power_sweep().iter().map(|p| p * 1e6).collect(),
            tol: 1e-9,
        }
    }
}

/// Everything produced by one kernel extraction.
#[derive(Debug, Clone)]
pub struct KernelExtraction {
    pub kernel: AlphaKernel,
    pub fit: ThermalFit,
    pub samples: PowerSweepSamples,
    pub grid_dims: [usize; 3],
}

/// Builds the grid, sweeps the centre cell and fits the kernel.
pub fn extract_kernel_for_geometry(
    geom: &CrossbarGeometry,
    settings: &ThermalSettings,
    ambient: f64,
) -> Result<KernelExtraction, ThermalError> {
    let grid = build_grid(geom, settings.voxel_size_nm)?;
    let powers: Vec<f64> = settings.powers_uw.iter().map(|p| p * 1e-6).collect();
    let opts = SolverOptions::with_tol(settings.tol);
    let source = geom.center_cell();
    let samples = sweep_power(&grid, source, &powers, ambient, &opts)?;
    let fit = fit_thermal_resistance(&samples)?;
    let kernel = extract_alpha_kernel(&samples, fit.r_th)?;
    Ok(KernelExtraction {
        kernel,
        fit,
        samples,
        grid_dims: grid.dims(),
    })
}
