use super::{ThermalError, ThermalGrid};
use crate::{Cell, CellGrid};

/// Prescribed heat input: `total_power` spread uniformly over `voxels`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatSource {
    cell: Option<Cell>,
    total_power: f64,
    voxels: Vec<usize>,
}

impl HeatSource {
    /// Heats the filament of `cell` with `total_power` watts.
    pub fn for_cell(
        grid: &ThermalGrid,
        cell: Cell,
        total_power: f64,
    ) -> Result<Self, ThermalError> {
        let voxels = grid
            .filament_voxels(cell)
            .ok_or_else(|| ThermalError::InvalidSource(format!("cell {cell} not in grid")))?
            .to_vec();
        let mut s = Self::from_voxels(voxels, total_power)?;
        s.cell = Some(cell);
        Ok(s)
    }

    /// Heats an arbitrary voxel set.
    pub fn from_voxels(voxels: Vec<usize>, total_power: f64) -> Result<Self, ThermalError> {
        if voxels.is_empty() {
            return Err(ThermalError::InvalidSource("empty voxel set".into()));
        }
        if !(total_power.is_finite() && total_power >= 0.0) {
            return Err(ThermalError::InvalidSource(format!(
                "power must be non-negative, got {total_power}"
            )));
        }
        Ok(Self {
            cell: None,
            total_power,
            voxels,
        })
    }

    pub fn cell(&self) -> Option<Cell> {
        self.cell
    }

    pub fn total_power(&self) -> f64 {
        self.total_power
    }

    pub fn voxels(&self) -> &[usize] {
        &self.voxels
    }

    /// Source density in W/m³ for voxels of edge `voxel_size_m`.
    pub fn volumetric_density(&self, voxel_size_m: f64) -> f64 {
        self.total_power / (self.voxels.len() as f64 * voxel_size_m.powi(3))
    }

    pub fn with_power(&self, total_power: f64) -> Result<Self, ThermalError> {
        let mut s = Self::from_voxels(self.voxels.clone(), total_power)?;
        s.cell = self.cell;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    /// Relative residual target `‖Ax − b‖ / ‖b‖`, in `(0, 1e-4]`.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            max_iterations: 50_000,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<(), ThermalError> {
        if !(self.tol > 0.0 && self.tol <= 1e-4) {
            return Err(ThermalError::InvalidArgument(format!(
                "solver tolerance {} outside (0, 1e-4]",
                self.tol
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SolveStats {
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Steady temperature solution.
#[derive(Debug, Clone)]
pub struct TemperatureField {
    /// Absolute temperature per voxel (K).
    pub values: Vec<f64>,
    /// Probe temperature per crossbar cell (K).
    pub cell_temperatures: CellGrid<f64>,
    pub ambient: f64,
    pub stats: SolveStats,
}

impl TemperatureField {
    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Temperature rise above ambient per voxel.
    pub fn over_temperature(&self) -> Vec<f64> {
        self.values.iter().map(|t| t - self.ambient).collect()
    }
}

/// Matrix-free 7-point conduction operator acting on over-temperatures.
///
/// Face conductances use the harmonic mean of the adjacent voxel
/// conductivities, `g = 2 k_a k_b / (k_a + k_b) * h` for voxel edge `h`.
/// Dirichlet voxels are pinned to zero over-temperature and carry identity
/// rows, which keeps the operator symmetric positive definite.
#[derive(Debug, Clone)]
pub struct HeatOperator {
    dims: [usize; 3],
    diag: Vec<f64>,
    // coupling to the +x/+y/+z neighbour, zero across Dirichlet voxels
    gx: Vec<f64>,
    gy: Vec<f64>,
    gz: Vec<f64>,
    dirichlet: Vec<bool>,
}

impl HeatOperator {
    pub fn new(grid: &ThermalGrid) -> Result<Self, ThermalError> {
        let dirichlet = grid.dirichlet_mask().to_vec();
        if !dirichlet.iter().any(|&d| d) {
            return Err(ThermalError::SingularSystem);
        }
        let [nx, ny, nz] = grid.dims();
        let n = grid.len();
        let h = grid.voxel_size_m();
        let kappa = grid.kappa();
        let face = |a: usize, b: usize| 2.0 * kappa[a] * kappa[b] / (kappa[a] + kappa[b]) * h;

        let mut diag = vec![0.0; n];
        let mut gx = vec![0.0; n];
        let mut gy = vec![0.0; n];
        let mut gz = vec![0.0; n];
        let couple = |a: usize, b: usize, slot: &mut f64, diag: &mut [f64]| {
            let g = face(a, b);
            diag[a] += g;
            diag[b] += g;
            if !dirichlet[a] && !dirichlet[b] {
                *slot = g;
            }
        };
        for z in 0..nz {
            for y in 0..ny {
                for x in 0..nx {
                    let i = x + nx * (y + ny * z);
                    if x + 1 < nx {
                        couple(i, i + 1, &mut gx[i], &mut diag);
                    }
                    if y + 1 < ny {
                        couple(i, i + nx, &mut gy[i], &mut diag);
                    }
                    if z + 1 < nz {
                        couple(i, i + nx * ny, &mut gz[i], &mut diag);
                    }
                }
            }
        }
        for (d, &fixed) in diag.iter_mut().zip(&dirichlet) {
            if fixed {
                *d = 1.0;
            }
        }
        Ok(Self {
            dims: [nx, ny, nz],
            diag,
            gx,
            gy,
            gz,
            dirichlet,
        })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn is_dirichlet(&self, i: usize) -> bool {
        self.dirichlet[i]
    }

    /// `y = A x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let [nx, ny, _] = self.dims;
        let plane = nx * ny;
        let n = self.len();
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            let gx = self.gx[i];
            if gx != 0.0 {
                acc -= gx * x[i + 1];
            }
            let gy = self.gy[i];
            if gy != 0.0 {
                acc -= gy * x[i + nx];
            }
            let gz = self.gz[i];
            if gz != 0.0 {
                acc -= gz * x[i + plane];
            }
            if i >= 1 {
                acc -= self.gx[i - 1] * x[i - 1];
            }
            if i >= nx {
                acc -= self.gy[i - nx] * x[i - nx];
            }
            if i >= plane {
                acc -= self.gz[i - plane] * x[i - plane];
            }
            y[i] = acc;
        }
    }

    /// Right-hand side (W per voxel) for the given sources.
    pub fn rhs(&self, sources: &[HeatSource]) -> Result<Vec<f64>, ThermalError> {
        let mut b = vec![0.0; self.len()];
        for s in sources {
            let per_voxel = s.total_power() / s.voxels().len() as f64;
            for &v in s.voxels() {
                if v >= b.len() {
                    return Err(ThermalError::InvalidSource(format!(
                        "voxel {v} outside grid"
                    )));
                }
                if self.dirichlet[v] {
                    return Err(ThermalError::InvalidSource(format!(
                        "voxel {v} lies on the Dirichlet boundary"
                    )));
                }
                b[v] += per_voxel;
            }
        }
        Ok(b)
    }

    /// Jacobi-preconditioned conjugate gradient for `A x = b`.
    ///
    /// `x` holds the initial guess on entry and the solution on exit.
    pub fn solve(
        &self,
        b: &[f64],
        x: &mut [f64],
        opts: &SolverOptions,
    ) -> Result<SolveStats, ThermalError> {
        opts.check()?;
        let n = self.len();
        assert_eq!(b.len(), n);
        assert_eq!(x.len(), n);
        let b_norm = norm(b);
        if b_norm == 0.0 {
            x.fill(0.0);
            return Ok(SolveStats::default());
        }
        for (xi, &d) in x.iter_mut().zip(&self.dirichlet) {
            if d {
                *xi = 0.0;
            }
        }

        let mut r = vec![0.0; n];
        self.apply(x, &mut r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        let mut res = norm(&r) / b_norm;
        if res <= opts.tol {
            return Ok(SolveStats {
                iterations: 0,
                relative_residual: res,
            });
        }
        let inv_diag: Vec<f64> = self.diag.iter().map(|d| 1.0 / d).collect();
        let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(r, m)| r * m).collect();
        let mut p = z.clone();
        let mut ap = vec![0.0; n];
        let mut rz = dot(&r, &z);

        for it in 1..=opts.max_iterations {
            self.apply(&p, &mut ap);
            let pap = dot(&p, &ap);
            if !(pap > 0.0) {
                return Err(ThermalError::SingularSystem);
            }
            let alpha = rz / pap;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            res = norm(&r) / b_norm;
            if res <= opts.tol {
                // guard against drift of the recursive residual
                self.apply(x, &mut ap);
                let true_res = ap
                    .iter()
                    .zip(b)
                    .map(|(a, b)| (b - a) * (b - a))
                    .sum::<f64>()
                    .sqrt()
                    / b_norm;
                if true_res <= opts.tol {
                    return Ok(SolveStats {
                        iterations: it,
                        relative_residual: true_res,
                    });
                }
                for i in 0..n {
                    r[i] = b[i] - ap[i];
                }
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(ThermalError::NoConvergence {
            iterations: opts.max_iterations,
            residual: res,
        })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn field_from_over_temperature(
    grid: &ThermalGrid,
    theta: &[f64],
    ambient: f64,
    stats: SolveStats,
) -> TemperatureField {
    let values: Vec<f64> = theta.iter().map(|t| ambient + t).collect();
    let (rows, cols) = grid.cell_shape();
    let cell_temperatures = CellGrid::from_vec(
        rows,
        cols,
        grid.probes().iter().map(|&p| values[p]).collect(),
    );
    TemperatureField {
        values,
        cell_temperatures,
        ambient,
        stats,
    }
}

/// Solves `-div(kappa grad T) = q` with `T = ambient` on Dirichlet voxels and
/// zero flux on every other boundary face.
pub fn solve_steady_heat(
    grid: &ThermalGrid,
    sources: &[HeatSource],
    ambient: f64,
    tol: f64,
) -> Result<TemperatureField, ThermalError> {
    solve_steady_heat_with(grid, sources, ambient, &SolverOptions::with_tol(tol), None)
}

/// As [`solve_steady_heat`], with explicit options and an optional initial
/// over-temperature guess.
pub fn solve_steady_heat_with(
    grid: &ThermalGrid,
    sources: &[HeatSource],
    ambient: f64,
    opts: &SolverOptions,
    initial: Option<&[f64]>,
) -> Result<TemperatureField, ThermalError> {
    let op = HeatOperator::new(grid)?;
    let b = op.rhs(sources)?;
    let mut theta = match initial {
        Some(x0) => x0.to_vec(),
        None => vec![0.0; op.len()],
    };
    let stats = op.solve(&b, &mut theta, opts)?;
    Ok(field_from_over_temperature(grid, &theta, ambient, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermal::{build_grid, CrossbarGeometry};

    #[test]
    fn zero_power_gives_exact_ambient() {
        let g = build_grid(&CrossbarGeometry::default(), 5.0).unwrap();
        let src = HeatSource::for_cell(&g, Cell::new(2, 2), 0.0).unwrap();
        let f = solve_steady_heat(&g, &[src], 300.0, 1e-9).unwrap();
        assert!(f.values.iter().all(|&t| t == 300.0));
        assert_eq!(f.stats.iterations, 0);
    }

    #[test]
    fn no_dirichlet_voxels_is_singular() {
        let g = ThermalGrid::new([3, 3, 3], 1.0, vec![1.0; 27], vec![false; 27]).unwrap();
        let src = HeatSource::from_voxels(vec![13], 1e-6).unwrap();
        assert!(matches!(
            solve_steady_heat(&g, &[src], 300.0, 1e-8),
            Err(ThermalError::SingularSystem)
        ));
    }

    #[test]
    fn tolerance_bounds_enforced() {
        let g = ThermalGrid::uniform([3, 3, 3], 1.0, 1.0).unwrap();
        let src = HeatSource::from_voxels(vec![13], 1e-6).unwrap();
        assert!(matches!(
            solve_steady_heat(&g, &[src], 300.0, 1e-3),
            Err(ThermalError::InvalidArgument(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let g = ThermalGrid::uniform([12, 12, 12], 1.0, 1.0).unwrap();
        let src = HeatSource::from_voxels(vec![g.index(6, 6, 10)], 1e-6).unwrap();
        let opts = SolverOptions {
            tol: 1e-12,
            max_iterations: 3,
        };
        match solve_steady_heat_with(&g, &[src], 300.0, &opts, None) {
            Err(ThermalError::NoConvergence {
                iterations,
                residual,
            }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn source_on_dirichlet_voxel_rejected() {
        let g = ThermalGrid::uniform([3, 3, 3], 1.0, 1.0).unwrap();
        let src = HeatSource::from_voxels(vec![0], 1e-6).unwrap();
        assert!(solve_steady_heat(&g, &[src], 300.0, 1e-8).is_err());
    }

    #[test]
    fn maximum_principle_single_source() {
        let g = build_grid(
            &CrossbarGeometry {
                rows: 3,
                cols: 3,
                electrode_spacing: 20.0,
                ..Default::default()
            },
            5.0,
        )
        .unwrap();
        let src = HeatSource::for_cell(&g, Cell::new(1, 1), 50e-6).unwrap();
        let f = solve_steady_heat(&g, &[src.clone()], 300.0, 1e-10).unwrap();
        assert!(f.min() >= 300.0 - 1e-9);
        let hottest = f
            .values
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!(src.voxels().contains(&hottest));
    }

    #[test]
    fn volumetric_density() {
        let s = HeatSource::from_voxels(vec![1, 2, 3, 4], 4e-6).unwrap();
        // four (5 nm)^3 voxels
        let d = s.volumetric_density(5e-9);
        assert!((d - 1e-6 / 125e-27).abs() / d < 1e-12);
    }
}
