#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use xhammer::thermal::{
    build_grid, solve_steady_heat, solve_steady_heat_with, AlphaKernel, CrossbarGeometry,
    HeatSource, SolverOptions, ThermalGrid,
};
use xhammer::Cell;

pub const AMBIENT: f64 = 300.0;

/// Dense assembly of the finite-volume conduction matrix, written out
/// independently of the library operator, and solved by Cholesky.
/// Returns the over-temperature per voxel for per-voxel injected power (W).
pub fn dense_over_temperature(grid: &ThermalGrid, voxel_power: &[f64]) -> Vec<f64> {
    let [nx, ny, nz] = grid.dims();
    let n = nx * ny * nz;
    let h = grid.voxel_size_m();
    let k = grid.kappa();
    let fixed = grid.dirichlet_mask();
    let mut a = DMatrix::<f64>::zeros(n, n);
    let mut b = DVector::<f64>::zeros(n);
    let id = |x: usize, y: usize, z: usize| x + nx * (y + ny * z);
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = id(x, y, z);
                if fixed[i] {
                    a[(i, i)] = 1.0;
                    continue;
                }
                b[i] = voxel_power[i];
                let mut nbrs = Vec::new();
                if x > 0 {
                    nbrs.push(id(x - 1, y, z));
                }
                if x + 1 < nx {
                    nbrs.push(id(x + 1, y, z));
                }
                if y > 0 {
                    nbrs.push(id(x, y - 1, z));
                }
                if y + 1 < ny {
                    nbrs.push(id(x, y + 1, z));
                }
                if z > 0 {
                    nbrs.push(id(x, y, z - 1));
                }
                if z + 1 < nz {
                    nbrs.push(id(x, y, z + 1));
                }
                for j in nbrs {
                    let g = 2.0 * k[i] * k[j] / (k[i] + k[j]) * h;
                    a[(i, i)] += g;
                    if !fixed[j] {
                        a[(i, j)] -= g;
                    }
                }
            }
        }
    }
    let chol = a.cholesky().expect("conduction matrix is SPD");
    chol.solve(&b).iter().copied().collect()
}

fn spread(voxels: &[usize], power: f64, n: usize) -> Vec<f64> {
    let mut q = vec![0.0; n];
    for &v in voxels {
        q[v] += power / voxels.len() as f64;
    }
    q
}

/// Zero injected power leaves every voxel at exactly ambient.
pub fn zero_source_is_exact() -> bool {
    let g = build_grid(&CrossbarGeometry::default(), 5.0).unwrap();
    let src = HeatSource::for_cell(&g, Cell::new(2, 2), 0.0).unwrap();
    let f = solve_steady_heat(&g, &[src], AMBIENT, 1e-9).unwrap();
    f.values.iter().all(|&t| t == AMBIENT)
}

/// Largest relative error of a uniformly heated column against the analytic
/// parabola `theta(z) = q (L z - z²/2) / kappa`, with `z` measured from the
/// pinned voxel centre and `L` the distance to the insulated top face.
pub fn slab_error() -> f64 {
    let (nx, ny, nz) = (4, 4, 40);
    let kappa = 1.4;
    let voxel_nm = 2.0;
    let g = ThermalGrid::uniform([nx, ny, nz], voxel_nm, kappa).unwrap();
    let h = g.voxel_size_m();
    let q = 1e15; // W/m³
    let voxels: Vec<usize> = (nx * ny..g.len()).collect();
    let power = q * h.powi(3) * voxels.len() as f64;
    let src = HeatSource::from_voxels(voxels, power).unwrap();
    let f = solve_steady_heat(&g, &[src], AMBIENT, 1e-12).unwrap();
    let l = (nz as f64 - 0.5) * h;
    let mut worst: f64 = 0.0;
    for z in 1..nz {
        let zz = z as f64 * h;
        let exact = q * (l * zz - zz * zz / 2.0) / kappa;
        for (x, y) in [(0, 0), (1, 2), (3, 3)] {
            let got = f.values[g.index(x, y, z)] - AMBIENT;
            worst = worst.max(((got - exact) / exact).abs());
        }
    }
    worst
}

/// Relative errors of a single-voxel source against `P / (4 pi kappa r)` at
/// probes 5 to 8 voxels away along the three axes, in a 61³ box whose three
/// low faces are pinned.
pub fn green_function_errors() -> Vec<(f64, f64)> {
    let n = 61;
    let kappa = 1.0;
    let mut mask = vec![false; n * n * n];
    for z in 0..n {
        for y in 0..n {
            for x in 0..n {
                if x == 0 || y == 0 || z == 0 {
                    mask[x + n * (y + n * z)] = true;
                }
            }
        }
    }
    let g = ThermalGrid::new([n, n, n], 1.0, vec![kappa; n * n * n], mask).unwrap();
    let c = n / 2;
    let p = 1e-6;
    let src = HeatSource::from_voxels(vec![g.index(c, c, c)], p).unwrap();
    let f = solve_steady_heat(&g, &[src], AMBIENT, 1e-10).unwrap();
    let h = g.voxel_size_m();
    let mut out = Vec::new();
    for r in 5..=8usize {
        let exact = p / (4.0 * std::f64::consts::PI * kappa * r as f64 * h);
        for idx in [
            g.index(c + r, c, c),
            g.index(c, c + r, c),
            g.index(c, c, c + r),
        ] {
            let got = f.values[idx] - AMBIENT;
            out.push((r as f64, (got - exact) / exact));
        }
    }
    out
}

/// Small heterogeneous crossbar stack used against the dense solve.
pub fn small_stack() -> ThermalGrid {
    let geom = CrossbarGeometry {
        rows: 2,
        cols: 2,
        electrode_spacing: 10.0,
        electrode_width: 15.0,
        ..CrossbarGeometry::default()
    };
    build_grid(&geom, 5.0).unwrap()
}

/// Largest difference between the iterative and the dense solution,
/// relative to the peak over-temperature.
pub fn iterative_vs_dense(grid: &ThermalGrid, sources: &[HeatSource]) -> f64 {
    assert!(grid.len() <= 8000);
    let mut q = vec![0.0; grid.len()];
    for s in sources {
        for (a, b) in q
            .iter_mut()
            .zip(spread(s.voxels(), s.total_power(), grid.len()))
        {
            *a += b;
        }
    }
    let dense = dense_over_temperature(grid, &q);
    let f = solve_steady_heat_with(
        grid,
        sources,
        AMBIENT,
        &SolverOptions::with_tol(1e-13),
        None,
    )
    .unwrap();
    let peak = dense.iter().copied().fold(0.0, f64::max);
    f.over_temperature()
        .iter()
        .zip(&dense)
        .map(|(a, b)| (a - b).abs() / peak)
        .fold(0.0, f64::max)
}

/// Random conductivity box with the bottom layer pinned.
pub fn random_box(seed: u64) -> ThermalGrid {
    let dims = [10, 12, 14];
    let n = dims.iter().product();
    let mut rng = StdRng::seed_from_u64(seed);
    let kappa = (0..n).map(|_| rng.gen_range(0.3..150.0)).collect();
    let plane = dims[0] * dims[1];
    ThermalGrid::new(dims, 5.0, kappa, (0..n).map(|i| i < plane).collect()).unwrap()
}

/// Superposition and scaling defects, relative to the peak response, for
/// solves at tolerance `tol`.
pub fn superposition_defect(tol: f64) -> (f64, f64) {
    let g = build_grid(&CrossbarGeometry::default(), 5.0).unwrap();
    let opts = SolverOptions::with_tol(tol);
    let a = HeatSource::for_cell(&g, Cell::new(2, 2), 1e-4).unwrap();
    let b = HeatSource::for_cell(&g, Cell::new(1, 3), 6e-5).unwrap();
    let solve = |s: &[HeatSource]| {
        solve_steady_heat_with(&g, s, AMBIENT, &opts, None)
            .unwrap()
            .over_temperature()
    };
    let ta = solve(std::slice::from_ref(&a));
    let tb = solve(std::slice::from_ref(&b));
    let tab = solve(&[a.clone(), b]);
    let t2a = solve(&[a.with_power(2e-4).unwrap()]);
    let peak = tab.iter().copied().fold(0.0, f64::max);
    let sup = (0..g.len())
        .map(|i| (tab[i] - ta[i] - tb[i]).abs())
        .fold(0.0, f64::max)
        / peak;
    let lin = (0..g.len())
        .map(|i| (t2a[i] - 2.0 * ta[i]).abs())
        .fold(0.0, f64::max)
        / peak;
    (sup, lin)
}

pub fn geometry_with_spacing(spacing: f64) -> CrossbarGeometry {
    CrossbarGeometry {
        electrode_spacing: spacing,
        ..CrossbarGeometry::default()
    }
}

/// Offsets whose coefficient exceeds one of its inner neighbours on the way
/// to the origin, or whose inner neighbour was truncated away.
pub fn decay_violations(k: &AlphaKernel) -> Vec<(i64, i64)> {
    let mut bad = Vec::new();
    for ((di, dj), a) in k.neighbours() {
        let inner = [(di - di.signum(), dj), (di, dj - dj.signum())];
        for o in inner {
            if o == (di, dj) {
                continue;
            }
            match k.alpha(o.0, o.1) {
                Some(b) if b >= a => {}
                _ => bad.push((di, dj)),
            }
        }
    }
    for axis in [(0, 1), (1, 0), (0, -1), (-1, 0)] {
        let near = k.alpha(axis.0, axis.1).unwrap_or(0.0);
        let next = k.alpha(2 * axis.0, 2 * axis.1).unwrap_or(0.0);
        if !(near > next) {
            bad.push(axis);
        }
    }
    bad.sort();
    bad.dedup();
    bad
}

/// Largest relative mismatch between mirrored offsets.
pub fn mirror_asymmetry(k: &AlphaKernel) -> f64 {
    let mut worst: f64 = 0.0;
    for ((di, dj), a) in k.offsets() {
        for (mi, mj) in [(-di, dj), (di, -dj)] {
            let m = k.alpha(mi, mj).unwrap_or(0.0);
            worst = worst.max((a - m).abs() / a);
        }
    }
    worst
}

/// Largest relative mismatch between the four nearest neighbours.
pub fn four_fold_asymmetry(k: &AlphaKernel) -> f64 {
    let nn: Vec<f64> = [(1, 0), (-1, 0), (0, 1), (0, -1)]
        .iter()
        .map(|&(a, b)| k.alpha(a, b).unwrap_or(0.0))
        .collect();
    let max = nn.iter().copied().fold(f64::MIN, f64::max);
    let min = nn.iter().copied().fold(f64::MAX, f64::min);
    (max - min) / max
}
