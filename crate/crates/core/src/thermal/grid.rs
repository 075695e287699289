use std::ops::Range;

use super::{CrossbarGeometry, ThermalError};
use crate::Cell;

/// Upper bound on the number of voxels a grid may hold.
pub const MAX_VOXELS: usize = 10_000_000;

/// Material layer of the crossbar stack, bottom to top.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    Substrate,
    Insulator,
    BottomElectrode,
    Oxide,
    TopElectrode,
}

/// Voxel discretization of the crossbar stack.
///
/// Voxels are indexed `x + nx * (y + ny * z)`, with `x` running across bit
/// lines (columns), `y` across word lines (rows) and `z` upward from the
/// substrate.
#[derive(Debug, Clone)]
pub struct ThermalGrid {
    dims: [usize; 3],
    voxel_size_nm: f64,
    kappa: Vec<f64>,
    dirichlet: Vec<bool>,
    rows: usize,
    cols: usize,
    probes: Vec<usize>,
    filaments: Vec<Vec<usize>>,
    layers: Vec<(Layer, Range<usize>)>,
}

impl ThermalGrid {
    /// Builds a bare grid with no crossbar cells, for custom test problems.
    pub fn new(
        dims: [usize; 3],
        voxel_size_nm: f64,
        kappa: Vec<f64>,
        dirichlet: Vec<bool>,
    ) -> Result<Self, ThermalError> {
        let n = dims.iter().product::<usize>();
        if n == 0 {
            return Err(ThermalError::InvalidArgument(
                "grid has a zero dimension".into(),
            ));
        }
        if n > MAX_VOXELS {
            return Err(ThermalError::GridTooLarge {
                voxels: n,
                limit: MAX_VOXELS,
            });
        }
        if kappa.len() != n || dirichlet.len() != n {
            return Err(ThermalError::InvalidArgument(format!(
                "expected {n} voxels, got kappa {} / mask {}",
                kappa.len(),
                dirichlet.len()
            )));
        }
        if let Some(k) = kappa.iter().find(|k| !(k.is_finite() && **k > 0.0)) {
            return Err(ThermalError::InvalidArgument(format!(
                "non-positive conductivity {k}"
            )));
        }
        if !(voxel_size_nm.is_finite() && voxel_size_nm > 0.0) {
            return Err(ThermalError::InvalidArgument(
                "voxel size must be positive".into(),
            ));
        }
        Ok(Self {
            dims,
            voxel_size_nm,
            kappa,
            dirichlet,
            rows: 0,
            cols: 0,
            probes: Vec::new(),
            filaments: Vec::new(),
            layers: Vec::new(),
        })
    }

    /// Uniform-conductivity box with the bottom (`z = 0`) layer pinned.
    pub fn uniform(dims: [usize; 3], voxel_size_nm: f64, kappa: f64) -> Result<Self, ThermalError> {
        let n = dims.iter().product::<usize>();
        let plane = dims[0] * dims[1];
        let dirichlet = (0..n).map(|i| i < plane).collect();
        Self::new(dims, voxel_size_nm, vec![kappa; n], dirichlet)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.kappa.len()
    }

    pub fn is_empty(&self) -> bool {
        self.kappa.is_empty()
    }

    pub fn voxel_size_nm(&self) -> f64 {
        self.voxel_size_nm
    }

    pub fn voxel_size_m(&self) -> f64 {
        self.voxel_size_nm * 1e-9
    }

    pub fn kappa(&self) -> &[f64] {
        &self.kappa
    }

    pub fn dirichlet_mask(&self) -> &[bool] {
        &self.dirichlet
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        debug_assert!(x < self.dims[0] && y < self.dims[1] && z < self.dims[2]);
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    pub fn coords(&self, idx: usize) -> (usize, usize, usize) {
        let [nx, ny, _] = self.dims;
        (idx % nx, (idx / nx) % ny, idx / (nx * ny))
    }

    /// Crossbar shape `(rows, cols)`; `(0, 0)` for bare grids.
    pub fn cell_shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    fn cell_slot(&self, cell: Cell) -> Option<usize> {
        (cell.row < self.rows && cell.col < self.cols).then(|| cell.row * self.cols + cell.col)
    }

    /// Voxel at the filament centre of `cell`.
    pub fn probe_index(&self, cell: Cell) -> Option<usize> {
        self.cell_slot(cell).map(|s| self.probes[s])
    }

    /// Probe voxels in row-major cell order.
    pub fn probes(&self) -> &[usize] {
        &self.probes
    }

    /// Voxels forming the filament of `cell`.
    pub fn filament_voxels(&self, cell: Cell) -> Option<&[usize]> {
        self.cell_slot(cell).map(|s| self.filaments[s].as_slice())
    }

    /// `z` range occupied by `layer`, if this grid was built from a geometry.
    pub fn layer_range(&self, layer: Layer) -> Option<Range<usize>> {
        self.layers
            .iter()
            .find(|(l, _)| *l == layer)
            .map(|(_, r)| r.clone())
    }
}

fn voxels_for(name: &str, length_nm: f64, voxel: f64) -> Result<usize, ThermalError> {
    let n = (length_nm / voxel).round();
    if n < 1.0 {
        return Err(ThermalError::GeometryInconsistent(format!(
            "{name} of {length_nm} nm is thinner than one {voxel} nm voxel"
        )));
    }
    Ok(n as usize)
}

/// Voxelizes `geom` at `voxel_size_nm` resolution.
///
/// Each geometry length is rounded to the nearest whole number of voxels. A
/// lateral margin of one electrode spacing surrounds the array so edge cells
/// see the same gap on all sides. The bottom substrate layer is the only
/// Dirichlet boundary; every other face is adiabatic.
pub fn build_grid(
    geom: &CrossbarGeometry,
    voxel_size_nm: f64,
) -> Result<ThermalGrid, ThermalError> {
    if !(voxel_size_nm.is_finite() && voxel_size_nm > 0.0) {
        return Err(ThermalError::InvalidArgument(format!(
            "voxel size must be positive, got {voxel_size_nm}"
        )));
    }
    if let Some((field, msg)) = geom.violations().into_iter().next() {
        return Err(ThermalError::GeometryInconsistent(format!(
            "{field}: {msg}"
        )));
    }
    let v = voxel_size_nm;
    let w = voxels_for("electrode_width", geom.electrode_width, v)?;
    let s = voxels_for("electrode_spacing", geom.electrode_spacing, v)?;
    let t_el = voxels_for("electrode_thickness", geom.electrode_thickness, v)?;
    let t_ox = voxels_for("oxide_thickness", geom.oxide_thickness, v)?;
    let t_sub = voxels_for("substrate_thickness", geom.substrate_thickness, v)?;
    let t_ins = voxels_for("insulator_thickness", geom.insulator_thickness, v)?;

    let span = |lines: usize| 2 * s + lines * w + (lines - 1) * s;
    let nx = span(geom.cols);
    let ny = span(geom.rows);
    let nz = t_sub + t_ins + 2 * t_el + t_ox;
    let total = nx
        .checked_mul(ny)
        .and_then(|p| p.checked_mul(nz))
        .unwrap_or(usize::MAX);
    if total > MAX_VOXELS {
        return Err(ThermalError::GridTooLarge {
            voxels: total,
            limit: MAX_VOXELS,
        });
    }

    let mut z0 = 0;
    let mut layers = Vec::new();
    for (layer, t) in [
        (Layer::Substrate, t_sub),
        (Layer::Insulator, t_ins),
        (Layer::BottomElectrode, t_el),
        (Layer::Oxide, t_ox),
        (Layer::TopElectrode, t_el),
    ] {
        layers.push((layer, z0..z0 + t));
        z0 += t;
    }
    let layer_of = |z: usize| {
        layers
            .iter()
            .find(|(_, r)| r.contains(&z))
            .map(|(l, _)| *l)
            .expect("z inside stack")
    };

    let band_start = |k: usize| s + k * (w + s);
    let in_band = |pos: usize, lines: usize| {
        pos >= s && {
            let rel = pos - s;
            rel / (w + s) < lines && rel % (w + s) < w
        }
    };

    let mats = &geom.material_conductivities;
    let mut kappa = vec![0.0; total];
    let mut dirichlet = vec![false; total];
    for z in 0..nz {
        let layer = layer_of(z);
        for y in 0..ny {
            for x in 0..nx {
                let k = match layer {
                    Layer::Substrate => mats.substrate,
                    Layer::Insulator => mats.insulator,
                    Layer::BottomElectrode if in_band(x, geom.cols) => mats.electrode,
                    Layer::TopElectrode if in_band(y, geom.rows) => mats.electrode,
                    Layer::BottomElectrode | Layer::TopElectrode => mats.insulator,
                    Layer::Oxide => mats.oxide,
                };
                let idx = x + nx * (y + ny * z);
                kappa[idx] = k;
                dirichlet[idx] = z == 0;
            }
        }
    }

    let ox = layers[3].1.clone();
    let probe_z = ox.start + t_ox / 2;
    let r2 = geom.filament_radius * geom.filament_radius * (1.0 + 1e-9);
    let mut probes = Vec::with_capacity(geom.rows * geom.cols);
    let mut filaments = Vec::with_capacity(geom.rows * geom.cols);
    for row in 0..geom.rows {
        for col in 0..geom.cols {
            let (bx, by) = (band_start(col), band_start(row));
            // cell centre in voxel units
            let cx = bx as f64 + w as f64 / 2.0;
            let cy = by as f64 + w as f64 / 2.0;
            let px = (cx.floor() as usize).min(bx + w - 1);
            let py = (cy.floor() as usize).min(by + w - 1);
            let mut fil = Vec::new();
            for z in ox.clone() {
                for y in by..by + w {
                    for x in bx..bx + w {
                        let dx = (x as f64 + 0.5 - cx) * v;
                        let dy = (y as f64 + 0.5 - cy) * v;
                        if dx * dx + dy * dy <= r2 {
                            fil.push(x + nx * (y + ny * z));
                        }
                    }
                }
            }
            if fil.is_empty() {
                fil.extend(ox.clone().map(|z| px + nx * (py + ny * z)));
            }
            for &i in &fil {
                kappa[i] = mats.filament;
            }
            probes.push(px + nx * (py + ny * probe_z));
            filaments.push(fil);
        }
    }

    Ok(ThermalGrid {
        dims: [nx, ny, nz],
        voxel_size_nm,
        kappa,
        dirichlet,
        rows: geom.rows,
        cols: geom.cols,
        probes,
        filaments,
        layers,
    })
}
