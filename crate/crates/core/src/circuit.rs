//! Cell voltages and dissipated powers of a passive crossbar under V/2
//! biasing.
//!
//! Word lines (rows) and bit lines (columns) are driven by ideal sources. In
//! the default ideal mode a cell sees exactly the difference of its two line
//! voltages. With a non-zero wire resistance every line is a resistor chain
//! driven from both ends and the node potentials are found by nodal analysis.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::device::{conductance, DeviceParams, DeviceState};
use crate::thermal::AlphaKernel;
use crate::{Cell, CellGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CircuitError {
    #[error("cell {cell} outside the {rows}x{cols} array")]
    IndexOutOfRange {
        cell: Cell,
        rows: usize,
        cols: usize,
    },
    #[error("singular nodal matrix (disconnected network)")]
    SingularMatrix,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid crossbar: {0}")]
    Invalid(String),
}

/// Driver voltages of every word line and bit line.
#[derive(Debug, Clone, PartialEq)]
pub struct LineVoltages {
    pub word_lines: Vec<f64>,
    pub bit_lines: Vec<f64>,
}

impl LineVoltages {
    pub fn grounded(rows: usize, cols: usize) -> Self {
        Self {
            word_lines: vec![0.0; rows],
            bit_lines: vec![0.0; cols],
        }
    }

    pub fn is_idle(&self) -> bool {
        self.word_lines
            .iter()
            .chain(&self.bit_lines)
            .all(|&v| v == 0.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            word_lines: self.word_lines.iter().map(|v| v * c).collect(),
            bit_lines: self.bit_lines.iter().map(|v| v * c).collect(),
        }
    }
}

/// V/2 scheme for one selected cell: its word line at `v_set`, its bit line
/// grounded, every other line at `v_set / 2`.
pub fn bias_lines(
    target: Cell,
    v_set: f64,
    rows: usize,
    cols: usize,
) -> Result<LineVoltages, CircuitError> {
    Ok(bias_lines_multi(&[target], v_set, rows, cols)?
        .expect("a single target is always compatible"))
}

/// V/2 scheme selecting several cells at once.
///
/// Returns `Ok(None)` when the targets do not form a full rows × columns
/// product, i.e. when driving all their lines would also fully select cells
/// outside the target set.
pub fn bias_lines_multi(
    targets: &[Cell],
    v_set: f64,
    rows: usize,
    cols: usize,
) -> Result<Option<LineVoltages>, CircuitError> {
    for &cell in targets {
        if cell.row >= rows || cell.col >= cols {
            return Err(CircuitError::IndexOutOfRange { cell, rows, cols });
        }
    }
    let sel_rows: BTreeSet<usize> = targets.iter().map(|c| c.row).collect();
    let sel_cols: BTreeSet<usize> = targets.iter().map(|c| c.col).collect();
    let unique: BTreeSet<Cell> = targets.iter().copied().collect();
    if sel_rows.len() * sel_cols.len() != unique.len() {
        return Ok(None);
    }
    let half = v_set / 2.0;
    Ok(Some(LineVoltages {
        word_lines: (0..rows)
            .map(|r| if sel_rows.contains(&r) { v_set } else { half })
            .collect(),
        bit_lines: (0..cols)
            .map(|c| if sel_cols.contains(&c) { 0.0 } else { half })
            .collect(),
    }))
}

/// `V[i][j] = word_lines[i] - bit_lines[j]`.
pub fn cell_voltages_ideal(lines: &LineVoltages) -> CellGrid<f64> {
    CellGrid::from_fn(lines.word_lines.len(), lines.bit_lines.len(), |c| {
        lines.word_lines[c.row] - lines.bit_lines[c.col]
    })
}

/// State of an `m × n` passive crossbar.
#[derive(Debug, Clone)]
pub struct CrossbarInstance {
    pub states: CellGrid<DeviceState>,
    pub params: DeviceParams,
    pub kernel: AlphaKernel,
    /// Resistance of one wire segment between adjacent cells (Ω); 0 selects
    /// ideal drivers.
    pub wire_resistance: f64,
    pub ambient: f64,
}

impl CrossbarInstance {
    pub fn new(
        states: CellGrid<DeviceState>,
        params: DeviceParams,
        kernel: AlphaKernel,
        wire_resistance: f64,
        ambient: f64,
    ) -> Result<Self, CircuitError> {
        if states.is_empty() {
            return Err(CircuitError::Invalid(
                "crossbar needs at least one cell".into(),
            ));
        }
        if (kernel.ambient - ambient).abs() > 1e-9 {
            return Err(CircuitError::Invalid(format!(
                "kernel ambient {} K differs from crossbar ambient {} K",
                kernel.ambient, ambient
            )));
        }
        if !(wire_resistance.is_finite() && wire_resistance >= 0.0) {
            return Err(CircuitError::Invalid(format!(
                "wire resistance {wire_resistance} Ω"
            )));
        }
        if let Some((f, m)) = params.violations().into_iter().next() {
            return Err(CircuitError::Invalid(format!("{f}: {m}")));
        }
        Ok(Self {
            states,
            params,
            kernel,
            wire_resistance,
            ambient,
        })
    }

    /// Every cell in HRS at ambient temperature.
    pub fn all_hrs(
        rows: usize,
        cols: usize,
        params: DeviceParams,
        kernel: AlphaKernel,
        ambient: f64,
    ) -> Result<Self, CircuitError> {
        let states = CellGrid::filled(rows, cols, DeviceState::hrs(&params, ambient));
        Self::new(states, params, kernel, 0.0, ambient)
    }

    pub fn rows(&self) -> usize {
        self.states.rows()
    }

    pub fn cols(&self) -> usize {
        self.states.cols()
    }

    pub fn contains(&self, cell: Cell) -> bool {
        self.states.contains(cell)
    }

    pub fn conductances(&self) -> CellGrid<f64> {
        self.states.map(|s| conductance(s.x, &self.params))
    }

    /// Cell voltages in the configured driver mode.
    pub fn cell_voltages(&self, lines: &LineVoltages) -> Result<CellGrid<f64>, CircuitError> {
        if lines.word_lines.len() != self.rows() || lines.bit_lines.len() != self.cols() {
            return Err(CircuitError::ShapeMismatch(format!(
                "{} word / {} bit lines for a {}x{} array",
                lines.word_lines.len(),
                lines.bit_lines.len(),
                self.rows(),
                self.cols()
            )));
        }
        if self.wire_resistance == 0.0 {
            Ok(cell_voltages_ideal(lines))
        } else {
            solve_cell_voltages_wired(self, lines)
        }
    }
}

/// Node potentials of the resistive line network, flattened as word-line
/// nodes followed by bit-line nodes.
#[derive(Debug, Clone)]
pub struct WiredSolution {
    pub word_nodes: CellGrid<f64>,
    pub bit_nodes: CellGrid<f64>,
    /// Largest Kirchhoff current imbalance over all nodes (A).
    pub max_kcl_residual: f64,
}

impl WiredSolution {
    pub fn cell_voltages(&self) -> CellGrid<f64> {
        CellGrid::from_fn(self.word_nodes.rows(), self.word_nodes.cols(), |c| {
            self.word_nodes[c] - self.bit_nodes[c]
        })
    }
}

/// Nodal analysis of the crossbar with `wire_resistance` per segment.
///
/// Each word line is a chain of `n` nodes, one under each cell, joined by
/// segment resistors and driven from both ends; bit lines likewise with `m`
/// nodes. Every cell connects its word node to its bit node with `G(x)`.
pub fn solve_wired_network(
    xbar: &CrossbarInstance,
    lines: &LineVoltages,
) -> Result<WiredSolution, CircuitError> {
    let (m, n) = (xbar.rows(), xbar.cols());
    if lines.word_lines.len() != m || lines.bit_lines.len() != n {
        return Err(CircuitError::ShapeMismatch(
            "line count does not match array".into(),
        ));
    }
    if !(xbar.wire_resistance > 0.0) {
        return Err(CircuitError::Invalid(
            "wired solve needs a positive wire resistance".into(),
        ));
    }
    let gw = 1.0 / xbar.wire_resistance;
    let cells = m * n;
    let size = 2 * cells;
    let word = |i: usize, j: usize| i * n + j;
    let bit = |i: usize, j: usize| cells + i * n + j;

    let mut a = DMatrix::<f64>::zeros(size, size);
    let mut b = DVector::<f64>::zeros(size);
    let stamp = |a: &mut DMatrix<f64>, p: usize, q: usize, g: f64| {
        a[(p, p)] += g;
        a[(q, q)] += g;
        a[(p, q)] -= g;
        a[(q, p)] -= g;
    };
    let g = xbar.conductances();
    for i in 0..m {
        for j in 0..n {
            stamp(&mut a, word(i, j), bit(i, j), g[(i, j)]);
            if j + 1 < n {
                stamp(&mut a, word(i, j), word(i, j + 1), gw);
            }
            if i + 1 < m {
                stamp(&mut a, bit(i, j), bit(i + 1, j), gw);
            }
        }
    }
    let drive = |a: &mut DMatrix<f64>, b: &mut DVector<f64>, node: usize, v: f64| {
        a[(node, node)] += gw;
        b[node] += gw * v;
    };
    for i in 0..m {
        drive(&mut a, &mut b, word(i, 0), lines.word_lines[i]);
        drive(&mut a, &mut b, word(i, n - 1), lines.word_lines[i]);
    }
    for j in 0..n {
        drive(&mut a, &mut b, bit(0, j), lines.bit_lines[j]);
        drive(&mut a, &mut b, bit(m - 1, j), lines.bit_lines[j]);
    }

    let chol = a.clone().cholesky().ok_or(CircuitError::SingularMatrix)?;
    let mut x = chol.solve(&b);
    // one step of iterative refinement
    let r = &b - &a * &x;
    x += chol.solve(&r);
    let residual = (&a * &x - &b).amax();
    if !residual.is_finite() {
        return Err(CircuitError::SingularMatrix);
    }
    Ok(WiredSolution {
        word_nodes: CellGrid::from_vec(m, n, x.as_slice()[..cells].to_vec()),
        bit_nodes: CellGrid::from_vec(m, n, x.as_slice()[cells..].to_vec()),
        max_kcl_residual: residual,
    })
}

/// Per-cell voltage drops with wire resistance.
pub fn solve_cell_voltages_wired(
    xbar: &CrossbarInstance,
    lines: &LineVoltages,
) -> Result<CellGrid<f64>, CircuitError> {
    Ok(solve_wired_network(xbar, lines)?.cell_voltages())
}

/// Dissipated power `V² G(x)` of every cell.
pub fn cell_powers(
    v: &CellGrid<f64>,
    xbar: &CrossbarInstance,
) -> Result<CellGrid<f64>, CircuitError> {
    if v.shape() != xbar.states.shape() {
        return Err(CircuitError::ShapeMismatch(format!(
            "{:?} voltages for a {:?} array",
            v.shape(),
            xbar.states.shape()
        )));
    }
    Ok(CellGrid::from_fn(v.rows(), v.cols(), |c| {
        v[c] * v[c] * conductance(xbar.states[c].x, &xbar.params)
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn xbar(rows: usize, cols: usize, x: f64, wire: f64) -> CrossbarInstance {
        let params = DeviceParams::default();
        let states = CellGrid::filled(rows, cols, DeviceState::with_x(&params, x, 300.0));
        CrossbarInstance::new(
            states,
            params,
            AlphaKernel::uncoupled(300.0, 1e6),
            wire,
            300.0,
        )
        .unwrap()
    }

    #[test]
    fn v_half_bias_5x5() {
        let l = bias_lines(Cell::new(2, 2), 1.05, 5, 5).unwrap();
        for (r, &v) in l.word_lines.iter().enumerate() {
            assert_eq!(v, if r == 2 { 1.05 } else { 0.525 });
        }
        for (c, &v) in l.bit_lines.iter().enumerate() {
            assert_eq!(v, if c == 2 { 0.0 } else { 0.525 });
        }
        let v = cell_voltages_ideal(&l);
        assert_eq!(v[(2, 2)], 1.05);
        assert_eq!(v[(2, 4)], 0.525);
        assert_eq!(v[(0, 0)], 0.0);
        let half = v.as_slice().iter().filter(|&&x| x == 0.525).count();
        assert_eq!(half, 8);
    }

    #[test]
    fn single_cell_bias() {
        let l = bias_lines(Cell::new(0, 0), 1.05, 1, 1).unwrap();
        assert_eq!(l.word_lines, vec![1.05]);
        assert_eq!(l.bit_lines, vec![0.0]);
    }

    #[test]
    fn zero_amplitude_bias_is_idle() {
        let l = bias_lines(Cell::new(1, 1), 0.0, 3, 3).unwrap();
        assert!(l.is_idle());
        assert!(cell_voltages_ideal(&l).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn out_of_range_target() {
        assert!(matches!(
            bias_lines(Cell::new(5, 0), 1.0, 5, 5),
            Err(CircuitError::IndexOutOfRange { .. })
        ));
    }

    #[test]
    fn multi_target_compatibility() {
        // same row: compatible
        let l = bias_lines_multi(&[Cell::new(1, 0), Cell::new(1, 3)], 1.0, 4, 4)
            .unwrap()
            .unwrap();
        let v = cell_voltages_ideal(&l);
        assert_eq!(v[(1, 0)], 1.0);
        assert_eq!(v[(1, 3)], 1.0);
        assert_eq!(v[(1, 1)], 0.5);
        assert_eq!(v[(0, 0)], 0.5);
        assert_eq!(v[(0, 1)], 0.0);
        // diagonal pair would also select (0,1) and (1,0)
        assert!(
            bias_lines_multi(&[Cell::new(0, 0), Cell::new(1, 1)], 1.0, 4, 4)
                .unwrap()
                .is_none()
        );
    }

    #[test]
    fn powers() {
        let x = xbar(5, 5, 1.0, 0.0);
        let v = cell_voltages_ideal(&bias_lines(Cell::new(2, 2), 1.05, 5, 5).unwrap());
        let p = cell_powers(&v, &x).unwrap();
        assert!((p[(2, 2)] - 110.25e-6).abs() < 1e-15);
        assert!((p[(2, 3)] - p[(2, 2)] / 4.0).abs() < 1e-18);
        assert_eq!(p[(0, 0)], 0.0);
    }

    #[test]
    fn tiny_wire_resistance_matches_ideal() {
        let x = xbar(5, 5, 1.0, 1e-6);
        let l = bias_lines(Cell::new(2, 2), 1.05, 5, 5).unwrap();
        let wired = solve_cell_voltages_wired(&x, &l).unwrap();
        let ideal = cell_voltages_ideal(&l);
        for (c, &v) in ideal.iter() {
            assert!((wired[c] - v).abs() < 1e-6, "{c}: {} vs {v}", wired[c]);
        }
    }

    #[test]
    fn wire_resistance_lowers_selected_drop() {
        let l = bias_lines(Cell::new(2, 2), 1.05, 5, 5).unwrap();
        let mut prev = f64::INFINITY;
        for r in [1.0, 10.0, 100.0, 1000.0] {
            let v = solve_cell_voltages_wired(&xbar(5, 5, 1.0, r), &l).unwrap()[(2, 2)];
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn kirchhoff_residual_small() {
        let mut x = xbar(4, 6, 0.0, 25.0);
        x.states[(1, 2)].x = 1.0;
        x.states[(3, 5)].x = 0.4;
        let s = solve_wired_network(&x, &bias_lines(Cell::new(1, 2), 1.05, 4, 6).unwrap()).unwrap();
        assert!(s.max_kcl_residual <= 1e-10, "{}", s.max_kcl_residual);
    }

    #[test]
    fn kernel_ambient_must_match() {
        let params = DeviceParams::default();
        let states = CellGrid::filled(2, 2, DeviceState::hrs(&params, 300.0));
        assert!(CrossbarInstance::new(
            states,
            params,
            AlphaKernel::uncoupled(310.0, 1.0),
            0.0,
            300.0
        )
        .is_err());
    }

    proptest! {
        #[test]
        fn v_half_partition(m in 1usize..9, n in 1usize..9, r in 0usize..9, c in 0usize..9, v in 0.01f64..2.0) {
            let (r, c) = (r % m, c % n);
            let volts = cell_voltages_ideal(&bias_lines(Cell::new(r, c), v, m, n).unwrap());
            let (mut sel, mut half, mut zero) = (0, 0, 0);
            for (cell, &x) in volts.iter() {
                let on_row = cell.row == r;
                let on_col = cell.col == c;
                if on_row && on_col {
                    prop_assert_eq!(x, v);
                    sel += 1;
                } else if on_row || on_col {
                    prop_assert_eq!(x, v / 2.0);
                    half += 1;
                } else {
                    prop_assert_eq!(x, 0.0);
                    zero += 1;
                }
            }
            prop_assert_eq!(sel, 1);
            prop_assert_eq!(half, (m - 1) + (n - 1));
            prop_assert_eq!(zero, (m - 1) * (n - 1));
        }

        #[test]
        fn powers_scale_quadratically(cscale in 0.1f64..1.9) {
            let x = xbar(3, 4, 0.3, 0.0);
            let l = bias_lines(Cell::new(1, 1), 1.0, 3, 4).unwrap();
            let p1 = cell_powers(&cell_voltages_ideal(&l), &x).unwrap();
            let p2 = cell_powers(&cell_voltages_ideal(&l.scaled(cscale)), &x).unwrap();
            for (c, &p) in p1.iter() {
                prop_assert!(p >= 0.0);
                prop_assert!((p2[c] - p * cscale * cscale).abs() <= 1e-15 * p.max(1e-30) + 1e-24);
            }
        }
    }
}
