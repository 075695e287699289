//! Crosstalk hub: the temperature rise each cell receives from the others.
//!
//! Coupling is applied to over-temperatures, `t_in[i][j] = Σ α(p−i, q−j) ·
//! (T[p][q] − T0)` summed over every other cell, so an array sitting at
//! ambient receives no increment. The kernel is translation invariant and
//! clipped at the array edges; offsets absent from the kernel do not couple.

use thiserror::Error;

use crate::thermal::AlphaKernel;
use crate::CellGrid;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HubError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
}

/// Crosstalk temperature increment per cell (K).
#[derive(Debug, Clone, PartialEq)]
pub struct CrosstalkField {
    pub t_in: CellGrid<f64>,
}

/// Evaluates the hub sum for filament temperatures `t_fil`.
pub fn crosstalk_temperatures(
    t_fil: &CellGrid<f64>,
    kernel: &AlphaKernel,
    ambient: f64,
) -> Result<CrosstalkField, HubError> {
    if (kernel.ambient - ambient).abs() > 1e-9 {
        return Err(HubError::ShapeMismatch(format!(
            "kernel referenced to {} K, array at {} K",
            kernel.ambient, ambient
        )));
    }
    if t_fil.is_empty() {
        return Err(HubError::ShapeMismatch("empty temperature grid".into()));
    }
    let t_in = CellGrid::from_fn(t_fil.rows(), t_fil.cols(), |victim| {
        t_fil
            .iter()
            .filter(|(src, _)| *src != victim)
            .filter_map(|(src, &t)| {
                let (di, dj) = src.offset_from(victim);
                kernel.alpha(di, dj).map(|a| a * (t - ambient))
            })
            .sum()
    });
    Ok(CrosstalkField { t_in })
}

/// Precomputed sparse form of the hub for one array shape.
///
/// Row `k` lists `(source, alpha)` for every other cell that couples into
/// flat cell `k`.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Vec<(usize, f64)>>,
}

impl CouplingMatrix {
    pub fn new(kernel: &AlphaKernel, rows: usize, cols: usize) -> Self {
        let mut entries = vec![Vec::new(); rows * cols];
        for (k, row) in entries.iter_mut().enumerate() {
            let (vi, vj) = ((k / cols) as i64, (k % cols) as i64);
            for ((di, dj), a) in kernel.neighbours() {
                let (si, sj) = (vi + di, vj + dj);
                if si >= 0 && sj >= 0 && (si as usize) < rows && (sj as usize) < cols {
                    row.push((si as usize * cols + sj as usize, a));
                }
            }
        }
        Self {
            rows,
            cols,
            entries,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Incoming coupling of flat cell `k`.
    pub fn row(&self, k: usize) -> &[(usize, f64)] {
        &self.entries[k]
    }

    /// Largest total incoming coupling of any cell.
    pub fn max_row_sum(&self) -> f64 {
        self.entries
            .iter()
            .map(|r| r.iter().map(|e| e.1).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// `out[k] = Σ α · over[source]`.
    #[inline]
    pub fn apply(&self, over: &[f64], out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(&self.entries) {
            *o = row.iter().map(|&(s, a)| a * over[s]).sum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Cell;
    use proptest::prelude::*;

    fn kernel(entries: &[((i64, i64), f64)]) -> AlphaKernel {
        let mut k = AlphaKernel::uncoupled(300.0, 1e6);
        for &(o, a) in entries {
            k.insert(o, a, 1.0);
        }
        k
    }

    #[test]
    fn ambient_array_gets_nothing() {
        let t = CellGrid::filled(3, 3, 300.0);
        let f = crosstalk_temperatures(&t, &kernel(&[((0, 1), 0.3)]), 300.0).unwrap();
        assert!(f.t_in.as_slice().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn single_hot_neighbour() {
        let mut t = CellGrid::filled(1, 2, 300.0);
        t[(0, 0)] = 400.0;
        // victim (0,1) sees the source at offset (0,-1)
        let k = kernel(&[((0, -1), 0.3), ((0, 1), 0.3)]);
        let f = crosstalk_temperatures(&t, &k, 300.0).unwrap();
        assert!((f.t_in[(0, 1)] - 30.0).abs() < 1e-12);
        assert_eq!(f.t_in[(0, 0)], 0.0);
    }

    #[test]
    fn two_symmetric_neighbours_superpose() {
        let mut t = CellGrid::filled(1, 3, 300.0);
        t[(0, 0)] = 400.0;
        t[(0, 2)] = 400.0;
        let k = kernel(&[((0, -1), 0.3), ((0, 1), 0.3)]);
        let f = crosstalk_temperatures(&t, &k, 300.0).unwrap();
        assert!((f.t_in[(0, 1)] - 60.0).abs() < 1e-12);
    }

    #[test]
    fn self_term_is_excluded() {
        let mut t = CellGrid::filled(2, 2, 300.0);
        t[(1, 1)] = 900.0;
        let f = crosstalk_temperatures(&t, &kernel(&[]), 300.0).unwrap();
        assert_eq!(f.t_in[(1, 1)], 0.0);
    }

    #[test]
    fn ambient_mismatch() {
        let t = CellGrid::filled(2, 2, 300.0);
        assert!(crosstalk_temperatures(&t, &kernel(&[]), 310.0).is_err());
    }

    fn arb_kernel() -> impl Strategy<Value = AlphaKernel> {
        proptest::collection::vec(0.0f64..0.2, 24).prop_map(|vals| {
            let mut k = AlphaKernel::uncoupled(300.0, 1e6);
            let mut it = vals.into_iter();
            for di in -2..=2 {
                for dj in -2..=2 {
                    if (di, dj) != (0, 0) {
                        k.insert((di, dj), it.next().unwrap(), 1.0);
                    }
                }
            }
            k
        })
    }

    proptest! {
        #[test]
        fn matrix_form_matches_direct_sum(k in arb_kernel(), temps in proptest::collection::vec(300.0f64..900.0, 20)) {
            let t = CellGrid::from_vec(4, 5, temps);
            let direct = crosstalk_temperatures(&t, &k, 300.0).unwrap();
            let over: Vec<f64> = t.as_slice().iter().map(|x| x - 300.0).collect();
            let mut out = vec![0.0; 20];
            CouplingMatrix::new(&k, 4, 5).apply(&over, &mut out);
            for (a, b) in out.iter().zip(direct.t_in.as_slice()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn perturbing_a_cell_never_changes_its_own_increment(k in arb_kernel(), bump in 1.0f64..500.0, r in 0usize..4, c in 0usize..5) {
            let base = CellGrid::filled(4, 5, 350.0);
            let mut hot = base.clone();
            hot[(r, c)] += bump;
            let a = crosstalk_temperatures(&base, &k, 300.0).unwrap();
            let b = crosstalk_temperatures(&hot, &k, 300.0).unwrap();
            prop_assert_eq!(a.t_in[Cell::new(r, c)], b.t_in[Cell::new(r, c)]);
        }

        #[test]
        fn linear_in_over_temperature(k in arb_kernel(), temps in proptest::collection::vec(300.0f64..900.0, 9), s in 0.0f64..3.0) {
            let t = CellGrid::from_vec(3, 3, temps);
            let scaled = t.map(|x| 300.0 + s * (x - 300.0));
            let a = crosstalk_temperatures(&t, &k, 300.0).unwrap();
            let b = crosstalk_temperatures(&scaled, &k, 300.0).unwrap();
            for (x, y) in a.t_in.as_slice().iter().zip(b.t_in.as_slice()) {
                prop_assert!((x * s - y).abs() < 1e-9);
                prop_assert!(*x >= 0.0);
            }
        }
    }
}
