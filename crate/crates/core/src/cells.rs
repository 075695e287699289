use std::fmt;
use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

/// A crossbar cell addressed by word line (row) and bit line (column).
///
/// Serialized as a two-element array `[row, col]`.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize,
)]
#[serde(from = "(usize, usize)", into = "(usize, usize)")]
pub struct Cell {
    pub row: usize,
    pub col: usize,
}

impl Cell {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Signed offset `(di, dj)` of `self` relative to `origin`.
    pub fn offset_from(self, origin: Cell) -> (i64, i64) {
        (
            self.row as i64 - origin.row as i64,
            self.col as i64 - origin.col as i64,
        )
    }

    /// True when both cells sit on the same word line or the same bit line.
    pub fn shares_line_with(self, other: Cell) -> bool {
        self.row == other.row || self.col == other.col
    }
}

impl From<(usize, usize)> for Cell {
    fn from((row, col): (usize, usize)) -> Self {
        Self { row, col }
    }
}

impl From<Cell> for (usize, usize) {
    fn from(c: Cell) -> Self {
        (c.row, c.col)
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.row, self.col)
    }
}

/// Dense row-major `rows × cols` matrix with one entry per crossbar cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellGrid<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Clone> CellGrid<T> {
    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }
}

impl<T> CellGrid<T> {
    /// Wraps a row-major vector. Panics if the length does not match.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Self {
        assert_eq!(data.len(), rows * cols, "cell grid length mismatch");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(Cell) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for row in 0..rows {
            for col in 0..cols {
                data.push(f(Cell::new(row, col)));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn contains(&self, cell: Cell) -> bool {
        cell.row < self.rows && cell.col < self.cols
    }

    pub fn flat_index(&self, cell: Cell) -> usize {
        cell.row * self.cols + cell.col
    }

    pub fn cell_at(&self, flat: usize) -> Cell {
        Cell::new(flat / self.cols, flat % self.cols)
    }

    pub fn get(&self, cell: Cell) -> Option<&T> {
        self.contains(cell)
            .then(|| &self.data[self.flat_index(cell)])
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn iter(&self) -> impl Iterator<Item = (Cell, &T)> {
        let cols = self.cols;
        self.data
            .iter()
            .enumerate()
            .map(move |(k, v)| (Cell::new(k / cols, k % cols), v))
    }

    pub fn map<U>(&self, mut f: impl FnMut(&T) -> U) -> CellGrid<U> {
        CellGrid {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(&mut f).collect(),
        }
    }

    /// Nested `Vec` of rows, the layout used in JSON artifacts.
    pub fn to_nested(&self) -> Vec<Vec<T>>
    where
        T: Clone,
    {
        self.data
            .chunks(self.cols.max(1))
            .map(|r| r.to_vec())
            .collect()
    }
}

impl<T> Index<Cell> for CellGrid<T> {
    type Output = T;
    fn index(&self, cell: Cell) -> &T {
        assert!(
            self.contains(cell),
            "cell {cell} outside {}x{} grid",
            self.rows,
            self.cols
        );
        &self.data[cell.row * self.cols + cell.col]
    }
}

impl<T> IndexMut<Cell> for CellGrid<T> {
    fn index_mut(&mut self, cell: Cell) -> &mut T {
        assert!(
            self.contains(cell),
            "cell {cell} outside {}x{} grid",
            self.rows,
            self.cols
        );
        let cols = self.cols;
        &mut self.data[cell.row * cols + cell.col]
    }
}

impl<T> Index<(usize, usize)> for CellGrid<T> {
    type Output = T;
    fn index(&self, (row, col): (usize, usize)) -> &T {
        &self[Cell::new(row, col)]
    }
}

impl<T> IndexMut<(usize, usize)> for CellGrid<T> {
    fn index_mut(&mut self, (row, col): (usize, usize)) -> &mut T {
        &mut self[Cell::new(row, col)]
    }
}

impl<T: Serialize + Clone> Serialize for CellGrid<T> {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        self.to_nested().serialize(s)
    }
}

impl<'de, T: Deserialize<'de>> Deserialize<'de> for CellGrid<T> {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let nested: Vec<Vec<T>> = Vec::deserialize(d)?;
        let rows = nested.len();
        let cols = nested.first().map_or(0, Vec::len);
        if nested.iter().any(|r| r.len() != cols) {
            return Err(serde::de::Error::custom("ragged cell grid"));
        }
        Ok(Self {
            rows,
            cols,
            data: nested.into_iter().flatten().collect(),
        })
    }
}
