//! Uniform cell-centred grids in one or two dimensions and sets of cells on them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Smallest admissible number of cells along an axis.
pub const MIN_CELLS_PER_AXIS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid dimension must be 1 or 2, got {0}")]
    Dimension(usize),
    #[error("axis {axis}: need at least {MIN_CELLS_PER_AXIS} cells, got {cells}")]
    TooFewCells { axis: usize, cells: usize },
    #[error("axis {axis}: spacing must be positive and finite, got {spacing}")]
    Spacing { axis: usize, spacing: f64 },
    #[error("axis {axis}: origin must be finite, got {origin}")]
    Origin { axis: usize, origin: f64 },
    #[error("axis {axis}: lower bound {lower} is not below upper bound {upper}")]
    Bounds { axis: usize, lower: f64, upper: f64 },
    #[error("per-axis arrays disagree in length")]
    Arity,
}

/// Uniform rectangular mesh. Cell `j` along an axis has centre `origin + (j + 1/2) h`.
///
/// Cells are numbered with axis 0 varying fastest: `index = i0 + n0 * i1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    cells: Vec<usize>,
    origin: Vec<f64>,
    spacing: Vec<f64>,
}

impl Grid {
    pub fn new(cells: &[usize], origin: &[f64], spacing: &[f64]) -> Result<Self, GridError> {
        let dim = cells.len();
        if dim != 1 && dim != 2 {
            return Err(GridError::Dimension(dim));
        }
        if origin.len() != dim || spacing.len() != dim {
            return Err(GridError::Arity);
        }
        for axis in 0..dim {
            if cells[axis] < MIN_CELLS_PER_AXIS {
                return Err(GridError::TooFewCells { axis, cells: cells[axis] });
            }
            if !(spacing[axis] > 0.0 && spacing[axis].is_finite()) {
                return Err(GridError::Spacing { axis, spacing: spacing[axis] });
            }
            if !origin[axis].is_finite() {
                return Err(GridError::Origin { axis, origin: origin[axis] });
            }
        }
        Ok(Self { cells: cells.to_vec(), origin: origin.to_vec(), spacing: spacing.to_vec() })
    }

    /// Grid covering the box `[lower, upper]` with the given cell counts.
    pub fn from_bounds(cells: &[usize], lower: &[f64], upper: &[f64]) -> Result<Self, GridError> {
        if lower.len() != cells.len() || upper.len() != cells.len() {
            return Err(GridError::Arity);
        }
        let mut spacing = Vec::with_capacity(cells.len());
        for axis in 0..cells.len() {
            if !(upper[axis] > lower[axis]) {
                return Err(GridError::Bounds { axis, lower: lower[axis], upper: upper[axis] });
            }
            let n = cells[axis].max(1) as f64;
            spacing.push((upper[axis] - lower[axis]) / n);
        }
        Self::new(cells, lower, &spacing)
    }

    /// Symmetric box `[-half_width, half_width]^dim` with `cells` cells per axis.
    pub fn centered(dim: usize, cells: usize, half_width: f64) -> Result<Self, GridError> {
        Self::from_bounds(&vec![cells; dim], &vec![-half_width; dim], &vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[usize] {
        &self.cells
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    /// Total number of cells.
    pub fn len(&self) -> usize {
        self.cells.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.iter().product()
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Upper corner of the domain.
    pub fn upper(&self) -> Vec<f64> {
        (0..self.dim()).map(|a| self.origin[a] + self.cells[a] as f64 * self.spacing[a]).collect()
    }

    /// Stride in the flat index between neighbours along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        if axis == 0 {
            1
        } else {
            self.cells[0]
        }
    }

    pub fn multi_index(&self, index: usize) -> [usize; 2] {
        let n0 = self.cells[0];
        [index % n0, index / n0]
    }

    pub fn flat_index(&self, multi: [usize; 2]) -> usize {
        if self.dim() == 1 {
            multi[0]
        } else {
            multi[0] + self.cells[0] * multi[1]
        }
    }

    /// Coordinate of the centre of cell `j` along `axis`.
    pub fn center_coord(&self, axis: usize, j: usize) -> f64 {
        self.origin[axis] + (j as f64 + 0.5) * self.spacing[axis]
    }

    /// Coordinate of the face between cells `j` and `j + 1` along `axis`.
    pub fn face_coord(&self, axis: usize, j: usize) -> f64 {
        self.origin[axis] + (j as f64 + 1.0) * self.spacing[axis]
    }

    /// Cell centre; the unused second coordinate of a 1D grid is zero.
    pub fn center(&self, index: usize) -> [f64; 2] {
        let mi = self.multi_index(index);
        let mut x = [0.0; 2];
        for (axis, xa) in x.iter_mut().enumerate().take(self.dim()) {
            *xa = self.center_coord(axis, mi[axis]);
        }
        x
    }

    /// Whether `x` lies inside the closed domain box.
    pub fn contains(&self, x: &[f64]) -> bool {
        let upper = self.upper();
        (0..self.dim()).all(|a| x[a] >= self.origin[a] && x[a] <= upper[a])
    }

    /// Same grid with every axis refined by `factor`.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            cells: self.cells.iter().map(|&c| c * factor).collect(),
            origin: self.origin.clone(),
            spacing: self.spacing.iter().map(|&h| h / factor as f64).collect(),
        }
    }

    /// Same cell layout with new coordinates `origin * s`, `spacing * s`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            cells: self.cells.clone(),
            origin: self.origin.iter().map(|&o| o * s).collect(),
            spacing: self.spacing.iter().map(|&h| h * s).collect(),
        }
    }

    /// Iterate over interior faces along `axis` as `(left, right, face_index_along_axis)`.
    pub fn faces(&self, axis: usize) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let n0 = self.cells[0];
        let n1 = if self.dim() == 2 { self.cells[1] } else { 1 };
        let stride = self.stride(axis);
        let (lim0, lim1) = if axis == 0 { (n0 - 1, n1) } else { (n0, n1 - 1) };
        (0..lim1).flat_map(move |i1| {
            (0..lim0).map(move |i0| {
                let left = i0 + n0 * i1;
                let along = if axis == 0 { i0 } else { i1 };
                (left, left + stride, along)
            })
        })
    }

    /// Cells adjacent to the lower and upper boundary along `axis`.
    pub(crate) fn boundary_cells(&self, axis: usize) -> (Vec<usize>, Vec<usize>) {
        let n0 = self.cells[0];
        let n1 = if self.dim() == 2 { self.cells[1] } else { 1 };
        if axis == 0 {
            let lo = (0..n1).map(|i1| n0 * i1).collect();
            let hi = (0..n1).map(|i1| n0 - 1 + n0 * i1).collect();
            (lo, hi)
        } else {
            let lo = (0..n0).collect();
            let hi = (0..n0).map(|i0| i0 + n0 * (n1 - 1)).collect();
            (lo, hi)
        }
    }

    /// Axis-aligned neighbours of a cell that lie inside the grid.
    pub fn neighbours(&self, index: usize) -> impl Iterator<Item = usize> + '_ {
        let mi = self.multi_index(index);
        (0..self.dim()).flat_map(move |axis| {
            let stride = self.stride(axis);
            let j = mi[axis];
            let lo = (j > 0).then(|| index - stride);
            let hi = (j + 1 < self.cells[axis]).then(|| index + stride);
            lo.into_iter().chain(hi)
        })
    }
}

/// Axis-aligned bounding box of a cell set, in cell indices (inclusive).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellBox {
    pub lower: [usize; 2],
    pub upper: [usize; 2],
}

/// A set of cells of one grid, stored as sorted flat indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CellSet {
    indices: Vec<usize>,
}

impl CellSet {
    pub fn from_sorted(indices: Vec<usize>) -> Self {
        debug_assert!(indices.windows(2).all(|w| w[0] < w[1]));
        Self { indices }
    }

    pub fn from_indices(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self { indices }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.binary_search(&index).is_ok()
    }

    pub fn intersection_len(&self, other: &CellSet) -> usize {
        let (mut a, mut b, mut n) = (0, 0, 0);
        while a < self.indices.len() && b < other.indices.len() {
            match self.indices[a].cmp(&other.indices[b]) {
                std::cmp::Ordering::Less => a += 1,
                std::cmp::Ordering::Greater => b += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    a += 1;
                    b += 1;
                }
            }
        }
        n
    }

    pub fn intersects(&self, other: &CellSet) -> bool {
        self.intersection_len(other) > 0
    }

    pub fn union_len(&self, other: &CellSet) -> usize {
        self.len() + other.len() - self.intersection_len(other)
    }

    pub fn symmetric_difference_len(&self, other: &CellSet) -> usize {
        self.len() + other.len() - 2 * self.intersection_len(other)
    }

    /// Number of cells of `self` missing from `other`.
    pub fn missing_from(&self, other: &CellSet) -> usize {
        self.len() - self.intersection_len(other)
    }

    pub fn bounding_box(&self, grid: &Grid) -> Option<CellBox> {
        let mut it = self.indices.iter().map(|&i| grid.multi_index(i));
        let first = it.next()?;
        let (mut lower, mut upper) = (first, first);
        for mi in it {
            for a in 0..2 {
                lower[a] = lower[a].min(mi[a]);
                upper[a] = upper[a].max(mi[a]);
            }
        }
        Some(CellBox { lower, upper })
    }

    /// Cells of the set with at least one axis neighbour outside the set or on the grid edge.
    pub fn boundary(&self, grid: &Grid) -> Vec<usize> {
        self.indices
            .iter()
            .copied()
            .filter(|&i| {
                let interior_neighbours = grid.neighbours(i).filter(|&nb| self.contains(nb)).count();
                interior_neighbours < 2 * grid.dim()
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_grids() {
        assert!(matches!(Grid::new(&[3], &[0.0], &[1.0]), Err(GridError::TooFewCells { .. })));
        assert!(matches!(Grid::new(&[8], &[0.0], &[0.0]), Err(GridError::Spacing { .. })));
        assert!(matches!(Grid::new(&[8, 8, 8], &[0.0; 3], &[1.0; 3]), Err(GridError::Dimension(3))));
        assert!(matches!(Grid::new(&[8], &[0.0, 1.0], &[1.0]), Err(GridError::Arity)));
    }

    #[test]
    fn centers_and_volume() {
        let g = Grid::from_bounds(&[4, 8], &[0.0, -1.0], &[1.0, 1.0]).unwrap();
        assert_eq!(g.len(), 32);
        assert!((g.cell_volume() - 0.25 * 0.25).abs() < 1e-15);
        let c = g.center(g.flat_index([1, 2]));
        assert!((c[0] - 0.375).abs() < 1e-15);
        assert!((c[1] - (-1.0 + 2.5 * 0.25)).abs() < 1e-15);
    }

    #[test]
    fn face_counts() {
        let g = Grid::from_bounds(&[5, 4], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        assert_eq!(g.faces(0).count(), 4 * 4);
        assert_eq!(g.faces(1).count(), 5 * 3);
        for (l, r, _) in g.faces(1) {
            assert_eq!(r - l, 5);
        }
    }

    #[test]
    fn set_algebra() {
        let a = CellSet::from_indices(vec![1, 2, 3, 7]);
        let b = CellSet::from_indices(vec![3, 4, 7, 9]);
        assert_eq!(a.intersection_len(&b), 2);
        assert_eq!(a.union_len(&b), 6);
        assert_eq!(a.symmetric_difference_len(&b), 4);
        assert_eq!(a.missing_from(&b), 2);
    }

    #[test]
    fn boundary_of_block() {
        let g = Grid::from_bounds(&[6, 6], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let mut idx = Vec::new();
        for i1 in 1..5 {
            for i0 in 1..5 {
                idx.push(g.flat_index([i0, i1]));
            }
        }
        let set = CellSet::from_indices(idx);
        // 4x4 block: 12 boundary cells, 4 interior
        assert_eq!(set.boundary(&g).len(), 12);
        let bb = set.bounding_box(&g).unwrap();
        assert_eq!(bb.lower, [1, 1]);
        assert_eq!(bb.upper, [4, 4]);
    }
}
