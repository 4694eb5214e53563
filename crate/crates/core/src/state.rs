//! Multi-species field snapshots and the reductions shared by every other module.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CellSet, Grid};
use crate::numeric::{compensated_sum, euclidean_norm};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StateError {
    #[error("species count must be positive")]
    NoSpecies,
    #[error("field {species} has {got} values, grid has {expected} cells")]
    Length { species: usize, expected: usize, got: usize },
    #[error("field {species} cell {cell} holds {value}; values must be finite and nonnegative")]
    BadValue { species: usize, cell: usize, value: f64 },
    #[error("time must be finite and nonnegative, got {0}")]
    Time(f64),
    #[error("species index {index} out of range for {k} species")]
    SpeciesIndex { index: usize, k: usize },
}

/// `k` nonnegative cell-averaged fields on one grid at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeciesState {
    grid: Grid,
    fields: Vec<Vec<f64>>,
    time: f64,
}

impl SpeciesState {
    pub fn new(grid: Grid, fields: Vec<Vec<f64>>, time: f64) -> Result<Self, StateError> {
        if fields.is_empty() {
            return Err(StateError::NoSpecies);
        }
        if !(time.is_finite() && time >= 0.0) {
            return Err(StateError::Time(time));
        }
        for (species, f) in fields.iter().enumerate() {
            if f.len() != grid.len() {
                return Err(StateError::Length { species, expected: grid.len(), got: f.len() });
            }
            if let Some((cell, &value)) = f.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                return Err(StateError::BadValue { species, cell, value });
            }
        }
        Ok(Self { grid, fields, time })
    }

    pub fn zeros(grid: Grid, k: usize, time: f64) -> Result<Self, StateError> {
        let n = grid.len();
        Self::new(grid, vec![vec![0.0; n]; k], time)
    }

    /// Sample `f(species, x)` at every cell centre (negative samples are clamped to 0).
    pub fn from_fn<F>(grid: Grid, k: usize, time: f64, mut f: F) -> Result<Self, StateError>
    where
        F: FnMut(usize, &[f64]) -> f64,
    {
        let dim = grid.dim();
        let fields = (0..k)
            .map(|s| {
                (0..grid.len())
                    .map(|c| {
                        let x = grid.center(c);
                        f(s, &x[..dim]).max(0.0)
                    })
                    .collect()
            })
            .collect();
        Self::new(grid, fields, time)
    }

    /// Build without validation; callers guarantee the invariants.
    pub(crate) fn from_parts(grid: Grid, fields: Vec<Vec<f64>>, time: f64) -> Self {
        Self { grid, fields, time }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn k(&self) -> usize {
        self.fields.len()
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn fields(&self) -> &[Vec<f64>] {
        &self.fields
    }

    pub fn field(&self, i: usize) -> Result<&[f64], StateError> {
        self.fields.get(i).map(|f| f.as_slice()).ok_or(StateError::SpeciesIndex { index: i, k: self.k() })
    }

    pub fn species_field(&self, i: usize) -> Result<ScalarField, StateError> {
        Ok(ScalarField { grid: self.grid.clone(), values: self.field(i)?.to_vec() })
    }

    pub fn with_time(mut self, time: f64) -> Self {
        self.time = time;
        self
    }

    pub(crate) fn into_parts(self) -> (Grid, Vec<Vec<f64>>, f64) {
        (self.grid, self.fields, self.time)
    }

    /// Per-species masses.
    pub fn masses(&self) -> Vec<f64> {
        (0..self.k()).map(|i| self.mass_unchecked(i)).collect()
    }

    fn mass_unchecked(&self, i: usize) -> f64 {
        compensated_sum(self.fields[i].iter().copied()) * self.grid.cell_volume()
    }

    /// Largest value of `|u|` over the grid.
    pub fn max_norm(&self) -> f64 {
        norm_field(self).max()
    }
}

/// One scalar field on a grid, e.g. `|u|` or `|u|^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, StateError> {
        if values.len() != grid.len() {
            return Err(StateError::Length { species: 0, expected: grid.len(), got: values.len() });
        }
        if let Some((cell, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(StateError::BadValue { species: 0, cell, value });
        }
        Ok(Self { grid, values })
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    pub fn integral(&self) -> f64 {
        compensated_sum(self.values.iter().copied()) * self.grid.cell_volume()
    }

    /// Multilinear interpolation of the cell-centred values at `x`; constant extrapolation
    /// outside the span of the cell centres.
    pub fn interpolate(&self, x: &[f64]) -> f64 {
        interpolate(&self.grid, &self.values, x)
    }
}

pub(crate) fn interpolate(grid: &Grid, values: &[f64], x: &[f64]) -> f64 {
    let dim = grid.dim();
    let mut lo = [0usize; 2];
    let mut w = [0.0f64; 2];
    for a in 0..dim {
        let s = (x[a] - grid.origin()[a]) / grid.spacing()[a] - 0.5;
        let n = grid.cells()[a];
        if s <= 0.0 {
            lo[a] = 0;
            w[a] = 0.0;
        } else if s >= (n - 1) as f64 {
            lo[a] = n - 2;
            w[a] = 1.0;
        } else {
            let j = s.floor() as usize;
            lo[a] = j.min(n - 2);
            w[a] = s - lo[a] as f64;
        }
    }
    if dim == 1 {
        values[lo[0]] * (1.0 - w[0]) + values[lo[0] + 1] * w[0]
    } else {
        let v = |i0: usize, i1: usize| values[grid.flat_index([i0, i1])];
        let (i0, i1) = (lo[0], lo[1]);
        (1.0 - w[1]) * ((1.0 - w[0]) * v(i0, i1) + w[0] * v(i0 + 1, i1))
            + w[1] * ((1.0 - w[0]) * v(i0, i1 + 1) + w[0] * v(i0 + 1, i1 + 1))
    }
}

/// Pointwise Euclidean norm `|u| = sqrt(sum_i (u^i)^2)`.
pub fn norm_field(state: &SpeciesState) -> ScalarField {
    let k = state.k();
    let n = state.grid.len();
    let values = if k == 1 {
        state.fields[0].clone()
    } else {
        let mut buf = vec![0.0; k];
        (0..n)
            .map(|c| {
                for (b, f) in buf.iter_mut().zip(&state.fields) {
                    *b = f[c];
                }
                euclidean_norm(&buf)
            })
            .collect()
    };
    ScalarField { grid: state.grid.clone(), values }
}

/// Midpoint quadrature of `∫ u^i dx`.
pub fn mass(state: &SpeciesState, i: usize) -> Result<f64, StateError> {
    state.field(i)?;
    Ok(state.mass_unchecked(i))
}

/// Support threshold used when none is given: `max(1e-10, 1e-8 * max value)`.
pub fn default_threshold(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(0.0, f64::max);
    (1e-8 * max).max(1e-10)
}

/// Cells whose value exceeds `threshold`.
pub fn support(field: &ScalarField, threshold: f64) -> CellSet {
    support_of_values(&field.values, threshold)
}

pub(crate) fn support_of_values(values: &[f64], threshold: f64) -> CellSet {
    CellSet::from_sorted(values.iter().enumerate().filter(|(_, &v)| v > threshold).map(|(i, _)| i).collect())
}

/// Minimum centre-to-centre distance between two cell sets: `+inf` if either is empty,
/// `0` if they share a cell.
pub fn support_distance(a: &CellSet, b: &CellSet, grid: &Grid) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    if a.intersects(b) {
        return 0.0;
    }
    // The closest pair of disjoint lattice sets is always realised by boundary cells.
    let ba = a.boundary(grid);
    let bb = b.boundary(grid);
    let centres_b: Vec<[f64; 2]> = bb.iter().map(|&j| grid.center(j)).collect();
    let mut best = f64::INFINITY;
    for &i in &ba {
        let xa = grid.center(i);
        for xb in &centres_b {
            let d2 = (xa[0] - xb[0]).powi(2) + (xa[1] - xb[1]).powi(2);
            best = best.min(d2);
        }
    }
    best.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, lo: f64, hi: f64) -> Grid {
        Grid::from_bounds(&[n], &[lo], &[hi]).unwrap()
    }

    #[test]
    fn norm_of_three_four() {
        let g = line(4, 0.0, 1.0);
        let s = SpeciesState::new(g, vec![vec![3.0; 4], vec![4.0; 4]], 0.0).unwrap();
        assert!(norm_field(&s).values.iter().all(|&v| v == 5.0));
    }

    #[test]
    fn norm_of_zero_and_single_species() {
        let g = line(6, 0.0, 1.0);
        let z = SpeciesState::zeros(g.clone(), 3, 0.0).unwrap();
        assert!(norm_field(&z).values.iter().all(|&v| v == 0.0));
        let vals = vec![0.1, 1e-200, 3.0, 0.0, 7.5, 2.0];
        let s = SpeciesState::new(g, vec![vals.clone()], 0.0).unwrap();
        assert_eq!(norm_field(&s).values, vals);
    }

    #[test]
    fn mass_linearity_and_errors() {
        let g = line(8, 0.0, 2.0);
        let vals: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let doubled: Vec<f64> = vals.iter().map(|v| 2.0 * v).collect();
        let s = SpeciesState::new(g, vec![vals, doubled, vec![0.0; 8]], 0.0).unwrap();
        let m0 = mass(&s, 0).unwrap();
        assert!((m0 - 28.0 * 0.25).abs() < 1e-14);
        assert_eq!(mass(&s, 1).unwrap(), 2.0 * m0);
        assert_eq!(mass(&s, 2).unwrap(), 0.0);
        assert!(matches!(mass(&s, 3), Err(StateError::SpeciesIndex { .. })));
    }

    #[test]
    fn constructor_rejects_negative() {
        let g = line(4, 0.0, 1.0);
        assert!(matches!(
            SpeciesState::new(g, vec![vec![0.0, -1.0, 0.0, 0.0]], 0.0),
            Err(StateError::BadValue { cell: 1, .. })
        ));
    }

    #[test]
    fn supports() {
        let g = line(10, 0.0, 1.0);
        let z = ScalarField::new(g.clone(), vec![0.0; 10]).unwrap();
        assert!(support(&z, 0.0).is_empty());
        let c = ScalarField::new(g, vec![2.0; 10]).unwrap();
        assert_eq!(support(&c, 1.0).len(), 10);
    }

    #[test]
    fn distance_basics() {
        let g = line(4, -0.5, 1.5); // centres -0.25, 0.25, 0.75, 1.25
        let a = CellSet::from_indices(vec![1, 2]);
        assert_eq!(support_distance(&a, &a, &g), 0.0);
        let g2 = line(4, -0.5, 3.5); // centres 0, 1, 2, 3
        let x0 = CellSet::from_indices(vec![0]);
        let x1 = CellSet::from_indices(vec![1]);
        assert!((support_distance(&x0, &x1, &g2) - 1.0).abs() < 1e-15);
        assert_eq!(support_distance(&x0, &CellSet::default(), &g2), f64::INFINITY);
    }

    #[test]
    fn separated_bumps_distance() {
        // bumps of radius 1/4 centred at +-1 on h = 1/128: inner edges at +-0.75
        let h = 1.0 / 128.0;
        let g = Grid::new(&[512], &[-2.0], &[h]).unwrap();
        let bump = |c: f64| move |x: f64| ((x - c).abs() < 0.25) as u8 as f64;
        let s =
            SpeciesState::from_fn(g.clone(), 2, 0.0, |i, x| if i == 0 { bump(-1.0)(x[0]) } else { bump(1.0)(x[0]) })
                .unwrap();
        let a = support(&s.species_field(0).unwrap(), 0.5);
        let b = support(&s.species_field(1).unwrap(), 0.5);
        let d = support_distance(&a, &b, &g);
        assert!((d - 1.5).abs() <= 2.0 * h, "{d}");
    }

    #[test]
    fn distance_in_2d_matches_brute_force() {
        let g = Grid::from_bounds(&[20, 20], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let disc = |cx: f64, cy: f64, r: f64| {
            CellSet::from_indices(
                (0..g.len())
                    .filter(|&i| {
                        let x = g.center(i);
                        (x[0] - cx).hypot(x[1] - cy) < r
                    })
                    .collect(),
            )
        };
        let a = disc(0.25, 0.3, 0.15);
        let b = disc(0.7, 0.6, 0.2);
        let mut brute = f64::INFINITY;
        for &i in a.indices() {
            for &j in b.indices() {
                let (p, q) = (g.center(i), g.center(j));
                brute = brute.min((p[0] - q[0]).hypot(p[1] - q[1]));
            }
        }
        assert!((support_distance(&a, &b, &g) - brute).abs() < 1e-14);
    }

    #[test]
    fn interpolation_is_exact_on_affine_data() {
        let g = Grid::from_bounds(&[8, 6], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let vals: Vec<f64> = (0..g.len())
            .map(|i| {
                let x = g.center(i);
                1.0 + 2.0 * x[0] - 3.0 * x[1]
            })
            .collect();
        let f = ScalarField::new(g, vals).unwrap();
        let v = f.interpolate(&[0.41, 0.52]);
        assert!((v - (1.0 + 0.82 - 1.56)).abs() < 1e-13);
    }
}
