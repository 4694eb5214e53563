//! Planar travelling waves `u^i = c_i (s)_+^{1/(m-1)}`, `s = speed t ∓ x·e`.
//!
//! With amplitudes `c` the speed law is `kappa/(m-1) |c|^{m-1}`, where `kappa` is the
//! factor in front of the diffusion term: `kappa = m` for the system solved here,
//! `kappa = 1` for the same equation written without the factor `m`.
//! [`speed_from_coeffs`] gives the `kappa = 1` value.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::Grid;
use crate::numeric::{euclidean_norm, pow_fast};
use crate::refinement::{ErrorRow, ErrorTable};
use crate::solver::{run_with, Boundary, RunOptions, SolverConfig, SolverError};
use crate::state::{SpeciesState, StateError};

/// Half-width, in units of the sample spacing, of the band around the front skipped by
/// [`ode_residual`].
pub const FRONT_BAND: f64 = 5.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TravellingError {
    #[error("amplitude c_{index} = {value} must be positive")]
    Coefficient { index: usize, value: f64 },
    #[error("at least one amplitude is required")]
    NoCoefficients,
    #[error("m must exceed 1, got {0}")]
    Exponent(f64),
    #[error("direction must be a nonzero vector of dimension 1 or 2")]
    Direction,
    #[error("all species must travel with the same orientation")]
    MixedOrientation,
    #[error("epsilon must be positive, got {0}")]
    Epsilon(f64),
    #[error("diffusion prefactor must be positive, got {0}")]
    Prefactor(f64),
    #[error("front at x = {front} leaves the domain [{lo}, {hi}] by t = {t}")]
    FrontOutside { t: f64, front: f64, lo: f64, hi: f64 },
    #[error("the boundary-driven run needs a one-dimensional grid")]
    NotOneDimensional,
    #[error("refinement needs at least two levels")]
    Levels,
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    State(#[from] StateError),
}

/// `(1/(m-1)) (sum c_i^2)^{(m-1)/2}`.
pub fn speed_from_coeffs(coeffs: &[f64], m: f64) -> Result<f64, TravellingError> {
    if !(m > 1.0 && m.is_finite()) {
        return Err(TravellingError::Exponent(m));
    }
    if coeffs.is_empty() {
        return Err(TravellingError::NoCoefficients);
    }
    if let Some((index, &value)) = coeffs.iter().enumerate().find(|(_, &c)| !(c > 0.0 && c.is_finite())) {
        return Err(TravellingError::Coefficient { index, value });
    }
    Ok(pow_fast(euclidean_norm(coeffs), m - 1.0) / (m - 1.0))
}

/// Which way the front moves along `e`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Orientation {
    /// `c_i (speed t - x·e)_+^{1/(m-1)}`: occupied behind the front, which advances along `+e`.
    Forward,
    /// `c_i (speed t + x·e)_+^{1/(m-1)}`: the mirror image, advancing along `-e`.
    Backward,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TravellingWave {
    direction: Vec<f64>,
    coeffs: Vec<f64>,
    orientation: Orientation,
    m: f64,
    prefactor: f64,
    speed: f64,
}

impl TravellingWave {
    /// Wave of `(u^i)_t = div(m |u|^{m-1} grad u^i)`.
    pub fn new(direction: &[f64], coeffs: &[f64], m: f64, orientation: Orientation) -> Result<Self, TravellingError> {
        Self::with_prefactor(direction, coeffs, m, orientation, m)
    }

    /// Wave of `(u^i)_t = div(kappa |u|^{m-1} grad u^i)`.
    pub fn with_prefactor(
        direction: &[f64],
        coeffs: &[f64],
        m: f64,
        orientation: Orientation,
        kappa: f64,
    ) -> Result<Self, TravellingError> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(TravellingError::Prefactor(kappa));
        }
        let speed = kappa * speed_from_coeffs(coeffs, m)?;
        let len = euclidean_norm(direction);
        if !(1..=2).contains(&direction.len()) || !(len > 0.0 && len.is_finite()) {
            return Err(TravellingError::Direction);
        }
        Ok(Self {
            direction: direction.iter().map(|d| d / len).collect(),
            coeffs: coeffs.to_vec(),
            orientation,
            m,
            prefactor: kappa,
            speed,
        })
    }

    /// One orientation per species; they must all agree, since waves of a coupled system
    /// share direction and speed.
    pub fn from_species(
        direction: &[f64],
        coeffs: &[f64],
        orientations: &[Orientation],
        m: f64,
    ) -> Result<Self, TravellingError> {
        let first = *orientations.first().ok_or(TravellingError::NoCoefficients)?;
        if orientations.len() != coeffs.len() || orientations.iter().any(|&o| o != first) {
            return Err(TravellingError::MixedOrientation);
        }
        Self::new(direction, coeffs, m, first)
    }

    pub fn dim(&self) -> usize {
        self.direction.len()
    }

    pub fn direction(&self) -> &[f64] {
        &self.direction
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    pub fn speed(&self) -> f64 {
        self.speed
    }

    /// Same direction and orientation with new amplitudes, keeping the current speed.
    /// Such a wave is not an exact solution unless `|c|` is unchanged.
    pub fn with_amplitudes_unchecked(&self, coeffs: &[f64]) -> Self {
        Self { coeffs: coeffs.to_vec(), ..self.clone() }
    }

    /// Travelling coordinate: the profile is `c_i g(xi)` with `g(xi) = (-xi)_+^{1/(m-1)}`
    /// (forward) or `(xi)_+^{1/(m-1)}` (backward).
    pub fn coordinate(&self, x: &[f64], t: f64) -> f64 {
        let xe: f64 = x.iter().zip(&self.direction).map(|(a, b)| a * b).sum();
        match self.orientation {
            Orientation::Forward => xe - self.speed * t,
            Orientation::Backward => xe + self.speed * t,
        }
    }

    /// Front position along `e` at time `t`.
    pub fn front(&self, t: f64) -> f64 {
        match self.orientation {
            Orientation::Forward => self.speed * t,
            Orientation::Backward => -self.speed * t,
        }
    }

    fn shape(&self, xi: f64) -> f64 {
        let s = match self.orientation {
            Orientation::Forward => -xi,
            Orientation::Backward => xi,
        };
        if s > 0.0 {
            pow_fast(s, 1.0 / (self.m - 1.0))
        } else {
            0.0
        }
    }

    /// Profile of species `i` in the travelling coordinate.
    pub fn profile(&self, i: usize, xi: f64) -> f64 {
        self.coeffs[i] * self.shape(xi)
    }

    pub fn evaluate(&self, i: usize, x: &[f64], t: f64) -> f64 {
        self.profile(i, self.coordinate(x, t))
    }

    pub fn sample(&self, grid: &Grid, t: f64) -> Result<SpeciesState, TravellingError> {
        Ok(SpeciesState::from_fn(grid.clone(), self.coeffs.len(), t, |i, x| self.evaluate(i, x, t))?)
    }
}

/// Residual of the first-integral form of the travelling-wave ODE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeResidual {
    pub max: f64,
    pub h_s: f64,
    /// Samples actually used (outside the band around the front).
    pub used: usize,
}

/// `max |kappa |g|^{m-1} g' ± speed g^i|` over `samples` of the travelling coordinate
/// and over species, with `g'` by centred differences of spacing `h_s`. Samples within
/// [`FRONT_BAND`]`·h_s` of the front are skipped.
pub fn ode_residual(tw: &TravellingWave, samples: &[f64], h_s: f64) -> OdeResidual {
    let sign = match tw.orientation {
        Orientation::Forward => 1.0,
        Orientation::Backward => -1.0,
    };
    let k = tw.coeffs.len();
    let mut max = 0.0_f64;
    let mut used = 0;
    let mut g = vec![0.0; k];
    for &xi in samples {
        if xi.abs() < FRONT_BAND * h_s {
            continue;
        }
        used += 1;
        for (i, v) in g.iter_mut().enumerate() {
            *v = tw.profile(i, xi);
        }
        let norm = pow_fast(euclidean_norm(&g), tw.m - 1.0);
        for (i, &gi) in g.iter().enumerate() {
            let d = (tw.profile(i, xi + h_s) - tw.profile(i, xi - h_s)) / (2.0 * h_s);
            let r = tw.prefactor * norm * d + sign * tw.speed * gi;
            max = max.max(r.abs());
        }
    }
    OdeResidual { max, h_s, used }
}

/// `u_eps(x, t) = eps^{1/(m-1)} u(x/eps, t/eps)` as a state on the scaled grid.
pub fn epsilon_scale(state: &SpeciesState, epsilon: f64, m: f64) -> Result<SpeciesState, TravellingError> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(TravellingError::Epsilon(epsilon));
    }
    if !(m > 1.0) {
        return Err(TravellingError::Exponent(m));
    }
    let s = epsilon.powf(1.0 / (m - 1.0));
    let fields = state.fields().iter().map(|f| f.iter().map(|&v| v * s).collect()).collect();
    Ok(SpeciesState::new(state.grid().scaled(epsilon), fields, state.time() * epsilon)?)
}

/// Solve on a refinement ladder of a 1D grid with boundary values taken from the exact
/// wave, and tabulate the errors against the wave at `t_end`. Level `l` has
/// `cells * 2^l` cells.
pub fn dirichlet_tw_run(
    tw: &TravellingWave,
    grid: &Grid,
    t0: f64,
    t_end: f64,
    levels: usize,
) -> Result<ErrorTable, TravellingError> {
    if grid.dim() != 1 || tw.dim() != 1 {
        return Err(TravellingError::NotOneDimensional);
    }
    if levels < 2 {
        return Err(TravellingError::Levels);
    }
    let (lo, hi) = (grid.origin()[0], grid.upper()[0]);
    for t in [t0, t_end] {
        // front position in x: x·e = front(t), with e = ±1
        let front = tw.front(t) * tw.direction[0];
        if !(front > lo && front < hi) {
            return Err(TravellingError::FrontOutside { t, front, lo, hi });
        }
    }
    let cfg = SolverConfig::new(tw.m)?;
    let mut table = ErrorTable::default();
    for level in 0..levels {
        let g = grid.refined(1 << level);
        let initial = tw.sample(&g, t0)?;
        let exact = Arc::new(tw.clone());
        let bc = Boundary::Dirichlet(Arc::new(move |i, x: &[f64], t| exact.evaluate(i, x, t)));
        let opts = RunOptions::until(t_end).with_boundary(bc).with_stride(usize::MAX).without_invariants();
        let out = run_with(&initial, &cfg, &opts, &mut [])?;
        let h = g.spacing()[0];
        let mut l1s = Vec::new();
        let mut linfs = Vec::new();
        for (i, f) in out.state.fields().iter().enumerate() {
            let (mut l1, mut linf) = (0.0_f64, 0.0_f64);
            for (c, &u) in f.iter().enumerate() {
                let d = (u - tw.evaluate(i, &g.center(c)[..1], t_end)).abs();
                l1 += d * h;
                linf = linf.max(d);
            }
            l1s.push(l1);
            linfs.push(linf);
        }
        table.push(ErrorRow {
            h,
            l1: l1s.iter().sum(),
            linf: linfs.iter().copied().fold(0.0, f64::max),
            l1_species: l1s,
            linf_species: linfs,
        });
    }
    Ok(table)
}
