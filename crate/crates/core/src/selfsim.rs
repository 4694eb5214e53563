//! The flow in self-similar variables
//!
//! ```text
//! theta^i = t^{a1} u^i,   eta = x t^{-a2},   tau = ln t
//! (theta^i)_tau = div(m Theta^{m-1} grad theta^i) + a2 div(eta theta^i)
//! ```
//!
//! whose fixed point is the rescaled Barenblatt profile, and the entropy
//! `H = ∫ Theta^m/(m-1) + a2 |eta|^2 Theta / 2` with dissipation `I1 + I2`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barenblatt::{coefficients, euclidean_mass, BarenblattError, BarenblattProfile};
use crate::grid::Grid;
use crate::numeric::{euclidean_norm, pow_fast, CompensatedSum};
use crate::state::{default_threshold, SpeciesState, StateError};

/// Safety factor on the combined diffusion/drift step bound.
pub const TAU_SAFETY: f64 = 0.9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelfSimError {
    #[error("self-similar variables need t > 0, got {0}")]
    Time(f64),
    #[error("step must be positive and finite, got {0}")]
    Step(f64),
    #[error("end {tau_end} precedes the state's tau {tau}")]
    TauEnd { tau: f64, tau_end: f64 },
    #[error("numerical blowup at step {0}")]
    Blowup(usize),
    #[error(transparent)]
    Barenblatt(#[from] BarenblattError),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Rescaled fields `theta^i` on an `eta` grid at log-time `tau`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaledState {
    grid: Grid,
    fields: Vec<Vec<f64>>,
    tau: f64,
}

impl RescaledState {
    pub fn new(grid: Grid, fields: Vec<Vec<f64>>, tau: f64) -> Result<Self, SelfSimError> {
        if !tau.is_finite() {
            return Err(SelfSimError::Time(tau.exp()));
        }
        // reuse the field validation of the physical state
        let s = SpeciesState::new(grid, fields, 0.0)?;
        let (grid, fields, _) = s.into_parts();
        Ok(Self { grid, fields, tau })
    }

    /// Species profiles `(M_i/|M|) B~_{|M|}` sampled at the cell centres.
    pub fn equilibrium(grid: Grid, masses: &[f64], m: f64, tau: f64) -> Result<Self, SelfSimError> {
        let profile = BarenblattProfile::for_masses(masses, m, grid.dim())?;
        let total = euclidean_mass(masses)?;
        let dim = grid.dim();
        let base: Vec<f64> = (0..grid.len()).map(|c| profile.rescaled_profile(&grid.center(c)[..dim])).collect();
        let fields = masses.iter().map(|&mi| base.iter().map(|&b| mi / total * b).collect()).collect();
        Self::new(grid, fields, tau)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn k(&self) -> usize {
        self.fields.len()
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn fields(&self) -> &[Vec<f64>] {
        &self.fields
    }

    pub fn masses(&self) -> Vec<f64> {
        let vol = self.grid.cell_volume();
        self.fields.iter().map(|f| vol * crate::numeric::compensated_sum(f.iter().copied())).collect()
    }

    pub fn norm(&self) -> Vec<f64> {
        norms(&self.fields)
    }

    /// Back to physical variables at `t = e^tau`.
    pub fn to_physical(&self, m: f64) -> Result<SpeciesState, SelfSimError> {
        let e = coefficients(m, self.grid.dim())?;
        let t = self.tau.exp();
        let grid = self.grid.scaled(t.powf(e.a2));
        let s = t.powf(-e.a1);
        let fields = self.fields.iter().map(|f| f.iter().map(|&v| v * s).collect()).collect();
        Ok(SpeciesState::new(grid, fields, t)?)
    }

    /// Per-species L¹ distance to the equilibrium with the same masses.
    pub fn equilibrium_distance(&self, m: f64) -> Result<Vec<f64>, SelfSimError> {
        let masses = self.masses();
        let target = Self::equilibrium(self.grid.clone(), &masses, m, self.tau)?;
        let vol = self.grid.cell_volume();
        Ok(self
            .fields
            .iter()
            .zip(&target.fields)
            .map(|(a, b)| vol * crate::numeric::compensated_sum(a.iter().zip(b).map(|(x, y)| (x - y).abs())))
            .collect())
    }
}

fn norms(fields: &[Vec<f64>]) -> Vec<f64> {
    if fields.len() == 1 {
        return fields[0].clone();
    }
    let mut buf = vec![0.0; fields.len()];
    (0..fields[0].len())
        .map(|c| {
            for (b, f) in buf.iter_mut().zip(fields) {
                *b = f[c];
            }
            euclidean_norm(&buf)
        })
        .collect()
}

/// Relabel a physical state in self-similar variables.
pub fn to_selfsimilar(state: &SpeciesState, m: f64) -> Result<RescaledState, SelfSimError> {
    let t = state.time();
    if !(t > 0.0) {
        return Err(SelfSimError::Time(t));
    }
    let e = coefficients(m, state.grid().dim())?;
    let grid = state.grid().scaled(t.powf(-e.a2));
    let s = t.powf(e.a1);
    let fields = state.fields().iter().map(|f| f.iter().map(|&v| v * s).collect()).collect();
    RescaledState::new(grid, fields, t.ln())
}

fn max_abs_eta(grid: &Grid, axis: usize) -> f64 {
    grid.origin()[axis].abs().max(grid.upper()[axis].abs())
}

/// Combined diffusion and drift bound: each cell's own coefficient in the update stays
/// nonnegative, so the step preserves positivity.
pub fn stable_dtau(state: &RescaledState, m: f64) -> Result<f64, SelfSimError> {
    let e = coefficients(m, state.grid.dim())?;
    let dmax = m * pow_fast(state.norm().iter().copied().fold(0.0, f64::max), m - 1.0);
    Ok(dtau_for(dmax, &state.grid, e.a2))
}

fn dtau_for(dmax: f64, grid: &Grid, a2: f64) -> f64 {
    let h = grid.min_spacing();
    let mut rate = 2.0 * grid.dim() as f64 * dmax / (h * h);
    for axis in 0..grid.dim() {
        rate += a2 * max_abs_eta(grid, axis) / grid.spacing()[axis];
    }
    TAU_SAFETY / rate
}

fn advance_theta(
    fields: &[Vec<f64>],
    next: &mut [Vec<f64>],
    theta_norm: &[f64],
    grid: &Grid,
    m: f64,
    a2: f64,
    dtau: f64,
) -> bool {
    let diff: Vec<f64> = theta_norm.iter().map(|&w| m * pow_fast(w, m - 1.0)).collect();
    for (n, f) in next.iter_mut().zip(fields) {
        n.copy_from_slice(f);
    }
    for axis in 0..grid.dim() {
        let h = grid.spacing()[axis];
        let cd = 0.5 * dtau / (h * h);
        let ca = a2 * dtau / h;
        for (l, r, j) in grid.faces(axis) {
            let df = cd * (diff[l] + diff[r]);
            let eta = grid.face_coord(axis, j);
            let drift = ca * eta;
            let up_right = eta > 0.0;
            for (n, f) in next.iter_mut().zip(fields) {
                let up = if up_right { f[r] } else { f[l] };
                let flux = df * (f[r] - f[l]) + drift * up;
                n[l] += flux;
                n[r] -= flux;
            }
        }
    }
    let mut finite = true;
    for n in next.iter_mut() {
        for v in n.iter_mut() {
            if !v.is_finite() {
                finite = false;
            } else if *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    finite
}

/// One forward-Euler step of the rescaled flow: the solver's diffusion with
/// `D = m Theta^{m-1}` plus a conservative, upwinded drift `a2 div(eta theta)`.
pub fn step_theta(state: &RescaledState, m: f64, dtau: f64) -> Result<RescaledState, SelfSimError> {
    if !(dtau > 0.0 && dtau.is_finite()) {
        return Err(SelfSimError::Step(dtau));
    }
    let e = coefficients(m, state.grid.dim())?;
    let mut next = state.fields.clone();
    if !advance_theta(&state.fields, &mut next, &state.norm(), &state.grid, m, e.a2, dtau) {
        return Err(SelfSimError::Blowup(1));
    }
    Ok(RescaledState { grid: state.grid.clone(), fields: next, tau: state.tau + dtau })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyRecord {
    pub tau: f64,
    #[serde(rename = "H")]
    pub h: f64,
    #[serde(rename = "I1")]
    pub i1: f64,
    #[serde(rename = "I2")]
    pub i2: f64,
    /// Finite-difference slope of `H` between this record and its neighbour in a trace.
    pub dh_dtau_numeric: Option<f64>,
    /// Magnitude of the `I2` integrand terms; `I2 >= -10 eps * i2_scale` is the discrete bound.
    pub i2_scale: f64,
}

impl EntropyRecord {
    pub fn dissipation(&self) -> f64 {
        self.i1 + self.i2
    }
}

/// One-sided near the support edge, centred inside; zero for isolated cells.
#[inline]
fn support_gradient(f: &[f64], inside: &[bool], c: usize, lo: Option<usize>, hi: Option<usize>, h: f64) -> f64 {
    let l = lo.filter(|&i| inside[i]);
    let r = hi.filter(|&i| inside[i]);
    match (l, r) {
        (Some(l), Some(r)) => (f[r] - f[l]) / (2.0 * h),
        (None, Some(r)) => (f[r] - f[c]) / h,
        (Some(l), None) => (f[c] - f[l]) / h,
        (None, None) => 0.0,
    }
}

/// `H`, `I1`, `I2` by midpoint quadrature, with gradients restricted to the support of `Theta`.
pub fn entropy(state: &RescaledState, m: f64) -> Result<EntropyRecord, SelfSimError> {
    let grid = &state.grid;
    let dim = grid.dim();
    let e = coefficients(m, dim)?;
    let theta = state.norm();
    let thr = default_threshold(&theta);
    let inside: Vec<bool> = theta.iter().map(|&v| v > thr).collect();
    let eta2: Vec<f64> = (0..grid.len())
        .map(|c| {
            let x = grid.center(c);
            x[..dim].iter().map(|v| v * v).sum()
        })
        .collect();
    let bracket: Vec<f64> =
        theta.iter().zip(&eta2).map(|(&t, &r2)| m / (m - 1.0) * pow_fast(t, m - 1.0) + 0.5 * e.a2 * r2).collect();

    let (mut h, mut i1, mut i2, mut i2s) =
        (CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new(), CompensatedSum::new());
    let mut grads = vec![0.0; state.k()];
    for c in 0..grid.len() {
        let t = theta[c];
        h.add(pow_fast(t, m) / (m - 1.0) + 0.5 * e.a2 * eta2[c] * t);
        if !inside[c] {
            continue;
        }
        let mi = grid.multi_index(c);
        let weight = m * t.powf(m - 2.0) * bracket[c];
        #[allow(clippy::needless_range_loop)] // axis indexes several arrays
        for axis in 0..dim {
            let stride = grid.stride(axis);
            let lo = (mi[axis] > 0).then(|| c - stride);
            let hi = (mi[axis] + 1 < grid.cells()[axis]).then(|| c + stride);
            let hs = grid.spacing()[axis];
            let gp = support_gradient(&bracket, &inside, c, lo, hi, hs);
            i1.add(t * gp * gp);
            for (g, f) in grads.iter_mut().zip(&state.fields) {
                *g = support_gradient(f, &inside, c, lo, hi, hs);
            }
            let gu = euclidean_norm(&grads);
            let gw = support_gradient(&theta, &inside, c, lo, hi, hs).abs();
            i2.add(weight * (gu - gw) * (gu + gw));
            i2s.add(weight * (gu * gu + gw * gw));
        }
    }
    let vol = grid.cell_volume();
    Ok(EntropyRecord {
        tau: state.tau,
        h: h.value() * vol,
        i1: i1.value() * vol,
        i2: i2.value() * vol,
        dh_dtau_numeric: None,
        i2_scale: i2s.value() * vol,
    })
}

/// Result of [`entropy_trace_full`].
#[derive(Debug, Clone)]
pub struct EntropyTrace {
    pub records: Vec<EntropyRecord>,
    pub state: RescaledState,
    pub steps: usize,
}

impl EntropyTrace {
    /// Largest per-record increase of `H`, relative to `|H|`.
    pub fn max_relative_increase(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| (w[1].h - w[0].h) / w[0].h.abs().max(f64::MIN_POSITIVE))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest `|dH/dtau + (I1 + I2)|`, with the dissipation averaged over each record
    /// interval to match the difference quotient.
    pub fn max_consistency_defect(&self) -> f64 {
        self.records
            .windows(2)
            .map(|w| {
                let slope = (w[1].h - w[0].h) / (w[1].tau - w[0].tau);
                (slope + 0.5 * (w[0].dissipation() + w[1].dissipation())).abs()
            })
            .fold(0.0, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,H,I1,I2,dH_dtau_numeric\n");
        for r in &self.records {
            let d = r.dh_dtau_numeric.map(|v| v.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", r.tau, r.h, r.i1, r.i2, d);
        }
        out
    }
}

/// Evolve to `tau_end`, recording the entropy every `stride` steps and at the end.
pub fn entropy_trace(
    initial: &RescaledState,
    m: f64,
    tau_end: f64,
    stride: usize,
) -> Result<Vec<EntropyRecord>, SelfSimError> {
    entropy_trace_full(initial, m, tau_end, stride).map(|t| t.records)
}

pub fn entropy_trace_full(
    initial: &RescaledState,
    m: f64,
    tau_end: f64,
    stride: usize,
) -> Result<EntropyTrace, SelfSimError> {
    if !(tau_end > initial.tau) || !tau_end.is_finite() {
        return Err(SelfSimError::TauEnd { tau: initial.tau, tau_end });
    }
    let stride = stride.max(1);
    let grid = initial.grid.clone();
    let e = coefficients(m, grid.dim())?;
    let mut cur = initial.fields.clone();
    let mut next = cur.clone();
    let mut tau = initial.tau;
    let mut records = vec![entropy(initial, m)?];
    let mut steps = 0usize;
    loop {
        let theta = norms(&cur);
        let dmax = m * pow_fast(theta.iter().copied().fold(0.0, f64::max), m - 1.0);
        let mut dtau = dtau_for(dmax, &grid, e.a2);
        let last = dtau >= tau_end - tau;
        if last {
            dtau = tau_end - tau;
        }
        if !advance_theta(&cur, &mut next, &theta, &grid, m, e.a2, dtau) {
            return Err(SelfSimError::Blowup(steps + 1));
        }
        std::mem::swap(&mut cur, &mut next);
        steps += 1;
        tau = if last { tau_end } else { tau + dtau };
        if last || steps.is_multiple_of(stride) {
            let snapshot = RescaledState { grid: grid.clone(), fields: cur.clone(), tau };
            records.push(entropy(&snapshot, m)?);
        }
        if last {
            break;
        }
    }
    // backward differences, forward for the first record
    let slopes: Vec<f64> = records.windows(2).map(|w| (w[1].h - w[0].h) / (w[1].tau - w[0].tau)).collect();
    for (j, r) in records.iter_mut().enumerate() {
        r.dh_dtau_numeric = slopes.get(j.saturating_sub(1)).copied();
    }
    Ok(EntropyTrace { records, state: RescaledState { grid, fields: cur, tau }, steps })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, half: f64) -> Grid {
        Grid::from_bounds(&[n], &[-half], &[half]).unwrap()
    }

    #[test]
    fn identity_at_unit_time() {
        let g = line(64, 2.0);
        let s = SpeciesState::from_fn(g.clone(), 2, 1.0, |i, x| (1.0 - x[0] * x[0]).max(0.0) * (1 + i) as f64).unwrap();
        let r = to_selfsimilar(&s, 2.0).unwrap();
        assert_eq!(r.tau(), 0.0);
        assert_eq!(r.grid(), &g);
        assert_eq!(r.fields(), s.fields());
        assert!(to_selfsimilar(&s.clone().with_time(0.0), 2.0).is_err());
    }

    #[test]
    fn barenblatt_maps_to_equilibrium() {
        let p = BarenblattProfile::new(1.0, 2.0, 1).unwrap();
        for t in [0.5_f64, 3.0, 40.0] {
            let g = line(200, 3.0 * t.powf(p.a2));
            let s = SpeciesState::from_fn(g, 1, t, |_, x| p.evaluate(x, t).unwrap()).unwrap();
            let r = to_selfsimilar(&s, 2.0).unwrap();
            let dim = r.grid().dim();
            for c in 0..r.grid().len() {
                let eta = r.grid().center(c);
                let want = p.rescaled_profile(&eta[..dim]);
                assert!((r.fields()[0][c] - want).abs() <= 1e-13 * want.max(1.0), "t={t}");
            }
            let ms = s.masses()[0];
            let mr = r.masses()[0];
            assert!((ms - mr).abs() <= 1e-13 * ms);
        }
    }

    #[test]
    fn equilibrium_entropy_matches_closed_form() {
        let c = crate::barenblatt::mass_constant(1.0, 2.0, 1).unwrap();
        let expected = 16.0 * 3f64.sqrt() / 5.0 * c.powf(2.5);
        let r = RescaledState::equilibrium(line(8192, 3.0), &[1.0], 2.0, 0.0).unwrap();
        let rec = entropy(&r, 2.0).unwrap();
        assert!((rec.h - expected).abs() < 1e-5, "{} {expected}", rec.h);
        assert!((rec.h - 0.4327).abs() < 1e-3);
        assert_eq!(rec.i2, 0.0);
        assert!(rec.i1 < 1e-3, "{}", rec.i1);
    }

    #[test]
    fn zero_state_stays_zero_and_mass_is_kept() {
        let z = RescaledState::new(line(32, 2.0), vec![vec![0.0; 32]], 0.0).unwrap();
        assert!(step_theta(&z, 2.0, 0.01).unwrap().fields()[0].iter().all(|&v| v == 0.0));
        let g = line(128, 3.0);
        let s = SpeciesState::from_fn(g, 2, 1.0, |i, x| (1.0 - (x[0] - 0.5 * i as f64).powi(2)).max(0.0)).unwrap();
        let mut r = to_selfsimilar(&s, 3.0).unwrap();
        let m0 = r.masses();
        for _ in 0..50 {
            let dt = stable_dtau(&r, 3.0).unwrap();
            let next = step_theta(&r, 3.0, dt).unwrap();
            for (a, b) in next.masses().iter().zip(r.masses()) {
                assert!((a - b).abs() <= 1e-12 * b);
            }
            r = next;
        }
        assert!(r.fields().iter().flatten().all(|&v| v >= 0.0));
        assert!((r.masses()[0] - m0[0]).abs() <= 1e-12 * m0[0]);
    }

    #[test]
    fn trace_records_slopes() {
        let g = line(128, 3.0);
        let s =
            SpeciesState::from_fn(g, 2, 1.0, |i, x| (1.0 - (x[0] - 0.6 + 1.2 * i as f64).powi(2)).max(0.0)).unwrap();
        let r = to_selfsimilar(&s, 2.0).unwrap();
        let trace = entropy_trace_full(&r, 2.0, 0.2, 20).unwrap();
        assert_eq!(trace.records.last().unwrap().tau, 0.2);
        assert!(trace.records.iter().all(|r| r.dh_dtau_numeric.is_some()));
        assert!(trace.max_relative_increase() <= 1e-8);
        assert!(trace.records.iter().all(|r| r.i1 >= 0.0 && r.i2 >= -10.0 * f64::EPSILON * r.i2_scale));
        assert!(trace.to_csv().starts_with("tau,H,I1,I2,dH_dtau_numeric\n"));
        assert!(entropy_trace(&r, 2.0, -1.0, 1).is_err());
    }
}
