//! Numerical verdicts on sampled runs: isolation, support synchronization,
//! proportionality, convergence to the Barenblatt profile, λ-rescaling and the
//! Harnack-type quotient.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::barenblatt::{coefficients, euclidean_mass, BarenblattError, BarenblattProfile};
use crate::numeric::{compensated_sum, CompensatedSum};
use crate::report::{DiagnosticsReport, PairValue, SampleRecord};
use crate::solver::{run_with, Observer, RunOptions, SolverConfig, SolverError};
use crate::state::{default_threshold, norm_field, support_of_values, SpeciesState, StateError};

/// Fraction of the Barenblatt support radius used as the compact window of the uniform comparison.
pub const COMPACT_WINDOW: f64 = 0.8;
/// Default Harnack sweep: end times and radii as multiples of `sqrt(T)`.
pub const HARNACK_TIMES: [f64; 2] = [0.25, 1.0];
pub const HARNACK_RADII: [f64; 3] = [1.5, 2.0, 4.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("a trace needs at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("initial supports of species {i} and {j} already intersect")]
    InitialOverlap { i: usize, j: usize },
    #[error("supports of species {i} and {j} are both empty")]
    EmptySupports { i: usize, j: usize },
    #[error("no cell has |u| above the threshold {0}")]
    BelowThreshold(f64),
    #[error("masses must be positive and match the species count")]
    Masses,
    #[error("lambda must be positive, got {0}")]
    Lambda(f64),
    #[error("hypothesis R > sqrt(T) violated: R = {r}, T = {t}")]
    Hypothesis { r: f64, t: f64 },
    #[error("end state must be later than the initial state")]
    Time,
    #[error(transparent)]
    State(#[from] StateError),
    #[error(transparent)]
    Barenblatt(#[from] BarenblattError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

fn check_masses(masses: &[f64], k: usize) -> Result<(), DiagnosticsError> {
    if masses.len() != k || masses.iter().any(|&m| !(m > 0.0 && m.is_finite())) {
        return Err(DiagnosticsError::Masses);
    }
    Ok(())
}

fn species_support(state: &SpeciesState, i: usize, threshold: Option<f64>) -> crate::grid::CellSet {
    let f = &state.fields()[i];
    support_of_values(f, threshold.unwrap_or_else(|| default_threshold(f)))
}

/// First sampled time at which two species' supports share a cell; `None` if the
/// supports stay disjoint over the whole trace (always `None` for one species).
pub fn waiting_time(trace: &[SpeciesState], threshold: Option<f64>) -> Result<Option<f64>, DiagnosticsError> {
    if trace.len() < 2 {
        return Err(DiagnosticsError::TooFewSamples(trace.len()));
    }
    let k = trace[0].k();
    let overlap = |s: &SpeciesState| {
        let sets: Vec<_> = (0..k).map(|i| species_support(s, i, threshold)).collect();
        for i in 0..k {
            for j in i + 1..k {
                if sets[i].intersects(&sets[j]) {
                    return Some((i, j));
                }
            }
        }
        None
    };
    if let Some((i, j)) = overlap(&trace[0]) {
        return Err(DiagnosticsError::InitialOverlap { i, j });
    }
    Ok(trace[1..].iter().find(|s| overlap(s).is_some()).map(|s| s.time()))
}

/// [`waiting_time`] read off the pair distances recorded by a run.
pub fn waiting_time_in_report(report: &DiagnosticsReport) -> Result<Option<f64>, DiagnosticsError> {
    if report.records.len() < 2 {
        return Err(DiagnosticsError::TooFewSamples(report.records.len()));
    }
    if let Some(p) = report.records[0].pair_distances.iter().find(|p| p.value == 0.0) {
        return Err(DiagnosticsError::InitialOverlap { i: p.i, j: p.j });
    }
    Ok(report.records[1..].iter().find(|r| r.pair_distances.iter().any(|p| p.value == 0.0)).map(|r| r.time))
}

/// `|supp_i Δ supp_j| / |supp_i ∪ supp_j|` in cell counts.
pub fn support_sync_defect(
    state: &SpeciesState,
    i: usize,
    j: usize,
    threshold: Option<f64>,
) -> Result<f64, DiagnosticsError> {
    state.field(i)?;
    state.field(j)?;
    let a = species_support(state, i, threshold);
    let b = species_support(state, j, threshold);
    let union = a.union_len(&b);
    if union == 0 {
        return Err(DiagnosticsError::EmptySupports { i, j });
    }
    Ok(a.symmetric_difference_len(&b) as f64 / union as f64)
}

/// Largest `|M_j u^i - M_i u^j| / (M_i M_j max|u| / |M|)` over pairs and over cells where
/// `|u|` exceeds the threshold. Zero for profiles `(M_i/|M|) B`.
pub fn ratio_defect(state: &SpeciesState, masses: &[f64], threshold: Option<f64>) -> Result<f64, DiagnosticsError> {
    check_masses(masses, state.k())?;
    let norm = norm_field(state);
    let thr = threshold.unwrap_or_else(|| default_threshold(&norm.values));
    let scale = norm.max() / euclidean_mass(masses)?;
    let cells: Vec<usize> = (0..norm.values.len()).filter(|&c| norm.values[c] > thr).collect();
    if cells.is_empty() {
        return Err(DiagnosticsError::BelowThreshold(thr));
    }
    let f = state.fields();
    let mut worst = 0.0_f64;
    for i in 0..f.len() {
        for j in i + 1..f.len() {
            let denom = masses[i] * masses[j] * scale;
            for &c in &cells {
                worst = worst.max((masses[j] * f[i][c] - masses[i] * f[j][c]).abs() / denom);
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarenblattDistance {
    pub l1: Vec<f64>,
    /// `t^{a1} max |u^i - (M_i/|M|) B|` over the window of [`COMPACT_WINDOW`] times the support radius.
    pub scaled_linf: Vec<f64>,
}

/// Distance of each species to `(M_i/|M|) B_{|M|}(·, t)` centred at the origin.
pub fn barenblatt_distance(
    state: &SpeciesState,
    masses: &[f64],
    m: f64,
) -> Result<BarenblattDistance, DiagnosticsError> {
    check_masses(masses, state.k())?;
    let t = state.time();
    if !(t > 0.0) {
        return Err(BarenblattError::Time(t).into());
    }
    let grid = state.grid();
    let dim = grid.dim();
    let profile = BarenblattProfile::for_masses(masses, m, dim)?;
    let total = profile.mass;
    let window = COMPACT_WINDOW * profile.support_radius(t);
    let tw = t.powf(profile.a1);
    let base: Vec<f64> = (0..grid.len()).map(|c| profile.evaluate_unchecked(&grid.center(c)[..dim], t)).collect();
    let inside: Vec<bool> = (0..grid.len())
        .map(|c| {
            let x = grid.center(c);
            x[..dim].iter().map(|v| v * v).sum::<f64>().sqrt() < window
        })
        .collect();
    let mut l1 = Vec::with_capacity(masses.len());
    let mut linf = Vec::with_capacity(masses.len());
    for (f, &mi) in state.fields().iter().zip(masses) {
        let w = mi / total;
        let mut acc = CompensatedSum::new();
        let mut worst = 0.0_f64;
        for c in 0..grid.len() {
            let d = (f[c] - w * base[c]).abs();
            acc.add(d);
            if inside[c] {
                worst = worst.max(d);
            }
        }
        l1.push(acc.value() * grid.cell_volume());
        linf.push(tw * worst);
    }
    Ok(BarenblattDistance { l1, scaled_linf: linf })
}

/// `u_λ(x, t) = λ^{a1} u(λ^{a2} x, λ t)` as a state at time `t / λ`.
pub fn lambda_rescale(state: &SpeciesState, lambda: f64, m: f64) -> Result<SpeciesState, DiagnosticsError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(DiagnosticsError::Lambda(lambda));
    }
    let e = coefficients(m, state.grid().dim())?;
    let s = lambda.powf(e.a1);
    let grid = state.grid().scaled(lambda.powf(-e.a2));
    let fields = state.fields().iter().map(|f| f.iter().map(|&v| v * s).collect()).collect();
    Ok(SpeciesState::new(grid, fields, state.time() / lambda)?)
}

/// Harnack quotient of species `i` between the initial state and the state after an
/// elapsed time `T`:
///
/// ```text
/// Q = ∫_{|x|<R} u^i(x,0) / [ mu_i^{-p} (R^{n+2/(m-1)} / T^{1/(m-1)} + T^{n/2} u^i(0,T)^p) ]
/// ```
///
/// with `p = ((m-1)n+2)/2` and `mu_i = M_i / max_l M_l`.
pub fn harnack_quotient(
    initial: &SpeciesState,
    at_t: &SpeciesState,
    i: usize,
    radius: f64,
    masses: &[f64],
    m: f64,
) -> Result<f64, DiagnosticsError> {
    let f0 = initial.field(i)?;
    at_t.field(i)?;
    check_masses(masses, initial.k())?;
    let t = at_t.time() - initial.time();
    if !(t > 0.0) {
        return Err(DiagnosticsError::Time);
    }
    if !(radius > t.sqrt()) {
        return Err(DiagnosticsError::Hypothesis { r: radius, t });
    }
    let grid = initial.grid();
    let n = grid.dim() as f64;
    let r2 = radius * radius;
    let numerator = grid.cell_volume()
        * compensated_sum((0..grid.len()).filter_map(|c| {
            let x = grid.center(c);
            (x[0] * x[0] + x[1] * x[1] < r2).then_some(f0[c])
        }));
    if numerator == 0.0 {
        return Ok(0.0);
    }
    let p = ((m - 1.0) * n + 2.0) / 2.0;
    let mu = masses[i] / masses.iter().copied().fold(0.0, f64::max);
    let origin = [0.0; 2];
    let u0 = at_t.species_field(i)?.interpolate(&origin[..grid.dim()]);
    let bracket = radius.powf(n + 2.0 / (m - 1.0)) / t.powf(1.0 / (m - 1.0)) + t.powf(n / 2.0) * u0.powf(p);
    Ok(numerator / (mu.powf(-p) * bracket))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarnackEntry {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "R")]
    pub r: f64,
    pub species: usize,
    #[serde(rename = "Q")]
    pub q: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnackSweep {
    pub entries: Vec<HarnackEntry>,
}

impl HarnackSweep {
    pub fn max(&self) -> f64 {
        self.entries.iter().map(|e| e.q).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Run from `initial` (taken as time 0 of the inequality) and evaluate the quotient for
/// every species, every `T` in `times` and every `R = c sqrt(T)`, `c` in `radii`.
pub fn harnack_sweep(
    initial: &SpeciesState,
    cfg: &SolverConfig,
    masses: &[f64],
    times: &[f64],
    radii: &[f64],
) -> Result<HarnackSweep, DiagnosticsError> {
    check_masses(masses, initial.k())?;
    let t0 = initial.time();
    let t_end = times.iter().copied().fold(0.0, f64::max);
    let opts = RunOptions::until(t0 + t_end)
        .with_stride(usize::MAX)
        .with_sample_times(times.iter().map(|t| t0 + t).collect())
        .with_snapshots()
        .without_invariants();
    let out = run_with(initial, cfg, &opts, &mut [])?;
    let mut entries = Vec::new();
    for &t in times {
        let snap = out.snapshots.iter().find(|s| s.time() == t0 + t).expect("sample times are landed exactly");
        for &c in radii {
            let r = c * t.sqrt();
            for i in 0..initial.k() {
                let q = harnack_quotient(initial, snap, i, r, masses, cfg.m)?;
                entries.push(HarnackEntry { t, r, species: i, q });
            }
        }
    }
    Ok(HarnackSweep { entries })
}

/// Records the pointwise proportionality defect at each sample.
pub struct RatioObserver {
    pub masses: Vec<f64>,
    pub threshold: Option<f64>,
}

impl Observer for RatioObserver {
    fn observe(&mut self, state: &SpeciesState, record: &mut SampleRecord) {
        record.ratio_defect = ratio_defect(state, &self.masses, self.threshold).ok();
    }
}

/// Records the distances to the Barenblatt profile at each sample with `t > 0`.
pub struct BarenblattObserver {
    pub masses: Vec<f64>,
    pub m: f64,
}

impl Observer for BarenblattObserver {
    fn observe(&mut self, state: &SpeciesState, record: &mut SampleRecord) {
        if let Ok(d) = barenblatt_distance(state, &self.masses, self.m) {
            record.barenblatt_l1 = d.l1;
            record.barenblatt_linf = d.scaled_linf;
        }
    }
}

/// Records the support synchronization defect of every pair with a nonempty union.
pub struct SyncObserver {
    pub threshold: Option<f64>,
}

impl Observer for SyncObserver {
    fn observe(&mut self, state: &SpeciesState, record: &mut SampleRecord) {
        record.sync_defects.clear();
        for i in 0..state.k() {
            for j in i + 1..state.k() {
                if let Ok(value) = support_sync_defect(state, i, j, self.threshold) {
                    record.sync_defects.push(PairValue { i, j, value });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;

    fn line(n: usize, half: f64) -> Grid {
        Grid::from_bounds(&[n], &[-half], &[half]).unwrap()
    }

    fn bump(x: f64, c: f64, r: f64) -> f64 {
        (1.0 - ((x - c) / r).powi(2)).max(0.0)
    }

    #[test]
    fn waiting_time_preconditions() {
        let g = line(64, 2.0);
        let s = SpeciesState::from_fn(g.clone(), 2, 0.0, |_, x| bump(x[0], 0.0, 0.5)).unwrap();
        assert!(matches!(waiting_time(&[s.clone(), s.clone()], None), Err(DiagnosticsError::InitialOverlap { .. })));
        assert!(matches!(waiting_time(std::slice::from_ref(&s), None), Err(DiagnosticsError::TooFewSamples(1))));
        let one = SpeciesState::from_fn(g, 1, 0.0, |_, x| bump(x[0], 0.0, 0.5)).unwrap();
        assert_eq!(waiting_time(&[one.clone(), one], None).unwrap(), None);
    }

    #[test]
    fn sync_defect_extremes_and_symmetry() {
        let g = line(64, 2.0);
        let same = SpeciesState::from_fn(g.clone(), 2, 0.0, |_, x| bump(x[0], 0.0, 0.5)).unwrap();
        assert_eq!(support_sync_defect(&same, 0, 1, None).unwrap(), 0.0);
        let apart = SpeciesState::from_fn(g.clone(), 2, 0.0, |i, x| bump(x[0], i as f64 - 0.5, 0.3)).unwrap();
        assert_eq!(support_sync_defect(&apart, 0, 1, None).unwrap(), 1.0);
        let part = SpeciesState::from_fn(g.clone(), 2, 0.0, |i, x| bump(x[0], 0.3 * i as f64, 0.5)).unwrap();
        assert_eq!(support_sync_defect(&part, 0, 1, None).unwrap(), support_sync_defect(&part, 1, 0, None).unwrap());
        let z = SpeciesState::zeros(g, 2, 0.0).unwrap();
        assert!(support_sync_defect(&z, 0, 1, None).is_err());
    }

    #[test]
    fn ratio_defect_of_proportional_fields() {
        let g = line(64, 2.0);
        let s = SpeciesState::from_fn(g.clone(), 2, 0.0, |i, x| (1.0 + 2.0 * i as f64) * bump(x[0], 0.0, 0.5)).unwrap();
        assert!(ratio_defect(&s, &[1.0, 3.0], None).unwrap() < 1e-15);
        assert!(ratio_defect(&s, &[1.0, 1.0], None).unwrap() > 0.1);
        assert!(ratio_defect(&SpeciesState::zeros(g, 2, 0.0).unwrap(), &[1.0, 1.0], None).is_err());
    }

    #[test]
    fn distance_of_oracle_and_of_zero() {
        let masses = [3.0, 4.0];
        let p = BarenblattProfile::for_masses(&masses, 2.0, 1).unwrap();
        // h = 1/512; support radius of |M| = 5 at t = 1 is about 3.56
        let g = line(4096, 4.0);
        let s = SpeciesState::from_fn(g.clone(), 2, 1.0, |i, x| masses[i] / 5.0 * p.evaluate(x, 1.0).unwrap()).unwrap();
        let d = barenblatt_distance(&s, &masses, 2.0).unwrap();
        assert!(d.l1.iter().chain(&d.scaled_linf).all(|&v| v <= 1e-6));
        let z = SpeciesState::zeros(g, 2, 1.0).unwrap();
        let d = barenblatt_distance(&z, &masses, 2.0).unwrap();
        for (l1, m) in d.l1.iter().zip(masses) {
            assert!((l1 - m).abs() < 1e-3 * m);
        }
    }

    #[test]
    fn lambda_rescaling_of_barenblatt() {
        let p = BarenblattProfile::new(1.0, 2.0, 1).unwrap();
        let g = line(512, 6.0);
        let s = SpeciesState::from_fn(g, 1, 2.0, |_, x| p.evaluate(x, 2.0).unwrap()).unwrap();
        assert_eq!(lambda_rescale(&s, 1.0, 2.0).unwrap(), s);
        let r = lambda_rescale(&s, 16.0, 2.0).unwrap();
        assert!((r.masses()[0] - s.masses()[0]).abs() < 1e-12);
        let dim = r.grid().dim();
        for c in 0..r.grid().len() {
            let exact = p.evaluate(&r.grid().center(c)[..dim], r.time()).unwrap();
            assert!((r.fields()[0][c] - exact).abs() <= 1e-12 * exact.max(1.0));
        }
        assert!(lambda_rescale(&s, 0.0, 2.0).is_err());
    }

    #[test]
    fn harnack_hypothesis_and_zero_species() {
        let g = line(128, 4.0);
        let s0 = SpeciesState::from_fn(g, 2, 0.0, |i, x| if i == 0 { bump(x[0], 0.0, 0.5) } else { 0.0 }).unwrap();
        let s1 = s0.clone().with_time(1.0);
        assert!(matches!(
            harnack_quotient(&s0, &s1, 0, 0.9, &[1.0, 1.0], 2.0),
            Err(DiagnosticsError::Hypothesis { .. })
        ));
        assert_eq!(harnack_quotient(&s0, &s1, 1, 2.0, &[1.0, 1.0], 2.0).unwrap(), 0.0);
        assert!(harnack_quotient(&s0, &s1, 0, 2.0, &[1.0, 1.0], 2.0).unwrap() > 0.0);
    }
}
