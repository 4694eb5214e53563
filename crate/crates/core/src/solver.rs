//! Explicit finite-volume stepping in physical space.
//!
//! Each species is advanced with the same face diffusivities
//! `D_f = (D_L + D_R) / 2`, `D = m(|u|^{m-1} + eps)`, so one step is a single linear
//! operator applied to every component. Under the stability bound the update is a
//! convex combination of neighbouring values, which keeps the fields nonnegative and
//! makes `|u|` a discrete subsolution of the scalar porous medium equation.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{CellSet, Grid};
use crate::numeric::{euclidean_norm, pow_fast, CompensatedSum};
use crate::report::{DiagnosticsReport, PairValue, SampleRecord, SupportSummary};
use crate::state::{default_threshold, support_distance, support_of_values, ScalarField, SpeciesState, StateError};

/// Regularization levels of the continuation preset, coarse to degenerate.
pub const EPSILON_LADDER: [f64; 3] = [1e-2, 1e-3, 0.0];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("numerical blowup: non-finite value produced at step {step} (t = {time})")]
    Blowup { step: usize, time: f64 },
    #[error("time step underflow at t = {time} (dt = {dt:e})")]
    Stagnation { time: f64, dt: f64 },
    #[error("end time {t_end} precedes the state time {time}")]
    EndTime { time: f64, t_end: f64 },
    #[error(transparent)]
    State(#[from] StateError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub m: f64,
    /// Regularization added to `|u|^{m-1}`; 0 is the degenerate equation.
    pub epsilon: f64,
    /// Cap applied to the initial data, `min(u0, cap)`, as in the regularized scheme.
    pub cap: Option<f64>,
    pub cfl_safety: f64,
    pub clamp_negative: bool,
    /// Largest step taken when the diffusivity vanishes or the bound is looser.
    pub max_dt: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self { m: 2.0, epsilon: 0.0, cap: None, cfl_safety: 0.9, clamp_negative: true, max_dt: None }
    }
}

impl SolverConfig {
    pub fn new(m: f64) -> Result<Self, SolverError> {
        let cfg = Self { m, ..Self::default() };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn with_cap(mut self, cap: f64) -> Self {
        self.cap = Some(cap);
        self
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        let mut problems = Vec::new();
        if !(self.m > 1.0 && self.m.is_finite()) {
            problems.push(format!("m must exceed 1 (got {})", self.m));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            problems.push(format!("epsilon must be >= 0 (got {})", self.epsilon));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            problems.push(format!("cfl_safety must lie in (0, 1] (got {})", self.cfl_safety));
        }
        if let Some(c) = self.cap {
            if !(c > 0.0) {
                problems.push(format!("cap must be positive (got {c})"));
            }
        }
        if let Some(d) = self.max_dt {
            if !(d > 0.0) {
                problems.push(format!("max_dt must be positive (got {d})"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(SolverError::Config(problems.join("; ")))
        }
    }

    /// The continuation preset: this configuration at each level of [`EPSILON_LADDER`].
    pub fn ladder(&self) -> Vec<SolverConfig> {
        EPSILON_LADDER.iter().map(|&e| self.clone().with_epsilon(e)).collect()
    }

    /// Initial data with the cap applied (identity without a cap).
    pub fn apply_cap(&self, state: &SpeciesState) -> SpeciesState {
        match self.cap {
            None => state.clone(),
            Some(cap) => {
                let fields = state.fields().iter().map(|f| f.iter().map(|&v| v.min(cap)).collect()).collect();
                SpeciesState::from_parts(state.grid().clone(), fields, state.time())
            }
        }
    }

    #[inline]
    fn coefficient(&self, norm: f64) -> f64 {
        self.m * (pow_fast(norm, self.m - 1.0) + self.epsilon)
    }
}

/// Boundary values for the ghost cells of a Dirichlet run: `f(species, x, t)`.
pub type BoundaryFn = Arc<dyn Fn(usize, &[f64], f64) -> f64 + Send + Sync>;

#[derive(Clone, Default)]
pub enum Boundary {
    #[default]
    ZeroFlux,
    /// Ghost cells one spacing outside the domain carry the prescribed values.
    Dirichlet(BoundaryFn),
}

impl fmt::Debug for Boundary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Boundary::ZeroFlux => write!(f, "ZeroFlux"),
            Boundary::Dirichlet(_) => write!(f, "Dirichlet(..)"),
        }
    }
}

fn norms_into(fields: &[Vec<f64>], out: &mut Vec<f64>) {
    let n = fields[0].len();
    out.clear();
    if fields.len() == 1 {
        out.extend_from_slice(&fields[0]);
        return;
    }
    let mut buf = vec![0.0; fields.len()];
    out.extend((0..n).map(|c| {
        for (b, f) in buf.iter_mut().zip(fields) {
            *b = f[c];
        }
        euclidean_norm(&buf)
    }));
}

/// `D = m(|u|^{m-1} + eps)` pointwise.
pub fn diffusivity(state: &SpeciesState, cfg: &SolverConfig) -> ScalarField {
    let mut norm = Vec::new();
    norms_into(state.fields(), &mut norm);
    let values = norm.iter().map(|&w| cfg.coefficient(w)).collect();
    ScalarField { grid: state.grid().clone(), values }
}

fn dt_for(dmax: f64, grid: &Grid, cfg: &SolverConfig) -> f64 {
    let cap = cfg.max_dt.unwrap_or(f64::INFINITY);
    if dmax <= 0.0 {
        return cap;
    }
    let h = grid.min_spacing();
    (cfg.cfl_safety * h * h / (2.0 * grid.dim() as f64 * dmax)).min(cap)
}

/// `cfl_safety * h_min^2 / (2 dim D_max)`, or the configured maximum step (possibly
/// infinite) when the diffusivity vanishes everywhere.
pub fn stable_dt(state: &SpeciesState, cfg: &SolverConfig) -> f64 {
    let dmax = diffusivity(state, cfg).max();
    dt_for(dmax, state.grid(), cfg)
}

/// Ghost cell data of one step: `(boundary cell, axis, ghost diffusivity, ghost values)`.
struct Ghost {
    cell: usize,
    axis: usize,
    diff: f64,
    values: Vec<f64>,
}

fn ghosts(grid: &Grid, k: usize, cfg: &SolverConfig, f: &BoundaryFn, t: f64) -> Vec<Ghost> {
    let dim = grid.dim();
    let mut out = Vec::new();
    let mut vals = vec![0.0; k];
    for axis in 0..dim {
        let (lo, hi) = grid.boundary_cells(axis);
        for (cells, sign) in [(lo, -1.0), (hi, 1.0)] {
            for cell in cells {
                let mut x = grid.center(cell);
                x[axis] += sign * grid.spacing()[axis];
                for (s, v) in vals.iter_mut().enumerate() {
                    *v = f(s, &x[..dim], t).max(0.0);
                }
                let diff = cfg.coefficient(euclidean_norm(&vals));
                out.push(Ghost { cell, axis, diff, values: vals.clone() });
            }
        }
    }
    out
}

/// One forward-Euler update of `fields` into `next`. Returns `false` if a non-finite value appeared.
#[allow(clippy::too_many_arguments)]
fn advance(
    fields: &[Vec<f64>],
    next: &mut [Vec<f64>],
    diff: &[f64],
    grid: &Grid,
    dt: f64,
    ghost: &[Ghost],
    inflow: &mut [CompensatedSum],
    clamp: bool,
) -> bool {
    for (n, f) in next.iter_mut().zip(fields) {
        n.copy_from_slice(f);
    }
    for axis in 0..grid.dim() {
        let h = grid.spacing()[axis];
        let coef = 0.5 * dt / (h * h);
        for (l, r, _) in grid.faces(axis) {
            let df = coef * (diff[l] + diff[r]);
            for (n, f) in next.iter_mut().zip(fields) {
                let flux = df * (f[r] - f[l]);
                n[l] += flux;
                n[r] -= flux;
            }
        }
    }
    let vol = grid.cell_volume();
    for g in ghost {
        let h = grid.spacing()[g.axis];
        let df = 0.5 * dt / (h * h) * (diff[g.cell] + g.diff);
        for (s, (n, f)) in next.iter_mut().zip(fields).enumerate() {
            let flux = df * (g.values[s] - f[g.cell]);
            n[g.cell] += flux;
            inflow[s].add(flux * vol);
        }
    }
    let mut finite = true;
    for n in next.iter_mut() {
        for v in n.iter_mut() {
            if !v.is_finite() {
                finite = false;
            } else if clamp && *v < 0.0 {
                *v = 0.0;
            }
        }
    }
    finite
}

/// One zero-flux forward-Euler step. `dt` above [`stable_dt`] is allowed (and may
/// lose positivity); [`run_with`] counts such steps in its report.
pub fn step(state: &SpeciesState, cfg: &SolverConfig, dt: f64) -> Result<SpeciesState, SolverError> {
    step_with_boundary(state, cfg, dt, &Boundary::ZeroFlux).map(|(s, _)| s)
}

/// One step with the given boundary treatment; also returns the mass that entered
/// through the boundary per species.
pub fn step_with_boundary(
    state: &SpeciesState,
    cfg: &SolverConfig,
    dt: f64,
    boundary: &Boundary,
) -> Result<(SpeciesState, Vec<f64>), SolverError> {
    cfg.validate()?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SolverError::Config(format!("dt must be positive and finite (got {dt})")));
    }
    let grid = state.grid();
    let k = state.k();
    let diff = diffusivity(state, cfg).values;
    let ghost = match boundary {
        Boundary::ZeroFlux => Vec::new(),
        Boundary::Dirichlet(f) => ghosts(grid, k, cfg, f, state.time()),
    };
    let mut next = vec![vec![0.0; grid.len()]; k];
    let mut inflow = vec![CompensatedSum::new(); k];
    if !advance(state.fields(), &mut next, &diff, grid, dt, &ghost, &mut inflow, cfg.clamp_negative) {
        return Err(SolverError::Blowup { step: 1, time: state.time() + dt });
    }
    let out = SpeciesState::new(grid.clone(), next, state.time() + dt)?;
    Ok((out, inflow.iter().map(|c| c.value()).collect()))
}

/// Smallest slack of `sum_i (grad u^i)^2 - (grad |u|)^2` over interior faces, with
/// gradients as face differences over the spacing.
pub fn cauchy_schwarz_slack(state: &SpeciesState) -> f64 {
    let mut norm = Vec::new();
    norms_into(state.fields(), &mut norm);
    slack_from(state.fields(), &norm, state.grid())
}

fn slack_from(fields: &[Vec<f64>], norm: &[f64], grid: &Grid) -> f64 {
    let mut worst = f64::INFINITY;
    let mut diffs = vec![0.0; fields.len()];
    for axis in 0..grid.dim() {
        let h = grid.spacing()[axis];
        for (l, r, _) in grid.faces(axis) {
            for (d, f) in diffs.iter_mut().zip(fields) {
                *d = (f[r] - f[l]) / h;
            }
            let gu = euclidean_norm(&diffs);
            // |u_r| - |u_l| = sum_i du^i (u_r^i + u_l^i) / (|u_r| + |u_l|): no cancellation
            let den = norm[r] + norm[l];
            let gw = if den > 0.0 {
                (diffs.iter().zip(fields).map(|(d, f)| d * (f[r] + f[l])).sum::<f64>() / den).abs()
            } else {
                0.0
            };
            // factored to keep rounding relative to the gradients, not their squares
            worst = worst.min((gu - gw) * (gu + gw));
        }
    }
    worst
}

/// Largest residual `(|u|_after - |u|_before)/dt - div_h(D_f grad_h |u|_before)` over
/// cells where `|u|_before > threshold`, with `D_f` the solver's face diffusivity. For the
/// scheme above this is `<= 0` up to rounding; `-inf` if no cell qualifies.
pub fn subsolution_residual(
    before: &SpeciesState,
    after: &SpeciesState,
    cfg: &SolverConfig,
    dt: f64,
    threshold: f64,
) -> f64 {
    let mut w0 = Vec::new();
    let mut w1 = Vec::new();
    norms_into(before.fields(), &mut w0);
    norms_into(after.fields(), &mut w1);
    let diff: Vec<f64> = w0.iter().map(|&w| cfg.coefficient(w)).collect();
    residual_from(&w0, &w1, &diff, before.grid(), dt, threshold)
}

fn residual_from(w0: &[f64], w1: &[f64], diff: &[f64], grid: &Grid, dt: f64, threshold: f64) -> f64 {
    let mut op = vec![0.0; w0.len()];
    for axis in 0..grid.dim() {
        let h = grid.spacing()[axis];
        let coef = 0.5 / (h * h);
        for (l, r, _) in grid.faces(axis) {
            let flux = coef * (diff[l] + diff[r]) * (w0[r] - w0[l]);
            op[l] += flux;
            op[r] -= flux;
        }
    }
    let mut worst = f64::NEG_INFINITY;
    for c in 0..w0.len() {
        if w0[c] > threshold {
            worst = worst.max((w1[c] - w0[c]) / dt - op[c]);
        }
    }
    worst
}

/// Hook called at every sampled time of a run.
pub trait Observer {
    fn observe(&mut self, state: &SpeciesState, record: &mut SampleRecord);
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Horizon {
    Time(f64),
    Steps(usize),
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub horizon: Horizon,
    /// Sample every `stride` steps (the last step is always sampled).
    pub stride: usize,
    /// Additional sample times; the step size is shortened to land on them exactly.
    pub sample_times: Vec<f64>,
    pub fixed_dt: Option<f64>,
    pub keep_snapshots: bool,
    /// Support threshold; `None` uses the per-field default.
    pub threshold: Option<f64>,
    pub boundary: Boundary,
    /// Evaluate the Cauchy–Schwarz and subsolution checks at sampled steps.
    pub track_invariants: bool,
}

impl RunOptions {
    pub fn until(t_end: f64) -> Self {
        Self {
            horizon: Horizon::Time(t_end),
            stride: 100,
            sample_times: Vec::new(),
            fixed_dt: None,
            keep_snapshots: false,
            threshold: None,
            boundary: Boundary::ZeroFlux,
            track_invariants: true,
        }
    }

    pub fn steps(n: usize) -> Self {
        Self { horizon: Horizon::Steps(n), ..Self::until(0.0) }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride.max(1);
        self
    }

    pub fn with_sample_times(mut self, times: Vec<f64>) -> Self {
        self.sample_times = times;
        self
    }

    pub fn with_fixed_dt(mut self, dt: f64) -> Self {
        self.fixed_dt = Some(dt);
        self
    }

    pub fn with_snapshots(mut self) -> Self {
        self.keep_snapshots = true;
        self
    }

    pub fn with_threshold(mut self, threshold: f64) -> Self {
        self.threshold = Some(threshold);
        self
    }

    pub fn with_boundary(mut self, boundary: Boundary) -> Self {
        self.boundary = boundary;
        self
    }

    pub fn without_invariants(mut self) -> Self {
        self.track_invariants = false;
        self
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub state: SpeciesState,
    pub report: DiagnosticsReport,
    /// Sampled states, in report order (empty unless requested).
    pub snapshots: Vec<SpeciesState>,
    /// Mass supplied through a Dirichlet boundary per species.
    pub boundary_inflow: Vec<f64>,
}

/// Advance to `t_end`, sampling every 100 steps.
pub fn run(
    initial: &SpeciesState,
    cfg: &SolverConfig,
    t_end: f64,
    observers: &mut [&mut dyn Observer],
) -> Result<(SpeciesState, DiagnosticsReport), SolverError> {
    let out = run_with(initial, cfg, &RunOptions::until(t_end), observers)?;
    Ok((out.state, out.report))
}

fn threshold_for(values: &[f64], fixed: Option<f64>) -> f64 {
    fixed.unwrap_or_else(|| default_threshold(values))
}

struct Sampler<'a> {
    opts: &'a RunOptions,
    prev_norm_support: Option<CellSet>,
}

impl Sampler<'_> {
    fn record(&mut self, state: &SpeciesState, norm: &[f64], step: usize) -> SampleRecord {
        let grid = state.grid();
        let sets: Vec<CellSet> =
            state.fields().iter().map(|f| support_of_values(f, threshold_for(f, self.opts.threshold))).collect();
        let mut pair_distances = Vec::new();
        for i in 0..sets.len() {
            for j in i + 1..sets.len() {
                pair_distances.push(PairValue { i, j, value: support_distance(&sets[i], &sets[j], grid) });
            }
        }
        let norm_set = support_of_values(norm, threshold_for(norm, self.opts.threshold));
        let support_lost = self.prev_norm_support.as_ref().map_or(0, |p| p.missing_from(&norm_set));
        let record = SampleRecord {
            time: state.time(),
            step,
            masses: state.masses(),
            max_norm: norm.iter().copied().fold(0.0, f64::max),
            supports: sets.iter().map(|s| SupportSummary { cells: s.len(), bbox: s.bounding_box(grid) }).collect(),
            norm_support: Some(SupportSummary { cells: norm_set.len(), bbox: norm_set.bounding_box(grid) }),
            pair_distances,
            cs_slack_min: self.opts.track_invariants.then(|| slack_from(state.fields(), norm, grid)),
            support_lost,
            ..SampleRecord::default()
        };
        self.prev_norm_support = Some(norm_set);
        record
    }
}

/// Advance `initial` under `opts`, sampling diagnostics and calling `observers` at the
/// initial time and at every sample.
pub fn run_with(
    initial: &SpeciesState,
    cfg: &SolverConfig,
    opts: &RunOptions,
    observers: &mut [&mut dyn Observer],
) -> Result<RunOutput, SolverError> {
    cfg.validate()?;
    if let Some(dt) = opts.fixed_dt {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(SolverError::Config(format!("fixed dt must be positive (got {dt})")));
        }
    }
    let t0 = initial.time();
    let mut sample_times: Vec<f64> = opts.sample_times.iter().copied().filter(|&s| s > t0).collect();
    sample_times.sort_by(f64::total_cmp);
    sample_times.dedup();
    match opts.horizon {
        Horizon::Time(t_end) if !(t_end >= t0) || !t_end.is_finite() => {
            return Err(SolverError::EndTime { time: t0, t_end });
        }
        Horizon::Time(t_end) => sample_times.retain(|&s| s < t_end),
        Horizon::Steps(_) => {}
    }

    let start = cfg.apply_cap(initial);
    let mut report = DiagnosticsReport { initial_masses: start.masses(), ..Default::default() };
    let k = start.k();
    let done_at_start = match opts.horizon {
        Horizon::Time(t_end) => t_end == t0,
        Horizon::Steps(n) => n == 0,
    };
    if done_at_start {
        return Ok(RunOutput { state: start, report, snapshots: Vec::new(), boundary_inflow: vec![0.0; k] });
    }

    let grid = start.grid().clone();
    let (_, mut cur, mut t) = start.into_parts();
    let mut next = vec![vec![0.0; grid.len()]; k];
    let mut norm = Vec::with_capacity(grid.len());
    let mut diff = vec![0.0; grid.len()];
    let mut inflow = vec![CompensatedSum::new(); k];
    let mut snapshots = Vec::new();
    let mut sampler = Sampler { opts, prev_norm_support: None };
    let dirichlet = matches!(opts.boundary, Boundary::Dirichlet(_));

    let emit = |fields: &Vec<Vec<f64>>,
                norm: &[f64],
                t: f64,
                step: usize,
                subsolution: Option<f64>,
                report: &mut DiagnosticsReport,
                observers: &mut [&mut dyn Observer],
                sampler: &mut Sampler|
     -> SpeciesState {
        let state = SpeciesState::from_parts(grid.clone(), fields.clone(), t);
        let mut record = sampler.record(&state, norm, step);
        record.subsolution_max = subsolution;
        for o in observers.iter_mut() {
            o.observe(&state, &mut record);
        }
        report.records.push(record);
        state
    };

    norms_into(&cur, &mut norm);
    let first = emit(&cur, &norm, t, 0, None, &mut report, observers, &mut sampler);
    if opts.keep_snapshots {
        snapshots.push(first);
    }

    let mut step = 0usize;
    let mut next_sample = 0usize;
    loop {
        norms_into(&cur, &mut norm);
        let mut dmax = 0.0_f64;
        for (d, &w) in diff.iter_mut().zip(&norm) {
            *d = cfg.coefficient(w);
            dmax = dmax.max(*d);
        }
        let ghost = match &opts.boundary {
            Boundary::ZeroFlux => Vec::new(),
            Boundary::Dirichlet(f) => ghosts(&grid, k, cfg, f, t),
        };
        for g in &ghost {
            dmax = dmax.max(g.diff);
        }
        let dt_stable = dt_for(dmax, &grid, cfg);
        let mut dt = opts.fixed_dt.unwrap_or(dt_stable);
        if dt > dt_stable * (1.0 + 1e-12) {
            report.cfl_violations += 1;
        }
        if !dt.is_finite() && matches!(opts.horizon, Horizon::Steps(_)) {
            return Err(SolverError::Config("a step-count run needs a finite time step".into()));
        }
        if dt <= 1e-14 * t.abs().max(1.0) {
            return Err(SolverError::Stagnation { time: t, dt });
        }

        // land exactly on the next sample time or the end time
        while next_sample < sample_times.len() && sample_times[next_sample] <= t {
            next_sample += 1;
        }
        let target = match opts.horizon {
            Horizon::Time(t_end) => Some(sample_times.get(next_sample).copied().unwrap_or(t_end)),
            Horizon::Steps(_) => sample_times.get(next_sample).copied(),
        };
        let mut landed = None;
        if let Some(target) = target {
            if dt >= target - t {
                dt = target - t;
                landed = Some(target);
            }
        }
        let final_step = match opts.horizon {
            Horizon::Time(t_end) => landed == Some(t_end),
            Horizon::Steps(n) => step + 1 == n,
        };
        let sample = final_step || landed.is_some() || (step + 1).is_multiple_of(opts.stride.max(1));

        if !advance(&cur, &mut next, &diff, &grid, dt, &ghost, &mut inflow, cfg.clamp_negative) {
            return Err(SolverError::Blowup { step: step + 1, time: t + dt });
        }
        step += 1;
        t = landed.unwrap_or(t + dt);
        std::mem::swap(&mut cur, &mut next);

        if sample {
            // `next` holds the pre-step fields, `norm`/`diff` their norm and diffusivity
            let mut w1 = Vec::with_capacity(grid.len());
            norms_into(&cur, &mut w1);
            let subsolution = (opts.track_invariants && !dirichlet).then(|| {
                let thr = threshold_for(&norm, opts.threshold);
                residual_from(&norm, &w1, &diff, &grid, dt, thr)
            });
            let state = emit(&cur, &w1, t, step, subsolution, &mut report, observers, &mut sampler);
            if opts.keep_snapshots {
                snapshots.push(state);
            }
        }
        if final_step {
            break;
        }
    }
    report.steps = step;
    let state = SpeciesState::from_parts(grid, cur, t);
    Ok(RunOutput { state, report, snapshots, boundary_inflow: inflow.iter().map(|c| c.value()).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, lo: f64, hi: f64) -> Grid {
        Grid::from_bounds(&[n], &[lo], &[hi]).unwrap()
    }

    fn bump(x: f64, c: f64, r: f64) -> f64 {
        (1.0 - ((x - c) / r).powi(2)).max(0.0)
    }

    #[test]
    fn diffusivity_examples() {
        let g = line(4, 0.0, 1.0);
        let cfg = SolverConfig::default();
        let z = SpeciesState::zeros(g.clone(), 2, 0.0).unwrap();
        assert!(diffusivity(&z, &cfg).values.iter().all(|&d| d == 0.0));
        let s = SpeciesState::from_fn(g.clone(), 2, 0.0, |i, _| if i == 0 { 3.0 } else { 4.0 }).unwrap();
        assert!(diffusivity(&s, &cfg).values.iter().all(|&d| d == 10.0));
        let reg = cfg.clone().with_epsilon(0.1);
        assert!(diffusivity(&z, &reg).values.iter().all(|&d| (d - 0.2).abs() < 1e-15));
    }

    #[test]
    fn stable_dt_formula() {
        // D = m|u| = 1 with m = 2, u = 0.5
        let g = line(10, 0.0, 1.0);
        let cfg = SolverConfig::default();
        let s = SpeciesState::from_fn(g.clone(), 1, 0.0, |_, _| 0.5).unwrap();
        assert!((stable_dt(&s, &cfg) - 0.0045).abs() < 1e-15);
        let s2 = SpeciesState::from_fn(g.clone(), 1, 0.0, |_, _| 1.0).unwrap();
        assert!((stable_dt(&s2, &cfg) - 0.00225).abs() < 1e-15);
        let s3 = SpeciesState::from_fn(line(20, 0.0, 1.0), 1, 0.0, |_, _| 0.5).unwrap();
        assert!((stable_dt(&s3, &cfg) - 0.0045 / 4.0).abs() < 1e-15);
        let z = SpeciesState::zeros(g, 1, 0.0).unwrap();
        assert_eq!(stable_dt(&z, &cfg), f64::INFINITY);
        let capped = SolverConfig { max_dt: Some(0.1), ..cfg };
        assert_eq!(stable_dt(&z, &capped), 0.1);
    }

    #[test]
    fn constant_and_zero_states_are_fixed() {
        let g = Grid::from_bounds(&[6, 5], &[0.0, 0.0], &[1.0, 1.0]).unwrap();
        let cfg = SolverConfig::default();
        let c = SpeciesState::from_fn(g.clone(), 2, 0.0, |i, _| 1.0 + i as f64).unwrap();
        let dt = stable_dt(&c, &cfg);
        assert_eq!(step(&c, &cfg, dt).unwrap().fields(), c.fields());
        let z = SpeciesState::zeros(g, 2, 0.0).unwrap();
        assert!(step(&z, &cfg, 0.1).unwrap().fields().iter().flatten().all(|&v| v == 0.0));
    }

    #[test]
    fn blowup_is_reported() {
        let g = line(16, 0.0, 1.0);
        let cfg = SolverConfig::default();
        let s = SpeciesState::from_fn(g, 1, 0.0, |_, x| 1e150 * bump(x[0], 0.5, 0.2)).unwrap();
        let opts = RunOptions::steps(50).with_fixed_dt(1.0);
        let err = run_with(&s, &cfg, &opts, &mut []).unwrap_err();
        assert!(matches!(err, SolverError::Blowup { .. }), "{err}");
    }

    #[test]
    fn rejects_bad_config() {
        assert!(SolverConfig::new(1.0).is_err());
        let cfg = SolverConfig { cfl_safety: 1.5, ..SolverConfig::default() };
        assert!(matches!(cfg.validate(), Err(SolverError::Config(_))));
    }

    #[test]
    fn identity_when_end_equals_start() {
        let s = SpeciesState::from_fn(line(8, 0.0, 1.0), 1, 0.5, |_, x| bump(x[0], 0.5, 0.3)).unwrap();
        let (out, report) = run(&s, &SolverConfig::default(), 0.5, &mut []).unwrap();
        assert_eq!(out, s);
        assert!(report.is_empty());
        assert!(run(&s, &SolverConfig::default(), 0.25, &mut []).is_err());
    }

    #[test]
    fn mass_is_conserved_and_end_time_exact() {
        let g = line(256, -2.0, 2.0);
        let s = SpeciesState::from_fn(g, 2, 0.0, |i, x| bump(x[0], if i == 0 { -0.5 } else { 0.7 }, 0.4)).unwrap();
        let opts = RunOptions::until(0.3).with_sample_times(vec![0.1, 0.2]);
        let out = run_with(&s, &SolverConfig::default(), &opts, &mut []).unwrap();
        assert_eq!(out.state.time(), 0.3);
        assert!(out.report.max_mass_drift() < 1e-13, "{}", out.report.max_mass_drift());
        let times = out.report.times();
        assert!(times.contains(&0.1) && times.contains(&0.2));
        assert!(times.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn cap_bounds_every_species() {
        let g = line(128, -1.0, 1.0);
        let s = SpeciesState::from_fn(g, 2, 0.0, |i, x| (2.0 + i as f64) * bump(x[0], 0.0, 0.5)).unwrap();
        let cfg = SolverConfig::default().with_epsilon(1e-2).with_cap(1.5);
        let (out, _) = run(&s, &cfg, 0.2, &mut []).unwrap();
        let max = out.fields().iter().flatten().copied().fold(0.0, f64::max);
        assert!(max <= 1.5 + 1e-12, "{max}");
    }

    #[test]
    fn ladder_covers_presets() {
        let eps: Vec<f64> = SolverConfig::default().ladder().iter().map(|c| c.epsilon).collect();
        assert_eq!(eps, EPSILON_LADDER.to_vec());
    }

    #[test]
    fn invariants_hold_on_mixed_data() {
        let g = Grid::from_bounds(&[48, 48], &[-1.0, -1.0], &[1.0, 1.0]).unwrap();
        let s = SpeciesState::from_fn(g, 3, 0.0, |i, x| {
            let c = [-0.3, 0.0, 0.35][i];
            (1.0 - ((x[0] - c).powi(2) + x[1] * x[1]) / 0.16).max(0.0) * (1.0 + i as f64)
        })
        .unwrap();
        let opts = RunOptions::until(0.02).with_stride(5);
        let out = run_with(&s, &SolverConfig { m: 3.0, ..Default::default() }, &opts, &mut []).unwrap();
        assert!(out.report.min_cs_slack().unwrap() >= -1e-12);
        assert!(out.report.max_subsolution_residual().unwrap() <= 1e-9);
        assert_eq!(out.report.max_support_lost(), 0);
    }

    #[test]
    fn dirichlet_inflow_balances_mass() {
        let g = line(64, 0.0, 1.0);
        let s = SpeciesState::from_fn(g, 1, 0.0, |_, x| 1.0 - x[0]).unwrap();
        let bc: BoundaryFn = Arc::new(|_, x: &[f64], _| if x[0] < 0.0 { 2.0 } else { 0.0 });
        let opts = RunOptions::until(0.05).with_boundary(Boundary::Dirichlet(bc));
        let out = run_with(&s, &SolverConfig::default(), &opts, &mut []).unwrap();
        assert!(out.boundary_inflow[0] > 0.0);
        assert!(out.report.mass_balance_defect(&out.boundary_inflow) < 1e-13);
    }

    struct Count(usize);
    impl Observer for Count {
        fn observe(&mut self, _: &SpeciesState, record: &mut SampleRecord) {
            self.0 += 1;
            record.extras.insert("calls".into(), self.0 as f64);
        }
    }

    #[test]
    fn observers_see_every_sample() {
        let s = SpeciesState::from_fn(line(32, -1.0, 1.0), 1, 0.0, |_, x| bump(x[0], 0.0, 0.5)).unwrap();
        let mut c = Count(0);
        let opts = RunOptions::steps(25).with_stride(10);
        let out = run_with(&s, &SolverConfig::default(), &opts, &mut [&mut c]).unwrap();
        // initial, steps 10, 20 and the final step 25
        assert_eq!(c.0, 4);
        assert_eq!(out.report.steps, 25);
        assert_eq!(out.report.records.last().unwrap().extras["calls"], 4.0);
    }
}
