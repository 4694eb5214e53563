//! Running a scenario: main solve, checks, artifacts and the verdict.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use spme_core::barenblatt::{coefficients, BarenblattProfile};
use spme_core::diagnostics::{
    barenblatt_distance, harnack_sweep, ratio_defect, support_sync_defect, waiting_time_in_report, DiagnosticsError,
    RatioObserver, SyncObserver,
};
use spme_core::io::to_csv_string;
use spme_core::refinement::ErrorTable;
use spme_core::selfsim::{entropy_trace_full, to_selfsimilar, EntropyRecord, RescaledState};
use spme_core::solver::{run_with, Boundary, Horizon, Observer, RunOptions, RunOutput, SolverError};
use spme_core::{Grid, SampleRecord, SpeciesState};
use thiserror::Error;

use crate::scenario::{Check, Scenario};
use crate::study::{refinement_study, StudyError};

pub const MASS_TOL: f64 = 1e-12;
pub const CS_TOL: f64 = 1e-12;
/// Subsolution residual bound in units of the mesh width.
pub const SUBSOLUTION_FACTOR: f64 = 10.0;
pub const PROPORTIONALITY_TOL: f64 = 1e-12;
pub const ORDER_MIN: f64 = 0.8;
/// Slack on the `-a1` decay rate of `max |u|`.
pub const DECAY_SLACK: f64 = 0.05;
pub const HARNACK_MARGIN: f64 = 1.1;
pub const ENTROPY_MONOTONE_TOL: f64 = 1e-8;
pub const EQUILIBRIUM_TOL: f64 = 1e-6;
pub const CONVERGENCE_FACTOR: f64 = 4.0;
/// Relative tolerance on the error ratio between species of a travelling wave.
pub const SPECIES_RATIO_TOL: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Pass,
    CheckFailed,
    ConfigError,
    NumericalFailure,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Pass => 0,
            Status::CheckFailed => 1,
            Status::ConfigError => 2,
            Status::NumericalFailure => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckOutcome {
    pub passed: bool,
    /// Measured quantity compared against `limit`.
    pub value: f64,
    pub limit: f64,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub detail: BTreeMap<String, Value>,
}

impl CheckOutcome {
    fn new(passed: bool, value: f64, limit: f64) -> Self {
        Self { passed, value, limit, detail: BTreeMap::new() }
    }

    fn with(mut self, key: &str, v: impl Serialize) -> Self {
        self.detail.insert(key.to_string(), serde_json::to_value(v).unwrap_or(Value::Null));
        self
    }

    fn error(e: impl std::fmt::Display) -> Self {
        Self::new(false, f64::NAN, f64::NAN).with("error", e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailurePayload {
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub time: Option<f64>,
}

impl From<&SolverError> for FailurePayload {
    fn from(e: &SolverError) -> Self {
        let (kind, step, time) = match e {
            SolverError::Blowup { step, time } => ("blowup", Some(*step), Some(*time)),
            SolverError::Stagnation { time, .. } => ("stagnation", None, Some(*time)),
            _ => ("solver", None, None),
        };
        Self { kind: kind.into(), message: e.to_string(), step, time }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub scenario: String,
    pub status: Status,
    pub checks: BTreeMap<String, CheckOutcome>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailurePayload>,
    pub steps: usize,
    pub final_time: f64,
}

impl Verdict {
    pub fn passed(&self) -> bool {
        self.status == Status::Pass
    }
}

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    State(#[from] spme_core::StateError),
}

/// Stores the states sampled at the listed times.
struct Checkpoints {
    times: Vec<f64>,
    states: Vec<SpeciesState>,
}

impl Observer for Checkpoints {
    fn observe(&mut self, state: &SpeciesState, _record: &mut SampleRecord) {
        if self.times.contains(&state.time()) && !self.states.iter().any(|s| s.time() == state.time()) {
            self.states.push(state.clone());
        }
    }
}

impl Checkpoints {
    fn at(&self, t: f64) -> Option<&SpeciesState> {
        self.states.iter().find(|s| s.time() == t)
    }
}

/// Everything computed for a scenario, before it is written out.
#[derive(Debug)]
pub struct Experiment {
    pub verdict: Verdict,
    pub output: Option<RunOutput>,
    pub checkpoints: Vec<SpeciesState>,
    pub entropy: Option<Vec<EntropyRecord>>,
    pub tables: BTreeMap<String, ErrorTable>,
    pub harnack: Option<String>,
}

/// Run a scenario and evaluate its checks; nothing is written.
pub fn evaluate(s: &Scenario) -> Result<Experiment, ExperimentError> {
    let initial = s.initial_state()?;
    let masses = initial.masses();
    let tw = s.travelling_wave();

    let mut sample_times = s.sample_times.clone();
    if s.checks.contains(&Check::SyncDefect) {
        sample_times.push(s.sync.time);
    }
    if s.checks.contains(&Check::Stabilization) || s.checks.contains(&Check::LinfDecay) {
        sample_times.push(s.stabilization.t_first);
        sample_times.extend(s.stabilization.t_last);
    }
    if let Some(te) = s.t_end() {
        sample_times.retain(|&t| t > s.t0 && t <= te);
    }
    sample_times.sort_by(f64::total_cmp);
    sample_times.dedup();

    let mut opts = match s.horizon {
        Horizon::Time(t) => RunOptions::until(t),
        Horizon::Steps(n) => RunOptions::steps(n),
    }
    .with_stride(s.stride)
    .with_sample_times(sample_times.clone());
    if let Some(thr) = s.threshold {
        opts = opts.with_threshold(thr);
    }
    if let Some(w) = &tw {
        let w = Arc::new(w.clone());
        opts = opts.with_boundary(Boundary::Dirichlet(Arc::new(move |i, x: &[f64], t| w.evaluate(i, x, t))));
    }
    let mut checkpoints = Checkpoints { times: sample_times.clone(), states: vec![initial.clone()] };
    let mut ratio = RatioObserver { masses: masses.clone(), threshold: s.threshold };
    let mut sync = SyncObserver { threshold: s.threshold };
    let mut observers: Vec<&mut dyn Observer> = vec![&mut checkpoints];
    if s.checks.contains(&Check::Proportionality) {
        observers.push(&mut ratio);
    }
    if s.checks.contains(&Check::SyncDefect) {
        observers.push(&mut sync);
    }

    let out = match run_with(&initial, &s.solver, &opts, &mut observers) {
        Ok(out) => out,
        Err(e) => return Ok(numerical_failure(s, &e)),
    };
    drop(observers);
    if checkpoints.at(out.state.time()).is_none() {
        checkpoints.states.push(out.state.clone());
    }

    let mut checks = BTreeMap::new();
    let mut entropy = None;
    let mut tables = BTreeMap::new();
    let mut harnack_csv = None;
    let report = &out.report;
    let h = s.grid.min_spacing();
    for &c in &s.checks {
        let outcome = match c {
            Check::Mass => {
                if tw.is_some() {
                    let d = report.mass_balance_defect(&out.boundary_inflow);
                    CheckOutcome::new(d <= MASS_TOL, d, MASS_TOL).with("inflow", &out.boundary_inflow)
                } else {
                    let d = report.max_mass_drift();
                    CheckOutcome::new(d <= MASS_TOL, d, MASS_TOL)
                }
            }
            Check::CauchySchwarz => {
                let v = report.min_cs_slack().unwrap_or(0.0);
                CheckOutcome::new(v >= -CS_TOL, v, -CS_TOL)
            }
            Check::Subsolution => {
                let v = report.max_subsolution_residual().unwrap_or(0.0);
                let lim = SUBSOLUTION_FACTOR * h;
                CheckOutcome::new(v <= lim, v, lim)
            }
            Check::SupportMonotone => {
                let v = report.max_support_lost() as f64;
                let lim = s.n as f64;
                CheckOutcome::new(v <= lim, v, lim)
            }
            Check::WaitingTime => match waiting_time_in_report(report) {
                Ok(t) => {
                    let gap = report
                        .last()
                        .map(|r| r.pair_distances.iter().map(|p| p.value).fold(f64::INFINITY, f64::min))
                        .unwrap_or(f64::NAN);
                    CheckOutcome::new(t.is_none(), gap, 0.0).with("first_contact", t).with("final_min_distance", gap)
                }
                Err(e) => CheckOutcome::error(e),
            },
            Check::SyncDefect => sync_check(s, &checkpoints, report),
            Check::Proportionality => match report.max_ratio_defect() {
                Some(v) => CheckOutcome::new(v <= PROPORTIONALITY_TOL, v, PROPORTIONALITY_TOL)
                    .with("mass_ratios", masses.iter().map(|m| m / masses[0]).collect::<Vec<_>>()),
                None => CheckOutcome::error("no sample had |u| above the threshold"),
            },
            Check::Stabilization => stabilization_check(s, &checkpoints, &masses, out.state.time()),
            Check::LinfDecay => decay_check(s, report, out.state.time()),
            Check::RatioTrend => ratio_trend_check(s, &checkpoints, &masses, &sample_times),
            Check::Harnack => match harnack_sweep(&initial, &s.solver, &masses, &s.harnack.times, &s.harnack.radii) {
                Ok(sweep) => {
                    let q = sweep.max();
                    let mut csv = String::from("T,R,species,Q\n");
                    for e in &sweep.entries {
                        csv.push_str(&format!("{},{},{},{}\n", e.t, e.r, e.species + 1, e.q));
                    }
                    harnack_csv = Some(csv);
                    let o = match s.harnack.baseline {
                        Some(b) => {
                            CheckOutcome::new(q <= HARNACK_MARGIN * b, q, HARNACK_MARGIN * b).with("baseline", b)
                        }
                        None => CheckOutcome::new(q.is_finite(), q, f64::INFINITY).with("baseline", Value::Null),
                    };
                    o.with("mu0", s.mu0())
                }
                Err(DiagnosticsError::Solver(e)) => return Ok(numerical_failure(s, &e)),
                Err(e) => CheckOutcome::error(e),
            },
            Check::BarenblattOrder | Check::TravellingOrder => match refinement_study(s, s.refinement.levels) {
                Ok(table) => {
                    let o = order_check(&table);
                    let o = match &tw {
                        Some(w) if c == Check::TravellingOrder => species_ratio(o, &table, w.coeffs()),
                        _ => o,
                    };
                    tables.insert(c.name().to_string(), table);
                    o
                }
                Err(StudyError::Solver(e))
                | Err(StudyError::Travelling(spme_core::travelling::TravellingError::Solver(e))) => {
                    return Ok(numerical_failure(s, &e))
                }
                Err(e) => CheckOutcome::error(e),
            },
            Check::Entropy | Check::EntropyConvergence => {
                if checks.contains_key(c.name()) {
                    continue;
                }
                match entropy_checks(s, &initial) {
                    Ok(e) => {
                        entropy = Some(e.records);
                        if s.checks.contains(&Check::Entropy) {
                            checks.insert(Check::Entropy.name().to_string(), e.entropy);
                        }
                        if s.checks.contains(&Check::EntropyConvergence) {
                            checks.insert(Check::EntropyConvergence.name().to_string(), e.convergence);
                        }
                        continue;
                    }
                    Err(e) => CheckOutcome::error(e),
                }
            }
        };
        checks.insert(c.name().to_string(), outcome);
    }

    let status = if checks.values().all(|c| c.passed) { Status::Pass } else { Status::CheckFailed };
    let verdict = Verdict {
        scenario: s.name.clone(),
        status,
        checks,
        failure: None,
        steps: report.steps,
        final_time: out.state.time(),
    };
    checkpoints.states.sort_by(|a, b| a.time().total_cmp(&b.time()));
    Ok(Experiment {
        verdict,
        output: Some(out),
        checkpoints: checkpoints.states,
        entropy,
        tables,
        harnack: harnack_csv,
    })
}

fn numerical_failure(s: &Scenario, e: &SolverError) -> Experiment {
    let failure = FailurePayload::from(e);
    Experiment {
        verdict: Verdict {
            scenario: s.name.clone(),
            status: Status::NumericalFailure,
            checks: BTreeMap::new(),
            steps: failure.step.unwrap_or(0),
            final_time: failure.time.unwrap_or(f64::NAN),
            failure: Some(failure),
        },
        output: None,
        checkpoints: Vec::new(),
        entropy: None,
        tables: BTreeMap::new(),
        harnack: None,
    }
}

fn sync_check(s: &Scenario, cp: &Checkpoints, report: &spme_core::DiagnosticsReport) -> CheckOutcome {
    let Some(state) = cp.at(s.sync.time) else {
        return CheckOutcome::error(format!("no sample at t = {}", s.sync.time));
    };
    let mut worst = 0.0_f64;
    for i in 0..state.k() {
        for j in i + 1..state.k() {
            match support_sync_defect(state, i, j, s.threshold) {
                Ok(v) => worst = worst.max(v),
                Err(e) => return CheckOutcome::error(e),
            }
        }
    }
    let tail: Vec<f64> = report
        .records
        .iter()
        .rev()
        .take(3)
        .rev()
        .map(|r| r.sync_defects.iter().map(|p| p.value).fold(0.0, f64::max))
        .collect();
    let settling = tail.windows(2).all(|w| w[1] <= w[0]);
    CheckOutcome::new(worst < s.sync.tolerance && settling, worst, s.sync.tolerance)
        .with("time", s.sync.time)
        .with("last_samples", &tail)
        .with("non_increasing", settling)
}

fn stabilization_check(s: &Scenario, cp: &Checkpoints, masses: &[f64], t_final: f64) -> CheckOutcome {
    let t_last = s.stabilization.t_last.unwrap_or(t_final);
    let (Some(a), Some(b)) = (cp.at(s.stabilization.t_first), cp.at(t_last)) else {
        return CheckOutcome::error("stabilization times were not sampled");
    };
    let (da, db) = match (barenblatt_distance(a, masses, s.m), barenblatt_distance(b, masses, s.m)) {
        (Ok(x), Ok(y)) => (x, y),
        (Err(e), _) | (_, Err(e)) => return CheckOutcome::error(e),
    };
    // per species, both norms
    let ratio = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| y / x).fold(0.0, f64::max);
    let worst = ratio(&da.scaled_linf, &db.scaled_linf).max(ratio(&da.l1, &db.l1));
    let f = s.stabilization.factor;
    CheckOutcome::new(worst <= f, worst, f)
        .with("t_first", s.stabilization.t_first)
        .with("t_last", t_last)
        .with("scaled_linf_first", &da.scaled_linf)
        .with("scaled_linf_last", &db.scaled_linf)
        .with("l1_first", &da.l1)
        .with("l1_last", &db.l1)
}

/// Least-squares slope of `ln max|u|` against `ln t` on the stabilization window.
fn decay_check(s: &Scenario, report: &spme_core::DiagnosticsReport, t_final: f64) -> CheckOutcome {
    let t_last = s.stabilization.t_last.unwrap_or(t_final);
    let pts: Vec<(f64, f64)> = report
        .records
        .iter()
        .filter(|r| r.time >= s.stabilization.t_first && r.time <= t_last && r.max_norm > 0.0)
        .map(|r| (r.time.ln(), r.max_norm.ln()))
        .collect();
    if pts.len() < 2 {
        return CheckOutcome::error("fewer than two samples in the decay window");
    }
    let nn = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / nn;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / nn;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    let a1 = coefficients(s.m, s.n).map(|e| e.a1).unwrap_or(f64::NAN);
    let lim = -a1 + DECAY_SLACK;
    CheckOutcome::new(slope <= lim, slope, lim).with("a1", a1).with("samples", pts.len())
}

fn ratio_trend_check(s: &Scenario, cp: &Checkpoints, masses: &[f64], times: &[f64]) -> CheckOutcome {
    let explicit: Vec<f64> = times.iter().copied().filter(|t| s.sample_times.contains(t)).collect();
    let mut values = Vec::new();
    for &t in &explicit {
        match cp.at(t).map(|st| ratio_defect(st, masses, s.threshold)) {
            Some(Ok(v)) => values.push(v),
            Some(Err(e)) => return CheckOutcome::error(e),
            None => return CheckOutcome::error(format!("no sample at t = {t}")),
        }
    }
    if values.len() < 2 {
        return CheckOutcome::error("ratio_trend needs at least two `sample_times`");
    }
    let decreasing = values.windows(2).all(|w| w[1] <= w[0]);
    let last = *values.last().unwrap_or(&f64::NAN);
    CheckOutcome::new(decreasing && last < values[0], last, values[0]).with("times", &explicit).with("defects", &values)
}

fn order_check(table: &ErrorTable) -> CheckOutcome {
    let order = table.min_order().unwrap_or(f64::NAN);
    let conclusive = !table.inconclusive();
    CheckOutcome::new(conclusive && order >= ORDER_MIN, order, ORDER_MIN)
        .with("orders", table.orders())
        .with("inconclusive", !conclusive)
}

/// Errors of proportional species are themselves proportional to the amplitudes.
fn species_ratio(o: CheckOutcome, table: &ErrorTable, coeffs: &[f64]) -> CheckOutcome {
    let Some(row) = table.rows.last() else { return o };
    let mut worst = 0.0_f64;
    for (i, &e) in row.l1_species.iter().enumerate().skip(1) {
        let observed = e / row.l1_species[0];
        let expected = coeffs[i] / coeffs[0];
        worst = worst.max((observed / expected - 1.0).abs());
    }
    let passed = o.passed && worst <= SPECIES_RATIO_TOL;
    let mut o = o.with("species_ratio_error", worst);
    o.passed = passed;
    o
}

struct EntropyOutcome {
    records: Vec<EntropyRecord>,
    entropy: CheckOutcome,
    convergence: CheckOutcome,
}

fn coarsened(grid: &Grid, factor: usize) -> Result<Grid, spme_core::GridError> {
    let cells: Vec<usize> = grid.cells().iter().map(|c| c / factor).collect();
    Grid::from_bounds(&cells, grid.origin(), &grid.upper())
}

/// `max |dH/dtau + I|` over the records of a trace with `tau >= from`.
fn windowed_defect(records: &[EntropyRecord], from: f64) -> f64 {
    let kept: Vec<&EntropyRecord> = records.iter().filter(|r| r.tau >= from).collect();
    kept.windows(2)
        .map(|w| {
            let slope = (w[1].h - w[0].h) / (w[1].tau - w[0].tau);
            (slope + 0.5 * (w[0].dissipation() + w[1].dissipation())).abs()
        })
        .fold(0.0, f64::max)
}

fn entropy_checks(s: &Scenario, initial: &SpeciesState) -> Result<EntropyOutcome, Box<dyn std::error::Error>> {
    let spec = &s.entropy;
    let m = s.m;
    let rs0 = to_selfsimilar(initial, m)?;
    let tau0 = rs0.tau();
    let trace = entropy_trace_full(&rs0, m, tau0 + spec.tau_span, spec.stride)?;
    let increase = trace.max_relative_increase();
    let i1_ok = trace.records.iter().all(|r| r.i1 >= 0.0);
    let i2_ok = trace.records.iter().all(|r| r.i2 >= -10.0 * f64::EPSILON * r.i2_scale);
    let m0 = rs0.masses();
    let m1 = trace.state.masses();
    let theta_drift = m0.iter().zip(&m1).map(|(a, b)| ((b - a) / a).abs()).fold(0.0, f64::max);

    // dissipation identity on a refinement ladder ending at the scenario grid
    let mut defects = Vec::new();
    for l in 0..spec.levels {
        let g = coarsened(&s.grid, 1 << (spec.levels - 1 - l))?;
        let st = to_selfsimilar(&s.initial_state_on(&g)?, m)?;
        let stride = spec.consistency_stride * 4usize.pow(l as u32);
        let tr = entropy_trace_full(&st, m, tau0 + spec.window[1], stride)?;
        defects.push(windowed_defect(&tr.records, tau0 + spec.window[0]));
    }
    let consistent = defects.windows(2).all(|w| w[1] < w[0]);

    // the equilibrium is stationary
    let masses = rs0.masses();
    let profile = BarenblattProfile::for_masses(&masses, m, s.n)?;
    let half = 1.25 * profile.rescaled_radius();
    let eq_grid = Grid::centered(s.n, spec.equilibrium_cells, half)?;
    let eq = RescaledState::equilibrium(eq_grid, &masses, m, 0.0)?;
    let eq_trace = entropy_trace_full(&eq, m, spec.equilibrium_span, 1000)?;
    let h0 = eq_trace.records[0].h;
    let eq_drift = eq_trace.records.iter().map(|r| (r.h - h0).abs()).fold(0.0, f64::max);

    let passed = increase <= ENTROPY_MONOTONE_TOL
        && i1_ok
        && i2_ok
        && theta_drift <= MASS_TOL
        && consistent
        && eq_drift <= EQUILIBRIUM_TOL;
    let entropy = CheckOutcome::new(passed, increase, ENTROPY_MONOTONE_TOL)
        .with("i1_nonnegative", i1_ok)
        .with("i2_bound", i2_ok)
        .with("theta_mass_drift", theta_drift)
        .with("consistency_defects", &defects)
        .with("consistency_decreasing", consistent)
        .with("equilibrium_H", h0)
        .with("equilibrium_drift", eq_drift);

    let d0 = rs0.equilibrium_distance(m)?;
    let d1 = trace.state.equilibrium_distance(m)?;
    let factor = d0.iter().zip(&d1).map(|(a, b)| a / b).fold(f64::INFINITY, f64::min);
    let convergence = CheckOutcome::new(factor >= CONVERGENCE_FACTOR, factor, CONVERGENCE_FACTOR)
        .with("distance_initial", &d0)
        .with("distance_final", &d1)
        .with("tau_end", tau0 + spec.tau_span);
    Ok(EntropyOutcome { records: trace.records, entropy, convergence })
}

/// Write all artifacts of an evaluated scenario into `dir`.
pub fn write_artifacts(s: &Scenario, exp: &Experiment, dir: &Path) -> Result<Vec<String>, ExperimentError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| ExperimentError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut files = Vec::new();
    let mut put = |name: String, content: String| -> Result<(), ExperimentError> {
        let path = dir.join(&name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io(parent))?;
        }
        fs::write(&path, content).map_err(io(&path))?;
        files.push(name);
        Ok(())
    };
    if let Some(out) = &exp.output {
        put("diagnostics.csv".into(), out.report.to_csv())?;
    }
    for st in &exp.checkpoints {
        put(format!("fields/t_{:.6}.csv", st.time()), to_csv_string(st))?;
    }
    if let Some(records) = &exp.entropy {
        let mut csv = String::from("tau,H,I1,I2,dH_dtau_numeric\n");
        for r in records {
            let d = r.dh_dtau_numeric.map(|v| v.to_string()).unwrap_or_default();
            csv.push_str(&format!("{},{},{},{},{}\n", r.tau, r.h, r.i1, r.i2, d));
        }
        put("entropy.csv".into(), csv)?;
    }
    for (name, table) in &exp.tables {
        put(format!("{name}.csv"), table.to_csv())?;
    }
    if let Some(h) = &exp.harnack {
        put("harnack.csv".into(), h.clone())?;
    }
    let verdict = serde_json::to_string_pretty(&exp.verdict).expect("verdict serializes");
    put("verdict.json".into(), verdict + "\n")?;
    files.push("manifest.json".into());
    files.sort();
    let manifest = manifest(s, &files);
    let path = dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")
        .map_err(io(&path))?;
    Ok(files)
}

fn manifest(s: &Scenario, files: &[String]) -> Value {
    let horizon = match s.horizon {
        Horizon::Time(t) => json!({ "t_end": t }),
        Horizon::Steps(n) => json!({ "steps": n }),
    };
    json!({
        "name": s.name,
        "source": s.source.as_ref().map(|p| p.display().to_string()),
        "m": s.m,
        "k": s.k,
        "n": s.n,
        "grid": {
            "cells": s.grid.cells(),
            "lower": s.grid.origin(),
            "upper": s.grid.upper(),
        },
        "t0": s.t0,
        "horizon": horizon,
        "stride": s.stride,
        "sample_times": s.sample_times,
        "solver": s.solver,
        "bumps": s.bumps.iter().map(|b| {
            let mut v = serde_json::to_value(b).unwrap_or(Value::Null);
            v["species"] = json!(b.species + 1);
            v
        }).collect::<Vec<_>>(),
        "checks": s.checks.iter().map(|c| c.name()).collect::<Vec<_>>(),
        "files": files,
    })
}

/// Evaluate and write a scenario under `root/<output name>`.
pub fn run_scenario(s: &Scenario, root: &Path) -> Result<Verdict, ExperimentError> {
    let exp = evaluate(s)?;
    write_artifacts(s, &exp, &root.join(s.output_name()))?;
    Ok(exp.verdict)
}
