//! Scenario files: one experiment per file, TOML syntax.
//!
//! ```toml
//! name = "isolation"          # default: file stem
//! m = 2.0
//! k = 2
//! n = 1                       # default 1
//! t0 = 0.0                    # default 0
//! t_end = 0.1                 # or `steps = 10000`
//! stride = 100                # sample every `stride` steps (default 100)
//! sample_times = [0.05]       # extra samples, landed exactly
//! checks = ["mass", "waiting_time"]   # default ["mass"]
//!
//! [grid]                      # default: 2048 cells (1D) or 256x256 (2D),
//! cells = [2048]              # bounds padded around the data
//! lower = [-3.0]
//! upper = [3.0]
//!
//! [solver]                    # epsilon, cap, cfl_safety, clamp_negative, max_dt
//! epsilon = 0.0
//!
//! [[bump]]
//! species = 1                 # 1-based
//! shape = "pme-bump"          # or "barenblatt", "travelling-wave"
//! center = [-1.0]
//! radius = 0.25
//! amplitude = 1.0
//! ```
//!
//! Check-specific tables (`[sync]`, `[stabilization]`, `[harnack]`, `[entropy]`,
//! `[refinement]`) are described on the corresponding structs below.

use std::fmt;
use std::ops::Range;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use spme_core::barenblatt::{coefficients, euclidean_mass, profile_mass, BarenblattProfile};
use spme_core::solver::{Horizon, SolverConfig};
use spme_core::travelling::{Orientation, TravellingWave};
use spme_core::{Grid, SpeciesState};
use thiserror::Error;
use toml::Spanned;

pub const DEFAULT_CELLS_1D: usize = 2048;
pub const DEFAULT_CELLS_2D: usize = 256;
pub const DEFAULT_STRIDE: usize = 100;
/// Margin applied when the domain is sized automatically.
pub const DOMAIN_PADDING: f64 = 1.2;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{}", format_problems(.path, .problems))]
    Invalid { path: String, problems: Vec<String> },
}

fn format_problems(path: &str, problems: &[String]) -> String {
    let mut s =
        format!("{path}: invalid scenario ({} problem{})", problems.len(), if problems.len() == 1 { "" } else { "s" });
    for p in problems {
        s.push_str("\n  - ");
        s.push_str(p);
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Mass,
    CauchySchwarz,
    Subsolution,
    SupportMonotone,
    WaitingTime,
    SyncDefect,
    Proportionality,
    Stabilization,
    LinfDecay,
    RatioTrend,
    Harnack,
    BarenblattOrder,
    TravellingOrder,
    Entropy,
    EntropyConvergence,
}

impl Check {
    pub const ALL: [Check; 15] = [
        Check::Mass,
        Check::CauchySchwarz,
        Check::Subsolution,
        Check::SupportMonotone,
        Check::WaitingTime,
        Check::SyncDefect,
        Check::Proportionality,
        Check::Stabilization,
        Check::LinfDecay,
        Check::RatioTrend,
        Check::Harnack,
        Check::BarenblattOrder,
        Check::TravellingOrder,
        Check::Entropy,
        Check::EntropyConvergence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Check::Mass => "mass",
            Check::CauchySchwarz => "cauchy_schwarz",
            Check::Subsolution => "subsolution",
            Check::SupportMonotone => "support_monotone",
            Check::WaitingTime => "waiting_time",
            Check::SyncDefect => "sync_defect",
            Check::Proportionality => "proportionality",
            Check::Stabilization => "stabilization",
            Check::LinfDecay => "linf_decay",
            Check::RatioTrend => "ratio_trend",
            Check::Harnack => "harnack",
            Check::BarenblattOrder => "barenblatt_order",
            Check::TravellingOrder => "travelling_order",
            Check::Entropy => "entropy",
            Check::EntropyConvergence => "entropy_convergence",
        }
    }

    pub fn parse(s: &str) -> Option<Check> {
        Check::ALL.iter().copied().find(|c| c.name() == s)
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Shape {
    PmeBump,
    Barenblatt,
    TravellingWave,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Bump {
    /// 0-based species index.
    pub species: usize,
    pub shape: Shape,
    pub center: Vec<f64>,
    pub radius: f64,
    pub amplitude: f64,
    /// Species mass of a Barenblatt bump.
    pub mass: Option<f64>,
    pub orientation: Orientation,
    pub direction: Vec<f64>,
}

/// `[sync]`: time at which the synchronization defect is judged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyncSpec {
    pub time: f64,
    pub tolerance: f64,
}

impl Default for SyncSpec {
    fn default() -> Self {
        Self { time: 1.0, tolerance: 0.05 }
    }
}

/// `[stabilization]`: the two times compared (the last defaults to `t_end`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StabilizationSpec {
    pub t_first: f64,
    pub t_last: Option<f64>,
    pub factor: f64,
}

impl Default for StabilizationSpec {
    fn default() -> Self {
        Self { t_first: 1.0, t_last: None, factor: 0.5 }
    }
}

/// `[harnack]`: sweep times, radii as multiples of `sqrt(T)`, recorded baseline of the
/// maximal quotient and the lower bound `mu0` on mass ratios.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HarnackSpec {
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
    pub baseline: Option<f64>,
    pub mu0: Option<f64>,
}

impl Default for HarnackSpec {
    fn default() -> Self {
        Self {
            times: spme_core::diagnostics::HARNACK_TIMES.to_vec(),
            radii: spme_core::diagnostics::HARNACK_RADII.to_vec(),
            baseline: None,
            mu0: None,
        }
    }
}

/// `[entropy]`: rescaled-flow trace length (in tau, from `ln t0`), the refinement ladder
/// for the dissipation identity and the equilibrium hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EntropySpec {
    pub tau_span: f64,
    pub stride: usize,
    pub levels: usize,
    /// Record stride of the coarsest ladder level; multiplied by 4 per level.
    pub consistency_stride: usize,
    pub window: [f64; 2],
    pub equilibrium_cells: usize,
    pub equilibrium_span: f64,
}

impl Default for EntropySpec {
    fn default() -> Self {
        Self {
            tau_span: 6.0,
            stride: 2000,
            levels: 3,
            consistency_stride: 25,
            window: [0.5, 2.0],
            equilibrium_cells: 2048,
            equilibrium_span: 1.0,
        }
    }
}

/// `[refinement]`: number of levels of the convergence checks (coarsest = scenario grid).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RefinementSpec {
    pub levels: usize,
}

impl Default for RefinementSpec {
    fn default() -> Self {
        Self { levels: 3 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub source: Option<PathBuf>,
    pub m: f64,
    pub k: usize,
    pub n: usize,
    pub grid: Grid,
    pub bumps: Vec<Bump>,
    pub solver: SolverConfig,
    pub t0: f64,
    pub horizon: Horizon,
    pub stride: usize,
    pub sample_times: Vec<f64>,
    pub threshold: Option<f64>,
    pub checks: Vec<Check>,
    pub output: Option<String>,
    pub sync: SyncSpec,
    pub stabilization: StabilizationSpec,
    pub harnack: HarnackSpec,
    pub entropy: EntropySpec,
    pub refinement: RefinementSpec,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    cells: Option<Spanned<Vec<i64>>>,
    lower: Option<Spanned<Vec<f64>>>,
    upper: Option<Spanned<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    epsilon: Option<f64>,
    cap: Option<f64>,
    cfl_safety: Option<f64>,
    clamp_negative: Option<bool>,
    max_dt: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBump {
    species: Spanned<i64>,
    shape: Option<Spanned<String>>,
    center: Option<Spanned<Vec<f64>>>,
    radius: Option<Spanned<f64>>,
    amplitude: Option<Spanned<f64>>,
    mass: Option<Spanned<f64>>,
    orientation: Option<Spanned<String>>,
    direction: Option<Spanned<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: Option<String>,
    m: Spanned<f64>,
    k: Spanned<i64>,
    n: Option<Spanned<i64>>,
    t0: Option<Spanned<f64>>,
    t_end: Option<Spanned<f64>>,
    steps: Option<Spanned<i64>>,
    stride: Option<Spanned<i64>>,
    sample_times: Option<Spanned<Vec<f64>>>,
    threshold: Option<Spanned<f64>>,
    checks: Option<Spanned<Vec<String>>>,
    output: Option<String>,
    grid: Option<RawGrid>,
    solver: Option<Spanned<RawSolver>>,
    #[serde(default)]
    bump: Vec<Spanned<RawBump>>,
    sync: Option<SyncSpec>,
    stabilization: Option<StabilizationSpec>,
    harnack: Option<HarnackSpec>,
    entropy: Option<EntropySpec>,
    refinement: Option<RefinementSpec>,
}

/// Maps byte offsets to 1-based line numbers.
struct Lines<'a>(&'a str);

impl Lines<'_> {
    fn at(&self, span: Range<usize>) -> usize {
        self.0[..span.start.min(self.0.len())].matches('\n').count() + 1
    }
}

struct Problems<'a> {
    lines: Lines<'a>,
    list: Vec<String>,
}

impl Problems<'_> {
    fn at(&mut self, span: Option<Range<usize>>, key: &str, msg: impl fmt::Display) {
        match span {
            Some(s) => self.list.push(format!("line {}: `{key}`: {msg}", self.lines.at(s))),
            None => self.list.push(format!("`{key}`: {msg}")),
        }
    }
}

pub fn parse_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ScenarioError::Io { path: path.display().to_string(), source })?;
    let mut s = parse_scenario_str(&text, &path.display().to_string())?;
    if s.name.is_empty() {
        s.name = path.file_stem().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    }
    s.source = Some(path.to_path_buf());
    Ok(s)
}

/// Parse and validate scenario text; every constraint violation is reported.
pub fn parse_scenario_str(text: &str, origin: &str) -> Result<Scenario, ScenarioError> {
    let invalid = |problems| ScenarioError::Invalid { path: origin.to_string(), problems };
    let raw: RawScenario = match toml::from_str(text) {
        Ok(r) => r,
        Err(e) => {
            let msg = e.message().trim().to_string();
            let p = match e.span() {
                Some(span) => format!("line {}: {msg}", Lines(text).at(span)),
                None => msg,
            };
            return Err(invalid(vec![p]));
        }
    };
    let mut pr = Problems { lines: Lines(text), list: Vec::new() };

    let m = *raw.m.get_ref();
    if !(m > 1.0 && m.is_finite()) {
        pr.at(Some(raw.m.span()), "m", format!("m must satisfy m > 1 (slow diffusion), got {m}"));
    }
    let k = *raw.k.get_ref();
    if k < 1 {
        pr.at(Some(raw.k.span()), "k", format!("species count must be >= 1, got {k}"));
    }
    let k = k.max(1) as usize;
    let n = raw.n.as_ref().map_or(1, |v| *v.get_ref());
    if !(n == 1 || n == 2) {
        pr.at(raw.n.as_ref().map(|v| v.span()), "n", format!("dimension must be 1 or 2, got {n}"));
    }
    let n = n.clamp(1, 2) as usize;
    let t0 = raw.t0.as_ref().map_or(0.0, |v| *v.get_ref());
    if !(t0 >= 0.0 && t0.is_finite()) {
        pr.at(raw.t0.as_ref().map(|v| v.span()), "t0", format!("start time must be >= 0, got {t0}"));
    }
    let horizon = match (&raw.t_end, &raw.steps) {
        (Some(t), None) => {
            let te = *t.get_ref();
            if !(te > t0 && te.is_finite()) {
                pr.at(Some(t.span()), "t_end", format!("end time must exceed t0 = {t0}, got {te}"));
            }
            Horizon::Time(te)
        }
        (None, Some(s)) => {
            let st = *s.get_ref();
            if st < 1 {
                pr.at(Some(s.span()), "steps", format!("step count must be >= 1, got {st}"));
            }
            Horizon::Steps(st.max(1) as usize)
        }
        (Some(t), Some(_)) => {
            pr.at(Some(t.span()), "t_end", "give either `t_end` or `steps`, not both");
            Horizon::Time(*t.get_ref())
        }
        (None, None) => {
            pr.at(None, "t_end", "missing key: one of `t_end` or `steps` is required");
            Horizon::Time(t0 + 1.0)
        }
    };
    let stride = raw.stride.as_ref().map_or(DEFAULT_STRIDE as i64, |v| *v.get_ref());
    if stride < 1 {
        pr.at(raw.stride.as_ref().map(|v| v.span()), "stride", format!("must be >= 1, got {stride}"));
    }
    let mut sample_times = raw.sample_times.as_ref().map(|v| v.get_ref().clone()).unwrap_or_default();
    if let Some(st) = &raw.sample_times {
        if let Some(bad) = st.get_ref().iter().find(|&&s| !(s > t0 && s.is_finite())) {
            pr.at(Some(st.span()), "sample_times", format!("sample times must exceed t0, got {bad}"));
        }
    }
    sample_times.sort_by(f64::total_cmp);
    sample_times.dedup();
    let threshold = raw.threshold.as_ref().map(|v| *v.get_ref());
    if let (Some(t), Some(span)) = (threshold, raw.threshold.as_ref().map(|v| v.span())) {
        if !(t >= 0.0) {
            pr.at(Some(span), "threshold", format!("must be >= 0, got {t}"));
        }
    }

    let mut checks = Vec::new();
    match &raw.checks {
        None => checks.push(Check::Mass),
        Some(list) => {
            for name in list.get_ref() {
                match Check::parse(name) {
                    Some(c) if !checks.contains(&c) => checks.push(c),
                    Some(_) => {}
                    None => {
                        let known: Vec<&str> = Check::ALL.iter().map(|c| c.name()).collect();
                        pr.at(
                            Some(list.span()),
                            "checks",
                            format!("unknown check `{name}` (known: {})", known.join(", ")),
                        );
                    }
                }
            }
        }
    }

    let mut solver = SolverConfig { m, ..SolverConfig::default() };
    if let Some(rs) = &raw.solver {
        let r = rs.get_ref();
        solver.epsilon = r.epsilon.unwrap_or(solver.epsilon);
        solver.cap = r.cap;
        solver.cfl_safety = r.cfl_safety.unwrap_or(solver.cfl_safety);
        solver.clamp_negative = r.clamp_negative.unwrap_or(true);
        solver.max_dt = r.max_dt;
        if m > 1.0 {
            if let Err(e) = solver.validate() {
                pr.at(Some(rs.span()), "solver", e);
            }
        }
    }

    // bumps
    let mut bumps = Vec::new();
    if raw.bump.is_empty() {
        pr.at(None, "bump", "missing key: at least one `[[bump]]` is required");
    }
    for (j, sb) in raw.bump.iter().enumerate() {
        let b = sb.get_ref();
        let key = |f: &str| format!("bump[{}].{f}", j + 1);
        let species = *b.species.get_ref();
        if species < 1 || species as usize > k {
            pr.at(Some(b.species.span()), &key("species"), format!("species must lie in 1..={k}, got {species}"));
        }
        let shape = match b.shape.as_ref().map(|s| s.get_ref().as_str()) {
            None | Some("pme-bump") => Shape::PmeBump,
            Some("barenblatt") => Shape::Barenblatt,
            Some("travelling-wave") => Shape::TravellingWave,
            Some(other) => {
                pr.at(
                    b.shape.as_ref().map(|s| s.span()),
                    &key("shape"),
                    format!("unknown shape `{other}` (pme-bump, barenblatt, travelling-wave)"),
                );
                Shape::PmeBump
            }
        };
        let center = b.center.as_ref().map(|c| c.get_ref().clone()).unwrap_or_else(|| vec![0.0; n]);
        if center.len() != n {
            pr.at(
                b.center.as_ref().map(|c| c.span()),
                &key("center"),
                format!("needs {n} coordinate(s), got {}", center.len()),
            );
        }
        let radius = b.radius.as_ref().map_or(0.0, |r| *r.get_ref());
        if shape == Shape::PmeBump && !(radius > 0.0) {
            pr.at(
                b.radius.as_ref().map(|r| r.span()).or(Some(sb.span())),
                &key("radius"),
                format!("pme-bump radius must be > 0, got {radius}"),
            );
        }
        let amplitude = b.amplitude.as_ref().map_or(1.0, |a| *a.get_ref());
        if !(amplitude > 0.0 && amplitude.is_finite()) {
            pr.at(b.amplitude.as_ref().map(|a| a.span()), &key("amplitude"), format!("must be > 0, got {amplitude}"));
        }
        let mass = b.mass.as_ref().map(|v| *v.get_ref());
        if shape == Shape::Barenblatt {
            match mass {
                Some(v) if v > 0.0 => {}
                _ => pr.at(
                    b.mass.as_ref().map(|v| v.span()).or(Some(sb.span())),
                    &key("mass"),
                    "barenblatt bumps need a positive `mass`",
                ),
            }
            if !(t0 > 0.0) {
                pr.at(Some(sb.span()), &key("shape"), "barenblatt bumps are sampled at t0, which must be > 0");
            }
        }
        let orientation = match b.orientation.as_ref().map(|s| s.get_ref().as_str()) {
            None | Some("forward") => Orientation::Forward,
            Some("backward") => Orientation::Backward,
            Some(other) => {
                pr.at(
                    b.orientation.as_ref().map(|s| s.span()),
                    &key("orientation"),
                    format!("unknown orientation `{other}` (forward, backward)"),
                );
                Orientation::Forward
            }
        };
        let direction = b.direction.as_ref().map(|d| d.get_ref().clone()).unwrap_or_else(|| {
            let mut e = vec![0.0; n];
            e[0] = 1.0;
            e
        });
        if direction.len() != n || direction.iter().all(|&v| v == 0.0) {
            pr.at(
                b.direction.as_ref().map(|d| d.span()),
                &key("direction"),
                "needs a nonzero vector of the grid dimension",
            );
        }
        bumps.push(Bump {
            species: (species.max(1) as usize - 1).min(k - 1),
            shape,
            center,
            radius,
            amplitude,
            mass,
            orientation,
            direction,
        });
    }
    let n_tw = bumps.iter().filter(|b| b.shape == Shape::TravellingWave).count();
    if n_tw > 0 {
        if n_tw != bumps.len() || n_tw != k || (0..k).any(|s| !bumps.iter().any(|b| b.species == s)) {
            pr.at(
                None,
                "bump",
                "travelling-wave data needs exactly one travelling-wave bump per species and no other bumps",
            );
        } else if bumps.iter().any(|b| b.orientation != bumps[0].orientation) {
            pr.at(None, "bump", "all travelling-wave bumps must share one orientation");
        } else if bumps.iter().any(|b| b.direction != bumps[0].direction) {
            pr.at(None, "bump", "all travelling-wave bumps must share one direction");
        }
    }
    let barenblatt: Vec<&Bump> = bumps.iter().filter(|b| b.shape == Shape::Barenblatt).collect();
    if barenblatt.iter().any(|b| b.center != barenblatt[0].center) {
        pr.at(None, "bump", "barenblatt bumps form one joint profile and must share a center");
    }
    {
        let mut seen = vec![false; k];
        for b in &barenblatt {
            if std::mem::replace(&mut seen[b.species], true) {
                pr.at(None, "bump", format!("species {} has more than one barenblatt bump", b.species + 1));
            }
        }
    }

    let sync = raw.sync.unwrap_or_default();
    let stabilization = raw.stabilization.unwrap_or_default();
    let harnack = raw.harnack.unwrap_or_default();
    let entropy = raw.entropy.unwrap_or_default();
    let refinement = raw.refinement.unwrap_or_default();

    // grid
    let cells: Vec<usize> = match raw.grid.as_ref().and_then(|g| g.cells.as_ref()) {
        Some(c) => {
            if c.get_ref().len() != n || c.get_ref().iter().any(|&v| v < 4) {
                pr.at(Some(c.span()), "grid.cells", format!("needs {n} entries, each >= 4"));
            }
            let mut v: Vec<usize> = c.get_ref().iter().map(|&x| x.max(4) as usize).collect();
            v.resize(n, 4);
            v
        }
        None if n == 1 => vec![DEFAULT_CELLS_1D],
        None => vec![DEFAULT_CELLS_2D; 2],
    };
    let lower = raw.grid.as_ref().and_then(|g| g.lower.as_ref());
    let upper = raw.grid.as_ref().and_then(|g| g.upper.as_ref());
    let valid_so_far = pr.list.is_empty();
    let bounds: Option<(Vec<f64>, Vec<f64>)> = match (lower, upper) {
        (Some(lo), Some(hi)) => {
            let (l, u) = (lo.get_ref().clone(), hi.get_ref().clone());
            if l.len() != n || u.len() != n || l.iter().zip(&u).any(|(a, b)| !(a < b)) {
                pr.at(Some(lo.span()), "grid.lower", format!("`lower`/`upper` need {n} entries with lower < upper"));
                None
            } else {
                Some((l, u))
            }
        }
        (None, None) => {
            if !valid_so_far {
                None
            } else if n_tw > 0 || matches!(horizon, Horizon::Steps(_)) {
                pr.at(
                    None,
                    "grid.lower",
                    "explicit `lower`/`upper` bounds are required for travelling-wave data or a `steps` horizon",
                );
                None
            } else {
                let half = auto_half_width(&bumps, m, n, horizon_time(horizon));
                Some((vec![-half; n], vec![half; n]))
            }
        }
        (Some(s), None) | (None, Some(s)) => {
            pr.at(Some(s.span()), "grid", "give both `lower` and `upper` or neither");
            None
        }
    };
    let grid = bounds.and_then(|(lo, hi)| match Grid::from_bounds(&cells, &lo, &hi) {
        Ok(g) => Some(g),
        Err(e) => {
            pr.at(None, "grid", e);
            None
        }
    });

    // bumps inside the grid
    if let Some(g) = &grid {
        let lo = g.origin().to_vec();
        let hi = g.upper();
        for (j, (b, sb)) in bumps.iter().zip(&raw.bump).enumerate() {
            if b.center.len() != n {
                continue;
            }
            let key = format!("bump[{}].center", j + 1);
            let span = sb.get_ref().center.as_ref().map(|c| c.span()).or(Some(sb.span()));
            let extent = match b.shape {
                Shape::PmeBump => b.radius,
                _ => 0.0,
            };
            if b.center.iter().enumerate().any(|(a, &c)| c - extent < lo[a] || c + extent > hi[a]) {
                pr.at(
                    span.clone(),
                    &key,
                    format!("bump at {:?} with radius {extent} does not fit in the grid {:?}..{:?}", b.center, lo, hi),
                );
            }
            if b.shape == Shape::Barenblatt && t0 > 0.0 && m > 1.0 {
                if let Some(r) = joint_barenblatt(&bumps, m, n).map(|p| p.support_radius(t0)) {
                    if b.center.iter().enumerate().any(|(a, &c)| c - r < lo[a] || c + r > hi[a]) {
                        pr.at(
                            span.clone(),
                            &key,
                            format!("barenblatt support (radius {r:.4} at t0) does not fit in the grid"),
                        );
                    }
                }
            }
            if b.shape == Shape::TravellingWave && m > 1.0 {
                if let Ok(tw) = travelling_wave(&bumps, m) {
                    let te = horizon_time(horizon);
                    for t in [t0, te] {
                        let front = tw.front(t) * tw.direction()[0];
                        if !(front > lo[0] && front < hi[0]) {
                            pr.at(
                                span.clone(),
                                &key,
                                format!("travelling front at x = {front:.4} (t = {t}) lies outside the grid"),
                            );
                        }
                    }
                }
            }
        }
    }

    // check requirements
    for &c in &checks {
        let need = |pr: &mut Problems, ok: bool, why: &str| {
            if !ok {
                pr.at(raw.checks.as_ref().map(|v| v.span()), "checks", format!("`{c}` {why}"));
            }
        };
        match c {
            Check::WaitingTime | Check::SyncDefect | Check::RatioTrend => {
                need(&mut pr, k >= 2, "needs at least two species")
            }
            Check::Proportionality => need(&mut pr, k >= 2, "needs at least two species"),
            Check::BarenblattOrder => need(
                &mut pr,
                !barenblatt.is_empty() && barenblatt.len() == bumps.len() && matches!(horizon, Horizon::Time(_)),
                "needs barenblatt data only and a `t_end` horizon",
            ),
            Check::TravellingOrder => need(&mut pr, n_tw > 0 && n == 1, "needs one-dimensional travelling-wave data"),
            Check::Entropy | Check::EntropyConvergence => need(&mut pr, t0 > 0.0, "needs t0 > 0 (tau = ln t0)"),
            Check::SupportMonotone | Check::Subsolution => {
                need(&mut pr, n_tw == 0, "is not defined for boundary-driven runs")
            }
            Check::Stabilization | Check::LinfDecay => {
                let t_last = stabilization.t_last.unwrap_or(horizon_time(horizon));
                need(
                    &mut pr,
                    matches!(horizon, Horizon::Time(_)) && stabilization.t_first > t0 && t_last > stabilization.t_first,
                    "needs a `t_end` horizon and t0 < stabilization.t_first < t_last",
                )
            }
            _ => {}
        }
    }
    if checks.contains(&Check::SyncDefect) && !(sync.time > t0) {
        pr.at(None, "sync.time", format!("must exceed t0, got {}", sync.time));
    }
    if checks.contains(&Check::Harnack) {
        if harnack.times.is_empty() || harnack.times.iter().any(|&t| !(t > 0.0)) {
            pr.at(None, "harnack.times", "needs positive times");
        }
        if harnack.radii.iter().any(|&c| !(c > 1.0)) {
            pr.at(None, "harnack.radii", "radii are multiples of sqrt(T) and must exceed 1");
        }
    }
    if checks.contains(&Check::Entropy) && (entropy.levels < 2 || !(entropy.tau_span > 0.0)) {
        pr.at(None, "entropy", "needs levels >= 2 and tau_span > 0");
    }
    if refinement.levels < 2 && (checks.contains(&Check::BarenblattOrder) || checks.contains(&Check::TravellingOrder)) {
        pr.at(None, "refinement.levels", "needs at least 2 levels");
    }

    if !pr.list.is_empty() {
        return Err(invalid(pr.list));
    }
    let grid = grid.expect("validated above");
    let scenario = Scenario {
        name: raw.name.unwrap_or_default(),
        source: None,
        m,
        k,
        n,
        grid,
        bumps,
        solver,
        t0,
        horizon,
        stride: stride as usize,
        sample_times,
        threshold,
        checks,
        output: raw.output,
        sync,
        stabilization,
        harnack,
        entropy,
        refinement,
    };
    if let Some(mu0) = scenario.harnack.mu0 {
        let mu = scenario.mu0();
        if !(mu >= mu0) {
            return Err(invalid(vec![format!(
                "`harnack.mu0`: mass ratio min/max = {mu:.4} is below the required {mu0}"
            )]));
        }
    }
    Ok(scenario)
}

fn horizon_time(h: Horizon) -> f64 {
    match h {
        Horizon::Time(t) => t,
        Horizon::Steps(_) => f64::NAN,
    }
}

/// Mass of `(1 - |y|^2)_+^{1/(m-1)}` over the unit ball.
fn unit_bump_mass(m: f64, n: usize) -> f64 {
    let a3 = coefficients(m, n).map(|e| e.a3).unwrap_or(1.0);
    profile_mass(1.0, m, n).unwrap_or(0.0) * a3.powf(n as f64 / 2.0)
}

/// Closed-form mass of one bump.
pub fn bump_mass(b: &Bump, m: f64, n: usize) -> f64 {
    match b.shape {
        Shape::PmeBump => b.amplitude * b.radius.powi(n as i32) * unit_bump_mass(m, n),
        Shape::Barenblatt => b.mass.unwrap_or(0.0),
        Shape::TravellingWave => f64::INFINITY,
    }
}

fn joint_barenblatt(bumps: &[Bump], m: f64, n: usize) -> Option<BarenblattProfile> {
    let masses: Vec<f64> = bumps.iter().filter(|b| b.shape == Shape::Barenblatt).filter_map(|b| b.mass).collect();
    if masses.is_empty() {
        return None;
    }
    BarenblattProfile::for_masses(&masses, m, n).ok()
}

/// Half-width that keeps the data plus the spread of a Barenblatt profile of the total
/// mass `|M|` by `t_end` inside the box with [`DOMAIN_PADDING`] margin.
fn auto_half_width(bumps: &[Bump], m: f64, n: usize, t_end: f64) -> f64 {
    let mut per_species = std::collections::BTreeMap::<usize, f64>::new();
    let mut reach = 0.0_f64;
    for b in bumps {
        *per_species.entry(b.species).or_default() += bump_mass(b, m, n);
        let extent = if b.shape == Shape::PmeBump { b.radius } else { 0.0 };
        reach = reach.max(b.center.iter().fold(0.0_f64, |a, c| a.max(c.abs())) + extent);
    }
    let masses: Vec<f64> = per_species.values().copied().filter(|&v| v > 0.0).collect();
    let spread = euclidean_mass(&masses)
        .ok()
        .and_then(|total| BarenblattProfile::new(total, m, n).ok())
        .map_or(0.0, |p| p.support_radius(t_end));
    DOMAIN_PADDING * (reach + spread)
}

fn travelling_wave(bumps: &[Bump], m: f64) -> Result<TravellingWave, spme_core::travelling::TravellingError> {
    let mut sorted: Vec<&Bump> = bumps.iter().collect();
    sorted.sort_by_key(|b| b.species);
    let coeffs: Vec<f64> = sorted.iter().map(|b| b.amplitude).collect();
    let orientations: Vec<Orientation> = sorted.iter().map(|b| b.orientation).collect();
    TravellingWave::from_species(&sorted[0].direction, &coeffs, &orientations, m)
}

impl Scenario {
    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn t_end(&self) -> Option<f64> {
        match self.horizon {
            Horizon::Time(t) => Some(t),
            Horizon::Steps(_) => None,
        }
    }

    pub fn is_travelling(&self) -> bool {
        self.bumps.iter().any(|b| b.shape == Shape::TravellingWave)
    }

    pub fn is_barenblatt(&self) -> bool {
        !self.bumps.is_empty() && self.bumps.iter().all(|b| b.shape == Shape::Barenblatt)
    }

    pub fn travelling_wave(&self) -> Option<TravellingWave> {
        self.is_travelling().then(|| travelling_wave(&self.bumps, self.m).ok()).flatten()
    }

    /// Joint Barenblatt profile of the barenblatt bumps and its centre.
    pub fn barenblatt(&self) -> Option<(BarenblattProfile, Vec<f64>)> {
        let p = joint_barenblatt(&self.bumps, self.m, self.n)?;
        let center = self.bumps.iter().find(|b| b.shape == Shape::Barenblatt)?.center.clone();
        Some((p, center))
    }

    /// Closed-form species masses of the data (infinite for travelling waves).
    pub fn masses(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.k];
        for b in &self.bumps {
            out[b.species] += bump_mass(b, self.m, self.n);
        }
        out
    }

    /// `min_i M_i / max_i M_i`.
    pub fn mu0(&self) -> f64 {
        let m = self.masses();
        let max = m.iter().copied().fold(0.0, f64::max);
        let min = m.iter().copied().fold(f64::INFINITY, f64::min);
        if max > 0.0 {
            min / max
        } else {
            0.0
        }
    }

    /// Value of species `i` at `x` and time `t` for the configured data.
    pub fn data_value(&self, i: usize, x: &[f64], t: f64) -> f64 {
        let barenblatt = self.barenblatt();
        let mut v = 0.0;
        for b in self.bumps.iter().filter(|b| b.species == i) {
            match b.shape {
                Shape::PmeBump => {
                    let r2: f64 =
                        x.iter().zip(&b.center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>() / (b.radius * b.radius);
                    if r2 < 1.0 {
                        v += b.amplitude * (1.0 - r2).powf(1.0 / (self.m - 1.0));
                    }
                }
                Shape::Barenblatt => {
                    if let Some((p, c)) = &barenblatt {
                        let y: Vec<f64> = x.iter().zip(c).map(|(a, c)| a - c).collect();
                        v += b.mass.unwrap_or(0.0) / p.mass * p.evaluate(&y, t).unwrap_or(0.0);
                    }
                }
                Shape::TravellingWave => {
                    if let Some(tw) = self.travelling_wave() {
                        v += tw.evaluate(i, x, t);
                    }
                }
            }
        }
        v
    }

    /// Initial state on `grid` (the scenario grid or a refinement of it).
    pub fn initial_state_on(&self, grid: &Grid) -> Result<SpeciesState, spme_core::StateError> {
        let tw = self.travelling_wave();
        let barenblatt = self.barenblatt();
        let per_species: Vec<Vec<&Bump>> =
            (0..self.k).map(|i| self.bumps.iter().filter(|b| b.species == i).collect()).collect();
        let t0 = self.t0;
        let m = self.m;
        SpeciesState::from_fn(grid.clone(), self.k, t0, |i, x| {
            let mut v = 0.0;
            for b in &per_species[i] {
                v += match b.shape {
                    Shape::PmeBump => {
                        let r2: f64 = x.iter().zip(&b.center).map(|(a, c)| (a - c) * (a - c)).sum::<f64>()
                            / (b.radius * b.radius);
                        if r2 < 1.0 {
                            b.amplitude * (1.0 - r2).powf(1.0 / (m - 1.0))
                        } else {
                            0.0
                        }
                    }
                    Shape::Barenblatt => {
                        let (p, c) = barenblatt.as_ref().expect("validated");
                        let y = [x[0] - c[0], if x.len() > 1 { x[1] - c[1] } else { 0.0 }];
                        b.mass.unwrap_or(0.0) / p.mass * p.evaluate(&y[..x.len()], t0).unwrap_or(0.0)
                    }
                    Shape::TravellingWave => tw.as_ref().map_or(0.0, |w| w.evaluate(i, x, t0)),
                };
            }
            v
        })
    }

    pub fn initial_state(&self) -> Result<SpeciesState, spme_core::StateError> {
        self.initial_state_on(&self.grid)
    }

    /// Output directory name.
    pub fn output_name(&self) -> &str {
        self.output.as_deref().unwrap_or(&self.name)
    }
}
