//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! The shipped scenarios are run once at their default resolution; the criteria read
//! the verdicts and re-check the measured values against the thresholds below.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use spme_cli::experiment::{CheckOutcome, Verdict};
use spme_cli::{run_file, scenario_files};
use spme_core::barenblatt::BarenblattProfile;
use spme_core::selfsim::{entropy, RescaledState};
use spme_core::travelling::{epsilon_scale, ode_residual, speed_from_coeffs, Orientation, TravellingWave};
use spme_core::Grid;

struct Criterion {
    id: usize,
    name: &'static str,
    passed: bool,
    detail: String,
}

/// Adaptive Simpson on [a, b].
#[allow(clippy::too_many_arguments)]
fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn rec(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    rec(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), tol, 50)
}

fn check<'a>(
    runs: &'a BTreeMap<String, (Verdict, f64)>,
    scenario: &str,
    name: &str,
) -> Result<&'a CheckOutcome, String> {
    let (v, _) = runs.get(scenario).ok_or_else(|| format!("scenario `{scenario}` missing"))?;
    v.checks.get(name).ok_or_else(|| format!("`{scenario}` has no `{name}` check ({:?})", v.status))
}

fn calibration() -> (bool, String) {
    let start = Instant::now();
    let mut worst = 0.0_f64;
    for (m, n) in [(2.0, 1), (3.0, 1), (2.0, 2)] {
        for mass in [0.5, 1.0, 3.0] {
            let p = BarenblattProfile::new(mass, m, n).unwrap();
            let r = p.support_radius(1.0);
            let q = if n == 1 {
                2.0 * simpson(&|x| p.evaluate(&[x], 1.0).unwrap(), 0.0, r, 1e-13)
            } else {
                2.0 * std::f64::consts::PI * simpson(&|x| x * p.evaluate(&[x, 0.0], 1.0).unwrap(), 0.0, r, 1e-13)
            };
            worst = worst.max((q / mass - 1.0).abs());
        }
    }
    let c1 = BarenblattProfile::new(1.0, 2.0, 1).unwrap().c_m;
    // M = (8/sqrt 3) C^{3/2} for m = 2, n = 1
    let c_exact = (3.0_f64.sqrt() / 8.0).powf(2.0 / 3.0);
    let secs = start.elapsed().as_secs_f64();
    let ok = worst <= 1e-6 && (0.3600..=0.3611).contains(&c1) && (c1 - c_exact).abs() <= 1e-6 && secs < 1.0;
    (ok, format!("max relative mass error {worst:.2e}, C_1 = {c1:.6} (closed form {c_exact:.6}), {secs:.3} s"))
}

fn travelling_algebra() -> (bool, String) {
    let speed = speed_from_coeffs(&[1.0, 1.0], 2.0).unwrap();
    let speed_err = (speed - 2.0_f64.sqrt()).abs();

    let tw = TravellingWave::new(&[1.0], &[1.0, 2.0], 2.0, Orientation::Forward).unwrap();
    let grid = Grid::from_bounds(&[400], &[-1.0], &[1.0]).unwrap();
    let t = 0.2;
    let state = tw.sample(&grid, t).unwrap();
    let mut fix_err = 0.0_f64;
    for eps in [0.5, 2.0, 0.1] {
        let scaled = epsilon_scale(&state, eps, 2.0).unwrap();
        let exact = tw.sample(scaled.grid(), scaled.time()).unwrap();
        for (a, b) in scaled.fields().iter().zip(exact.fields()) {
            for (x, y) in a.iter().zip(b) {
                fix_err = fix_err.max((x - y).abs() / exact.max_norm());
            }
        }
    }

    // dyadic samples and spacing keep the centred differences free of rounding
    let samples: Vec<f64> = (0..=1024).map(|j| -1.0 + j as f64 / 512.0).collect();
    let res = ode_residual(&tw, &samples, 1.0 / 128.0);
    let ok = speed_err <= 1e-14 && fix_err <= 1e-13 && res.max <= 1e-12 && res.used > 0;
    (
        ok,
        format!(
            "|speed - sqrt2| = {speed_err:.1e}, epsilon-scaling defect {fix_err:.1e}, ODE residual {:.1e} over {} samples",
            res.max, res.used
        ),
    )
}

fn main() -> ExitCode {
    let suite = Instant::now();
    let mut lines = Vec::new();

    let (ok, detail) = calibration();
    lines.push(Criterion { id: 1, name: "Barenblatt calibration", passed: ok, detail });

    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let out = tempfile::tempdir().expect("temp dir");
    let mut runs: BTreeMap<String, (Verdict, f64)> = BTreeMap::new();
    let mut broken = Vec::new();
    for file in scenario_files(&dir).expect("scenario dir") {
        let start = Instant::now();
        let o = run_file(&file, out.path());
        let secs = start.elapsed().as_secs_f64();
        println!("  ran {:<18} {:>6.1} s  {}", file.file_stem().unwrap().to_string_lossy(), secs, o.message);
        match o.verdict {
            Some(v) => {
                runs.insert(v.scenario.clone(), (v, secs));
            }
            None => broken.push(o.message),
        }
    }

    // 2. mass on every scenario, runtime budget
    {
        let mut worst = 0.0_f64;
        let mut slowest = 0.0_f64;
        let mut problems = broken.clone();
        for (name, (v, secs)) in &runs {
            slowest = slowest.max(*secs);
            match v.checks.get("mass") {
                Some(c) if c.value <= 1e-12 => worst = worst.max(c.value),
                Some(c) => problems.push(format!("{name}: drift {:e}", c.value)),
                None => problems.push(format!("{name}: no mass check ({:?})", v.status)),
            }
            if *secs >= 60.0 {
                problems.push(format!("{name}: {secs:.1} s"));
            }
        }
        lines.push(Criterion {
            id: 2,
            name: "Mass conservation",
            passed: problems.is_empty() && !runs.is_empty(),
            detail: format!(
                "{} scenarios, max drift {worst:.1e}, slowest {slowest:.1} s{}",
                runs.len(),
                if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
            ),
        });
    }

    // 3. refinement orders
    {
        let r = (|| {
            let b = check(&runs, "barenblatt", "barenblatt_order")?;
            let t = check(&runs, "travelling", "travelling_order")?;
            let conclusive = |c: &CheckOutcome| c.detail.get("inconclusive") == Some(&serde_json::Value::Bool(false));
            Ok::<_, String>((
                b.value >= 0.8 && t.value >= 0.8 && conclusive(b) && conclusive(t),
                format!("Barenblatt L1 order {:.3}, travelling-wave L1 order {:.3}", b.value, t.value),
            ))
        })();
        let (passed, detail) = r.unwrap_or_else(|e| (false, e));
        lines.push(Criterion { id: 3, name: "Oracle convergence", passed, detail });
    }

    // 4. proportionality
    {
        let r = check(&runs, "proportionality", "proportionality").map(|c| {
            let steps = runs["proportionality"].0.steps;
            (c.value <= 1e-12 && steps >= 10_000, format!("max ratio defect {:.2e} over {steps} steps", c.value))
        });
        let (passed, detail) = r.unwrap_or_else(|e| (false, e));
        lines.push(Criterion { id: 4, name: "Proportionality", passed, detail });
    }

    // 5. isolation
    {
        let r = check(&runs, "isolation", "waiting_time").map(|c| {
            let contact = c.detail.get("first_contact").cloned().unwrap_or(serde_json::Value::Null);
            let horizon = runs["isolation"].0.final_time;
            (
                c.passed && contact.is_null() && c.value > 0.0,
                format!("supports disjoint up to t = {horizon}, final gap {:.4}", c.value),
            )
        });
        let (passed, detail) = r.unwrap_or_else(|e| (false, e));
        lines.push(Criterion { id: 5, name: "Isolation", passed, detail });
    }

    // 6. synchronization
    {
        let r = check(&runs, "synchronization", "sync_defect").map(|c| {
            let tail: Vec<f64> =
                c.detail.get("last_samples").and_then(|v| serde_json::from_value(v.clone()).ok()).unwrap_or_default();
            let non_increasing = tail.len() == 3 && tail.windows(2).all(|w| w[1] <= w[0]);
            (c.value < 0.05 && non_increasing, format!("defect {:.4} at t = 1, last samples {tail:?}", c.value))
        });
        let (passed, detail) = r.unwrap_or_else(|e| (false, e));
        lines.push(Criterion { id: 6, name: "Synchronization", passed, detail });
    }

    // 7. stabilization, per species
    {
        let r = check(&runs, "stabilization", "stabilization").map(|c| {
            let get = |k: &str| -> Vec<f64> {
                c.detail.get(k).and_then(|v| serde_json::from_value(v.clone()).ok()).unwrap_or_default()
            };
            let (lf, ll, af, al) = (get("scaled_linf_first"), get("scaled_linf_last"), get("l1_first"), get("l1_last"));
            let ok = !lf.is_empty()
                && lf.iter().zip(&ll).all(|(a, b)| *b <= 0.5 * a)
                && af.iter().zip(&al).all(|(a, b)| *b <= 0.5 * a);
            let ratios: Vec<String> = lf
                .iter()
                .zip(&ll)
                .zip(af.iter().zip(&al))
                .map(|((a, b), (c, d))| format!("Linf {:.3}, L1 {:.3}", b / a, d / c))
                .collect();
            (ok, format!("t=100 / t=1 ratios per species: {}", ratios.join("; ")))
        });
        let (passed, detail) = r.unwrap_or_else(|e| (false, e));
        lines.push(Criterion { id: 7, name: "Stabilization", passed, detail });
    }

    // 8. entropy
    {
        let r = check(&runs, "entropy", "entropy").map(|c| {
            let get = |k: &str| c.detail.get(k).cloned().unwrap_or(serde_json::Value::Null);
            let defects: Vec<f64> = serde_json::from_value(get("consistency_defects")).unwrap_or_default();
            let eq_drift = get("equilibrium_drift").as_f64().unwrap_or(f64::NAN);
            let decreasing = defects.len() >= 2 && defects.windows(2).all(|w| w[1] < w[0]);
            // H of the unit-mass equilibrium against (16 sqrt3/5) C^{5/2}
            let grid = Grid::centered(1, 2048, 2.5).unwrap();
            let eq = RescaledState::equilibrium(grid, &[1.0], 2.0, 0.0).unwrap();
            let h = entropy(&eq, 2.0).unwrap().h;
            let c1 = (3.0_f64.sqrt() / 8.0).powf(2.0 / 3.0);
            let h_exact = 16.0 * 3.0_f64.sqrt() / 5.0 * c1.powf(2.5);
            let ok = c.value <= 1e-8 && decreasing && eq_drift <= 1e-6 && (h - 0.4327).abs() <= 1e-3 && (h - h_exact).abs() <= 1e-3;
            (
                ok,
                format!(
                    "max relative increase {:.1e}, defects {:?}, equilibrium drift {eq_drift:.1e}, H(B~) = {h:.5} (closed form {h_exact:.5})",
                    c.value,
                    defects.iter().map(|d| format!("{d:.2e}")).collect::<Vec<_>>()
                ),
            )
        });
        let (passed, detail) = r.unwrap_or_else(|e| (false, e));
        lines.push(Criterion { id: 8, name: "Entropy", passed, detail });
    }

    // 9. Cauchy–Schwarz on every scenario
    {
        let mut worst = f64::INFINITY;
        let mut problems = Vec::new();
        for (name, (v, _)) in &runs {
            match v.checks.get("cauchy_schwarz") {
                Some(c) => {
                    worst = worst.min(c.value);
                    if c.value.is_nan() || c.value < -1e-12 {
                        problems.push(format!("{name}: {:e}", c.value));
                    }
                }
                None => problems.push(format!("{name}: not checked")),
            }
        }
        lines.push(Criterion {
            id: 9,
            name: "Discrete Cauchy-Schwarz",
            passed: problems.is_empty() && !runs.is_empty(),
            detail: format!(
                "min slack {worst:.2e}{}",
                if problems.is_empty() { String::new() } else { format!("; {}", problems.join("; ")) }
            ),
        });
    }

    // 10. L-infinity decay
    {
        let r = check(&runs, "stabilization", "linf_decay").map(|c| {
            let a1 = c.detail.get("a1").and_then(|v| v.as_f64()).unwrap_or(f64::NAN);
            (c.value <= -a1 + 0.05, format!("slope {:.4} (bound {:.4})", c.value, -a1 + 0.05))
        });
        let (passed, detail) = r.unwrap_or_else(|e| (false, e));
        lines.push(Criterion { id: 10, name: "L-infinity decay", passed, detail });
    }

    // 11. Harnack
    {
        let mut parts = Vec::new();
        let mut ok = true;
        for s in ["barenblatt", "harnack"] {
            match check(&runs, s, "harnack") {
                Ok(c) => {
                    let baseline = c.detail.get("baseline").and_then(|v| v.as_f64());
                    let good = c.value.is_finite() && baseline.is_some_and(|b| c.value <= 1.1 * b);
                    ok &= good;
                    parts.push(format!("{s}: max Q {:.4} vs C* {:?}", c.value, baseline));
                }
                Err(e) => {
                    ok = false;
                    parts.push(e);
                }
            }
        }
        lines.push(Criterion { id: 11, name: "Harnack", passed: ok, detail: parts.join("; ") });
    }

    let (ok, detail) = travelling_algebra();
    lines.push(Criterion { id: 12, name: "Travelling-wave algebra", passed: ok, detail });

    lines.sort_by_key(|c| c.id);
    println!();
    for c in &lines {
        println!("criterion {:>2} {:<26} {}  {}", c.id, c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail);
    }
    let failed = lines.iter().filter(|c| !c.passed).count();
    println!(
        "\nacceptance: {} of {} criteria passed in {:.1} s",
        lines.len() - failed,
        lines.len(),
        suite.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
