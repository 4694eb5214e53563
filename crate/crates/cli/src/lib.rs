//! Scenario files, experiment runs and refinement studies.

// `!(x > 0.0)` is the intended spelling: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod experiment;
pub mod scenario;
pub mod study;

use std::path::{Path, PathBuf};

use experiment::{run_scenario, Status, Verdict};
use scenario::parse_scenario;

/// Default output root when neither `--out` nor `SPME_OUT` is given.
pub const DEFAULT_OUT: &str = "out";

/// Result of running one scenario file.
#[derive(Debug)]
pub struct FileOutcome {
    pub path: PathBuf,
    pub status: Status,
    pub verdict: Option<Verdict>,
    /// Human-readable summary (the problem list for configuration errors).
    pub message: String,
}

pub fn run_file(path: &Path, out_root: &Path) -> FileOutcome {
    let fail = |status, message: String| FileOutcome { path: path.to_path_buf(), status, verdict: None, message };
    let scenario = match parse_scenario(path) {
        Ok(s) => s,
        Err(e) => return fail(Status::ConfigError, e.to_string()),
    };
    match run_scenario(&scenario, out_root) {
        Ok(v) => FileOutcome { path: path.to_path_buf(), status: v.status, message: summary(&v), verdict: Some(v) },
        Err(e) => fail(Status::ConfigError, e.to_string()),
    }
}

fn summary(v: &Verdict) -> String {
    match v.status {
        Status::Pass => format!("PASS {} ({} checks)", v.scenario, v.checks.len()),
        Status::NumericalFailure => {
            let msg = v.failure.as_ref().map_or(String::new(), |f| f.message.clone());
            format!("NUMERICAL FAILURE {}: {msg}", v.scenario)
        }
        _ => {
            let failed: Vec<String> = v
                .checks
                .iter()
                .filter(|(_, c)| !c.passed)
                .map(|(name, c)| match c.detail.get("error") {
                    Some(e) => format!("{name} ({e})"),
                    None => format!("{name} (value {:e}, limit {:e})", c.value, c.limit),
                })
                .collect();
            format!("FAIL {}: {}", v.scenario, failed.join("; "))
        }
    }
}

/// Run files on a pool of `jobs` threads (0 = one per core); results keep input order.
pub fn run_files(paths: &[PathBuf], out_root: &Path, jobs: usize) -> Vec<FileOutcome> {
    use rayon::prelude::*;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build().expect("thread pool");
    pool.install(|| paths.par_iter().map(|p| run_file(p, out_root)).collect())
}

/// `*.cfg` files of a directory, sorted.
pub fn scenario_files(dir: &Path) -> std::io::Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "cfg"))
        .collect();
    files.sort();
    Ok(files)
}

/// Worst status of a batch as a process exit code.
pub fn exit_code(outcomes: &[FileOutcome]) -> i32 {
    outcomes.iter().map(|o| o.status).max().unwrap_or(Status::Pass).exit_code()
}
