use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL: &str = r#"
m = 2.0
k = 2
t_end = 0.01
checks = ["mass", "cauchy_schwarz", "subsolution", "support_monotone", "waiting_time"]

[grid]
cells = [256]
lower = [-2.0]
upper = [2.0]

[[bump]]
species = 1
center = [-1.0]
radius = 0.25

[[bump]]
species = 2
center = [1.0]
radius = 0.25
"#;

fn spme(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spme")).args(args).env("SPME_OUT", out).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

#[test]
fn run_writes_artifacts_and_verdict_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.cfg", SMALL);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = spme(&["run", cfg.to_str().unwrap()], out);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(String::from_utf8_lossy(&o.stdout).contains("PASS small"));
    }
    for f in ["verdict.json", "manifest.json", "diagnostics.csv", "fields/t_0.000000.csv", "fields/t_0.010000.csv"] {
        assert!(a.join("small").join(f).is_file(), "missing {f}");
    }
    let read = |p: &Path| fs::read(p.join("small/verdict.json")).unwrap();
    assert_eq!(read(&a), read(&b));
    let v: serde_json::Value = serde_json::from_slice(&read(&a)).unwrap();
    assert_eq!(v["status"], "pass");
    assert_eq!(v["checks"]["waiting_time"]["detail"]["first_contact"], serde_json::Value::Null);
}

#[test]
fn invalid_file_reports_every_problem_with_lines() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("m = 2.0", "m = 0.5").replace("center = [1.0]", "center = [7.0]");
    let cfg = write(dir.path(), "bad.cfg", &text);
    let o = spme(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 2") && err.contains("m > 1"), "{err}");
    assert!(err.contains("bump[2].center"), "{err}");
    assert!(!dir.path().join("bad").exists());
}

#[test]
fn unknown_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "typo.cfg", &SMALL.replace("t_end", "tend"));
    let o = spme(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("tend"));
}

#[test]
fn failed_check_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    // overlapping supports at t0 leave no waiting time to measure
    let cfg = write(dir.path(), "overlap.cfg", &SMALL.replace("center = [1.0]", "center = [-0.9]"));
    let o = spme(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("overlap/verdict.json")).unwrap()).unwrap();
    assert_eq!(v["status"], "check_failed");
    assert_eq!(v["checks"]["waiting_time"]["passed"], false);
}

#[test]
fn numerical_failure_exits_three_with_payload() {
    let dir = tempfile::tempdir().unwrap();
    let text = SMALL.replace("radius = 0.25\n\n[[bump]]", "radius = 0.25\namplitude = 1e200\n\n[[bump]]");
    let cfg = write(dir.path(), "blow.cfg", &text);
    let o = spme(&["run", cfg.to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stdout));
    let v: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("blow/verdict.json")).unwrap()).unwrap();
    assert_eq!(v["status"], "numerical_failure");
    assert!(v["failure"]["message"].is_string());
}

#[test]
fn verify_all_reports_the_worst_status() {
    let dir = tempfile::tempdir().unwrap();
    let scen = dir.path().join("scen");
    fs::create_dir(&scen).unwrap();
    write(&scen, "good.cfg", SMALL);
    write(&scen, "bad.cfg", "m = 2\n");
    write(&scen, "notes.txt", "ignored");
    let out = dir.path().join("out");
    let o = spme(&["verify-all", scen.to_str().unwrap(), "--jobs", "2"], &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stdout).contains("PASS good"));
    assert!(out.join("good/verdict.json").is_file());
}

#[test]
fn out_flag_overrides_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "small.cfg", SMALL);
    let flag = dir.path().join("flag");
    let o = spme(&["run", "--out", flag.to_str().unwrap(), cfg.to_str().unwrap()], &dir.path().join("env"));
    assert_eq!(o.status.code(), Some(0));
    assert!(flag.join("small/verdict.json").is_file());
    assert!(!dir.path().join("env").exists());
}

#[test]
fn study_prints_an_error_table() {
    let dir = tempfile::tempdir().unwrap();
    let text = "m = 2\nk = 1\nt0 = 1\nt_end = 1.2\n[grid]\ncells = [64]\nlower = [-3.0]\nupper = [3.0]\n\
                [[bump]]\nspecies = 1\nshape = \"barenblatt\"\nmass = 1.0\n";
    let cfg = write(dir.path(), "bb.cfg", text);
    let o = spme(&["study", cfg.to_str().unwrap(), "--levels", "2"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.starts_with("h,L1,Linf,order_estimate\n"));
    assert_eq!(stdout.lines().count(), 3);
    assert!(dir.path().join("bb/refinement.csv").is_file());

    let o = spme(&["study", dir.path().join("small.cfg").to_str().unwrap()], dir.path());
    assert_eq!(o.status.code(), Some(2));
}
