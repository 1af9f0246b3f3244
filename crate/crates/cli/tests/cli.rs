use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use vrjp_core::clocks::ClockBank;
use vrjp_core::diagnostics::compute_series;
use vrjp_core::experiments::{verify, Verdict};
use vrjp_core::process::{simulate, InitialLocalTimes, Provenance, RunLimits, Trajectory, TrajectoryMeta, VertexSet};
use vrjp_core::weights::WeightFunction;

fn lab(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vrjp-lab")).current_dir(dir).args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TWO_VERTEX: &str =
    r#"{"weight": {"kind": "power", "a": 2}, "graph": {"segment": {"lo": 0, "hi": 1}}, "max_jumps": 400, "seed": 11}"#;

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(dir.path(), &["simulate", "--out", "runs"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--config"), "{}", stderr(&o));
}

#[test]
fn invalid_config_lists_every_problem_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("bad.json"),
        r#"{"weight": {"kind": "power", "a": -1}, "horizon": 0, "initial_local_time": 0.5}"#,
    )
    .unwrap();
    let o = lab(dir.path(), &["simulate", "--config", "bad.json", "--out", "runs"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("exponent must be > 0"), "{err}");
    assert!(err.contains("horizon") && err.contains("initial_local_time"), "{err}");
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn unknown_fields_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"experiment": "martingale", "replica": 5}"#).unwrap();
    let o = lab(dir.path(), &["experiment", "--config", "c.json", "--out", "runs"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("replica"));
    assert!(!dir.path().join("runs").exists());
}

#[test]
fn regime_prints_closed_forms() {
    let dir = tempfile::tempdir().unwrap();
    let o = lab(dir.path(), &["regime", "--config", r#"{"kind":"power","a":2}"#]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).trim(), "Strong, I(1)=1, rho=0.5 verified");
    let o = lab(dir.path(), &["regime", "--config", r#"{"kind":"linear"}"#]);
    assert_eq!(stdout(&o).trim(), "Weak, I(1)=inf");
}

#[test]
fn exported_trajectory_reproduces_the_in_memory_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sim.json"), TWO_VERTEX).unwrap();
    let o = lab(dir.path(), &["simulate", "--config", "sim.json", "--out", "sim"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let o = lab(dir.path(), &["diagnose", "--trajectory", "sim/trajectory.csv", "--out", "diag"]);
    assert!(o.status.success(), "{}", stderr(&o));

    let w = WeightFunction::power(2.0).unwrap();
    let traj = simulate(
        &w,
        &VertexSet::two_vertex(),
        &InitialLocalTimes::default(),
        Default::default(),
        RunLimits::jumps(400),
        ClockBank::new(11),
        Provenance::default(),
    )
    .unwrap();
    let exported = fs::read_to_string(dir.path().join("sim/trajectory.csv")).unwrap();
    assert_eq!(exported, traj.events_csv());
    let meta: TrajectoryMeta =
        serde_json::from_str(&fs::read_to_string(dir.path().join("sim/trajectory.meta.json")).unwrap()).unwrap();
    assert_eq!(Trajectory::from_csv(&exported, meta).unwrap().events, traj.events);

    let series = compute_series(&traj, &w, &[]).unwrap();
    assert_eq!(fs::read_to_string(dir.path().join("diag/series.csv")).unwrap(), series.csv());
    let checks: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("diag/checks.json")).unwrap()).unwrap();
    let residual = &checks.as_array().unwrap()[0];
    assert_eq!(residual["name"], "decomposition_residual");
    assert!(residual["statistic"].as_f64().unwrap() < 1e-8);
    assert!(checks.as_array().unwrap().iter().all(|c| c["pass"] == true));
}

#[test]
fn diagnose_config_resolves_paths_next_to_itself() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sim.json"), TWO_VERTEX).unwrap();
    assert!(lab(dir.path(), &["simulate", "--config", "sim.json", "--out", "sim"]).status.success());
    fs::write(dir.path().join("sim/diag.json"), r#"{"trajectory": "trajectory.csv", "grid_points": 11}"#).unwrap();
    let o = lab(dir.path(), &["diagnose", "--config", "sim/diag.json", "--out", "diag"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("diag/series.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| l.ends_with(",1")).count(), 11);
}

#[test]
fn diagnose_rejects_a_line_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("sim.json"), r#"{"horizon": 5, "seed": 1}"#).unwrap();
    assert!(lab(dir.path(), &["simulate", "--config", "sim.json", "--out", "sim"]).status.success());
    let o = lab(dir.path(), &["diagnose", "--trajectory", "sim/trajectory.csv", "--out", "diag"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!dir.path().join("diag").exists());
}

#[test]
fn couple_exports_the_pair() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("c.json"), r#"{"weight": {"kind": "linear"}, "n_jumps": 30}"#).unwrap();
    let o = lab(dir.path(), &["couple", "--config", "c.json", "--seed", "4", "--out", "pair"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("pair/coupled.csv")).unwrap();
    assert!(csv.starts_with("k,tilde_L0,tilde_L1,star_L0,star_L1\n"));
    assert_eq!(csv.lines().count(), 32);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("pair/coupling.json")).unwrap()).unwrap();
    assert_eq!(summary["seed"], 4);
    assert_eq!(summary["pass"], true);
}

#[test]
fn experiments_are_deterministic_and_self_verifying() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("loc.json"),
        r#"{"experiment": "localization", "weight": {"kind": "power", "a": 2}, "replicas": 12, "horizon": 100}"#,
    )
    .unwrap();
    let mut digests = Vec::new();
    for (out, threads) in [("a", "1"), ("b", "3")] {
        let o = Command::new(env!("CARGO_BIN_EXE_vrjp-lab"))
            .current_dir(dir.path())
            .env("VRJP_LAB_THREADS", threads)
            .args(["experiment", "--config", "loc.json", "--seed", "7", "--out", out, "--quiet"])
            .output()
            .unwrap();
        assert!(matches!(o.status.code(), Some(0 | 1)), "{}", stderr(&o));
        assert!(stdout(&o).is_empty());
        let v: Verdict =
            serde_json::from_str(&fs::read_to_string(dir.path().join(out).join("verdict.json")).unwrap()).unwrap();
        assert_eq!(v.seed, 7);
        assert_eq!(v.n_replicas, 12);
        assert!(verify(&v).unwrap());
        assert_eq!(v.digest, v.compute_digest());
        assert_eq!(o.status.code(), Some(if v.pass { 0 } else { 1 }));
        digests.push(v.digest);
    }
    assert_eq!(digests[0], digests[1]);
    assert_eq!(
        fs::read(dir.path().join("a/replicas.csv")).unwrap(),
        fs::read(dir.path().join("b/replicas.csv")).unwrap()
    );
}

#[test]
fn failing_experiment_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("s.json"),
        r#"{"experiment": "two_vertex_strong", "weight": {"kind": "power", "a": 2}, "replicas": 20, "two_vertex": {"early_horizon": 10}}"#,
    )
    .unwrap();
    // at this horizon the smaller local time is still visibly growing
    let o = lab(dir.path(), &["experiment", "--config", "s.json", "--horizon", "50", "--out", "s"]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stdout(&o).contains("FAIL plateau_fraction"));
}
