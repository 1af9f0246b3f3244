//! `vrjp-lab`: simulate, couple, diagnose and run experiments on
//! vertex-reinforced jump processes.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod configs;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use serde::Serialize;

use configs::{CoupleConfig, DiagnoseConfig, SimulateConfig};
use output::Outputs;
use vrjp_core::clocks::ClockBank;
use vrjp_core::coupling::run_coupled_pair;
use vrjp_core::diagnostics::{compute_series, decomposition_residual, pathwise_checks};
use vrjp_core::experiments::{run_experiment, threads_from_env, ExperimentConfig, ExperimentError};
use vrjp_core::process::{simulate, Provenance, Trajectory, TrajectoryMeta};
use vrjp_core::weights::{WeightFunction, WeightSpec};

#[derive(Debug, Parser)]
#[command(name = "vrjp-lab", version, about = "Vertex-reinforced jump processes on the integer lattice")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one trajectory and export its events and local times.
    Simulate(RunArgs),
    /// Run a coupled pair on {0, 1} and export the local times by jump index.
    Couple(RunArgs),
    /// Compute the martingale diagnostics of an exported two-vertex trajectory.
    Diagnose(DiagnoseArgs),
    /// Run a replica ensemble and write its verdict.
    Experiment(RunArgs),
    /// Classify a weight function (config path or inline JSON).
    Regime(RegimeArgs),
}

#[derive(Debug, Args)]
struct Verbosity {
    /// Only print errors.
    #[arg(long, short, global = true, conflicts_with = "verbose")]
    quiet: bool,
    /// Print progress details.
    #[arg(long, short, global = true)]
    verbose: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON config file.
    #[arg(long, value_name = "PATH")]
    config: String,
    /// Overrides the seed in the config.
    #[arg(long, value_name = "U64")]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, value_name = "DIR", default_value = "runs")]
    out: PathBuf,
    /// Overrides the replica count (experiment only).
    #[arg(long, value_name = "N")]
    replicas: Option<usize>,
    /// Overrides the horizon (simulate and experiment).
    #[arg(long, value_name = "X")]
    horizon: Option<f64>,
    #[command(flatten)]
    verbosity: Verbosity,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["config", "trajectory"])))]
struct DiagnoseArgs {
    /// JSON config file.
    #[arg(long, value_name = "PATH")]
    config: Option<String>,
    /// Event CSV to diagnose with default settings.
    #[arg(long, value_name = "PATH")]
    trajectory: Option<PathBuf>,
    #[arg(long, value_name = "DIR", default_value = "runs")]
    out: PathBuf,
    #[command(flatten)]
    verbosity: Verbosity,
}

#[derive(Debug, Args)]
struct RegimeArgs {
    /// Weight spec as a JSON file or inline JSON, e.g. '{"kind":"power","a":2}'.
    #[arg(long, value_name = "PATH|JSON")]
    config: String,
    /// Also write regime.json here.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    #[command(flatten)]
    verbosity: Verbosity,
}

/// How a subcommand ended when it did not hit an error.
enum Status {
    Pass,
    Fail,
}

enum Failure {
    /// Exit 2: nothing was computed or written.
    Config(Vec<String>),
    /// Exit 1.
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Runtime(e)
    }
}

type Outcome = Result<Status, Failure>;

fn check(problems: Vec<String>) -> Result<(), Failure> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Failure::Config(problems))
    }
}

fn report(quiet: bool, line: impl AsRef<str>) {
    if !quiet {
        println!("{}", line.as_ref());
    }
}

fn num(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-3 {
        format!("{x:.3e}")
    } else {
        format!("{x}")
    }
}

fn report_written(quiet: bool, paths: &[PathBuf]) {
    for p in paths {
        report(quiet, format!("wrote {}", p.display()));
    }
}

fn cmd_simulate(args: &RunArgs) -> Outcome {
    let mut problems = Vec::new();
    if args.replicas.is_some() {
        problems.push("--replicas: does not apply to simulate".into());
    }
    let mut config: SimulateConfig = configs::load(&args.config, false).map_err(|e| Failure::Config(vec![e]))?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if args.horizon.is_some() {
        config.horizon = args.horizon;
    }
    problems.extend(config.problems());
    check(problems)?;

    let w = WeightFunction::from_spec(&config.weight).context("building the weight")?;
    let provenance = Provenance { seed: Some(config.seed), config_digest: Some(configs::digest(&config)) };
    info!("simulating with seed {}", config.seed);
    let traj = simulate(
        &w,
        &config.graph,
        &config.initial(),
        config.rule,
        config.limits(),
        ClockBank::new(config.seed),
        provenance,
    )
    .context("simulation failed")?;
    if traj.meta.max_jumps_hit {
        warn!("jump budget exhausted at t = {} before the horizon", traj.horizon());
    }
    let mut out = Outputs::default();
    out.add("trajectory.csv", traj.events_csv());
    out.add("local_times.csv", traj.local_times_csv());
    out.add_json("trajectory.meta.json", &traj.meta)?;
    let written = out.write(&args.out)?;
    let q = args.verbosity.quiet;
    report(q, format!("{} events on [0, {}], final vertex {}", traj.events.len(), traj.horizon(), traj.final_vertex()));
    report_written(q, &written);
    Ok(Status::Pass)
}

#[derive(Serialize)]
struct CoupleSummary {
    seed: u64,
    a: f64,
    n_jumps: u64,
    violations: Vec<u64>,
    pass: bool,
}

fn cmd_couple(args: &RunArgs) -> Outcome {
    let mut problems = Vec::new();
    if args.replicas.is_some() {
        problems.push("--replicas: does not apply to couple".into());
    }
    if args.horizon.is_some() {
        problems.push("--horizon: does not apply to couple".into());
    }
    let mut config: CoupleConfig = configs::load(&args.config, false).map_err(|e| Failure::Config(vec![e]))?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    problems.extend(config.problems());
    check(problems)?;

    let w = WeightFunction::from_spec(&config.weight).context("building the weight")?;
    let run = run_coupled_pair(&w, config.seed, config.n_jumps, config.a).context("coupled run failed")?;
    let violations = run.violations();
    let summary =
        CoupleSummary { seed: config.seed, a: run.a, n_jumps: config.n_jumps, pass: violations.is_empty(), violations };
    let mut out = Outputs::default();
    out.add("coupled.csv", run.csv());
    out.add_json("coupling.json", &summary)?;
    let written = out.write(&args.out)?;
    let q = args.verbosity.quiet;
    report(
        q,
        format!("A = {}, {} strict-inequality violations in {} jumps", run.a, summary.violations.len(), config.n_jumps),
    );
    report_written(q, &written);
    Ok(if summary.pass { Status::Pass } else { Status::Fail })
}

#[derive(Debug, Serialize)]
struct CheckLine {
    name: &'static str,
    statistic: f64,
    threshold: f64,
    pass: bool,
}

fn load_trajectory(config: &DiagnoseConfig) -> Result<(Trajectory, WeightSpec), Vec<String>> {
    let events_path = config.trajectory.as_ref().expect("validated");
    let meta_path = config.meta_path().expect("validated");
    let mut problems = Vec::new();
    let events = std::fs::read_to_string(events_path).map_err(|e| format!("trajectory {}: {e}", events_path.display()));
    let meta =
        std::fs::read_to_string(&meta_path).map_err(|e| format!("meta {}: {e}", meta_path.display())).and_then(|s| {
            serde_json::from_str::<TrajectoryMeta>(&s).map_err(|e| format!("meta {}: {e}", meta_path.display()))
        });
    let (events, meta) = match (events, meta) {
        (Ok(e), Ok(m)) => (e, m),
        (e, m) => {
            problems.extend(e.err());
            problems.extend(m.err());
            return Err(problems);
        }
    };
    let weight = match config.weight.or(meta.weight) {
        Some(w) => w,
        None => return Err(vec!["weight: neither the config nor the metadata names a weight".into()]),
    };
    let traj =
        Trajectory::from_csv(&events, meta).map_err(|e| vec![format!("trajectory {}: {e}", events_path.display())])?;
    Ok((traj, weight))
}

fn cmd_diagnose(args: &DiagnoseArgs) -> Outcome {
    let mut config = match &args.config {
        Some(path) => {
            let mut c: DiagnoseConfig = configs::load(path, false).map_err(|e| Failure::Config(vec![e]))?;
            c.resolve_paths(Path::new(path).parent().unwrap_or(Path::new(".")));
            c
        }
        None => DiagnoseConfig::default(),
    };
    if let Some(t) = &args.trajectory {
        config.trajectory = Some(t.clone());
    }
    check(config.problems())?;
    let (traj, weight) = load_trajectory(&config).map_err(Failure::Config)?;
    let w = WeightFunction::from_spec(&weight).context("building the weight")?;

    let n = config.grid_points;
    let grid: Vec<f64> = (0..n).map(|k| traj.horizon() * k as f64 / (n.max(2) - 1) as f64).collect();
    let series = compute_series(&traj, &w, &grid).map_err(|e| Failure::Config(vec![format!("trajectory: {e}")]))?;
    let residual = decomposition_residual(&series, &w).context("decomposition residual")?;
    let pw = pathwise_checks(&series, config.sandwich_k);
    let count = |name, v: usize| CheckLine { name, statistic: v as f64, threshold: 0.0, pass: v == 0 };
    let flag = |name, ok: bool| CheckLine { name, statistic: ok as u8 as f64, threshold: 1.0, pass: ok };
    let checks = vec![
        CheckLine {
            name: "decomposition_residual",
            statistic: residual.relative,
            threshold: config.residual_tol,
            pass: residual.relative < config.residual_tol,
        },
        count("jump_bound_violations", pw.jump_violations),
        count("finite_variation_bound_violations", pw.fv_violations),
        count("sandwich_violations", pw.sandwich_violations),
        flag("compensator_monotone", pw.a_monotone),
        flag("angle_bracket_monotone", pw.angle_monotone),
    ];
    let pass = checks.iter().all(|c| c.pass);
    let mut out = Outputs::default();
    out.add("series.csv", series.csv());
    out.add_json("checks.json", &checks)?;
    let written = out.write(&args.out)?;
    let q = args.verbosity.quiet;
    for c in &checks {
        let tag = if c.pass { "ok  " } else { "FAIL" };
        report(q, format!("{tag} {} = {} (threshold {})", c.name, num(c.statistic), num(c.threshold)));
    }
    report_written(q, &written);
    Ok(if pass { Status::Pass } else { Status::Fail })
}

fn cmd_experiment(args: &RunArgs) -> Outcome {
    let mut config: ExperimentConfig = configs::load(&args.config, false).map_err(|e| Failure::Config(vec![e]))?;
    if let Some(s) = args.seed {
        config.seed = s;
    }
    if let Some(r) = args.replicas {
        config.replicas = r;
    }
    if args.horizon.is_some() {
        config.horizon = args.horizon;
    }
    check(config.problems())?;

    info!("{}: {} replicas, seed {}", config.experiment.name(), config.replicas, config.seed);
    let verdict = run_experiment(&config, threads_from_env()).map_err(|e| match e {
        ExperimentError::InvalidConfig(p) => Failure::Config(p),
        other => Failure::Runtime(other.into()),
    })?;
    let mut out = Outputs::default();
    out.add_json("verdict.json", &verdict)?;
    out.add("replicas.csv", verdict.replicas_csv());
    let written = out.write(&args.out)?;
    let q = args.verbosity.quiet;
    for c in &verdict.checks {
        let tag = match (c.gating, c.pass) {
            (false, _) => "info",
            (true, true) => "ok  ",
            (true, false) => "FAIL",
        };
        report(q, format!("{tag} {} = {} ({:?} {})", c.name, num(c.statistic), c.comparison, num(c.threshold)));
    }
    report(
        q,
        format!("{}: {} (digest {})", verdict.experiment, if verdict.pass { "PASS" } else { "FAIL" }, verdict.digest),
    );
    report_written(q, &written);
    Ok(if verdict.pass { Status::Pass } else { Status::Fail })
}

fn cmd_regime(args: &RegimeArgs) -> Outcome {
    let spec: WeightSpec = configs::load(&args.config, true).map_err(|e| Failure::Config(vec![e]))?;
    check(spec.problems())?;
    let w = WeightFunction::from_spec(&spec).context("building the weight")?;
    let report_ = w.classify_regime();
    println!("{report_}");
    if let Some(dir) = &args.out {
        let mut out = Outputs::default();
        out.add_json("regime.json", &report_)?;
        report_written(args.verbosity.quiet, &out.write(dir)?);
    }
    Ok(Status::Pass)
}

fn init_logging(v: &Verbosity) {
    let level = if v.quiet {
        "error"
    } else if v.verbose {
        "debug"
    } else {
        "warn"
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let verbosity = match &cli.command {
        Command::Simulate(a) | Command::Couple(a) | Command::Experiment(a) => &a.verbosity,
        Command::Diagnose(a) => &a.verbosity,
        Command::Regime(a) => &a.verbosity,
    };
    init_logging(verbosity);
    finish(match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Couple(a) => cmd_couple(a),
        Command::Experiment(a) => cmd_experiment(a),
        Command::Diagnose(a) => cmd_diagnose(a),
        Command::Regime(a) => cmd_regime(a),
    })
}

fn finish(outcome: Outcome) -> ExitCode {
    match outcome {
        Ok(Status::Pass) => ExitCode::SUCCESS,
        Ok(Status::Fail) => ExitCode::from(1),
        Err(Failure::Config(problems)) => {
            eprintln!("error: invalid configuration");
            for p in problems {
                eprintln!("  {p}");
            }
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
