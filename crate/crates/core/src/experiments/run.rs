//! Per-kind replica functions and the ensemble checks applied to them.
//!
//! Checks are always computed from the stored replica records, so a verdict
//! can be re-evaluated from its own JSON.

use rand_xoshiro::rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::config::{ExperimentConfig, ExperimentKind};
use super::detect::{
    detect_localization, detect_recurrence, summarize_chain, transience_signature, LineSummary, LocalizationVerdict,
    RecurrenceVerdict, TransienceSignature,
};
use super::harness::{replica_seed, run_replicas, ReplicaOutcome};
use super::verdict::{Check, Comparison, ReplicaRecord, Verdict};
use crate::clocks::{open_unit, substream_seed, ClockBank};
use crate::coupling::{
    check_restriction, level_grid, run_coupled_pair, surplus_replica, two_vertex_path, RestrictionCheck, SurplusReport,
    SurplusSample,
};
use crate::diagnostics::{
    compute_series, decomposition_residual, envelope_checks, martingale_checks, pathwise_checks,
    two_vertex_checkpoints, CheckpointState, DiagnosticsError, EnvelopeReport,
};
use crate::process::{
    simulate, InitialLocalTimes, LineChain, Provenance, RunLimits, Stop, TwoVertexChain, VertexSet, Walker,
};
use crate::stats::{ks_two_sample, wilson_interval};
use crate::weights::{WeightError, WeightFunction};

/// Confidence level of the binomial intervals attached to fraction checks.
const CI_Z: f64 = 1.959_963_984_540_054;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error("invalid configuration:\n  {}", .0.join("\n  "))]
    InvalidConfig(Vec<String>),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error("replica record {index}: {message}")]
    Record { index: usize, message: String },
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
}

/// Runs the experiment described by `config` on `threads` workers (all cores
/// when `None`). The verdict does not depend on the worker count.
pub fn run_experiment(config: &ExperimentConfig, threads: Option<usize>) -> Result<Verdict, ExperimentError> {
    let problems = config.problems();
    if !problems.is_empty() {
        return Err(ExperimentError::InvalidConfig(problems));
    }
    let w = WeightFunction::from_spec(&config.weight)?;
    let records = match config.experiment {
        ExperimentKind::Localization | ExperimentKind::Recurrence | ExperimentKind::Nontransience => {
            ensemble(config, threads, |_, seed| line_replica(config, &w, seed))
        }
        ExperimentKind::TwoVertexWeak => ensemble(config, threads, |_, seed| weak_replica(config, &w, seed)),
        ExperimentKind::TwoVertexStrong => ensemble(config, threads, |_, seed| strong_replica(config, &w, seed)),
        ExperimentKind::CouplingDomination => ensemble(config, threads, |_, seed| domination_replica(config, &w, seed)),
        ExperimentKind::CouplingDistribution => {
            ensemble(config, threads, |_, seed| distribution_replica(config, &w, seed))
        }
        ExperimentKind::RhoSurplus => {
            let grid = surplus_grid(config);
            ensemble(config, threads, |_, seed| {
                let s = &config.surplus;
                surplus_replica(&w, s.a, &grid, s.cap, seed).map(|r| r.sample(&w, &grid))
            })
        }
        ExperimentKind::EngineComparison => ensemble(config, threads, |_, seed| engine_replica(config, &w, seed)),
        ExperimentKind::DiagnosticsSuite => ensemble(config, threads, |_, seed| diagnostics_replica(config, &w, seed)),
        ExperimentKind::Martingale => ensemble(config, threads, |_, seed| martingale_replica(config, &w, seed)),
        ExperimentKind::Envelope => ensemble(config, threads, |_, seed| envelope_replica(config, &w, seed)),
        ExperimentKind::Restriction => ensemble(config, threads, |_, seed| restriction_replica(config, &w, seed)),
    };
    let (checks, details) = evaluate(config, &records)?;
    Ok(Verdict::assemble(config, checks, details, records))
}

/// Recomputes the checks of `verdict` from its replica records.
pub fn verify(verdict: &Verdict) -> Result<bool, ExperimentError> {
    let (checks, details) = evaluate(&verdict.config, &verdict.replicas)?;
    Ok(checks == verdict.checks && details == verdict.details)
}

fn ensemble<T, E, F>(config: &ExperimentConfig, threads: Option<usize>, f: F) -> Vec<ReplicaRecord>
where
    T: Serialize + Send,
    E: std::fmt::Display,
    F: Fn(usize, u64) -> Result<T, E> + Sync,
{
    run_replicas(config.replicas, config.seed, threads, f)
        .into_iter()
        .enumerate()
        .map(|(index, outcome)| {
            let seed = replica_seed(config.seed, index);
            match outcome {
                ReplicaOutcome::Ok(v) => match serde_json::to_value(v) {
                    Ok(data) => ReplicaRecord { index, seed, error: None, data },
                    Err(e) => ReplicaRecord { index, seed, error: Some(e.to_string()), data: Value::Null },
                },
                ReplicaOutcome::Failed(msg) => ReplicaRecord { index, seed, error: Some(msg), data: Value::Null },
            }
        })
        .collect()
}

/// Typed view of the records; failed replicas map to `None`.
fn typed<T: DeserializeOwned>(records: &[ReplicaRecord]) -> Result<Vec<Option<T>>, ExperimentError> {
    records
        .iter()
        .map(|r| {
            if r.error.is_some() {
                return Ok(None);
            }
            serde_json::from_value(r.data.clone())
                .map(Some)
                .map_err(|e| ExperimentError::Record { index: r.index, message: e.to_string() })
        })
        .collect()
}

fn fraction_check(name: &str, hits: usize, n: usize, comparison: Comparison, threshold: f64) -> Check {
    let frac = if n == 0 { 0.0 } else { hits as f64 / n as f64 };
    Check::new(name, frac, comparison, threshold).with_ci(wilson_interval(hits, n, CI_Z))
}

fn evaluate(config: &ExperimentConfig, records: &[ReplicaRecord]) -> Result<(Vec<Check>, Value), ExperimentError> {
    let w = WeightFunction::from_spec(&config.weight)?;
    let n = records.len();
    let thr = config.effective_threshold();
    let failed = records.iter().filter(|r| r.error.is_some()).count();
    Ok(match config.experiment {
        kind @ (ExperimentKind::Localization | ExperimentKind::Recurrence | ExperimentKind::Nontransience) => {
            let recs: Vec<Option<LineRecord>> = typed(records)?;
            let d = &config.detector;
            let localized = recs.iter().flatten().filter(|r| detect_localization(&r.summary, d).pass).count();
            let recurrent = recs.iter().flatten().filter(|r| detect_recurrence(&r.summary).pass).count();
            // a failed replica counts against the walk in every direction
            let signature = recs
                .iter()
                .filter(|r| r.as_ref().is_none_or(|r| transience_signature(&r.summary, d).signature))
                .count();
            let default_of = |k: ExperimentKind| ExperimentConfig::new(k, config.weight).effective_threshold();
            let mut checks = vec![
                fraction_check(
                    "localized_fraction",
                    localized,
                    n,
                    Comparison::AtLeast,
                    default_of(ExperimentKind::Localization),
                ),
                fraction_check(
                    "recurrent_fraction",
                    recurrent,
                    n,
                    Comparison::AtLeast,
                    default_of(ExperimentKind::Recurrence),
                ),
                fraction_check(
                    "transient_signature_fraction",
                    signature,
                    n,
                    Comparison::AtMost,
                    default_of(ExperimentKind::Nontransience),
                ),
            ];
            let gate = match kind {
                ExperimentKind::Localization => 0,
                ExperimentKind::Recurrence => 1,
                _ => 2,
            };
            checks[gate].threshold = thr;
            checks[gate].pass = checks[gate].comparison.holds(checks[gate].statistic, thr);
            let head = checks.remove(gate);
            let mut out = vec![head];
            out.extend(checks.into_iter().map(Check::report_only));
            let censored = recs.iter().flatten().filter(|r| r.summary.censored).count();
            let degenerate = recs.iter().flatten().filter(|r| r.summary.window_events == 0).count();
            (out, json!({"failed": failed, "censored": censored, "degenerate_windows": degenerate}))
        }
        ExperimentKind::TwoVertexWeak => {
            let recs: Vec<Option<WeakRecord>> = typed(records)?;
            let p = &config.two_vertex;
            let big = recs.iter().flatten().filter(|r| !r.censored && r.min_final > p.min_local_time).count();
            let stuck =
                recs.iter().filter(|r| r.as_ref().is_none_or(|r| r.censored || !(r.min_final > r.min_early))).count();
            let checks = vec![
                fraction_check("min_local_time_fraction", big, n, Comparison::AtLeast, thr),
                Check::new("runs_without_growth", stuck as f64, Comparison::AtMost, 0.0),
            ];
            (checks, json!({"failed": failed}))
        }
        ExperimentKind::TwoVertexStrong => strong_checks(config, &typed(records)?, thr, failed),
        ExperimentKind::CouplingDomination => {
            let recs: Vec<Option<DominationRecord>> = typed(records)?;
            let violations: usize = recs.iter().map(|r| r.as_ref().map_or(1, |r| r.violations.len())).sum();
            let pairs = recs.iter().flatten().count();
            let checks = vec![Check::new("strict_inequality_violations", violations as f64, Comparison::AtMost, 0.0)];
            (checks, json!({"failed": failed, "pairs": pairs}))
        }
        ExperimentKind::CouplingDistribution => {
            let recs: Vec<DistributionRecord> = typed(records)?.into_iter().flatten().collect();
            let mut tests = Vec::new();
            for (j, &idx) in config.coupling.indices.iter().enumerate() {
                for c in 0..2 {
                    let star: Vec<f64> = recs.iter().map(|r| r.star[j][c]).collect();
                    let tilde: Vec<f64> = recs.iter().map(|r| r.tilde[j][c]).collect();
                    let p = if star.is_empty() {
                        0.0
                    } else {
                        ks_two_sample(&star, &tilde, config.alpha).map_or(0.0, |r| r.p)
                    };
                    tests.push(
                        Check::new(format!("ks_p[n={idx},coord={c}]"), p, Comparison::AtLeast, config.alpha)
                            .report_only(),
                    );
                }
            }
            let rejections = tests.iter().filter(|c| !c.pass).count() + failed;
            let mut checks = vec![Check::new("ks_rejections", rejections as f64, Comparison::AtMost, 0.0)];
            checks.extend(tests);
            (checks, json!({"failed": failed}))
        }
        ExperimentKind::RhoSurplus => {
            let samples: Vec<SurplusSample> = typed(records)?.into_iter().flatten().collect();
            let s = &config.surplus;
            let report = SurplusReport::from_samples(&w, s.a, &surplus_grid(config), s.cap, &samples);
            let m = &report.eq_mean_check;
            let z = if m.combined_se > 0.0 { (m.lhs - m.rhs).abs() / m.combined_se } else { f64::INFINITY };
            let checks = vec![
                Check::new("rho_hat_minus_3se", report.rho_hat - 3.0 * report.stderr, Comparison::Above, 0.0),
                Check::new("eq_mean_discrepancy_in_se", z, Comparison::AtMost, 3.0),
            ];
            let details = json!({"failed": failed, "report": report});
            (checks, details)
        }
        ExperimentKind::EngineComparison => {
            let recs: Vec<EngineRecord> = typed(records)?.into_iter().flatten().collect();
            let mut checks = Vec::new();
            let pick = |f: &dyn Fn(&EngineRecord) -> [f64; 2], k: usize| -> Vec<f64> {
                recs.iter().map(|r| f(r)[k]).collect()
            };
            let fresh = |k| pick(&|r: &EngineRecord| r.fresh, k);
            for (label, other) in
                [("literal", pick_literal as fn(&EngineRecord) -> [f64; 2]), ("accumulated", pick_accumulated)]
            {
                for (k, what) in ["position", "local_time_at_0"].iter().enumerate() {
                    let xs: Vec<f64> = recs.iter().map(|r| other(r)[k]).collect();
                    let p = if xs.is_empty() {
                        0.0
                    } else {
                        ks_two_sample(&xs, &fresh(k), config.alpha).map_or(0.0, |r| r.p)
                    };
                    checks.push(
                        Check::new(format!("ks_p[{label}_vs_fresh,{what}]"), p, Comparison::AtLeast, config.alpha)
                            .report_only(),
                    );
                }
            }
            (checks, json!({"failed": failed, "note": "comparison only; no pass criterion"}))
        }
        ExperimentKind::DiagnosticsSuite => {
            let recs: Vec<Option<DiagnosticsRecord>> = typed(records)?;
            let worst = recs.iter().flatten().map(|r| r.relative_residual).fold(0.0, f64::max);
            let violations: usize = recs.iter().map(|r| r.as_ref().map_or(1, |r| r.pathwise_violations)).sum();
            let checks = vec![
                Check::new("max_relative_residual", worst, Comparison::Below, config.diagnostics.residual_tolerance),
                Check::new("pathwise_violations", violations as f64, Comparison::AtMost, 0.0),
            ];
            (checks, json!({"failed": failed}))
        }
        ExperimentKind::Martingale => {
            let runs: Vec<Vec<CheckpointState>> =
                typed::<MartingaleRecord>(records)?.into_iter().flatten().map(|r| r.states).collect();
            let report = martingale_checks(&w, &runs, &config.martingale.checkpoints, &config.martingale.increments)?;
            let z = |d: f64, se: f64| {
                if se > 0.0 {
                    d.abs() / se
                } else if d == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            };
            let mut checks = Vec::new();
            for c in &report.checkpoints {
                checks.push(Check::new(
                    format!("mean_m_in_se[t={}]", c.t),
                    z(c.mean_m, c.se_m),
                    Comparison::AtMost,
                    3.0,
                ));
                checks.push(Check::new(
                    format!("isometry_in_se[t={}]", c.t),
                    z(c.mean_m2 - c.mean_angle, c.combined_se),
                    Comparison::AtMost,
                    3.0,
                ));
                let mut by_h = c.drift.clone();
                by_h.sort_by(|a, b| b.h.total_cmp(&a.h));
                if by_h.len() >= 2 {
                    let (first, last) = (by_h[0].ratio, by_h[by_h.len() - 1].ratio);
                    let shrink = if first > 0.0 { last / first } else { 0.0 };
                    checks.push(Check::new(format!("drift_ratio_shrink[t={}]", c.t), shrink, Comparison::Below, 1.0));
                }
            }
            (checks, json!({"failed": failed, "checkpoints": report.checkpoints}))
        }
        ExperimentKind::Envelope => {
            let recs: Vec<Option<EnvelopeReport>> = typed(records)?;
            let violations = recs.iter().filter(|r| r.as_ref().is_none_or(|r| !r.pass)).count();
            let min_lower = recs.iter().flatten().map(|r| r.lower_slack).fold(f64::INFINITY, f64::min);
            let min_upper = recs.iter().flatten().filter_map(|r| r.upper_slack).fold(f64::INFINITY, f64::min);
            let checks = vec![Check::new("envelope_violations", violations as f64, Comparison::AtMost, 0.0)];
            let details = json!({"failed": failed, "min_lower_slack": finite_or_null(min_lower), "min_upper_slack": finite_or_null(min_upper)});
            (checks, details)
        }
        ExperimentKind::Restriction => {
            let recs: Vec<Option<Vec<RestrictionCheck>>> = typed(records)?;
            let mismatches: usize =
                recs.iter().map(|r| r.as_ref().map_or(1, |v| v.iter().filter(|c| c.mismatch.is_some()).count())).sum();
            let compared: usize = recs.iter().flatten().map(|v| v.iter().map(|c| c.n_events).sum::<usize>()).sum();
            let checks = vec![Check::new("restriction_mismatches", mismatches as f64, Comparison::AtMost, 0.0)];
            (checks, json!({"failed": failed, "events_compared": compared}))
        }
    })
}

fn finite_or_null(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn strong_checks(
    config: &ExperimentConfig,
    recs: &[Option<StrongRecord>],
    thr: f64,
    failed: usize,
) -> (Vec<Check>, Value) {
    let p = &config.two_vertex;
    let n = recs.len();
    let done: Vec<&StrongRecord> = recs.iter().flatten().filter(|r| !r.censored).collect();
    let min = |l: [f64; 2]| l[0].min(l[1]);
    let plateau = done.iter().filter(|r| (min(r.l_final) - min(r.l_half)).abs() <= p.plateau_tolerance).count();
    let early_plateau = done.iter().filter(|r| (min(r.l_final) - min(r.l_early)).abs() <= p.plateau_tolerance).count();
    let mut z: Vec<f64> = done.iter().map(|r| r.z).collect();
    let batches = (z[..z.len() / 2].to_vec(), z[z.len() / 2..].to_vec());
    z.sort_by(f64::total_cmp);
    let duplicates = z.windows(2).filter(|p| p[0] == p[1]).count();
    let eps_last = *p.z_epsilons.last().expect("validated");
    let small = |eps: f64| z.iter().filter(|v| v.abs() < eps).count();
    let nz = z.len();
    let mut checks = vec![
        fraction_check("plateau_fraction", plateau, n, Comparison::AtLeast, thr),
        Check::new("duplicate_z", duplicates as f64, Comparison::AtMost, 0.0),
        fraction_check("small_z_fraction", small(eps_last), nz, Comparison::Below, p.z_small_fraction),
    ];
    for &eps in &p.z_epsilons {
        checks.push(
            fraction_check(&format!("small_z_fraction[eps={eps}]"), small(eps), nz, Comparison::Below, 1.0)
                .report_only(),
        );
    }
    checks.push(
        fraction_check("plateau_fraction[early_horizon]", early_plateau, n, Comparison::AtLeast, thr).report_only(),
    );
    let ks_p = if batches.0.is_empty() || batches.1.is_empty() {
        0.0
    } else {
        ks_two_sample(&batches.0, &batches.1, config.alpha).map_or(0.0, |r| r.p)
    };
    checks.push(Check::new("z_two_batch_ks_p", ks_p, Comparison::AtLeast, config.alpha).report_only());
    // how far the smaller local time still moves in the second half
    let mut inc: Vec<f64> = done.iter().map(|r| min(r.l_final) - min(r.l_half)).collect();
    inc.sort_by(f64::total_cmp);
    let q =
        |f: f64| if inc.is_empty() { Value::Null } else { json!(inc[((inc.len() - 1) as f64 * f).round() as usize]) };
    let censored = recs.iter().flatten().filter(|r| r.censored).count();
    let details = json!({
        "failed": failed,
        "censored": censored,
        "min_local_time_increment_quantiles": {"0.01": q(0.01), "0.5": q(0.5), "0.99": q(0.99)},
    });
    (checks, details)
}

fn pick_literal(r: &EngineRecord) -> [f64; 2] {
    r.literal
}

fn pick_accumulated(r: &EngineRecord) -> [f64; 2] {
    r.accumulated
}

fn surplus_grid(config: &ExperimentConfig) -> Vec<f64> {
    let s = &config.surplus;
    level_grid(s.b, s.a, s.grid_points)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LineRecord {
    summary: LineSummary,
    localization: LocalizationVerdict,
    recurrence: RecurrenceVerdict,
    transience: TransienceSignature,
}

fn line_replica(config: &ExperimentConfig, w: &WeightFunction, seed: u64) -> Result<LineRecord, String> {
    let initial = InitialLocalTimes::uniform(config.initial_local_time);
    let graph = config.effective_graph();
    let d = &config.detector;
    let summary = match config.effective_rule() {
        crate::process::ClockRule::Fresh => {
            let mut chain = LineChain::new(w, &graph, &initial, seed).map_err(|e| e.to_string())?;
            summarize_chain(&mut chain, config.effective_horizon(), config.effective_max_jumps(), d)
        }
        rule => {
            let limits =
                RunLimits { horizon: Some(config.effective_horizon()), max_jumps: Some(config.effective_max_jumps()) };
            let traj = simulate(w, &graph, &initial, rule, limits, ClockBank::new(seed), Provenance::default())
                .map_err(|e| e.to_string())?;
            super::detect::summarize_trajectory(&traj, d)
        }
    };
    Ok(LineRecord {
        localization: detect_localization(&summary, d),
        recurrence: detect_recurrence(&summary),
        transience: transience_signature(&summary, d),
        summary,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WeakRecord {
    min_early: f64,
    min_final: f64,
    censored: bool,
}

fn weak_replica(config: &ExperimentConfig, w: &WeightFunction, seed: u64) -> Result<WeakRecord, String> {
    let l = config.initial_local_time;
    let mut chain = TwoVertexChain::new(w, [l, l], seed).map_err(|e| e.to_string())?;
    let budget = config.effective_max_jumps();
    let mut censored = chain.advance(config.two_vertex.early_horizon, budget) == Stop::MaxEvents;
    let e = chain.local_times();
    censored |= chain.advance(config.effective_horizon(), budget.saturating_sub(chain.n_events())) == Stop::MaxEvents;
    let f = chain.local_times();
    Ok(WeakRecord { min_early: e[0].min(e[1]), min_final: f[0].min(f[1]), censored })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct StrongRecord {
    l_early: [f64; 2],
    l_half: [f64; 2],
    l_final: [f64; 2],
    x_final: u8,
    z: f64,
    n_events: u64,
    censored: bool,
}

fn strong_replica(config: &ExperimentConfig, w: &WeightFunction, seed: u64) -> Result<StrongRecord, String> {
    let l = config.initial_local_time;
    let horizon = config.effective_horizon();
    let mut chain = TwoVertexChain::new(w, [l, l], seed).map_err(|e| e.to_string())?;
    let budget = config.effective_max_jumps();
    let mut marks = [config.two_vertex.early_horizon, 0.5 * horizon, horizon];
    marks.sort_by(f64::total_cmp);
    let mut at = [[0.0; 2]; 3];
    let mut censored = false;
    for (k, &t) in marks.iter().enumerate() {
        censored |= chain.advance(t, budget.saturating_sub(chain.n_events())) == Stop::MaxEvents;
        at[k] = chain.local_times();
    }
    let find = |t: f64| at[marks.iter().position(|&m| m == t).expect("mark")];
    let lf = chain.local_times();
    let beta = 1.0 / (w.value(lf[0]) * w.value(lf[1]));
    let h = w.integral(lf[1], lf[0]).map_err(|e| e.to_string())?;
    let x = chain.current() as u8;
    Ok(StrongRecord {
        l_early: find(config.two_vertex.early_horizon),
        l_half: find(0.5 * horizon),
        l_final: lf,
        x_final: x,
        z: h - x as f64 * beta,
        n_events: chain.n_events(),
        censored,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DominationRecord {
    a: f64,
    violations: Vec<u64>,
}

fn domination_replica(config: &ExperimentConfig, w: &WeightFunction, seed: u64) -> Result<DominationRecord, String> {
    let run = run_coupled_pair(w, seed, config.coupling.n_jumps, None).map_err(|e| e.to_string())?;
    Ok(DominationRecord { a: run.a, violations: run.violations() })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DistributionRecord {
    /// `(L*(1), L*(0))` at the `n`-th jump of the starred process.
    star: Vec<[f64; 2]>,
    /// `(L~(0), L~(1))` at jump `n + 1` of an independent unstarred process.
    tilde: Vec<[f64; 2]>,
}

fn distribution_replica(
    config: &ExperimentConfig,
    w: &WeightFunction,
    seed: u64,
) -> Result<DistributionRecord, String> {
    let idx = &config.coupling.indices;
    let top = idx.iter().copied().max().unwrap_or(0) + 1;
    let star_run = run_coupled_pair(w, substream_seed(seed, "star"), top, None).map_err(|e| e.to_string())?;
    let tilde_run = run_coupled_pair(w, substream_seed(seed, "tilde"), top, None).map_err(|e| e.to_string())?;
    let star = idx.iter().map(|&n| {
        let s = star_run.rows[n as usize].star;
        [s[1], s[0]]
    });
    let tilde = idx.iter().map(|&n| tilde_run.rows[n as usize + 1].tilde);
    Ok(DistributionRecord { star: star.collect(), tilde: tilde.collect() })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct EngineRecord {
    /// `[X after position_jump jumps, L(0) after local_time_jump jumps]`.
    literal: [f64; 2],
    fresh: [f64; 2],
    accumulated: [f64; 2],
}

fn engine_replica(config: &ExperimentConfig, w: &WeightFunction, seed: u64) -> Result<EngineRecord, String> {
    use crate::process::ClockRule;
    let p = &config.engine_comparison;
    let graph = config.effective_graph();
    let initial = InitialLocalTimes::uniform(config.initial_local_time);
    let run = |rule: ClockRule, tag: &str| -> Result<[f64; 2], String> {
        let bank = ClockBank::new(substream_seed(seed, tag));
        let mut walker = Walker::new(w, &graph, &initial, rule, bank).map_err(|e| e.to_string())?;
        let (mut x, mut l0) = (f64::NAN, f64::NAN);
        for k in 1..=p.position_jump.max(p.local_time_jump) {
            let ev = walker.step(f64::INFINITY).ok_or("walker stopped")?;
            if k == p.position_jump {
                x = ev.to as f64;
            }
            if k == p.local_time_jump {
                l0 = walker.local_time(0);
            }
        }
        Ok([x, l0])
    };
    // independent clocks per engine: the comparison is between laws
    Ok(EngineRecord {
        literal: run(ClockRule::Literal, "literal")?,
        fresh: run(ClockRule::Fresh, "fresh")?,
        accumulated: run(ClockRule::Accumulated, "accumulated")?,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DiagnosticsRecord {
    n_rows: usize,
    relative_residual: f64,
    pathwise_violations: usize,
}

fn diagnostics_replica(config: &ExperimentConfig, w: &WeightFunction, seed: u64) -> Result<DiagnosticsRecord, String> {
    let l = config.initial_local_time;
    let limits = RunLimits { horizon: config.horizon, max_jumps: Some(config.effective_max_jumps()) };
    let traj = two_vertex_path(w, [l, l], limits, seed).map_err(|e| e.to_string())?;
    let k = config.diagnostics.grid_points;
    let grid: Vec<f64> = (0..k).map(|i| traj.horizon() * i as f64 / k as f64).collect();
    let series = compute_series(&traj, w, &grid).map_err(|e| e.to_string())?;
    let residual = decomposition_residual(&series, w).map_err(|e| e.to_string())?;
    let p = pathwise_checks(&series, config.diagnostics.sandwich_k);
    let violations = p.jump_violations
        + p.fv_violations
        + p.sandwich_violations
        + (!p.a_monotone) as usize
        + (!p.angle_monotone) as usize;
    Ok(DiagnosticsRecord {
        n_rows: series.rows.len(),
        relative_residual: residual.relative,
        pathwise_violations: violations,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct MartingaleRecord {
    states: Vec<CheckpointState>,
}

fn martingale_times(config: &ExperimentConfig) -> Vec<f64> {
    let m = &config.martingale;
    let mut times: Vec<f64> = m.checkpoints.clone();
    for &t in &m.checkpoints {
        times.extend(m.increments.iter().map(|h| t + h));
    }
    times.sort_by(f64::total_cmp);
    times.dedup();
    times
}

fn martingale_replica(config: &ExperimentConfig, w: &WeightFunction, seed: u64) -> Result<MartingaleRecord, String> {
    let l = config.initial_local_time;
    let states = two_vertex_checkpoints(w, [l, l], seed, &martingale_times(config)).map_err(|e| e.to_string())?;
    Ok(MartingaleRecord { states })
}

fn envelope_replica(config: &ExperimentConfig, w: &WeightFunction, seed: u64) -> Result<EnvelopeReport, String> {
    let l = config.initial_local_time;
    let horizon = config.effective_horizon();
    let limits = RunLimits { horizon: Some(horizon), max_jumps: Some(config.effective_max_jumps()) };
    let traj = two_vertex_path(w, [l, l], limits, seed).map_err(|e| e.to_string())?;
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(substream_seed(seed, "envelope/interval"));
    let end = traj.horizon();
    let t = open_unit(rng.next_u64()) * end;
    let s = t + open_unit(rng.next_u64()) * (end - t);
    envelope_checks(&traj, w, t, s).map_err(|e| e.to_string())
}

fn restriction_replica(
    config: &ExperimentConfig,
    w: &WeightFunction,
    seed: u64,
) -> Result<Vec<RestrictionCheck>, String> {
    let full = config.effective_graph();
    let initial = InitialLocalTimes::uniform(config.initial_local_time);
    config
        .restriction
        .subset_tops
        .iter()
        .map(|&hi| {
            let b = VertexSet::Segment { lo: 0, hi };
            check_restriction(w, &full, &b, &initial, config.effective_rule(), seed, config.effective_horizon())
                .map_err(|e| e.to_string())
        })
        .collect()
}
