//! Shared-clock constructions: coupled pairs on `{0, 1}`, level-crossing
//! times, the stopped first-mover surplus and the restriction principle.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use crate::clocks::{substream_seed, ClockBank, ExpStream};
use crate::process::{
    restrict, simulate, ClockRule, Event, InitialLocalTimes, ProcessError, Provenance, RunLimits, Trajectory,
    TwoVertexChain, VertexSet, Walker,
};
use crate::stats::mean_se;
use crate::weights::WeightFunction;

/// Process driven by the indexed clock family of a [`ClockBank`].
///
/// Engines built from banks with the same master seed read identical values
/// `chi^{(i,j)}_n`; [`Walker::gamma`] exposes the jump counters.
pub type CanonicalEngine = Walker<ClockBank>;

pub fn canonical_engine(
    w: &WeightFunction,
    vset: &VertexSet,
    initial: &InitialLocalTimes,
    rule: ClockRule,
    seed: u64,
) -> Result<CanonicalEngine, ProcessError> {
    Walker::new(w, vset, initial, rule, ClockBank::new(seed))
}

/// The auxiliary `Exp(1)` head start of the starred process.
pub fn head_start(seed: u64) -> f64 {
    ExpStream::from_seed(substream_seed(seed, "A")).next_exp()
}

/// Local times of both processes after `k` jumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoupledRow {
    pub k: u64,
    pub tilde: [f64; 2],
    pub star: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoupledRun {
    pub seed: u64,
    /// `l*_1 - l_1`.
    pub a: f64,
    /// Rows `k = 0..=n_jumps`.
    pub rows: Vec<CoupledRow>,
}

impl CoupledRun {
    /// Indices where the domination fails to be strict: `L~(0) > L*(0)` is
    /// required from the first jump on (both start at 1), `L~(1) < L*(1)` everywhere.
    pub fn violations(&self) -> Vec<u64> {
        self.rows
            .iter()
            .filter(|r| (r.k >= 1 && !(r.tilde[0] > r.star[0])) || !(r.tilde[1] < r.star[1]))
            .map(|r| r.k)
            .collect()
    }

    pub fn csv(&self) -> String {
        let mut out = String::from("k,tilde_L0,tilde_L1,star_L0,star_L1\n");
        for r in &self.rows {
            out.push_str(&format!("{},{:?},{:?},{:?},{:?}\n", r.k, r.tilde[0], r.tilde[1], r.star[0], r.star[1]));
        }
        out
    }
}

fn local_times_by_jump(chain: &mut TwoVertexChain, n_jumps: u64) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(n_jumps as usize + 1);
    out.push(chain.local_times());
    chain.advance_observed(f64::INFINITY, n_jumps, |_, l| {
        out.push(l);
        ControlFlow::Continue(())
    });
    out
}

/// Runs `L~` with `l = (1, 1)` and `L*` with `l = (1, 1 + A)` on clocks from
/// the same seed for `n_jumps` jumps each. `a` replaces the head start drawn
/// from the seed.
pub fn run_coupled_pair(
    w: &WeightFunction,
    seed: u64,
    n_jumps: u64,
    a: Option<f64>,
) -> Result<CoupledRun, ProcessError> {
    let a = a.unwrap_or_else(|| head_start(seed));
    let mut tilde = TwoVertexChain::new(w, [1.0, 1.0], seed)?;
    let mut star = TwoVertexChain::new(w, [1.0, 1.0 + a], seed)?;
    let lt = local_times_by_jump(&mut tilde, n_jumps);
    let ls = local_times_by_jump(&mut star, n_jumps);
    let rows =
        lt.into_iter().zip(ls).enumerate().map(|(k, (tilde, star))| CoupledRow { k: k as u64, tilde, star }).collect();
    Ok(CoupledRun { seed, a, rows })
}

/// First time the local time at `i` reaches `threshold`, solved exactly inside
/// the sojourn where the level is crossed. `None` if not reached by the horizon.
pub fn hitting_time_eta(traj: &Trajectory, i: i64, threshold: f64) -> Option<f64> {
    let mut l = traj.initial_local_time(i);
    if threshold <= l {
        return Some(0.0);
    }
    for s in traj.sojourns() {
        if s.vertex != i {
            continue;
        }
        if l + s.len() >= threshold {
            return Some(s.start + (threshold - l));
        }
        l += s.len();
    }
    None
}

/// `xi(a)` together with `L(0, xi(a))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crossing {
    pub xi: f64,
    pub l0: f64,
}

/// First time the local time at 1 reaches `a`, on a path on `{0, 1}`.
pub fn xi_crossing(traj: &Trajectory, a: f64) -> Result<Option<Crossing>, ProcessError> {
    if !traj.meta.vset.is_two_vertex() {
        return Err(ProcessError::NotTwoVertex);
    }
    Ok(match hitting_time_eta(traj, 1, a) {
        Some(xi) => Some(Crossing { xi, l0: traj.local_time(0, xi)? }),
        None => None,
    })
}

/// One replica of the first-mover experiment on `{0, 1}` with `l = (a, b)`.
///
/// `J(u) = L(0, xi(u))` is followed on the level grid until `L(1)` reaches the
/// last grid level or `J` reaches `cap`, whichever comes first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurplusReplica {
    pub seed: u64,
    /// `J` at the last grid level, or at the level where it reached the cap.
    pub stopped: f64,
    pub capped: bool,
    /// `w(J(u))` on the grid, zero at and after the capping level. The first
    /// entry is the right limit at `b`, after the opening sojourn at 0.
    pub integrand: Vec<f64>,
}

/// Runs one replica. `grid` must be increasing and start at `b`.
pub fn surplus_replica(
    w: &WeightFunction,
    a: f64,
    grid: &[f64],
    cap: f64,
    seed: u64,
) -> Result<SurplusReplica, ProcessError> {
    let b = grid[0];
    let top = *grid.last().expect("non-empty grid");
    let mut chain = TwoVertexChain::new(w, [a, b], seed)?;
    let mut integrand = vec![0.0; grid.len()];
    let mut next = 0;
    let mut stopped = a;
    let mut capped = false;
    chain.advance_observed(f64::INFINITY, u64::MAX, |ev, l| {
        if ev.from == 0 {
            stopped = l[0];
            if l[0] >= cap {
                capped = true;
                return ControlFlow::Break(());
            }
        } else {
            // levels of L(1) crossed during this sojourn see the frozen L(0)
            while next < grid.len() && (grid[next] <= l[1] || next == 0) {
                integrand[next] = w.value(l[0]);
                next += 1;
            }
            if l[1] >= top {
                return ControlFlow::Break(());
            }
        }
        ControlFlow::Continue(())
    });
    Ok(SurplusReplica { seed, stopped, capped, integrand })
}

/// `n` equally spaced levels from `b` to `t`.
pub fn level_grid(b: f64, t: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n).map(|k| if k + 1 == n { t } else { b + (t - b) * k as f64 / (n - 1) as f64 }).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EqMeanCheck {
    pub grid: Vec<f64>,
    /// Monte Carlo mean of `J` stopped at the last level or the cap.
    pub lhs: f64,
    /// `a + 1/w(b) + int_b^t E[w(J(u)); u < cap level] / w(u) du`, trapezoid rule.
    pub rhs: f64,
    pub combined_se: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurplusReport {
    pub a: f64,
    pub b: f64,
    pub cap: f64,
    pub n_replicas: usize,
    pub capped_fraction: f64,
    /// `E[L(0, xi(a)) stopped] - a - (a - b)`: a lower bound for the surplus.
    pub rho_hat: f64,
    pub stderr: f64,
    pub eq_mean_check: EqMeanCheck,
}

impl SurplusReplica {
    /// Trapezoid rule for `int w(J(u)) / w(u) du` over the grid.
    pub fn weighted_integral(&self, w: &WeightFunction, grid: &[f64]) -> f64 {
        grid.windows(2)
            .zip(self.integrand.windows(2))
            .map(|(u, f)| 0.5 * (u[1] - u[0]) * (f[0] / w.value(u[0]) + f[1] / w.value(u[1])))
            .sum()
    }

    pub fn sample(&self, w: &WeightFunction, grid: &[f64]) -> SurplusSample {
        SurplusSample { stopped: self.stopped, capped: self.capped, integral: self.weighted_integral(w, grid) }
    }
}

/// The per-replica numbers a [`SurplusReport`] is built from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurplusSample {
    pub stopped: f64,
    pub capped: bool,
    pub integral: f64,
}

impl SurplusReport {
    pub fn from_replicas(w: &WeightFunction, a: f64, grid: &[f64], cap: f64, reps: &[SurplusReplica]) -> Self {
        let samples: Vec<SurplusSample> = reps.iter().map(|r| r.sample(w, grid)).collect();
        Self::from_samples(w, a, grid, cap, &samples)
    }

    pub fn from_samples(w: &WeightFunction, a: f64, grid: &[f64], cap: f64, samples: &[SurplusSample]) -> Self {
        let b = grid[0];
        let n = samples.len();
        let stopped: Vec<f64> = samples.iter().map(|r| r.stopped).collect();
        let integrals: Vec<f64> = samples.iter().map(|r| r.integral).collect();
        let (lhs, lhs_se) = {
            let m = mean_se(&stopped);
            (m.mean, m.se)
        };
        // per-replica trapezoid sums share the grid, so their mean is the
        // trapezoid rule applied to the mean integrand
        let (int_mean, int_se) = {
            let m = mean_se(&integrals);
            (m.mean, m.se)
        };
        let rhs = a + 1.0 / w.value(b) + int_mean;
        let combined_se = (lhs_se * lhs_se + int_se * int_se).sqrt();
        let top = *grid.last().unwrap();
        SurplusReport {
            a,
            b,
            cap,
            n_replicas: n,
            capped_fraction: samples.iter().filter(|r| r.capped).count() as f64 / n as f64,
            rho_hat: lhs - top - (top - b),
            stderr: lhs_se,
            eq_mean_check: EqMeanCheck {
                grid: grid.to_vec(),
                lhs,
                rhs,
                combined_se,
                pass: (lhs - rhs).abs() <= 3.0 * combined_se,
            },
        }
    }
}

/// Outcome of comparing a restricted path with the extension on `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestrictionCheck {
    pub seed: u64,
    pub b: VertexSet,
    pub t_b: f64,
    pub n_events: usize,
    /// Description of the first disagreement, if any.
    pub mismatch: Option<String>,
}

/// Runs the process on `full` and its extension on `b` with clocks from the
/// same seed and compares them up to the time the full path spends in `b`.
///
/// Jump sequences and the local time left behind at each jump must agree
/// exactly; jump times, which the time change recomputes through a different
/// sum, must agree to `1e-9` relative.
pub fn check_restriction(
    w: &WeightFunction,
    full: &VertexSet,
    b: &VertexSet,
    initial: &InitialLocalTimes,
    rule: ClockRule,
    seed: u64,
    horizon: f64,
) -> Result<RestrictionCheck, ProcessError> {
    let mut walker = canonical_engine(w, full, initial, rule, seed)?;
    let mut events = Vec::new();
    let mut left_behind = Vec::new();
    while let Some(ev) = walker.step(horizon) {
        if b.contains(ev.from) && b.contains(ev.to) {
            left_behind.push(walker.local_time(ev.from));
        }
        events.push(ev);
    }
    let traj = Trajectory {
        meta: crate::process::TrajectoryMeta {
            vset: full.clone(),
            initial: initial.clone(),
            start: walker.start(),
            horizon,
            requested_horizon: Some(horizon),
            max_jumps_hit: false,
            rule,
            weight: w.spec(),
            provenance: Provenance { seed: Some(seed), config_digest: None },
        },
        events,
    };
    let r = restrict(&traj, b)?;
    let mut ext = canonical_engine(w, b, initial, rule, seed)?;
    let mut mismatch = None;
    if r.start != Some(ext.start()) {
        mismatch = Some(format!("start {:?} vs extension start {}", r.start, ext.start()));
    }
    let close = |x: f64, y: f64| (x - y).abs() <= 1e-9 * x.abs().max(y.abs()).max(1.0);
    let mut k = 0;
    while mismatch.is_none() {
        let Some(ev) = ext.step(f64::INFINITY) else {
            break;
        };
        if k == r.events.len() {
            if !(ev.tau >= r.t_b || close(ev.tau, r.t_b)) {
                mismatch = Some(format!("extension jumps at {} before T_B = {}", ev.tau, r.t_b));
            }
            break;
        }
        let want: Event = r.events[k];
        if ev.from != want.from || ev.to != want.to {
            mismatch = Some(format!("jump {k}: {}->{} vs {}->{}", want.from, want.to, ev.from, ev.to));
        } else if !close(ev.tau, want.tau) {
            mismatch = Some(format!("jump {k}: time {} vs {}", want.tau, ev.tau));
        } else if ext.local_time(ev.from).to_bits() != left_behind[k].to_bits() {
            mismatch = Some(format!("jump {k}: L({}) {} vs {}", ev.from, left_behind[k], ext.local_time(ev.from)));
        }
        k += 1;
    }
    Ok(RestrictionCheck { seed, b: b.clone(), t_b: r.t_b, n_events: r.events.len(), mismatch })
}

/// Full path on `{0, 1}` with unit initial local times, for fixtures and the CLI.
pub fn two_vertex_path(
    w: &WeightFunction,
    initial: [f64; 2],
    limits: RunLimits,
    seed: u64,
) -> Result<Trajectory, ProcessError> {
    simulate(
        w,
        &VertexSet::two_vertex(),
        &InitialLocalTimes::pair(initial[0], initial[1]),
        ClockRule::Literal,
        limits,
        ClockBank::new(seed),
        Provenance { seed: Some(seed), config_digest: None },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clocks::{DirectedEdge, ExponentialSource, TableSource};
    use crate::process::TrajectoryMeta;

    fn p2() -> WeightFunction {
        WeightFunction::power(2.0).unwrap()
    }

    fn fixture(events: &[(f64, i64, i64)], horizon: f64, initial: InitialLocalTimes) -> Trajectory {
        Trajectory {
            meta: TrajectoryMeta {
                vset: VertexSet::two_vertex(),
                initial,
                start: 0,
                horizon,
                requested_horizon: Some(horizon),
                max_jumps_hit: false,
                rule: ClockRule::Literal,
                weight: None,
                provenance: Provenance::default(),
            },
            events: events.iter().map(|&(tau, from, to)| Event { tau, from, to }).collect(),
        }
    }

    #[test]
    fn gamma_counts_traversals() {
        let mut e =
            canonical_engine(&p2(), &VertexSet::two_vertex(), &InitialLocalTimes::default(), ClockRule::Literal, 3)
                .unwrap();
        for _ in 0..3 {
            e.step(f64::INFINITY).unwrap();
        }
        assert_eq!(e.gamma(DirectedEdge::step(0, true)), 3);
        assert_eq!(e.gamma(DirectedEdge::step(1, false)), 2);
    }

    #[test]
    fn engines_on_one_seed_agree() {
        let run = |seed| {
            let mut e =
                canonical_engine(&p2(), &VertexSet::FullLine, &InitialLocalTimes::default(), ClockRule::Literal, seed)
                    .unwrap();
            (0..300).map(|_| e.step(f64::INFINITY).unwrap()).collect::<Vec<_>>()
        };
        assert_eq!(run(11), run(11));
        assert_ne!(run(11), run(12));
    }

    #[test]
    fn zero_head_start_collapses_the_pair() {
        let run = run_coupled_pair(&WeightFunction::linear(), 5, 100, Some(0.0)).unwrap();
        assert!(run.rows.iter().all(|r| r.tilde == r.star));
    }

    #[test]
    fn domination_matches_the_recursion() {
        // oracle: the alternating recursions written out from the raw clocks
        for seed in 0..50 {
            for w in [WeightFunction::linear(), p2()] {
                let run = run_coupled_pair(&w, seed, 200, None).unwrap();
                assert!(run.violations().is_empty(), "seed {seed}");
                let mut bank = ClockBank::new(seed);
                let mut lt = [1.0, 1.0];
                let mut ls = [1.0, 1.0 + run.a];
                for k in 1..=200u64 {
                    let (i, n) = if k % 2 == 1 { (0, k.div_ceil(2)) } else { (1, k / 2) };
                    let chi = bank.exponential(DirectedEdge::step(i as i64, i == 0), n);
                    lt[i] += chi / w.value(lt[1 - i]);
                    ls[i] += chi / w.value(ls[1 - i]);
                    let row = run.rows[k as usize];
                    assert_eq!(row.tilde, lt);
                    assert_eq!(row.star, ls);
                }
            }
        }
    }

    #[test]
    fn coupled_csv_shape() {
        let run = run_coupled_pair(&p2(), 1, 4, None).unwrap();
        let csv = run.csv();
        assert!(csv.starts_with("k,tilde_L0,tilde_L1,star_L0,star_L1\n0,1.0,1.0,1.0,"));
        assert_eq!(csv.lines().count(), 6);
    }

    #[test]
    fn hitting_times_by_hand() {
        // sojourn at 0 on [0, 2), at 1 on [2, 3), at 0 from 3
        let t = fixture(&[(2.0, 0, 1), (3.0, 1, 0)], 10.0, InitialLocalTimes::default());
        assert_eq!(hitting_time_eta(&t, 0, 1.0), Some(0.0));
        assert_eq!(hitting_time_eta(&t, 0, 2.5), Some(1.5));
        assert_eq!(hitting_time_eta(&t, 0, 3.5), Some(3.5));
        assert_eq!(hitting_time_eta(&t, 1, 2.0), Some(3.0));
        assert_eq!(hitting_time_eta(&t, 1, 2.5), None);
    }

    #[test]
    fn xi_by_hand() {
        let t = fixture(&[(1.0, 0, 1), (2.0, 1, 0)], 3.0, InitialLocalTimes::default());
        assert_eq!(xi_crossing(&t, 1.0).unwrap(), Some(Crossing { xi: 0.0, l0: 1.0 }));
        assert_eq!(xi_crossing(&t, 1.5).unwrap(), Some(Crossing { xi: 1.5, l0: 2.0 }));
        assert_eq!(xi_crossing(&t, 2.5).unwrap(), None);
    }

    #[test]
    fn eta_is_monotone_on_random_paths() {
        for seed in 0..20 {
            let t = two_vertex_path(&WeightFunction::linear(), [1.0, 1.0], RunLimits::horizon(30.0), seed).unwrap();
            for i in [0, 1] {
                let mut prev = 0.0;
                for k in 0..60 {
                    let th = 1.0 + 0.25 * k as f64;
                    match hitting_time_eta(&t, i, th) {
                        Some(h) => {
                            assert!(h >= prev);
                            assert!((t.local_time(i, h).unwrap() - th).abs() < 1e-9);
                            prev = h;
                        }
                        None => prev = f64::INFINITY,
                    }
                }
            }
        }
    }

    #[test]
    fn surplus_replica_matches_path_functionals() {
        let w = p2();
        let grid = level_grid(2.0, 3.0, 9);
        for seed in 0..40 {
            let rep = surplus_replica(&w, 3.0, &grid, 1e3, seed).unwrap();
            let t = two_vertex_path(&w, [3.0, 2.0], RunLimits::horizon(2e3), seed).unwrap();
            let Some(c) = xi_crossing(&t, 3.0).unwrap() else {
                assert!(rep.capped);
                continue;
            };
            assert!(!rep.capped);
            assert!((rep.stopped - c.l0).abs() <= 1e-9 * c.l0);
            for (k, &u) in grid.iter().enumerate().skip(1) {
                let c = xi_crossing(&t, u).unwrap().unwrap();
                assert!((rep.integrand[k] - w.value(c.l0)).abs() <= 1e-9 * rep.integrand[k], "seed {seed} level {u}");
            }
            // right limit at b: after the opening sojourn at 0
            let first = t.events[0].tau;
            assert_eq!(rep.integrand[0], w.value(3.0 + first));
        }
    }

    #[test]
    fn capping_stops_early() {
        let grid = level_grid(2.0, 3.0, 5);
        let rep = surplus_replica(&p2(), 3.0, &grid, 3.0, 0).unwrap();
        assert!(rep.capped);
        assert!(rep.stopped >= 3.0);
        assert!(rep.integrand.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn restriction_holds_for_accumulated_clocks() {
        let b_sets =
            [VertexSet::two_vertex(), VertexSet::Segment { lo: 0, hi: 2 }, VertexSet::Segment { lo: 0, hi: 5 }];
        for w in [WeightFunction::linear(), p2()] {
            for b in &b_sets {
                for seed in 0..30 {
                    let c = check_restriction(
                        &w,
                        &VertexSet::HalfLinePlus,
                        b,
                        &InitialLocalTimes::default(),
                        ClockRule::Accumulated,
                        seed,
                        60.0,
                    )
                    .unwrap();
                    assert_eq!(c.mismatch, None, "{} on {b} seed {seed}", w.name());
                }
            }
        }
    }

    #[test]
    fn other_rules_break_restriction_pathwise() {
        for rule in [ClockRule::Literal, ClockRule::Fresh] {
            let broken = (0..30)
                .filter(|&seed| {
                    check_restriction(
                        &WeightFunction::linear(),
                        &VertexSet::HalfLinePlus,
                        &VertexSet::two_vertex(),
                        &InitialLocalTimes::default(),
                        rule,
                        seed,
                        60.0,
                    )
                    .unwrap()
                    .mismatch
                    .is_some()
                })
                .count();
            assert!(broken > 0, "{rule:?}");
        }
    }

    #[test]
    fn restriction_with_table_clocks() {
        // 0 -> 1 -> 2 -> 1 -> 0: the excursion to 2 must not disturb the 1 -> 0 clock
        let mut src = TableSource::with_default(5.0);
        src.insert(DirectedEdge::step(0, true), 1, 1.0)
            .insert(DirectedEdge::step(1, true), 1, 0.25)
            .insert(DirectedEdge::step(1, false), 1, 2.0)
            .insert(DirectedEdge::step(2, false), 1, 0.25);
        let mut full = Walker::new(
            &p2(),
            &VertexSet::HalfLinePlus,
            &InitialLocalTimes::default(),
            ClockRule::Accumulated,
            src.clone(),
        )
        .unwrap();
        let evs: Vec<_> = (0..4).map(|_| full.step(f64::INFINITY).unwrap()).collect();
        let path: Vec<_> = evs.iter().map(|e| e.to).collect();
        assert_eq!(path, vec![1, 2, 1, 0]);
        let mut ext =
            Walker::new(&p2(), &VertexSet::two_vertex(), &InitialLocalTimes::default(), ClockRule::Accumulated, src)
                .unwrap();
        ext.step(f64::INFINITY).unwrap();
        let back = ext.step(f64::INFINITY).unwrap();
        assert_eq!(back.to, 0);
        // time at 1 before returning is the same in both: 2 / w(2) = 0.5
        assert_eq!(ext.local_time(1), full.local_time(1));
    }
}
