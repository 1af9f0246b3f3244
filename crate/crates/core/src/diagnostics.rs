//! Functionals of the process on `{0, 1}`: the compensated indicator
//! martingale `M`, the increasing process `A = -1/(W0 W1)`, the head-integral
//! difference `H`, `Z = H - 1{X=1}/(W0 W1)` and the bounds that tie them.
//!
//! Within a sojourn only the occupied vertex's local time moves, at slope one,
//! so every time integral reduces to an integral of `1/w` (or a constant)
//! along a ramp in local time. No time stepping is involved.

use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::process::{ProcessError, Trajectory, TwoVertexChain};
use crate::quadrature;
use crate::weights::{WeightError, WeightFunction};

/// Relative accuracy of ramp integrals in the residual checks.
const RAMP_TOL: f64 = 1e-13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Process(#[from] ProcessError),
    #[error(transparent)]
    Weight(#[from] WeightError),
    #[error("martingale checks need at least {min} runs (got {n})")]
    InsufficientEnsemble { n: usize, min: usize },
    #[error("need 0 <= t <= s <= horizon (got t = {t}, s = {s}, horizon = {horizon})")]
    BadInterval { t: f64, s: f64, horizon: f64 },
    #[error("ramp integral of 1/w on [{lo}, {hi}] did not converge")]
    Quadrature { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Start,
    Jump,
    Grid,
    End,
}

/// Values of every functional at one time; right-continuous at jumps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub t: f64,
    pub kind: RowKind,
    pub x: u8,
    pub l0: f64,
    pub l1: f64,
    pub w0: f64,
    pub w1: f64,
    pub h: f64,
    pub z: f64,
    pub m: f64,
    pub a: f64,
    pub angle_m: f64,
    /// `int_{L0}^inf w^-3 + int_{L1}^inf w^-3`, `+inf` if that diverges.
    pub alpha: f64,
    pub beta: f64,
}

impl SeriesRow {
    /// Opposite-vertex weight, the jump rate out of the current vertex.
    pub fn lambda(&self) -> f64 {
        if self.x == 0 {
            self.w1
        } else {
            self.w0
        }
    }

    /// `min(W0, W1) / max(W0, W1)`.
    pub fn ratio(&self) -> f64 {
        self.w0.min(self.w1) / self.w0.max(self.w1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticSeries {
    pub weight: String,
    pub rows: Vec<SeriesRow>,
}

/// Running state of the functionals along a path on `{0, 1}`.
#[derive(Debug, Clone)]
pub struct SeriesBuilder {
    w: WeightFunction,
    l: [f64; 2],
    x: usize,
    t: f64,
    // int_0^t (W(1,u) 1{X=0} - W(0,u) 1{X=1}) du
    comp: f64,
    angle: f64,
    with_alpha: bool,
}

impl SeriesBuilder {
    pub fn new(w: &WeightFunction, initial: [f64; 2], start: usize) -> Self {
        Self { w: w.clone(), l: initial, x: start, t: 0.0, comp: 0.0, angle: 0.0, with_alpha: true }
    }

    /// Skips the `alpha` column, which costs two tail integrals per row.
    pub fn without_alpha(mut self) -> Self {
        self.with_alpha = false;
        self
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn vertex(&self) -> usize {
        self.x
    }

    pub fn local_times(&self) -> [f64; 2] {
        self.l
    }

    pub fn martingale(&self) -> f64 {
        self.x as f64 - self.comp
    }

    /// Lets the process sit at its current vertex until `t`.
    #[inline]
    pub fn advance(&mut self, t: f64) {
        let dt = t - self.t;
        if dt > 0.0 {
            let other = self.w.value(self.l[1 - self.x]);
            self.l[self.x] += dt;
            self.angle += other * dt;
            if self.x == 0 {
                self.comp += other * dt;
            } else {
                self.comp -= other * dt;
            }
            self.t = t;
        }
    }

    /// Advances to `t` and jumps to the other vertex.
    #[inline]
    pub fn jump_at(&mut self, t: f64) {
        self.advance(t);
        self.x = 1 - self.x;
    }

    pub fn row(&self, kind: RowKind) -> Result<SeriesRow, WeightError> {
        let w0 = self.w.value(self.l[0]);
        let w1 = self.w.value(self.l[1]);
        let beta = 1.0 / (w0 * w1);
        let h = self.w.integral(self.l[1], self.l[0])?;
        let ind = self.x as f64;
        let alpha = if self.with_alpha {
            self.w.tail_integral_pow(self.l[0], 3.0)? + self.w.tail_integral_pow(self.l[1], 3.0)?
        } else {
            f64::NAN
        };
        Ok(SeriesRow {
            t: self.t,
            kind,
            x: self.x as u8,
            l0: self.l[0],
            l1: self.l[1],
            w0,
            w1,
            h,
            z: h - ind * beta,
            m: ind - self.comp,
            a: -beta,
            angle_m: self.angle,
            alpha,
            beta,
        })
    }
}

fn two_vertex_start(traj: &Trajectory) -> Result<([f64; 2], usize), ProcessError> {
    if !traj.meta.vset.is_two_vertex() {
        return Err(ProcessError::NotTwoVertex);
    }
    let initial = [traj.initial_local_time(0), traj.initial_local_time(1)];
    Ok((initial, traj.start() as usize))
}

/// Evaluates every functional at time 0, at each jump, at each grid time
/// inside the path and at the horizon.
pub fn compute_series(
    traj: &Trajectory,
    w: &WeightFunction,
    grid: &[f64],
) -> Result<DiagnosticSeries, DiagnosticsError> {
    let (initial, start) = two_vertex_start(traj)?;
    let mut grid: Vec<f64> = grid.iter().copied().filter(|&g| g >= 0.0 && g <= traj.horizon()).collect();
    grid.sort_by(f64::total_cmp);
    let mut b = SeriesBuilder::new(w, initial, start);
    let mut rows = vec![b.row(RowKind::Start)?];
    let mut g = grid.iter().peekable();
    for ev in &traj.events {
        while let Some(&&gt) = g.peek() {
            if gt >= ev.tau {
                break;
            }
            b.advance(gt);
            rows.push(b.row(RowKind::Grid)?);
            g.next();
        }
        b.jump_at(ev.tau);
        rows.push(b.row(RowKind::Jump)?);
    }
    for &gt in g {
        b.advance(gt);
        rows.push(b.row(RowKind::Grid)?);
    }
    if traj.horizon() > b.time() {
        b.advance(traj.horizon());
        rows.push(b.row(RowKind::End)?);
    }
    Ok(DiagnosticSeries { weight: w.name(), rows })
}

impl DiagnosticSeries {
    pub fn csv(&self) -> String {
        let mut out = String::from("t,W0,W1,H,Z,M,A,angleM,alpha,beta,grid\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{:?},{}\n",
                r.t,
                r.w0,
                r.w1,
                r.h,
                r.z,
                r.m,
                r.a,
                r.angle_m,
                r.alpha,
                r.beta,
                (r.kind == RowKind::Grid) as u8
            ));
        }
        out
    }

    /// Last row at or before `t`.
    pub fn at(&self, t: f64) -> Option<&SeriesRow> {
        let k = self.rows.partition_point(|r| r.t <= t);
        k.checked_sub(1).map(|k| &self.rows[k])
    }

    /// Running minimum of `min(W0, W1) / max(W0, W1)` alongside its value.
    pub fn ratio_series(&self) -> Vec<(f64, f64, f64)> {
        let mut min = f64::INFINITY;
        self.rows
            .iter()
            .map(|r| {
                let q = r.ratio();
                min = min.min(q);
                (r.t, q, min)
            })
            .collect()
    }
}

fn ramp(w: &WeightFunction, lo: f64, hi: f64) -> Result<f64, DiagnosticsError> {
    if hi <= lo {
        return Ok(0.0);
    }
    let est = quadrature::integrate(|u| 1.0 / w.value(u), lo, hi, 0.0, RAMP_TOL);
    if est.converged {
        Ok(est.value)
    } else {
        Err(DiagnosticsError::Quadrature { lo, hi })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub max_abs: f64,
    /// `max(1, max |H|)`.
    pub scale: f64,
    pub relative: f64,
}

/// Largest deviation from the decomposition
/// `H = 1{X=1}/(W0 W1) + int 1{X-=1} dA - int dM / (W0 W1)(u-)`.
///
/// The two stochastic integrals are rebuilt from the `M`, `A` and state
/// columns: between consecutive rows `M` has a constant drift and at most one
/// unit jump, and the integrand of `dM` is integrated along the ramp of the
/// moving local time.
pub fn decomposition_residual(series: &DiagnosticSeries, w: &WeightFunction) -> Result<Residual, DiagnosticsError> {
    let mut fv = 0.0;
    let mut mart = 0.0;
    let mut max_abs: f64 = 0.0;
    let mut max_h: f64 = 0.0;
    let mut prev: Option<&SeriesRow> = None;
    for r in &series.rows {
        if let Some(p) = prev {
            let jump = r.x as f64 - p.x as f64;
            let len = r.t - p.t;
            let dm_cont = r.m - p.m - jump;
            if len > 0.0 {
                // only the occupied vertex's weight moves; 1/(W0 W1) integrates
                // to (1 / W_other) int_{ramp} 1/w
                let (lo, hi, other) = if p.x == 0 { (p.l0, r.l0, p.w1) } else { (p.l1, r.l1, p.w0) };
                mart += dm_cont / len * ramp(w, lo, hi)? / other;
            }
            if jump != 0.0 {
                mart += jump * r.beta;
            }
            if p.x == 1 {
                fv += r.a - p.a;
            }
        }
        let rhs = r.x as f64 * r.beta + fv - mart;
        max_abs = max_abs.max((r.h - rhs).abs());
        max_h = max_h.max(r.h.abs());
        prev = Some(r);
    }
    let scale = max_h.max(1.0);
    Ok(Residual { max_abs, scale, relative: max_abs / scale })
}

/// Pointwise bounds that hold along every path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwiseChecks {
    /// Events where `|Delta Z| > beta`.
    pub jump_violations: usize,
    /// Rows where `|int_t^T 1{X-=1} dA| > beta_t`.
    pub fv_violations: usize,
    /// Rows inside `1/k <= W1/W0 <= k` where `G^2 Lambda` leaves `[alpha~/k, k alpha~]`.
    pub sandwich_violations: usize,
    pub sandwich_rows: usize,
    pub a_monotone: bool,
    pub angle_monotone: bool,
}

impl PathwiseChecks {
    pub fn pass(&self) -> bool {
        self.jump_violations == 0
            && self.fv_violations == 0
            && self.sandwich_violations == 0
            && self.a_monotone
            && self.angle_monotone
    }
}

pub fn pathwise_checks(series: &DiagnosticSeries, k: f64) -> PathwiseChecks {
    let rows = &series.rows;
    let slack = |v: f64| v * (1.0 + 1e-12) + 1e-15;
    let mut jump_violations = 0;
    let mut a_monotone = true;
    let mut angle_monotone = true;
    // int_0^t 1{X-=1} dA at each row
    let mut fv = Vec::with_capacity(rows.len());
    let mut acc = 0.0;
    for (i, r) in rows.iter().enumerate() {
        if i > 0 {
            let p = &rows[i - 1];
            if p.x == 1 {
                acc += r.a - p.a;
            }
            if r.x != p.x {
                let z_left = r.h - p.x as f64 * r.beta;
                if (r.z - z_left).abs() > slack(r.beta) + 4.0 * f64::EPSILON * r.h.abs() {
                    jump_violations += 1;
                }
            }
            a_monotone &= r.a >= p.a;
            angle_monotone &= r.angle_m >= p.angle_m;
        }
        fv.push(acc);
    }
    let total = acc;
    let fv_violations = rows.iter().zip(&fv).filter(|(r, &f)| (total - f).abs() > slack(r.beta)).count();
    let mut sandwich_rows = 0;
    let mut sandwich_violations = 0;
    for r in rows {
        let q = r.w1 / r.w0;
        if q < 1.0 / k || q > k {
            continue;
        }
        sandwich_rows += 1;
        let g2l = r.lambda() * r.beta * r.beta;
        let tilde = if r.x == 0 { 1.0 / r.w0.powi(3) } else { 1.0 / r.w1.powi(3) };
        if g2l < tilde / k * (1.0 - 1e-12) || g2l > k * tilde * (1.0 + 1e-12) {
            sandwich_violations += 1;
        }
    }
    PathwiseChecks { jump_violations, fv_violations, sandwich_violations, sandwich_rows, a_monotone, angle_monotone }
}

/// `(W0 W1)^{-p/2} / int_{min L}^inf w^{-q}` at each row.
pub fn domination_ratio(
    series: &DiagnosticSeries,
    w: &WeightFunction,
    p: f64,
    q: f64,
) -> Result<Vec<f64>, WeightError> {
    series.rows.iter().map(|r| Ok((r.w0 * r.w1).powf(-p / 2.0) / w.tail_integral_pow(r.l0.min(r.l1), q)?)).collect()
}

/// Both sides of the two envelope inequalities for `int_t^s G dM`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeReport {
    pub t: f64,
    pub s: f64,
    pub integral: f64,
    pub lower_lhs: f64,
    pub lower_rhs: f64,
    pub lower_slack: f64,
    /// `None` when the tail integral diverges and the upper bound is vacuous.
    pub upper_lhs: Option<f64>,
    pub upper_rhs: Option<f64>,
    pub upper_slack: Option<f64>,
    pub pass: bool,
}

/// Evaluates `int_t^s G_{u-} dM_u` with `G = -1/(W0 W1)` directly from the
/// path and compares it with the lower and upper envelopes.
pub fn envelope_checks(
    traj: &Trajectory,
    w: &WeightFunction,
    t: f64,
    s: f64,
) -> Result<EnvelopeReport, DiagnosticsError> {
    if !(0.0 <= t && t <= s && s <= traj.horizon()) {
        return Err(DiagnosticsError::BadInterval { t, s, horizon: traj.horizon() });
    }
    let (initial, start) = two_vertex_start(traj)?;
    let mut b = SeriesBuilder::new(w, initial, start).without_alpha();
    let mut events = traj.events.iter().peekable();
    while let Some(ev) = events.next_if(|e| e.tau <= t) {
        b.jump_at(ev.tau);
    }
    b.advance(t);
    let at_t = b.row(RowKind::Grid)?;
    // continuous part: int (1{X=0}/W0 - 1{X=1}/W1) du; jumps: Delta M * G(u-)
    let mut drift = 0.0;
    let mut jumps = 0.0;
    let segment = |b: &SeriesBuilder, to: f64| -> Result<f64, DiagnosticsError> {
        let x = b.vertex();
        let l = b.local_times()[x];
        let v = ramp(w, l, l + (to - b.time()))?;
        Ok(if x == 0 { v } else { -v })
    };
    while let Some(ev) = events.next_if(|e| e.tau <= s) {
        drift += segment(&b, ev.tau)?;
        b.jump_at(ev.tau);
        let r = b.row(RowKind::Jump)?;
        let dm = if r.x == 1 { 1.0 } else { -1.0 };
        jumps -= dm * r.beta;
    }
    drift += segment(&b, s)?;
    let integral = drift + jumps;
    let beta_t = at_t.beta;
    let lower_lhs = integral * integral;
    let lower_rhs = 0.5 * drift * drift - 4.0 * beta_t * beta_t;
    let lower_slack = lower_lhs - lower_rhs;
    let tail = w.tail_integral(at_t.l0.min(at_t.l1))?;
    let (upper_lhs, upper_rhs, upper_slack) = if tail.is_finite() {
        let rhs = 2.0 * tail + 2.0 * beta_t;
        (Some(integral.abs()), Some(rhs), Some(rhs - integral.abs()))
    } else {
        (None, None, None)
    };
    let pass = lower_slack >= 0.0 && upper_slack.is_none_or(|v| v >= 0.0);
    Ok(EnvelopeReport { t, s, integral, lower_lhs, lower_rhs, lower_slack, upper_lhs, upper_rhs, upper_slack, pass })
}

/// State of one run at a checkpoint time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CheckpointState {
    pub t: f64,
    pub x: u8,
    pub l0: f64,
    pub l1: f64,
    pub m: f64,
    pub angle_m: f64,
}

/// Runs the chain on `{0, 1}` from `initial` and records the state at each
/// (sorted) checkpoint.
pub fn two_vertex_checkpoints(
    w: &WeightFunction,
    initial: [f64; 2],
    seed: u64,
    checkpoints: &[f64],
) -> Result<Vec<CheckpointState>, DiagnosticsError> {
    let mut chain = TwoVertexChain::new(w, initial, seed)?;
    let mut b = SeriesBuilder::new(w, initial, 0).without_alpha();
    let mut out = Vec::with_capacity(checkpoints.len());
    for &t in checkpoints {
        chain.advance_observed(t, u64::MAX, |ev, _| {
            b.jump_at(ev.tau);
            ControlFlow::Continue(())
        });
        b.advance(t);
        let l = b.local_times();
        out.push(CheckpointState { t, x: b.vertex() as u8, l0: l[0], l1: l[1], m: b.martingale(), angle_m: b.angle });
    }
    Ok(out)
}

/// `P(X_{t+h} = 1 | state at t)` up to `O(h^3)`: at most one jump in `(t, t + h]`.
fn prob_at_one(w: &WeightFunction, s: &CheckpointState, h: f64) -> f64 {
    // leave the current vertex at rate a; once across, return at rate b(u)
    let (a, l_here) = if s.x == 0 { (w.value(s.l1), s.l0) } else { (w.value(s.l0), s.l1) };
    let one_jump =
        quadrature::gauss_legendre_20(|u| a * (-a * u).exp() * (-w.value(l_here + u) * (h - u)).exp(), 0.0, h);
    if s.x == 0 {
        one_jump
    } else {
        1.0 - one_jump
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftEstimate {
    pub h: f64,
    /// Mean of `P(X_{t+h}=1 | F_t) - 1{X_t=1} - Pi(t) h` over runs.
    pub conditional_mean: f64,
    /// `|conditional_mean| / h`.
    pub ratio: f64,
    /// Mean and standard error of the raw increment `1{X_{t+h}=1} - 1{X_t=1} - Pi(t) h`.
    pub raw_mean: Option<f64>,
    pub raw_se: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointReport {
    pub t: f64,
    pub n: usize,
    pub mean_m: f64,
    pub se_m: f64,
    pub mean_m2: f64,
    pub mean_angle: f64,
    pub combined_se: f64,
    pub mean_zero_pass: bool,
    pub isometry_pass: bool,
    pub drift: Vec<DriftEstimate>,
    pub drift_pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    pub checkpoints: Vec<CheckpointReport>,
    pub pass: bool,
}

pub const MIN_MARTINGALE_RUNS: usize = 1000;

/// Mean-zero, isometry and short-increment drift checks at each checkpoint.
///
/// `runs[r]` holds run `r`'s states at the times in `checkpoints`, and, when
/// available, at `t + h` for each `h` in `hs` (looked up by time). The drift
/// check compares the exact one-jump transition probability with the
/// compensator `Pi(t) h`; the gap must shrink faster than `h`.
pub fn martingale_checks(
    w: &WeightFunction,
    runs: &[Vec<CheckpointState>],
    checkpoints: &[f64],
    hs: &[f64],
) -> Result<MartingaleReport, DiagnosticsError> {
    if runs.len() < MIN_MARTINGALE_RUNS {
        return Err(DiagnosticsError::InsufficientEnsemble { n: runs.len(), min: MIN_MARTINGALE_RUNS });
    }
    let find = |run: &[CheckpointState], t: f64| run.iter().find(|s| s.t == t).copied();
    let mut reports = Vec::new();
    for &t in checkpoints {
        let states: Vec<CheckpointState> = runs.iter().filter_map(|r| find(r, t)).collect();
        let m: Vec<f64> = states.iter().map(|s| s.m).collect();
        let m2: Vec<f64> = states.iter().map(|s| s.m * s.m).collect();
        let ang: Vec<f64> = states.iter().map(|s| s.angle_m).collect();
        let sm = crate::stats::mean_se(&m);
        let sm2 = crate::stats::mean_se(&m2);
        let sa = crate::stats::mean_se(&ang);
        let combined_se = crate::stats::combined_se(sm2.se, sa.se);
        let mut drift = Vec::new();
        for &h in hs {
            let rb: Vec<f64> = states
                .iter()
                .map(|s| {
                    let pi = if s.x == 0 { w.value(s.l1) } else { -w.value(s.l0) };
                    prob_at_one(w, s, h) - s.x as f64 - pi * h
                })
                .collect();
            let raw: Vec<f64> = runs
                .iter()
                .filter_map(|r| {
                    let (s, later) = (find(r, t)?, find(r, t + h)?);
                    let pi = if s.x == 0 { w.value(s.l1) } else { -w.value(s.l0) };
                    Some(later.x as f64 - s.x as f64 - pi * h)
                })
                .collect();
            let conditional_mean = crate::stats::mean_se(&rb).mean;
            let raw_stats = (!raw.is_empty()).then(|| crate::stats::mean_se(&raw));
            drift.push(DriftEstimate {
                h,
                conditional_mean,
                ratio: conditional_mean.abs() / h,
                raw_mean: raw_stats.map(|s| s.mean),
                raw_se: raw_stats.map(|s| s.se),
            });
        }
        let mut by_h = drift.clone();
        by_h.sort_by(|a, b| b.h.total_cmp(&a.h));
        let drift_pass = by_h.windows(2).all(|p| p[1].ratio < p[0].ratio || p[0].ratio == 0.0);
        reports.push(CheckpointReport {
            t,
            n: states.len(),
            mean_m: sm.mean,
            se_m: sm.se,
            mean_m2: sm2.mean,
            mean_angle: sa.mean,
            combined_se,
            mean_zero_pass: sm.mean.abs() <= 3.0 * sm.se,
            isometry_pass: (sm2.mean - sa.mean).abs() <= 3.0 * combined_se,
            drift,
            drift_pass,
        });
    }
    let pass = reports.iter().all(|r| r.mean_zero_pass && r.isometry_pass && r.drift_pass);
    Ok(MartingaleReport { checkpoints: reports, pass })
}
