use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{ClockRule, InitialLocalTimes, ProcessError, VertexSet, Walker};
use crate::clocks::ClockBank;
use crate::weights::{WeightFunction, WeightSpec};

/// A jump from `from` to `to` at time `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tau: f64,
    pub from: i64,
    pub to: i64,
}

/// A maximal interval `[start, end)` spent at `vertex`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sojourn {
    pub vertex: i64,
    pub start: f64,
    pub end: f64,
}

impl Sojourn {
    pub fn len(&self) -> f64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        !(self.end > self.start)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: Option<u64>,
    pub config_digest: Option<String>,
}

/// Stopping rule for a simulation: a time horizon, a jump budget, or both.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunLimits {
    pub horizon: Option<f64>,
    pub max_jumps: Option<u64>,
}

impl RunLimits {
    pub fn horizon(t: f64) -> Self {
        Self { horizon: Some(t), max_jumps: None }
    }

    pub fn jumps(n: u64) -> Self {
        Self { horizon: None, max_jumps: Some(n) }
    }

    pub fn validate(&self) -> Result<(), ProcessError> {
        if let Some(h) = self.horizon {
            if !(h > 0.0) {
                return Err(ProcessError::NonPositiveHorizon(h));
            }
        }
        match (self.horizon, self.max_jumps) {
            (None, None) | (None, Some(0)) => Err(ProcessError::NoStoppingRule),
            _ => Ok(()),
        }
    }
}

/// Everything about a trajectory except its event list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub vset: VertexSet,
    pub initial: InitialLocalTimes,
    pub start: i64,
    /// End of the recorded path.
    pub horizon: f64,
    pub requested_horizon: Option<f64>,
    pub max_jumps_hit: bool,
    pub rule: ClockRule,
    pub weight: Option<WeightSpec>,
    pub provenance: Provenance,
}

/// The sample path of one run on `[0, horizon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub meta: TrajectoryMeta,
    pub events: Vec<Event>,
}

/// Runs a walker with clocks from `bank` and records the full path.
///
/// With only a jump budget the path ends at the last jump. With a horizon it
/// ends at the horizon, unless the budget runs out first, which is flagged.
pub fn simulate(
    w: &WeightFunction,
    vset: &VertexSet,
    initial: &InitialLocalTimes,
    rule: ClockRule,
    limits: RunLimits,
    bank: ClockBank,
    provenance: Provenance,
) -> Result<Trajectory, ProcessError> {
    limits.validate()?;
    let mut walker = Walker::new(w, vset, initial, rule, bank)?;
    let horizon = limits.horizon.unwrap_or(f64::INFINITY);
    let budget = limits.max_jumps.unwrap_or(u64::MAX);
    let mut events = Vec::new();
    while (events.len() as u64) < budget {
        match walker.step(horizon) {
            Some(ev) => events.push(ev),
            None => break,
        }
    }
    let end = if walker.time() >= horizon { horizon } else { walker.time() };
    let max_jumps_hit = limits.horizon.is_some() && end < horizon;
    Ok(Trajectory {
        meta: TrajectoryMeta {
            vset: vset.clone(),
            initial: initial.clone(),
            start: walker.start(),
            horizon: end,
            requested_horizon: limits.horizon,
            max_jumps_hit,
            rule,
            weight: w.spec(),
            provenance,
        },
        events,
    })
}

impl Trajectory {
    pub fn horizon(&self) -> f64 {
        self.meta.horizon
    }

    pub fn start(&self) -> i64 {
        self.meta.start
    }

    pub fn initial_local_time(&self, x: i64) -> f64 {
        self.meta.initial.at(x)
    }

    /// Vertex occupied at the end of the path.
    pub fn final_vertex(&self) -> i64 {
        self.events.last().map_or(self.meta.start, |e| e.to)
    }

    /// Sojourns in order; the last one is truncated at the horizon.
    pub fn sojourns(&self) -> impl Iterator<Item = Sojourn> + '_ {
        let n = self.events.len();
        (0..=n).map(move |k| {
            let start = if k == 0 { 0.0 } else { self.events[k - 1].tau };
            let end = if k == n { self.meta.horizon } else { self.events[k].tau };
            let vertex = if k == 0 { self.meta.start } else { self.events[k - 1].to };
            Sojourn { vertex, start, end }
        })
    }

    /// `X_t`, right-continuous.
    pub fn vertex_at(&self, t: f64) -> Result<i64, ProcessError> {
        self.check_time(t)?;
        let k = self.events.partition_point(|e| e.tau <= t);
        Ok(if k == 0 { self.meta.start } else { self.events[k - 1].to })
    }

    fn check_time(&self, t: f64) -> Result<(), ProcessError> {
        if !(t >= 0.0 && t <= self.meta.horizon) {
            return Err(ProcessError::TimeOutOfRange { t, horizon: self.meta.horizon });
        }
        Ok(())
    }

    /// `L(x, t)`: initial value plus time spent at `x` during `[0, t]`.
    pub fn local_time(&self, x: i64, t: f64) -> Result<f64, ProcessError> {
        self.check_time(t)?;
        let mut l = self.initial_local_time(x);
        for s in self.sojourns() {
            if s.start >= t {
                break;
            }
            if s.vertex == x {
                l += s.end.min(t) - s.start;
            }
        }
        Ok(l)
    }

    /// Local times at the horizon of every vertex the path visited.
    pub fn final_local_times(&self) -> BTreeMap<i64, f64> {
        let mut out = BTreeMap::new();
        for s in self.sojourns() {
            *out.entry(s.vertex).or_insert_with(|| self.initial_local_time(s.vertex)) += s.len();
        }
        out
    }

    /// Checks chaining, nearest-neighbour moves inside the vertex set and
    /// non-decreasing jump times within `[0, horizon]`.
    ///
    /// Times are only required to be non-decreasing: a sojourn shorter than
    /// half an ulp of the current time is invisible in floating point.
    pub fn validate(&self) -> Result<(), ProcessError> {
        let vset = &self.meta.vset;
        vset.validate()?;
        if !vset.contains(self.meta.start) {
            return Err(ProcessError::OutsideSet(self.meta.start));
        }
        let mut at = self.meta.start;
        let mut last = 0.0;
        for (k, e) in self.events.iter().enumerate() {
            let bad = |msg: &str| ProcessError::Malformed(format!("event {}: {msg}", k + 1));
            if e.from != at {
                return Err(bad("does not start where the previous event ended"));
            }
            if e.from.abs_diff(e.to) != 1 {
                return Err(bad("not a nearest-neighbour move"));
            }
            if !vset.contains(e.to) {
                return Err(bad("leaves the vertex set"));
            }
            if !(e.tau >= last) || !(e.tau <= self.meta.horizon) {
                return Err(bad("jump time out of order"));
            }
            at = e.to;
            last = e.tau;
        }
        Ok(())
    }

    pub fn events_csv(&self) -> String {
        let mut s = String::from("n,tau,from,to\n");
        for (k, e) in self.events.iter().enumerate() {
            let _ = writeln!(s, "{},{},{},{}", k + 1, e.tau, e.from, e.to);
        }
        s
    }

    pub fn local_times_csv(&self) -> String {
        let mut s = String::from("vertex,L\n");
        for (x, l) in self.final_local_times() {
            let _ = writeln!(s, "{x},{l}");
        }
        s
    }

    /// Rebuilds a trajectory from its event CSV and metadata.
    pub fn from_csv(csv: &str, meta: TrajectoryMeta) -> Result<Self, ProcessError> {
        let mut lines = csv.lines().filter(|l| !l.trim().is_empty());
        match lines.next() {
            Some(h) if h.trim() == "n,tau,from,to" => {}
            _ => return Err(ProcessError::Malformed("missing header n,tau,from,to".into())),
        }
        let mut events = Vec::new();
        for (k, line) in lines.enumerate() {
            let bad = || ProcessError::Malformed(format!("line {}: {line:?}", k + 2));
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 4 {
                return Err(bad());
            }
            let n: usize = fields[0].parse().map_err(|_| bad())?;
            if n != k + 1 {
                return Err(bad());
            }
            events.push(Event {
                tau: fields[1].parse().map_err(|_| bad())?,
                from: fields[2].parse().map_err(|_| bad())?,
                to: fields[3].parse().map_err(|_| bad())?,
            });
        }
        let traj = Trajectory { meta, events };
        traj.validate()?;
        Ok(traj)
    }
}
