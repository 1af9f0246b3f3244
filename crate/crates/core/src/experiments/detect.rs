//! Finite-horizon detectors for localization, recurrence and transience on
//! the line. All three read a [`LineSummary`], which is collected in a single
//! pass over the path, either while a [`LineChain`] runs or from a stored
//! [`Trajectory`].

use std::collections::BTreeMap;
use std::ops::ControlFlow;

use serde::{Deserialize, Serialize};

use super::config::DetectorParams;
use crate::process::{Event, LineChain, Stop, Trajectory};

/// Probe-set state at one checkpoint time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSnapshot {
    pub t: f64,
    /// Arrivals at each probe, counting the start as a visit.
    pub visits: Vec<u64>,
    pub local_times: Vec<f64>,
}

/// Local time of a vertex at the window start and at the horizon.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowGain {
    pub vertex: i64,
    pub at_start: f64,
    pub at_end: f64,
}

impl WindowGain {
    pub fn gain(&self) -> f64 {
        self.at_end - self.at_start
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineSummary {
    pub horizon: f64,
    pub start: i64,
    pub n_events: u64,
    /// The run stopped on its jump budget before the horizon.
    pub censored: bool,
    pub probes: Vec<i64>,
    /// Snapshots at a quarter, half and all of the horizon.
    pub snapshots: Vec<ProbeSnapshot>,
    pub window_start: f64,
    pub window_events: u64,
    /// Every vertex occupied during the final window, in order.
    pub window: Vec<WindowGain>,
    /// Last time the walk sat at its start vertex.
    pub last_at_start: f64,
    pub max_displacement_at_window_start: u64,
    pub max_displacement: u64,
}

/// Event-by-event bookkeeping behind [`LineSummary`].
struct Tracker {
    start: i64,
    probes: Vec<i64>,
    visits: Vec<u64>,
    window_start: f64,
    in_window: bool,
    window_events: u64,
    window_lo: i64,
    window_hi: i64,
    left_start_at: Option<f64>,
    max_disp: u64,
    max_disp_window: u64,
}

impl Tracker {
    fn new(start: i64, radius: i64, window_start: f64) -> Self {
        let probes: Vec<i64> = (-radius..=radius).collect();
        let visits = probes.iter().map(|&p| (p == start) as u64).collect();
        Self {
            start,
            probes,
            visits,
            window_start,
            in_window: false,
            window_events: 0,
            window_lo: start,
            window_hi: start,
            left_start_at: None,
            max_disp: 0,
            max_disp_window: 0,
        }
    }

    #[inline]
    fn on_event(&mut self, ev: &Event) {
        if let Ok(k) = self.probes.binary_search(&ev.to) {
            self.visits[k] += 1;
        }
        if ev.from == self.start {
            self.left_start_at = Some(ev.tau);
        } else if ev.to == self.start {
            self.left_start_at = None;
        }
        self.max_disp = self.max_disp.max(ev.to.abs_diff(self.start));
        if self.in_window {
            self.window_events += 1;
            self.window_lo = self.window_lo.min(ev.to);
            self.window_hi = self.window_hi.max(ev.to);
        }
    }

    fn open_window(&mut self, current: i64) {
        self.in_window = true;
        self.window_lo = current;
        self.window_hi = current;
        self.max_disp_window = self.max_disp;
    }

    fn snapshot(&self, t: f64, local_time: impl Fn(i64) -> f64) -> ProbeSnapshot {
        ProbeSnapshot {
            t,
            visits: self.visits.clone(),
            local_times: self.probes.iter().map(|&p| local_time(p)).collect(),
        }
    }
}

fn schedule(horizon: f64, window_fraction: f64) -> (f64, Vec<f64>) {
    let window_start = horizon * (1.0 - window_fraction);
    let mut times = vec![0.25 * horizon, 0.5 * horizon, window_start, horizon];
    times.sort_by(f64::total_cmp);
    times.dedup();
    (window_start, times)
}

/// Runs `chain` to `horizon` (or its jump budget) and summarizes the path.
pub fn summarize_chain(chain: &mut LineChain, horizon: f64, max_jumps: u64, params: &DetectorParams) -> LineSummary {
    let (window_start, times) = schedule(horizon, params.window_fraction);
    let mut tr = Tracker::new(chain.start(), params.probe_radius, window_start);
    let mut snapshots = Vec::new();
    let mut at_window: BTreeMap<i64, f64> = BTreeMap::new();
    let mut censored = false;
    for &t in &times {
        let budget = max_jumps.saturating_sub(chain.n_events());
        let stop = chain.advance_observed(t, budget, |ev| {
            tr.on_event(ev);
            ControlFlow::Continue(())
        });
        if stop == Stop::MaxEvents {
            censored = true;
            break;
        }
        if t == window_start {
            tr.open_window(chain.current());
            at_window = chain.visited_local_times().into_iter().collect();
        }
        if t != window_start || t == 0.5 * horizon {
            snapshots.push(tr.snapshot(t, |x| chain.local_time(x)));
        }
    }
    let initial = chain.initial().clone();
    let window = (tr.window_lo..=tr.window_hi)
        .map(|x| WindowGain {
            vertex: x,
            at_start: at_window.get(&x).copied().unwrap_or_else(|| initial.at(x)),
            at_end: chain.local_time(x),
        })
        .collect();
    finish(tr, chain.start(), horizon, chain.n_events(), censored, snapshots, window, chain.current(), chain.time())
}

#[allow(clippy::too_many_arguments)]
fn finish(
    tr: Tracker,
    start: i64,
    horizon: f64,
    n_events: u64,
    censored: bool,
    snapshots: Vec<ProbeSnapshot>,
    window: Vec<WindowGain>,
    current: i64,
    time: f64,
) -> LineSummary {
    let last_at_start = if current == start { time } else { tr.left_start_at.unwrap_or(0.0) };
    LineSummary {
        horizon,
        start,
        n_events,
        censored,
        probes: tr.probes,
        snapshots,
        window_start: tr.window_start,
        window_events: tr.window_events,
        window,
        last_at_start,
        max_displacement_at_window_start: tr.max_disp_window,
        max_displacement: tr.max_disp,
    }
}

/// Summarizes a stored path on its own horizon.
pub fn summarize_trajectory(traj: &Trajectory, params: &DetectorParams) -> LineSummary {
    let horizon = traj.horizon();
    let (window_start, times) = schedule(horizon, params.window_fraction);
    let start = traj.start();
    let mut tr = Tracker::new(start, params.probe_radius, window_start);
    let mut l: BTreeMap<i64, f64> = BTreeMap::new();
    let init = |x: i64| traj.initial_local_time(x);
    let (mut current, mut now) = (start, 0.0);
    let mut events = traj.events.iter().peekable();
    let mut snapshots = Vec::new();
    let mut at_window = BTreeMap::new();
    for &t in &times {
        while let Some(ev) = events.next_if(|e| e.tau < t) {
            *l.entry(current).or_insert_with(|| init(current)) += ev.tau - now;
            now = ev.tau;
            current = ev.to;
            tr.on_event(ev);
        }
        *l.entry(current).or_insert_with(|| init(current)) += t - now;
        now = t;
        let lt = |x: i64| l.get(&x).copied().unwrap_or_else(|| init(x));
        if t == window_start {
            tr.open_window(current);
            at_window = l.clone();
        }
        if t != window_start || t == 0.5 * horizon {
            snapshots.push(tr.snapshot(t, lt));
        }
    }
    let window = (tr.window_lo..=tr.window_hi)
        .map(|x| WindowGain {
            vertex: x,
            at_start: at_window.get(&x).copied().unwrap_or_else(|| init(x)),
            at_end: l.get(&x).copied().unwrap_or_else(|| init(x)),
        })
        .collect();
    let censored = traj.meta.max_jumps_hit;
    finish(tr, start, horizon, traj.events.len() as u64, censored, snapshots, window, current, now)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationVerdict {
    /// Exactly three consecutive vertices occupied in the final window.
    pub localized: bool,
    pub center: Option<i64>,
    pub side_plateau: bool,
    /// No jump in the final window.
    pub degenerate: bool,
    pub pass: bool,
}

pub fn detect_localization(s: &LineSummary, params: &DetectorParams) -> LocalizationVerdict {
    let degenerate = s.window_events == 0;
    let center = s.window.iter().max_by(|a, b| a.gain().total_cmp(&b.gain())).map(|g| g.vertex);
    let localized = !s.censored && s.window.len() == 3;
    let window_len = s.horizon - s.window_start;
    let side_plateau = localized && {
        let [left, mid, right] = [s.window[0], s.window[1], s.window[2]];
        center == Some(mid.vertex)
            && mid.gain() > params.center_growth * window_len
            && left.gain() < params.side_tolerance * left.at_start
            && right.gain() < params.side_tolerance * right.at_start
    };
    LocalizationVerdict { localized, center, side_plateau, degenerate, pass: localized && side_plateau && !degenerate }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceVerdict {
    /// Every probe's visit count strictly increases across the snapshots.
    pub visits_grow: bool,
    /// The smallest probe local time strictly increases across the snapshots.
    pub min_local_time_grows: bool,
    pub min_local_times: Vec<f64>,
    pub pass: bool,
}

pub fn detect_recurrence(s: &LineSummary) -> RecurrenceVerdict {
    let snaps = &s.snapshots;
    let visits_grow = (0..s.probes.len()).all(|k| snaps.windows(2).all(|p| p[1].visits[k] > p[0].visits[k]));
    let min_local_times: Vec<f64> =
        snaps.iter().map(|p| p.local_times.iter().copied().fold(f64::INFINITY, f64::min)).collect();
    let min_local_time_grows = min_local_times.windows(2).all(|p| p[1] > p[0]);
    let pass = !s.censored && visits_grow && min_local_time_grows;
    RecurrenceVerdict { visits_grow, min_local_time_grows, min_local_times, pass }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransienceSignature {
    pub left_start_early: bool,
    pub still_spreading: bool,
    pub signature: bool,
}

/// Transient signature: the walk left its start for good early on and its
/// range still grows during the final window.
pub fn transience_signature(s: &LineSummary, params: &DetectorParams) -> TransienceSignature {
    let left_start_early = s.last_at_start < params.early_fraction * s.horizon;
    let still_spreading = s.max_displacement > s.max_displacement_at_window_start;
    TransienceSignature { left_start_early, still_spreading, signature: left_start_early && still_spreading }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{ClockRule, InitialLocalTimes, Provenance, TrajectoryMeta, VertexSet};
    use crate::weights::WeightFunction;

    fn fixture(events: Vec<Event>, horizon: f64) -> Trajectory {
        Trajectory {
            meta: TrajectoryMeta {
                vset: VertexSet::FullLine,
                initial: InitialLocalTimes::default(),
                start: 0,
                horizon,
                requested_horizon: Some(horizon),
                max_jumps_hit: false,
                rule: ClockRule::Fresh,
                weight: None,
                provenance: Provenance::default(),
            },
            events,
        }
    }

    /// Repeats `pattern` of (vertex, stay) pairs from 0 until `horizon`.
    fn cycle(pattern: &[(i64, f64)], horizon: f64) -> Trajectory {
        let mut events = Vec::new();
        let (mut at, mut t) = (0, 0.0);
        'outer: loop {
            for &(to, stay) in pattern {
                t += stay;
                if t >= horizon {
                    break 'outer;
                }
                events.push(Event { tau: t, from: at, to });
                at = to;
            }
        }
        fixture(events, horizon)
    }

    #[test]
    fn oscillation_around_zero_is_localized() {
        // long stays at 0, brief visits to each side
        let t = cycle(&[(1, 1.0), (0, 1e-4), (-1, 1.0), (0, 1e-4)], 1000.0);
        let p = DetectorParams::default();
        let v = detect_localization(&summarize_trajectory(&t, &p), &p);
        assert!(v.localized && v.side_plateau && v.pass, "{v:?}");
        assert_eq!(v.center, Some(0));
    }

    #[test]
    fn ballistic_path_is_not_localized_and_looks_transient() {
        let events = (0..1000).map(|k| Event { tau: 0.1 * (k + 1) as f64, from: k, to: k + 1 }).collect();
        let t = fixture(events, 100.05);
        let p = DetectorParams::default();
        let s = summarize_trajectory(&t, &p);
        assert!(!detect_localization(&s, &p).localized);
        assert!(transience_signature(&s, &p).signature);
        assert!(!detect_recurrence(&s).pass);
    }

    #[test]
    fn sweeping_path_is_recurrent() {
        let mut pattern = Vec::new();
        for x in 1..=4 {
            pattern.push((x, 0.1));
        }
        for x in (-4..=3).rev() {
            pattern.push((x, 0.1));
        }
        for x in -3..=0 {
            pattern.push((x, 0.1));
        }
        let t = cycle(&pattern, 100.0);
        let p = DetectorParams::default();
        let s = summarize_trajectory(&t, &p);
        assert!(detect_recurrence(&s).pass);
        assert!(!transience_signature(&s, &p).signature);
        assert!(!detect_localization(&s, &p).localized);
    }

    #[test]
    fn frozen_window_is_degenerate() {
        let t = fixture(vec![Event { tau: 1.0, from: 0, to: 1 }], 100.0);
        let p = DetectorParams::default();
        let v = detect_localization(&summarize_trajectory(&t, &p), &p);
        assert!(v.degenerate && !v.pass);
    }

    #[test]
    fn chain_and_trajectory_summaries_agree() {
        let p = DetectorParams::default();
        for w in [WeightFunction::linear(), WeightFunction::power(2.0).unwrap()] {
            for seed in 0..5 {
                let mut chain = LineChain::new(&w, &VertexSet::FullLine, &InitialLocalTimes::default(), seed).unwrap();
                let from_chain = summarize_chain(&mut chain, 50.0, u64::MAX, &p);
                let traj = crate::process::simulate(
                    &w,
                    &VertexSet::FullLine,
                    &InitialLocalTimes::default(),
                    ClockRule::Fresh,
                    crate::process::RunLimits::horizon(50.0),
                    crate::clocks::ClockBank::new(seed),
                    Provenance::default(),
                )
                .unwrap();
                let from_traj = summarize_trajectory(&traj, &p);
                assert_eq!(from_chain.n_events, from_traj.n_events);
                assert_eq!(from_chain.last_at_start, from_traj.last_at_start);
                assert_eq!(from_chain.window.len(), from_traj.window.len());
                for (a, b) in from_chain.snapshots.iter().zip(&from_traj.snapshots) {
                    assert_eq!(a.visits, b.visits);
                    for (x, y) in a.local_times.iter().zip(&b.local_times) {
                        assert!((x - y).abs() < 1e-9, "{x} vs {y}");
                    }
                }
            }
        }
    }
}
