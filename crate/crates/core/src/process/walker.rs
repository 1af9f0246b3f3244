use serde::{Deserialize, Serialize};

use super::{Event, InitialLocalTimes, ProcessError, VertexSet};
use crate::clocks::{DirectedEdge, ExponentialSource};
use crate::lattice::LatticeVec;
use crate::weights::WeightFunction;

/// How a sojourn reads the edge clocks.
///
/// Every rule turns a clock value `chi` for the edge `i -> j` into a deadline
/// `L(i) + chi / w(L(j))` measured in local time at `i`; the walker leaves `i`
/// along the edge whose deadline comes first. The rules differ in when a
/// deadline is drawn:
///
/// * `Fresh`: every arrival at `i` draws the next unused value of each
///   outgoing edge stream. Memoryless, hence the reference jump law.
/// * `Literal`: every arrival recomputes the deadline from `chi_gamma`, where
///   `gamma` is one plus the number of jumps already taken along the edge. A
///   clock that lost a race is re-read on the next visit without memory of the
///   hazard it already survived.
/// * `Accumulated`: `chi_gamma` is turned into a deadline once, when the edge
///   has none, and the deadline persists until the edge is taken. While it is
///   pending `L(j)` cannot move, so the hazard on the edge accumulates exactly
///   at rate `w(L(j))` across visits to `i`.
///
/// On a two-vertex graph every sojourn has a single candidate edge and the
/// three rules produce bit-identical paths.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockRule {
    #[default]
    Fresh,
    Literal,
    Accumulated,
}

#[derive(Debug, Clone, Copy)]
struct EdgeSlot {
    gamma: u64,
    draws: u64,
    deadline: f64,
}

const FRESH_EDGE: EdgeSlot = EdgeSlot { gamma: 1, draws: 0, deadline: f64::NAN };

#[derive(Debug, Clone, Copy)]
struct Pending {
    to: i64,
    deadline: f64,
    tau: f64,
    t_arr: f64,
    l_arr: f64,
}

/// Simulator state for one process on a connected vertex set.
#[derive(Debug, Clone)]
pub struct Walker<S> {
    w: WeightFunction,
    vset: VertexSet,
    lo: i64,
    hi: i64,
    rule: ClockRule,
    source: S,
    initial: InitialLocalTimes,
    start: i64,
    current: i64,
    time: f64,
    local: LatticeVec<f64>,
    edges: LatticeVec<[EdgeSlot; 2]>,
    pending: Option<Pending>,
    n_events: u64,
}

impl<S: ExponentialSource> Walker<S> {
    /// Starts at the set's canonical start vertex.
    pub fn new(
        w: &WeightFunction,
        vset: &VertexSet,
        initial: &InitialLocalTimes,
        rule: ClockRule,
        source: S,
    ) -> Result<Self, ProcessError> {
        let start = vset.start_vertex()?;
        Self::starting_at(w, vset, initial, rule, source, start)
    }

    pub fn starting_at(
        w: &WeightFunction,
        vset: &VertexSet,
        initial: &InitialLocalTimes,
        rule: ClockRule,
        source: S,
        start: i64,
    ) -> Result<Self, ProcessError> {
        vset.validate()?;
        initial.validate()?;
        if !vset.contains(start) {
            return Err(ProcessError::OutsideSet(start));
        }
        let (lo, hi) = vset.bounds()?;
        let mut local = LatticeVec::new(initial.default);
        for (&x, &v) in &initial.overrides {
            local.set(x, v);
        }
        Ok(Self {
            w: w.clone(),
            vset: vset.clone(),
            lo: lo.unwrap_or(i64::MIN),
            hi: hi.unwrap_or(i64::MAX),
            rule,
            source,
            initial: initial.clone(),
            start,
            current: start,
            time: 0.0,
            local,
            edges: LatticeVec::new([FRESH_EDGE; 2]),
            pending: None,
            n_events: 0,
        })
    }

    pub fn current(&self) -> i64 {
        self.current
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn start(&self) -> i64 {
        self.start
    }

    pub fn rule(&self) -> ClockRule {
        self.rule
    }

    pub fn vset(&self) -> &VertexSet {
        &self.vset
    }

    pub fn initial(&self) -> &InitialLocalTimes {
        &self.initial
    }

    pub fn n_events(&self) -> u64 {
        self.n_events
    }

    pub fn source(&self) -> &S {
        &self.source
    }

    pub fn into_source(self) -> S {
        self.source
    }

    /// `L(x, t)` at the walker's current time.
    #[inline]
    pub fn local_time(&self, x: i64) -> f64 {
        *self.local.get(x)
    }

    /// Vertices with a local time above their initial value, with that local time.
    pub fn visited_local_times(&self) -> Vec<(i64, f64)> {
        self.local.iter().filter(|&(x, &l)| l != self.initial.at(x)).map(|(x, &l)| (x, l)).collect()
    }

    /// `1 +` number of jumps taken along `edge`.
    pub fn gamma(&self, edge: DirectedEdge) -> u64 {
        self.edges.get(edge.from)[edge.points_right() as usize].gamma
    }

    /// Decides the current sojourn: its target and event time.
    fn decide(&mut self) -> Pending {
        let i = self.current;
        let l_i = *self.local.get(i);
        let mut best: Option<(i64, f64)> = None;
        for right in [false, true] {
            let j = if right { i + 1 } else { i - 1 };
            if j < self.lo || j > self.hi {
                continue;
            }
            let edge = DirectedEdge { from: i, to: j };
            let l_j = *self.local.get(j);
            let slot = &mut self.edges.get_mut(i)[right as usize];
            let deadline = match self.rule {
                ClockRule::Fresh => {
                    slot.draws += 1;
                    l_i + self.source.exponential(edge, slot.draws) / self.w.value(l_j)
                }
                ClockRule::Literal => l_i + self.source.exponential(edge, slot.gamma) / self.w.value(l_j),
                ClockRule::Accumulated => {
                    if slot.deadline.is_nan() {
                        slot.deadline = l_i + self.source.exponential(edge, slot.gamma) / self.w.value(l_j);
                    }
                    slot.deadline
                }
            };
            if best.is_none_or(|(_, d)| deadline < d) {
                best = Some((j, deadline));
            }
        }
        let (to, deadline) = best.expect("validated vertex sets leave every vertex a neighbour");
        Pending { to, deadline, tau: self.time + (deadline - l_i), t_arr: self.time, l_arr: l_i }
    }

    /// Advances by one jump if it happens before `horizon`.
    ///
    /// Otherwise the state is moved to time `horizon` (the running sojourn is
    /// truncated, the decided jump stays pending) and `None` is returned.
    #[inline]
    pub fn step(&mut self, horizon: f64) -> Option<Event> {
        if !(horizon > self.time) {
            return None;
        }
        let p = match self.pending {
            Some(p) => p,
            None => {
                let p = self.decide();
                self.pending = Some(p);
                p
            }
        };
        let i = self.current;
        if p.tau >= horizon {
            self.local.set(i, p.l_arr + (horizon - p.t_arr));
            self.time = horizon;
            return None;
        }
        self.local.set(i, p.deadline);
        self.time = p.tau;
        let slot = &mut self.edges.get_mut(i)[(p.to > i) as usize];
        slot.gamma += 1;
        slot.deadline = f64::NAN;
        self.current = p.to;
        self.pending = None;
        self.n_events += 1;
        Some(Event { tau: p.tau, from: i, to: p.to })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clocks::{ClockBank, TableSource};

    fn p2() -> WeightFunction {
        WeightFunction::power(2.0).unwrap()
    }

    #[test]
    fn single_neighbour_sojourn() {
        let mut src = TableSource::with_default(1.0);
        src.insert(DirectedEdge::step(0, true), 1, 0.8);
        let mut walker =
            Walker::new(&p2(), &VertexSet::two_vertex(), &InitialLocalTimes::default(), ClockRule::Fresh, src).unwrap();
        let ev = walker.step(f64::INFINITY).unwrap();
        assert_eq!(ev, Event { tau: 0.8, from: 0, to: 1 });
        assert_eq!(walker.local_time(0), 1.8);
    }

    #[test]
    fn competing_clocks_pick_earliest() {
        let mut src = TableSource::with_default(1.0);
        src.insert(DirectedEdge::step(0, false), 1, 0.7).insert(DirectedEdge::step(0, true), 1, 0.5);
        let init = InitialLocalTimes::uniform(1.0).with(1, 2.0);
        for rule in [ClockRule::Fresh, ClockRule::Literal, ClockRule::Accumulated] {
            let mut walker = Walker::new(&p2(), &VertexSet::FullLine, &init, rule, src.clone()).unwrap();
            let ev = walker.step(f64::INFINITY).unwrap();
            assert_eq!(ev.to, 1);
            assert_eq!(ev.tau, 0.125);
        }
    }

    #[test]
    fn gamma_counts_traversals() {
        let mut walker = Walker::new(
            &p2(),
            &VertexSet::two_vertex(),
            &InitialLocalTimes::default(),
            ClockRule::Literal,
            ClockBank::new(3),
        )
        .unwrap();
        for _ in 0..3 {
            walker.step(f64::INFINITY).unwrap();
        }
        assert_eq!(walker.gamma(DirectedEdge::step(0, true)), 3);
        assert_eq!(walker.gamma(DirectedEdge::step(1, false)), 2);
    }

    #[test]
    fn horizon_truncates_and_resumes_identically() {
        let make = || {
            Walker::new(
                &WeightFunction::linear(),
                &VertexSet::FullLine,
                &InitialLocalTimes::default(),
                ClockRule::Fresh,
                ClockBank::new(11),
            )
            .unwrap()
        };
        let mut direct = make();
        let mut a = Vec::new();
        while let Some(ev) = direct.step(50.0) {
            a.push(ev);
        }
        let mut split = make();
        let mut b = Vec::new();
        for h in [0.3, 7.0, 7.0, 21.5, 50.0] {
            while let Some(ev) = split.step(h) {
                b.push(ev);
            }
        }
        assert_eq!(a, b);
        assert_eq!(direct.time(), 50.0);
        assert_eq!(direct.local_time(direct.current()).to_bits(), split.local_time(split.current()).to_bits());
        let total: f64 = direct.visited_local_times().iter().map(|&(_, l)| l - 1.0).sum();
        assert!((total - 50.0).abs() < 1e-9 * 50.0);
    }

    #[test]
    fn masked_neighbours_are_never_targets() {
        let vset = VertexSet::Segment { lo: -2, hi: 3 };
        let mut walker = Walker::new(
            &WeightFunction::linear(),
            &vset,
            &InitialLocalTimes::default(),
            ClockRule::Accumulated,
            ClockBank::new(5),
        )
        .unwrap();
        while let Some(ev) = walker.step(200.0) {
            assert!(vset.contains(ev.to));
            assert_eq!(ev.from.abs_diff(ev.to), 1);
        }
    }
}
