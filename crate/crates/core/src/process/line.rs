//! Fast engine for the reference (fresh-clock) law on intervals of the line.
//!
//! Each site owns the streams of its two outgoing edges, so a step touches
//! three adjacent sites and no shared lookup tables. Paths are bit-identical
//! to [`Walker`](super::Walker) with [`ClockRule::Fresh`](super::ClockRule)
//! driven by a [`ClockBank`](crate::clocks::ClockBank) of the same seed.

use std::ops::ControlFlow;

use rand_distr::{Distribution, Exp1};

use super::{Event, InitialLocalTimes, ProcessError, VertexSet};
use crate::clocks::{DirectedEdge, ExpStream};
use crate::lattice::LatticeVec;
use crate::weights::{WeightFunction, WeightKind};

#[derive(Debug, Clone)]
struct Site {
    l: f64,
    // streams of the edges towards x - 1 and x + 1
    out: Option<Box<[ExpStream; 2]>>,
}

#[derive(Debug, Clone, Copy)]
struct Pending {
    to: i64,
    deadline: f64,
    tau: f64,
    t_arr: f64,
    l_arr: f64,
}

#[derive(Debug, Clone)]
pub struct LineChain {
    w: WeightFunction,
    seed: u64,
    lo: i64,
    hi: i64,
    initial: InitialLocalTimes,
    start: i64,
    sites: LatticeVec<Site>,
    current: i64,
    time: f64,
    pending: Option<Pending>,
    n_events: u64,
}

impl LineChain {
    pub fn new(
        w: &WeightFunction,
        vset: &VertexSet,
        initial: &InitialLocalTimes,
        seed: u64,
    ) -> Result<Self, ProcessError> {
        vset.validate()?;
        initial.validate()?;
        let (lo, hi) = vset.bounds()?;
        let start = vset.start_vertex()?;
        let mut sites = LatticeVec::new(Site { l: initial.default, out: None });
        for (&x, &v) in &initial.overrides {
            sites.get_mut(x).l = v;
        }
        Ok(Self {
            w: w.clone(),
            seed,
            lo: lo.unwrap_or(i64::MIN),
            hi: hi.unwrap_or(i64::MAX),
            initial: initial.clone(),
            start,
            sites,
            current: start,
            time: 0.0,
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

    pub fn n_events(&self) -> u64 {
        self.n_events
    }

    #[inline]
    pub fn local_time(&self, x: i64) -> f64 {
        self.sites.get(x).l
    }

    pub fn initial(&self) -> &InitialLocalTimes {
        &self.initial
    }

    /// `(vertex, L)` for every vertex whose local time moved.
    pub fn visited_local_times(&self) -> Vec<(i64, f64)> {
        self.sites.iter().filter(|&(x, s)| s.l != self.initial.at(x)).map(|(x, s)| (x, s.l)).collect()
    }

    #[inline(always)]
    fn decide<G: Fn(f64) -> f64>(&mut self, g: &G) -> Pending {
        let i = self.current;
        let has_left = i > self.lo;
        let has_right = i < self.hi;
        let l_left = if has_left { self.sites.get(i - 1).l } else { 0.0 };
        let l_right = if has_right { self.sites.get(i + 1).l } else { 0.0 };
        let seed = self.seed;
        let site = self.sites.get_mut(i);
        let l_i = site.l;
        let out = site.out.get_or_insert_with(|| {
            Box::new([
                ExpStream::for_edge(seed, DirectedEdge::step(i, false)),
                ExpStream::for_edge(seed, DirectedEdge::step(i, true)),
            ])
        });
        let mut best = (i, f64::INFINITY);
        if has_left {
            let x: f64 = Exp1.sample(out[0].raw());
            out[0].record_draws(1, x);
            best = (i - 1, l_i + x / g(l_left));
        }
        if has_right {
            let x: f64 = Exp1.sample(out[1].raw());
            out[1].record_draws(1, x);
            let d = l_i + x / g(l_right);
            if !has_left || d < best.1 {
                best = (i + 1, d);
            }
        }
        Pending { to: best.0, deadline: best.1, tau: self.time + (best.1 - l_i), t_arr: self.time, l_arr: l_i }
    }

    #[inline(always)]
    fn step_with<G: Fn(f64) -> f64>(&mut self, g: &G, horizon: f64) -> Option<Event> {
        let p = match self.pending.take() {
            Some(p) => p,
            None => self.decide(g),
        };
        let i = self.current;
        if p.tau >= horizon {
            self.sites.get_mut(i).l = p.l_arr + (horizon - p.t_arr);
            self.time = horizon;
            self.pending = Some(p);
            return None;
        }
        self.sites.get_mut(i).l = p.deadline;
        self.time = p.tau;
        self.current = p.to;
        self.n_events += 1;
        Some(Event { tau: p.tau, from: i, to: p.to })
    }

    /// Runs until `horizon`, `max_events` further jumps, or until `observe` breaks.
    pub fn advance_observed<O>(&mut self, horizon: f64, max_events: u64, mut observe: O) -> super::Stop
    where
        O: FnMut(&Event) -> ControlFlow<()>,
    {
        if !(horizon > self.time) {
            return super::Stop::Horizon;
        }
        let w = self.w.clone();
        macro_rules! drive {
            ($g:expr) => {{
                let g = $g;
                let mut n = 0u64;
                loop {
                    if n >= max_events {
                        return super::Stop::MaxEvents;
                    }
                    match self.step_with(&g, horizon) {
                        Some(ev) => {
                            n += 1;
                            if observe(&ev).is_break() {
                                return super::Stop::Observer;
                            }
                        }
                        None => return super::Stop::Horizon,
                    }
                }
            }};
        }
        match *w.kind() {
            WeightKind::Linear => drive!(|t: f64| t),
            WeightKind::Power { exponent: 1.0 } => drive!(|t: f64| t),
            WeightKind::Power { exponent: 2.0 } => drive!(|t: f64| t * t),
            WeightKind::Power { exponent: 3.0 } => drive!(|t: f64| t * t * t),
            WeightKind::Power { exponent } => drive!(move |t: f64| t.powf(exponent)),
            WeightKind::ExpShifted { rate } => drive!(move |t: f64| (rate * (t - 1.0)).exp()),
            WeightKind::Custom(_) => {
                let w2 = w.clone();
                drive!(move |t: f64| w2.value(t))
            }
        }
    }

    pub fn advance(&mut self, horizon: f64) -> super::Stop {
        self.advance_observed(horizon, u64::MAX, |_| ControlFlow::Continue(()))
    }
}
