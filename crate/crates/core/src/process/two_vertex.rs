//! Specialised kernel for the process on `{0, 1}`.
//!
//! Each sojourn has a single candidate edge, so every clock rule reduces to
//! reading the edge streams in order. The kernel performs the same floating
//! point operations as [`Walker`](super::Walker) and produces bit-identical
//! paths, without per-step bookkeeping for general vertex sets.

use std::ops::ControlFlow;

use rand_distr::{Distribution, Exp1};
use rand_xoshiro::Xoshiro256PlusPlus;

use super::{Event, InitialLocalTimes, ProcessError};
use crate::clocks::{ClockBank, DirectedEdge, ExpStream};
use crate::weights::{WeightFunction, WeightKind};

#[derive(Debug, Clone, Copy)]
struct Pending {
    deadline: f64,
    tau: f64,
    t_arr: f64,
    l_arr: f64,
}

/// Why an advance returned.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stop {
    Horizon,
    MaxEvents,
    Observer,
}

#[derive(Debug, Clone)]
pub struct TwoVertexChain {
    w: WeightFunction,
    initial: [f64; 2],
    l: [f64; 2],
    cur: usize,
    time: f64,
    // streams[i] drives the edge i -> 1 - i
    streams: [ExpStream; 2],
    pending: Option<Pending>,
    n_events: u64,
}

macro_rules! with_rate {
    ($w:expr, |$g:ident| $body:expr) => {
        match *$w.kind() {
            WeightKind::Linear => {
                let $g = |t: f64| t;
                $body
            }
            WeightKind::Power { exponent } if exponent == 2.0 => {
                let $g = |t: f64| t * t;
                $body
            }
            WeightKind::Power { exponent } if exponent == 1.0 => {
                let $g = |t: f64| t;
                $body
            }
            WeightKind::Power { exponent } if exponent == 3.0 => {
                let $g = |t: f64| t * t * t;
                $body
            }
            WeightKind::Power { exponent } => {
                let $g = move |t: f64| t.powf(exponent);
                $body
            }
            WeightKind::ExpShifted { rate } => {
                let $g = move |t: f64| (rate * (t - 1.0)).exp();
                $body
            }
            WeightKind::Custom(_) => {
                let w = $w.clone();
                let $g = move |t: f64| w.value(t);
                $body
            }
        }
    };
}

impl TwoVertexChain {
    /// Chain started at 0 with clocks from `ClockBank::new(seed)`.
    pub fn new(w: &WeightFunction, initial: [f64; 2], seed: u64) -> Result<Self, ProcessError> {
        let bank = ClockBank::new(seed);
        let streams =
            [bank.detached_stream(DirectedEdge::step(0, true)), bank.detached_stream(DirectedEdge::step(1, false))];
        Self::with_streams(w, initial, streams)
    }

    pub fn with_streams(w: &WeightFunction, initial: [f64; 2], streams: [ExpStream; 2]) -> Result<Self, ProcessError> {
        InitialLocalTimes::pair(initial[0], initial[1]).validate()?;
        Ok(Self { w: w.clone(), initial, l: initial, cur: 0, time: 0.0, streams, pending: None, n_events: 0 })
    }

    pub fn local_times(&self) -> [f64; 2] {
        self.l
    }

    pub fn initial(&self) -> [f64; 2] {
        self.initial
    }

    pub fn current(&self) -> i64 {
        self.cur as i64
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn n_events(&self) -> u64 {
        self.n_events
    }

    /// One jump or a truncation at `horizon`; `false` once the horizon is reached.
    #[inline(always)]
    fn half_step<G: Fn(f64) -> f64>(&mut self, g: &G, horizon: f64) -> bool {
        let i = self.cur;
        let p = match self.pending.take() {
            Some(p) => p,
            None => {
                let l_arr = self.l[i];
                let deadline = l_arr + self.streams[i].next_exp() / g(self.l[1 - i]);
                Pending { deadline, tau: self.time + (deadline - l_arr), t_arr: self.time, l_arr }
            }
        };
        if p.tau >= horizon {
            self.l[i] = p.l_arr + (horizon - p.t_arr);
            self.time = horizon;
            self.pending = Some(p);
            return false;
        }
        self.l[i] = p.deadline;
        self.time = p.tau;
        self.cur = 1 - i;
        self.n_events += 1;
        true
    }

    #[inline(always)]
    fn run<G, O>(&mut self, g: G, horizon: f64, max_events: u64, mut observe: O) -> Stop
    where
        G: Fn(f64) -> f64,
        O: FnMut(&Event, [f64; 2]) -> ControlFlow<()>,
    {
        if !(horizon > self.time) {
            return Stop::Horizon;
        }
        let mut n = 0;
        loop {
            if n >= max_events {
                return Stop::MaxEvents;
            }
            let from = self.cur as i64;
            if !self.half_step(&g, horizon) {
                return Stop::Horizon;
            }
            n += 1;
            let ev = Event { tau: self.time, from, to: 1 - from };
            if observe(&ev, self.l).is_break() {
                return Stop::Observer;
            }
        }
    }

    /// Runs until `horizon` or until `max_events` further jumps.
    pub fn advance(&mut self, horizon: f64, max_events: u64) -> Stop {
        let w = self.w.clone();
        if max_events == u64::MAX {
            with_rate!(w, |g| self.run_to(&g, horizon));
            return Stop::Horizon;
        }
        with_rate!(w, |g| self.run(g, horizon, max_events, |_, _| ControlFlow::Continue(())))
    }

    /// As [`advance`](Self::advance), calling `observe` after every jump with the
    /// event and the local times `(L(0), L(1))` at that event.
    pub fn advance_observed<O>(&mut self, horizon: f64, max_events: u64, observe: O) -> Stop
    where
        O: FnMut(&Event, [f64; 2]) -> ControlFlow<()>,
    {
        let w = self.w.clone();
        with_rate!(w, |g| self.run(g, horizon, max_events, observe))
    }

    /// Brings the chain to the start of a sojourn at 0, or to the horizon.
    #[inline(always)]
    fn align<G: Fn(f64) -> f64>(&mut self, g: &G, horizon: f64) -> bool {
        while self.pending.is_some() || self.cur != 0 {
            if !self.half_step(g, horizon) {
                return false;
            }
        }
        true
    }

    fn lane(&self) -> Lane {
        Lane { l0: self.l[0], l1: self.l[1], time: self.time, draws: [0, 0], last: [f64::NAN; 2], jumps: 0, stop: None }
    }

    fn absorb(&mut self, lane: Lane) {
        self.l = [lane.l0, lane.l1];
        self.time = lane.time;
        self.n_events += lane.jumps;
        for k in 0..2 {
            self.streams[k].record_draws(lane.draws[k], lane.last[k]);
        }
        if let Some((cur, p)) = lane.stop {
            self.cur = cur;
            self.pending = Some(p);
        }
    }

    /// Runs to `horizon` with the chain state held in registers.
    #[inline(always)]
    fn run_to<G: Fn(f64) -> f64>(&mut self, g: &G, horizon: f64) {
        if !(horizon > self.time) || !self.align(g, horizon) {
            return;
        }
        let mut lane = self.lane();
        {
            let [s0, s1] = &mut self.streams;
            let (r0, r1) = (s0.raw(), s1.raw());
            while lane.cycle(r0, r1, g, horizon) {}
        }
        self.absorb(lane);
    }
}

/// Chain state for the unrolled loop: a sojourn at 0 followed by one at 1.
struct Lane {
    l0: f64,
    l1: f64,
    time: f64,
    draws: [u64; 2],
    last: [f64; 2],
    jumps: u64,
    stop: Option<(usize, Pending)>,
}

impl Lane {
    #[inline(always)]
    fn cycle<G: Fn(f64) -> f64>(
        &mut self,
        r0: &mut Xoshiro256PlusPlus,
        r1: &mut Xoshiro256PlusPlus,
        g: &G,
        horizon: f64,
    ) -> bool {
        let x: f64 = Exp1.sample(r0);
        self.draws[0] += 1;
        self.last[0] = x;
        let d = self.l0 + x / g(self.l1);
        let tau = self.time + (d - self.l0);
        if tau >= horizon {
            self.stop = Some((0, Pending { deadline: d, tau, t_arr: self.time, l_arr: self.l0 }));
            self.l0 += horizon - self.time;
            self.time = horizon;
            return false;
        }
        self.l0 = d;
        self.time = tau;
        let x: f64 = Exp1.sample(r1);
        self.draws[1] += 1;
        self.last[1] = x;
        let d = self.l1 + x / g(self.l0);
        let tau = self.time + (d - self.l1);
        if tau >= horizon {
            self.jumps += 1;
            self.stop = Some((1, Pending { deadline: d, tau, t_arr: self.time, l_arr: self.l1 }));
            self.l1 += horizon - self.time;
            self.time = horizon;
            return false;
        }
        self.l1 = d;
        self.time = tau;
        self.jumps += 2;
        true
    }
}

/// Advances two independent chains with the same weight to `horizon`.
///
/// The steps of the two chains are interleaved so that their serial
/// dependency chains overlap; each result equals a separate
/// [`TwoVertexChain::advance`] call.
pub fn advance_pair(a: &mut TwoVertexChain, b: &mut TwoVertexChain, horizon: f64) {
    let same_weight = match (a.w.spec(), b.w.spec()) {
        (Some(x), Some(y)) => x == y,
        _ => false,
    };
    if !same_weight {
        a.advance(horizon, u64::MAX);
        b.advance(horizon, u64::MAX);
        return;
    }
    let w = a.w.clone();
    with_rate!(w, |g| {
        let ready_a = horizon > a.time && a.align(&g, horizon);
        let ready_b = horizon > b.time && b.align(&g, horizon);
        if ready_a && ready_b {
            let (mut la, mut lb) = (a.lane(), b.lane());
            {
                let [a0, a1] = &mut a.streams;
                let [b0, b1] = &mut b.streams;
                let (ra0, ra1, rb0, rb1) = (a0.raw(), a1.raw(), b0.raw(), b1.raw());
                loop {
                    let more_a = la.cycle(ra0, ra1, &g, horizon);
                    let more_b = lb.cycle(rb0, rb1, &g, horizon);
                    if !more_a {
                        if more_b {
                            while lb.cycle(rb0, rb1, &g, horizon) {}
                        }
                        break;
                    }
                    if !more_b {
                        while la.cycle(ra0, ra1, &g, horizon) {}
                        break;
                    }
                }
            }
            a.absorb(la);
            b.absorb(lb);
        } else {
            a.run_to(&g, horizon);
            b.run_to(&g, horizon);
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::process::{ClockRule, VertexSet, Walker};

    fn walker_events(
        w: &WeightFunction,
        init: [f64; 2],
        seed: u64,
        rule: ClockRule,
        horizon: f64,
    ) -> (Vec<Event>, f64, f64) {
        let mut walker = Walker::new(
            w,
            &VertexSet::two_vertex(),
            &InitialLocalTimes::pair(init[0], init[1]),
            rule,
            ClockBank::new(seed),
        )
        .unwrap();
        let mut evs = Vec::new();
        while let Some(ev) = walker.step(horizon) {
            evs.push(ev);
        }
        (evs, walker.local_time(0), walker.local_time(1))
    }

    #[test]
    fn kernel_matches_walker_bit_for_bit() {
        let ws = [
            WeightFunction::linear(),
            WeightFunction::power(2.0).unwrap(),
            WeightFunction::power(1.7).unwrap(),
            WeightFunction::exp_shifted(1.0).unwrap(),
        ];
        for w in &ws {
            for seed in 0..5 {
                for rule in [ClockRule::Fresh, ClockRule::Literal, ClockRule::Accumulated] {
                    let (evs, l0, l1) = walker_events(w, [1.0, 1.5], seed, rule, 40.0);
                    let mut chain = TwoVertexChain::new(w, [1.0, 1.5], seed).unwrap();
                    let mut kevs = Vec::new();
                    chain.advance_observed(40.0, u64::MAX, |ev, _| {
                        kevs.push(*ev);
                        ControlFlow::Continue(())
                    });
                    assert_eq!(evs, kevs, "{} seed {seed} {rule:?}", w.name());
                    assert_eq!(chain.local_times()[0].to_bits(), l0.to_bits());
                    assert_eq!(chain.local_times()[1].to_bits(), l1.to_bits());
                }
            }
        }
    }

    #[test]
    fn paired_advance_equals_separate_runs() {
        let w = WeightFunction::linear();
        let mut a = TwoVertexChain::new(&w, [1.0, 1.0], 1).unwrap();
        let mut b = TwoVertexChain::new(&w, [1.0, 1.0], 2).unwrap();
        advance_pair(&mut a, &mut b, 300.0);
        advance_pair(&mut a, &mut b, 900.0);
        let mut a2 = TwoVertexChain::new(&w, [1.0, 1.0], 1).unwrap();
        let mut b2 = TwoVertexChain::new(&w, [1.0, 1.0], 2).unwrap();
        a2.advance(900.0, u64::MAX);
        b2.advance(900.0, u64::MAX);
        assert_eq!(a.local_times(), a2.local_times());
        assert_eq!(b.local_times(), b2.local_times());
        assert_eq!(a.n_events(), a2.n_events());
        assert_eq!(a.time(), 900.0);
    }
}
