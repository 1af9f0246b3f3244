//! Seeded unit-exponential clocks attached to directed edges.
//!
//! Each directed edge owns an independent xoshiro256++ stream keyed by a SHA-256
//! digest of `(master_seed, from, to)`, sampled with the ziggurat method. The
//! `n`-th draw of a stream is a pure function of those inputs. Engines read
//! every stream in order, so only the latest draw is kept; an out-of-order
//! read replays the stream from its key.

use rand_distr::{Distribution, Exp1};
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::lattice::LatticeVec;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EdgeError {
    #[error("({from}, {to}) does not join neighbouring integers")]
    NotNeighbours { from: i64, to: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DirectedEdge {
    pub from: i64,
    pub to: i64,
}

impl DirectedEdge {
    pub fn new(from: i64, to: i64) -> Result<Self, EdgeError> {
        if from.abs_diff(to) != 1 {
            return Err(EdgeError::NotNeighbours { from, to });
        }
        Ok(Self { from, to })
    }

    /// The edge from `from` towards `from + 1` (`right = true`) or `from - 1`.
    #[inline]
    pub fn step(from: i64, right: bool) -> Self {
        Self { from, to: if right { from + 1 } else { from - 1 } }
    }

    #[inline]
    pub fn points_right(&self) -> bool {
        self.to > self.from
    }

    pub fn reversed(&self) -> Self {
        Self { from: self.to, to: self.from }
    }
}

/// Supplier of the indexed exponential family `chi^{(i,j)}_n`, `n >= 1`.
pub trait ExponentialSource {
    fn exponential(&mut self, edge: DirectedEdge, n: u64) -> f64;
}

/// Derived 64-bit seed for auxiliary randomness identified by `tag`.
pub fn substream_seed(master_seed: u64, tag: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(b"vrjp/substream");
    h.update(master_seed.to_le_bytes());
    h.update((tag.len() as u64).to_le_bytes());
    h.update(tag.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

fn edge_key(master_seed: u64, edge: DirectedEdge) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"vrjp/edge");
    h.update(master_seed.to_le_bytes());
    h.update(edge.from.to_le_bytes());
    h.update(edge.to.to_le_bytes());
    h.finalize().into()
}

/// Maps 64 random bits to a uniform in the open interval (0, 1).
#[inline(always)]
pub fn open_unit(bits: u64) -> f64 {
    ((bits >> 12) as f64 + 0.5) * (1.0 / (1u64 << 52) as f64)
}

/// A replayable stream of unit exponentials.
#[derive(Debug, Clone)]
pub struct ExpStream {
    key: [u8; 32],
    rng: Xoshiro256PlusPlus,
    /// Index of the draw the generator will produce next.
    next: u64,
    last: f64,
}

impl ExpStream {
    pub fn for_edge(master_seed: u64, edge: DirectedEdge) -> Self {
        Self::from_key(edge_key(master_seed, edge))
    }

    /// A stream keyed by a derived 64-bit seed, for auxiliary draws.
    pub fn from_seed(seed: u64) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        Self::from_key(Sha256::digest(key).into())
    }

    fn from_key(key: [u8; 32]) -> Self {
        Self { key, rng: Xoshiro256PlusPlus::from_seed(key), next: 1, last: f64::NAN }
    }

    /// The next draw in sequence. Always strictly positive and finite.
    #[inline(always)]
    pub fn next_exp(&mut self) -> f64 {
        let v: f64 = Exp1.sample(&mut self.rng);
        self.next += 1;
        self.last = v;
        v
    }

    /// Generator access for tight loops that count draws themselves; callers
    /// must report what they drew through [`ExpStream::record_draws`].
    #[inline(always)]
    pub(crate) fn raw(&mut self) -> &mut Xoshiro256PlusPlus {
        &mut self.rng
    }

    #[inline(always)]
    pub(crate) fn record_draws(&mut self, count: u64, last: f64) {
        if count > 0 {
            self.next += count;
            self.last = last;
        }
    }

    /// Index of the draw most recently returned (0 before any draw).
    pub fn position(&self) -> u64 {
        self.next - 1
    }

    /// The `n`-th draw, `n >= 1`.
    #[inline]
    pub fn get(&mut self, n: u64) -> f64 {
        debug_assert!(n >= 1, "clock indices start at 1");
        if n == self.next {
            return self.next_exp();
        }
        if n + 1 == self.next {
            return self.last;
        }
        if n < self.next {
            *self = Self::from_key(self.key);
        }
        while self.next < n {
            self.next_exp();
        }
        self.next_exp()
    }
}

/// The family of edge clocks derived from one master seed.
///
/// Banks are cheap to create and deterministic, so coupled processes may
/// either share one bank or each hold a bank built from the same seed.
#[derive(Debug, Clone)]
pub struct ClockBank {
    master_seed: u64,
    // Slot 0 holds the edge towards `from - 1`, slot 1 the edge towards `from + 1`.
    streams: LatticeVec<[Option<Box<ExpStream>>; 2]>,
}

impl ClockBank {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed, streams: LatticeVec::new([None, None]) }
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Direct access to one edge's stream, created on first use.
    #[inline]
    pub fn stream(&mut self, edge: DirectedEdge) -> &mut ExpStream {
        let seed = self.master_seed;
        let slot = &mut self.streams.get_mut(edge.from)[edge.points_right() as usize];
        slot.get_or_insert_with(|| Box::new(ExpStream::for_edge(seed, edge)))
    }

    /// Detached stream for one edge, independent of this bank's read position.
    pub fn detached_stream(&self, edge: DirectedEdge) -> ExpStream {
        ExpStream::for_edge(self.master_seed, edge)
    }
}

impl ExponentialSource for ClockBank {
    #[inline]
    fn exponential(&mut self, edge: DirectedEdge, n: u64) -> f64 {
        self.stream(edge).get(n)
    }
}

/// Fixed table of exponentials, for hand-built fixtures.
///
/// Missing indices fall back to `default`.
#[derive(Debug, Clone, Default)]
pub struct TableSource {
    pub values: std::collections::BTreeMap<(DirectedEdge, u64), f64>,
    pub default: f64,
}

impl TableSource {
    pub fn with_default(default: f64) -> Self {
        Self { values: Default::default(), default }
    }

    pub fn insert(&mut self, edge: DirectedEdge, n: u64, value: f64) -> &mut Self {
        self.values.insert((edge, n), value);
        self
    }
}

impl ExponentialSource for TableSource {
    fn exponential(&mut self, edge: DirectedEdge, n: u64) -> f64 {
        self.values.get(&(edge, n)).copied().unwrap_or(self.default)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const E01: DirectedEdge = DirectedEdge { from: 0, to: 1 };
    const E10: DirectedEdge = DirectedEdge { from: 1, to: 0 };

    #[test]
    fn edges_must_join_neighbours() {
        assert!(DirectedEdge::new(3, 4).is_ok());
        assert!(DirectedEdge::new(3, 5).is_err());
        assert!(DirectedEdge::new(2, 2).is_err());
    }

    #[test]
    fn requery_is_bit_identical_and_order_free() {
        let mut a = ClockBank::new(42);
        let forward: Vec<f64> = (1..=50).map(|n| a.exponential(E01, n)).collect();
        let mut b = ClockBank::new(42);
        for n in (1..=50).rev() {
            assert_eq!(b.exponential(E01, n).to_bits(), forward[n as usize - 1].to_bits());
        }
        assert_eq!(a.exponential(E01, 17).to_bits(), forward[16].to_bits());
        assert_eq!(a.exponential(E01, 17).to_bits(), forward[16].to_bits());
        // interleaving other edges does not disturb a stream
        let mut c = ClockBank::new(42);
        for n in 1..=50 {
            c.exponential(E10, n);
            c.exponential(DirectedEdge::step(-5, false), n);
            assert_eq!(c.exponential(E01, n).to_bits(), forward[n as usize - 1].to_bits());
        }
    }

    #[test]
    fn seeds_and_edges_give_different_streams() {
        let mut a = ClockBank::new(1);
        let mut b = ClockBank::new(2);
        assert_ne!(a.exponential(E01, 1), b.exponential(E01, 1));
        assert_ne!(a.exponential(E01, 1), a.exponential(E10, 1));
    }

    #[test]
    fn draws_are_positive_and_finite() {
        let mut s = ExpStream::for_edge(5, E01);
        assert!((0..200_000).all(|_| {
            let x = s.next_exp();
            x > 0.0 && x.is_finite()
        }));
        for bits in [0u64, 1, u64::MAX] {
            let u = open_unit(bits);
            assert!(u > 0.0 && u < 1.0);
        }
    }

    #[test]
    fn substream_seeds_are_deterministic_and_distinct() {
        let s = 0xDEAD_BEEF;
        assert_eq!(substream_seed(s, "replica/0"), substream_seed(s, "replica/0"));
        assert_ne!(substream_seed(s, "replica/0"), substream_seed(s, "replica/1"));
        assert_ne!(substream_seed(s, "A"), substream_seed(s + 1, "A"));
    }

    #[test]
    fn first_clock_mean_across_seeds() {
        let n = 100_000;
        let mean = (0..n).map(|s| ClockBank::new(s).exponential(E01, 1)).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn stream_cdf_at_one() {
        let mut bank = ClockBank::new(7);
        let n = 100_000;
        let hits = (1..=n).filter(|&k| bank.exponential(E01, k) <= 1.0).count();
        let p = hits as f64 / n as f64;
        assert!((p - (1.0 - (-1.0f64).exp())).abs() < 0.005, "p {p}");
    }

    #[test]
    fn auxiliary_exponential_mean() {
        let n = 100_000;
        let mean = (0..n).map(|r| ExpStream::from_seed(substream_seed(r, "A")).next_exp()).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn opposite_edges_uncorrelated() {
        let mut bank = ClockBank::new(99);
        let n = 100_000u64;
        let xs: Vec<f64> = (1..=n).map(|k| bank.exponential(E01, k)).collect();
        let ys: Vec<f64> = (1..=n).map(|k| bank.exponential(E10, k)).collect();
        let mx = xs.iter().sum::<f64>() / n as f64;
        let my = ys.iter().sum::<f64>() / n as f64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (x, y) in xs.iter().zip(&ys) {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
            syy += (y - my) * (y - my);
        }
        let r = sxy / (sxx * syy).sqrt();
        assert!(r.abs() < 0.01, "r {r}");
    }
}
