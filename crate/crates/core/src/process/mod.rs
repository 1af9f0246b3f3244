//! Event-driven simulation of the vertex-reinforced jump process on connected
//! subsets of the integer line.

mod line;
mod restrict;
mod trajectory;
mod two_vertex;
mod walker;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::weights::WeightError;

pub use line::LineChain;
pub use restrict::{restrict, Restricted};
pub use trajectory::{simulate, Event, Provenance, RunLimits, Sojourn, Trajectory, TrajectoryMeta};
pub use two_vertex::{advance_pair, Stop, TwoVertexChain};
pub use walker::{ClockRule, Walker};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProcessError {
    #[error("vertex set is empty")]
    EmptyVertexSet,
    #[error("vertex set is not connected")]
    NotConnected,
    #[error("vertex set has a single vertex; the process would never jump")]
    SingleVertex,
    #[error("horizon must be positive (got {0})")]
    NonPositiveHorizon(f64),
    #[error("need a positive horizon or max_jumps >= 1")]
    NoStoppingRule,
    #[error("initial local time at {vertex} must be finite and >= 1 (got {value})")]
    InitialLocalTime { vertex: i64, value: f64 },
    #[error("vertex {0} is outside the vertex set")]
    OutsideSet(i64),
    #[error("query time {t} outside [0, {horizon}]")]
    TimeOutOfRange { t: f64, horizon: f64 },
    #[error("operation needs a trajectory on the vertex set {{0, 1}}")]
    NotTwoVertex,
    #[error("malformed trajectory: {0}")]
    Malformed(String),
    #[error(transparent)]
    Weight(#[from] WeightError),
}

/// A connected set of integers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VertexSet {
    FullLine,
    #[serde(rename = "half_line")]
    HalfLinePlus,
    Segment {
        lo: i64,
        hi: i64,
    },
    Mask {
        vertices: Vec<i64>,
    },
}

impl VertexSet {
    pub fn two_vertex() -> Self {
        VertexSet::Segment { lo: 0, hi: 1 }
    }

    /// Inclusive bounds, with `None` for an unbounded side.
    pub fn bounds(&self) -> Result<(Option<i64>, Option<i64>), ProcessError> {
        match self {
            VertexSet::FullLine => Ok((None, None)),
            VertexSet::HalfLinePlus => Ok((Some(0), None)),
            VertexSet::Segment { lo, hi } => {
                if lo > hi {
                    Err(ProcessError::EmptyVertexSet)
                } else {
                    Ok((Some(*lo), Some(*hi)))
                }
            }
            VertexSet::Mask { vertices } => {
                let mut v = vertices.clone();
                v.sort_unstable();
                v.dedup();
                let (lo, hi) = match (v.first(), v.last()) {
                    (Some(&lo), Some(&hi)) => (lo, hi),
                    _ => return Err(ProcessError::EmptyVertexSet),
                };
                if (hi - lo + 1) as usize != v.len() {
                    return Err(ProcessError::NotConnected);
                }
                Ok((Some(lo), Some(hi)))
            }
        }
    }

    /// Checks the set is a connected set of at least two vertices.
    pub fn validate(&self) -> Result<(), ProcessError> {
        match self.bounds()? {
            (Some(lo), Some(hi)) if lo == hi => Err(ProcessError::SingleVertex),
            _ => Ok(()),
        }
    }

    pub fn contains(&self, x: i64) -> bool {
        match self.bounds() {
            Ok((lo, hi)) => lo.is_none_or(|l| x >= l) && hi.is_none_or(|h| x <= h),
            Err(_) => false,
        }
    }

    /// Starting vertex: 0 when it belongs to the set, otherwise the endpoint nearest 0.
    pub fn start_vertex(&self) -> Result<i64, ProcessError> {
        let (lo, hi) = self.bounds()?;
        if self.contains(0) {
            return Ok(0);
        }
        match (lo, hi) {
            (Some(lo), _) if lo > 0 => Ok(lo),
            (_, Some(hi)) if hi < 0 => Ok(hi),
            _ => Err(ProcessError::NotConnected),
        }
    }

    pub fn is_two_vertex(&self) -> bool {
        matches!(self.bounds(), Ok((Some(0), Some(1))))
    }
}

impl fmt::Display for VertexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.bounds() {
            Ok((None, None)) => f.write_str("Z"),
            Ok((Some(lo), None)) => write!(f, "[{lo}, inf)"),
            Ok((None, Some(hi))) => write!(f, "(-inf, {hi}]"),
            Ok((Some(lo), Some(hi))) => write!(f, "{{{lo}..{hi}}}"),
            Err(e) => write!(f, "<{e}>"),
        }
    }
}

/// Initial local times: a common default plus per-vertex overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitialLocalTimes {
    pub default: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub overrides: BTreeMap<i64, f64>,
}

impl Default for InitialLocalTimes {
    fn default() -> Self {
        Self::uniform(1.0)
    }
}

impl InitialLocalTimes {
    pub fn uniform(value: f64) -> Self {
        Self { default: value, overrides: BTreeMap::new() }
    }

    /// `ell = (l0, l1)` on the two-vertex graph.
    pub fn pair(l0: f64, l1: f64) -> Self {
        let mut s = Self::uniform(1.0);
        s.overrides.insert(0, l0);
        s.overrides.insert(1, l1);
        s
    }

    pub fn with(mut self, vertex: i64, value: f64) -> Self {
        self.overrides.insert(vertex, value);
        self
    }

    pub fn at(&self, x: i64) -> f64 {
        self.overrides.get(&x).copied().unwrap_or(self.default)
    }

    pub fn validate(&self) -> Result<(), ProcessError> {
        let ok = |v: f64| v.is_finite() && v >= 1.0;
        if !ok(self.default) {
            return Err(ProcessError::InitialLocalTime { vertex: 0, value: self.default });
        }
        for (&vertex, &value) in &self.overrides {
            if !ok(value) {
                return Err(ProcessError::InitialLocalTime { vertex, value });
            }
        }
        Ok(())
    }
}
