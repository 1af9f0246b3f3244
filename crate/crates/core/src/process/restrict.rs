use super::{Event, ProcessError, Trajectory, VertexSet};

/// A path watched only while it is inside a vertex set `B`.
#[derive(Debug, Clone, PartialEq)]
pub struct Restricted {
    /// First vertex of `B` the path occupies; `None` if it never enters `B`.
    pub start: Option<i64>,
    /// Jumps between vertices of `B`, timed by the clock that runs only inside `B`.
    pub events: Vec<Event>,
    /// Time spent inside `B` up to the horizon.
    pub t_b: f64,
    /// Whether `t_b` is only a lower bound for the total time the
    /// infinite path spends in `B`.
    pub censored: bool,
}

/// Applies the time change that excises every sojourn outside `b`.
///
/// Clock values are computed as elapsed time minus excised time, so a set
/// containing the whole path reproduces the original jump times exactly.
pub fn restrict(traj: &Trajectory, b: &VertexSet) -> Result<Restricted, ProcessError> {
    b.bounds()?;
    let mut outside = 0.0;
    let mut at: Option<i64> = None;
    let mut start = None;
    let mut events = Vec::new();
    for s in traj.sojourns() {
        if b.contains(s.vertex) {
            match at {
                None => start = Some(s.vertex),
                Some(v) if v != s.vertex => events.push(Event { tau: s.start - outside, from: v, to: s.vertex }),
                Some(_) => {}
            }
            at = Some(s.vertex);
        } else {
            outside += s.len();
        }
    }
    let whole_set = {
        let (blo, bhi) = b.bounds()?;
        let (lo, hi) = traj.meta.vset.bounds()?;
        let covers_lo = match (blo, lo) {
            (None, _) => true,
            (Some(x), Some(y)) => x <= y,
            (Some(_), None) => false,
        };
        let covers_hi = match (bhi, hi) {
            (None, _) => true,
            (Some(x), Some(y)) => x >= y,
            (Some(_), None) => false,
        };
        covers_lo && covers_hi
    };
    Ok(Restricted { start, events, t_b: traj.horizon() - outside, censored: !whole_set })
}
