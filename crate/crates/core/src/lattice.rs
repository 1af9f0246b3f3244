//! Dense two-sided storage indexed by integer vertices.
//!
//! Walks on the line touch a contiguous, slowly growing window of vertices, so
//! a pair of vectors growing away from the origin beats hashing in the hot loop.

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeVec<T> {
    nonneg: Vec<T>,
    neg: Vec<T>,
    fill: T,
}

impl<T: Clone> LatticeVec<T> {
    /// Every vertex initially holds `fill`.
    pub fn new(fill: T) -> Self {
        Self { nonneg: Vec::new(), neg: Vec::new(), fill }
    }

    pub fn fill_value(&self) -> &T {
        &self.fill
    }

    #[inline]
    pub fn get(&self, x: i64) -> &T {
        let slot = if x >= 0 { self.nonneg.get(x as usize) } else { self.neg.get((-1 - x) as usize) };
        slot.unwrap_or(&self.fill)
    }

    #[inline]
    pub fn get_mut(&mut self, x: i64) -> &mut T {
        let (vec, idx) = if x >= 0 { (&mut self.nonneg, x as usize) } else { (&mut self.neg, (-1 - x) as usize) };
        if idx >= vec.len() {
            vec.resize(idx + 1, self.fill.clone());
        }
        &mut vec[idx]
    }

    #[inline]
    pub fn set(&mut self, x: i64, value: T) {
        *self.get_mut(x) = value;
    }

    /// Smallest and largest vertex with materialized storage, if any.
    pub fn touched_range(&self) -> Option<(i64, i64)> {
        if self.nonneg.is_empty() && self.neg.is_empty() {
            return None;
        }
        let lo = if self.neg.is_empty() { 0 } else { -(self.neg.len() as i64) };
        let hi = if self.nonneg.is_empty() { -1 } else { self.nonneg.len() as i64 - 1 };
        Some((lo, hi))
    }

    /// Materialized `(vertex, value)` pairs in increasing vertex order.
    pub fn iter(&self) -> impl Iterator<Item = (i64, &T)> + '_ {
        let neg = self.neg.iter().enumerate().rev().map(|(k, v)| (-1 - k as i64, v));
        let pos = self.nonneg.iter().enumerate().map(|(k, v)| (k as i64, v));
        neg.chain(pos)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_growth() {
        let mut v = LatticeVec::new(1.0);
        assert_eq!(*v.get(-7), 1.0);
        v.set(-3, 2.5);
        v.set(4, 0.5);
        assert_eq!(*v.get(-3), 2.5);
        assert_eq!(*v.get(-2), 1.0);
        assert_eq!(*v.get(4), 0.5);
        assert_eq!(v.touched_range(), Some((-3, 4)));
        let xs: Vec<i64> = v.iter().map(|(x, _)| x).collect();
        assert_eq!(xs, (-3..=4).collect::<Vec<_>>());
    }
}
