use std::fmt;

/// Closed real interval `[lo, hi]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Self {
        debug_assert!(lo <= hi, "empty interval [{lo}, {hi}]");
        Interval { lo, hi }
    }

    pub fn centered(center: f64, len: f64) -> Self {
        Interval::new(center - 0.5 * len, center + 0.5 * len)
    }

    pub fn len(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn center(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    /// Same center, length multiplied by `factor`.
    pub fn dilate(&self, factor: f64) -> Self {
        Interval::centered(self.center(), self.len() * factor)
    }

    /// Pointwise scaling `factor · I = [factor·lo, factor·hi]` (endpoints reordered for negative factors).
    pub fn scaled(&self, factor: f64) -> Self {
        let (a, b) = (self.lo * factor, self.hi * factor);
        Interval::new(a.min(b), a.max(b))
    }

    pub fn shift(&self, by: f64) -> Self {
        Interval::new(self.lo + by, self.hi + by)
    }

    /// Minkowski sum.
    pub fn sum(&self, other: &Interval) -> Self {
        Interval::new(self.lo + other.lo, self.hi + other.hi)
    }

    pub fn neg(&self) -> Self {
        Interval::new(-self.hi, -self.lo)
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.lo <= other.lo && other.hi <= self.hi
    }

    pub fn intersects(&self, other: &Interval) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }

    /// Distance between the sets (0 when they meet).
    pub fn distance(&self, other: &Interval) -> f64 {
        (other.lo - self.hi).max(self.lo - other.hi).max(0.0)
    }

    pub fn hull(&self, other: &Interval) -> Self {
        Interval::new(self.lo.min(other.lo), self.hi.max(other.hi))
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.lo, self.hi)
    }
}

/// Finite union of intervals, kept sorted and merged. Membership uses
/// half-open pieces `[lo, hi)` so that tilings sum to exactly one on a grid.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct IntervalUnion {
    pieces: Vec<Interval>,
}

impl IntervalUnion {
    pub fn new(mut pieces: Vec<Interval>) -> Self {
        pieces.retain(|p| p.len() > 0.0);
        pieces.sort_by(|a, b| a.lo.total_cmp(&b.lo));
        let mut merged: Vec<Interval> = Vec::with_capacity(pieces.len());
        for p in pieces {
            match merged.last_mut() {
                Some(last) if p.lo <= last.hi => last.hi = last.hi.max(p.hi),
                _ => merged.push(p),
            }
        }
        IntervalUnion { pieces: merged }
    }

    pub fn single(i: Interval) -> Self {
        IntervalUnion::new(vec![i])
    }

    pub fn pieces(&self) -> &[Interval] {
        &self.pieces
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn measure(&self) -> f64 {
        self.pieces.iter().map(Interval::len).sum()
    }

    pub fn contains(&self, x: f64) -> bool {
        self.pieces.iter().any(|p| p.lo <= x && x < p.hi)
    }

    /// True when the closed interval `i` lies in the closure of the union.
    pub fn covers(&self, i: &Interval) -> bool {
        self.pieces.iter().any(|p| p.contains_interval(i))
    }

    /// True when `i` meets the complement of the union.
    pub fn misses_part_of(&self, i: &Interval) -> bool {
        !self.covers(i)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dilation_keeps_center() {
        let i = Interval::new(1.0, 3.0);
        let d = i.dilate(3.0);
        assert_eq!(d, Interval::new(-1.0, 5.0));
        assert_eq!(i.scaled(-2.0), Interval::new(-6.0, -2.0));
    }

    #[test]
    fn union_merges_overlaps() {
        let u = IntervalUnion::new(vec![
            Interval::new(2.0, 3.0),
            Interval::new(0.0, 1.0),
            Interval::new(0.5, 2.0),
        ]);
        assert_eq!(u.pieces(), &[Interval::new(0.0, 3.0)]);
        assert_eq!(u.measure(), 3.0);
        assert!(u.contains(0.0) && !u.contains(3.0));
    }
}
