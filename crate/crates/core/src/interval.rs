//! Exact rational intervals and finite unions of them.

use std::cmp::Ordering;
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::rational::{fmt_q, max_q, min_q, qi, serde_q, Q};

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Interval {
    #[serde(with = "serde_q")]
    pub lo: Q,
    #[serde(with = "serde_q")]
    pub hi: Q,
    #[serde(default = "yes")]
    pub lo_closed: bool,
    #[serde(default = "yes")]
    pub hi_closed: bool,
}

impl Interval {
    pub fn new(lo: Q, hi: Q, lo_closed: bool, hi_closed: bool) -> Self {
        Interval { lo, hi, lo_closed, hi_closed }
    }
    pub fn closed(lo: Q, hi: Q) -> Self {
        Self::new(lo, hi, true, true)
    }
    pub fn open(lo: Q, hi: Q) -> Self {
        Self::new(lo, hi, false, false)
    }
    pub fn closed_open(lo: Q, hi: Q) -> Self {
        Self::new(lo, hi, true, false)
    }
    pub fn open_closed(lo: Q, hi: Q) -> Self {
        Self::new(lo, hi, false, true)
    }
    pub fn point(x: Q) -> Self {
        Self::new(x.clone(), x, true, true)
    }

    pub fn is_empty(&self) -> bool {
        match self.lo.cmp(&self.hi) {
            Ordering::Greater => true,
            Ordering::Equal => !(self.lo_closed && self.hi_closed),
            Ordering::Less => false,
        }
    }

    pub fn is_degenerate(&self) -> bool {
        !self.is_empty() && self.lo == self.hi
    }

    pub fn contains(&self, x: &Q) -> bool {
        let lo_ok = if self.lo_closed { x >= &self.lo } else { x > &self.lo };
        let hi_ok = if self.hi_closed { x <= &self.hi } else { x < &self.hi };
        lo_ok && hi_ok
    }

    /// Some interval `(x - e, x)` lies inside.
    pub fn has_left_germ(&self, x: &Q) -> bool {
        &self.lo < x && x <= &self.hi
    }

    /// Some interval `(x, x + e)` lies inside.
    pub fn has_right_germ(&self, x: &Q) -> bool {
        x >= &self.lo && x < &self.hi
    }

    pub fn has_germ(&self, x: &Q, side: Side) -> bool {
        match side {
            Side::Left => self.has_left_germ(x),
            Side::Right => self.has_right_germ(x),
        }
    }

    pub fn length(&self) -> Q {
        if self.is_empty() {
            Q::zero()
        } else {
            &self.hi - &self.lo
        }
    }

    pub fn midpoint(&self) -> Q {
        (&self.lo + &self.hi) / qi(2)
    }

    pub fn intersect(&self, o: &Interval) -> Interval {
        let (lo, lo_closed) = match self.lo.cmp(&o.lo) {
            Ordering::Greater => (self.lo.clone(), self.lo_closed),
            Ordering::Less => (o.lo.clone(), o.lo_closed),
            Ordering::Equal => (self.lo.clone(), self.lo_closed && o.lo_closed),
        };
        let (hi, hi_closed) = match self.hi.cmp(&o.hi) {
            Ordering::Less => (self.hi.clone(), self.hi_closed),
            Ordering::Greater => (o.hi.clone(), o.hi_closed),
            Ordering::Equal => (self.hi.clone(), self.hi_closed && o.hi_closed),
        };
        Interval { lo, hi, lo_closed, hi_closed }
    }

    /// Image under `x -> slope*x + intercept` (slope nonzero).
    pub fn affine_image(&self, slope: &Q, intercept: &Q) -> Interval {
        let a = slope * &self.lo + intercept;
        let b = slope * &self.hi + intercept;
        if slope.is_positive() {
            Interval::new(a, b, self.lo_closed, self.hi_closed)
        } else {
            Interval::new(b, a, self.hi_closed, self.lo_closed)
        }
    }

    /// Preimage under `x -> slope*x + intercept` (slope nonzero).
    pub fn affine_preimage(&self, slope: &Q, intercept: &Q) -> Interval {
        let inv = Q::one() / slope;
        let c = -(intercept * &inv);
        self.affine_image(&inv, &c)
    }

    pub fn closure(&self) -> Interval {
        Interval::closed(self.lo.clone(), self.hi.clone())
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_degenerate() {
            return write!(f, "{{{}}}", fmt_q(&self.lo));
        }
        write!(
            f,
            "{}{},{}{}",
            if self.lo_closed { '[' } else { '(' },
            fmt_q(&self.lo),
            fmt_q(&self.hi),
            if self.hi_closed { ']' } else { ')' }
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn flip(self) -> Side {
        match self {
            Side::Left => Side::Right,
            Side::Right => Side::Left,
        }
    }
    /// Side on which `slope*x` lands when `x` moves to `self`.
    pub fn through(self, slope: &Q) -> Side {
        if slope.is_negative() { self.flip() } else { self }
    }
    pub const BOTH: [Side; 2] = [Side::Left, Side::Right];
}

/// Finite union of intervals in canonical form: sorted, pairwise disjoint and
/// non-touching, no empty parts.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IntervalSet {
    parts: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty() -> Self {
        IntervalSet { parts: Vec::new() }
    }

    pub fn from_interval(i: Interval) -> Self {
        Self::from_intervals(vec![i])
    }

    pub fn from_points<I: IntoIterator<Item = Q>>(pts: I) -> Self {
        Self::from_intervals(pts.into_iter().map(Interval::point).collect())
    }

    pub fn from_intervals(mut v: Vec<Interval>) -> Self {
        v.retain(|i| !i.is_empty());
        v.sort_by(|a, b| a.lo.cmp(&b.lo).then(b.lo_closed.cmp(&a.lo_closed)));
        let mut out: Vec<Interval> = Vec::new();
        for n in v {
            if let Some(cur) = out.last_mut() {
                let touches = n.lo < cur.hi || (n.lo == cur.hi && (cur.hi_closed || n.lo_closed));
                if touches {
                    match n.hi.cmp(&cur.hi) {
                        Ordering::Greater => {
                            cur.hi = n.hi;
                            cur.hi_closed = n.hi_closed;
                        }
                        Ordering::Equal => cur.hi_closed |= n.hi_closed,
                        Ordering::Less => {}
                    }
                    continue;
                }
            }
            out.push(n);
        }
        IntervalSet { parts: out }
    }

    pub fn parts(&self) -> &[Interval] {
        &self.parts
    }

    pub fn is_empty(&self) -> bool {
        self.parts.is_empty()
    }

    pub fn contains(&self, x: &Q) -> bool {
        self.parts.iter().any(|i| i.contains(x))
    }

    pub fn union(&self, o: &IntervalSet) -> IntervalSet {
        let mut v = self.parts.clone();
        v.extend(o.parts.iter().cloned());
        Self::from_intervals(v)
    }

    pub fn intersect(&self, o: &IntervalSet) -> IntervalSet {
        let mut v = Vec::new();
        for a in &self.parts {
            for b in &o.parts {
                let c = a.intersect(b);
                if !c.is_empty() {
                    v.push(c);
                }
            }
        }
        Self::from_intervals(v)
    }

    pub fn intersect_interval(&self, i: &Interval) -> IntervalSet {
        self.intersect(&IntervalSet::from_interval(i.clone()))
    }

    /// Complement inside a closed bounding box containing both sets.
    fn gaps(&self, lo: &Q, hi: &Q) -> IntervalSet {
        let mut v = Vec::new();
        let mut start = (lo.clone(), true);
        for p in &self.parts {
            v.push(Interval::new(start.0.clone(), p.lo.clone(), start.1, !p.lo_closed));
            start = (p.hi.clone(), !p.hi_closed);
        }
        v.push(Interval::new(start.0, hi.clone(), start.1, true));
        Self::from_intervals(v)
    }

    pub fn difference(&self, o: &IntervalSet) -> IntervalSet {
        let (Some(lo), Some(hi)) = (self.lower(), self.upper()) else {
            return IntervalSet::empty();
        };
        let (lo, hi) = match (o.lower(), o.upper()) {
            (Some(l), Some(h)) => (min_q(&lo, &l) - qi(1), max_q(&hi, &h) + qi(1)),
            _ => return self.clone(),
        };
        self.intersect(&o.gaps(&lo, &hi))
    }

    pub fn remove_points(&self, pts: &[Q]) -> IntervalSet {
        self.difference(&IntervalSet::from_points(pts.iter().cloned()))
    }

    pub fn is_subset(&self, o: &IntervalSet) -> bool {
        self.difference(o).is_empty()
    }

    pub fn lower(&self) -> Option<Q> {
        self.parts.first().map(|i| i.lo.clone())
    }

    pub fn upper(&self) -> Option<Q> {
        self.parts.last().map(|i| i.hi.clone())
    }

    pub fn closure(&self) -> IntervalSet {
        Self::from_intervals(self.parts.iter().map(|i| i.closure()).collect())
    }

    /// Interior as a subset of the real line.
    pub fn interior(&self) -> IntervalSet {
        Self::from_intervals(
            self.parts.iter().map(|i| Interval::open(i.lo.clone(), i.hi.clone())).collect(),
        )
    }

    /// Interior relative to the ambient set `space`.
    pub fn interior_in(&self, space: &IntervalSet) -> IntervalSet {
        let rest = space.difference(self);
        let bad = self.intersect(&rest.closure());
        self.difference(&bad)
    }

    /// Open in the subspace topology of `space` (assumes `self ⊆ space`).
    pub fn is_open_in(&self, space: &IntervalSet) -> bool {
        let rest = space.difference(self);
        self.intersect(&rest.closure()).is_empty()
    }

    pub fn affine_image(&self, slope: &Q, intercept: &Q) -> IntervalSet {
        Self::from_intervals(self.parts.iter().map(|i| i.affine_image(slope, intercept)).collect())
    }

    pub fn affine_preimage(&self, slope: &Q, intercept: &Q) -> IntervalSet {
        Self::from_intervals(self.parts.iter().map(|i| i.affine_preimage(slope, intercept)).collect())
    }

    /// Points of the set arbitrarily close to `x` on the given side.
    pub fn has_germ(&self, x: &Q, side: Side) -> bool {
        self.parts.iter().any(|i| i.has_germ(x, side))
    }

    pub fn isolated_points(&self) -> Vec<Q> {
        self.parts.iter().filter(|i| i.is_degenerate()).map(|i| i.lo.clone()).collect()
    }

    pub fn total_length(&self) -> Q {
        self.parts.iter().map(|i| i.length()).fold(Q::zero(), |a, b| a + b)
    }

    /// All finite endpoints of the components.
    pub fn endpoints(&self) -> Vec<Q> {
        let mut v: Vec<Q> = self.parts.iter().flat_map(|i| [i.lo.clone(), i.hi.clone()]).collect();
        v.sort();
        v.dedup();
        v
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.parts.is_empty() {
            return write!(f, "∅");
        }
        let s: Vec<String> = self.parts.iter().map(|i| i.to_string()).collect();
        write!(f, "{}", s.join("∪"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::q;

    fn unit() -> IntervalSet {
        IntervalSet::from_interval(Interval::closed(qi(0), qi(1)))
    }

    #[test]
    fn merge_touching() {
        let s = IntervalSet::from_intervals(vec![
            Interval::closed_open(qi(0), q(1, 2)),
            Interval::point(q(1, 2)),
            Interval::open_closed(q(1, 2), qi(1)),
        ]);
        assert_eq!(s, unit());
        let t = IntervalSet::from_intervals(vec![
            Interval::closed_open(qi(0), q(1, 2)),
            Interval::open_closed(q(1, 2), qi(1)),
        ]);
        assert_eq!(t.parts().len(), 2);
        assert!(!t.contains(&q(1, 2)));
    }

    #[test]
    fn difference_removes_point() {
        let d = unit().remove_points(&[q(1, 2)]);
        assert_eq!(d.to_string(), "[0,1/2)∪(1/2,1]");
        assert!(d.union(&IntervalSet::from_points([q(1, 2)])) == unit());
    }

    #[test]
    fn relative_openness() {
        let x = unit();
        let a = IntervalSet::from_interval(Interval::closed_open(qi(0), q(1, 2)));
        assert!(a.is_open_in(&x));
        let b = IntervalSet::from_interval(Interval::closed(qi(0), q(1, 2)));
        assert!(!b.is_open_in(&x));
        assert_eq!(b.interior_in(&x), a);
    }

    #[test]
    fn affine_maps() {
        let i = Interval::closed_open(qi(0), q(1, 2));
        let im = i.affine_image(&qi(-2), &qi(2));
        assert_eq!(im, Interval::open_closed(qi(1), qi(2)));
        assert_eq!(im.affine_preimage(&qi(-2), &qi(2)), i);
    }

    #[test]
    fn germs() {
        let i = Interval::closed(qi(0), q(1, 2));
        assert!(i.has_left_germ(&q(1, 2)));
        assert!(!i.has_right_germ(&q(1, 2)));
        assert!(i.has_right_germ(&qi(0)));
        assert!(!i.has_left_germ(&qi(0)));
    }
}
