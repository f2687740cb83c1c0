//! Partial dynamical systems `φ: Δ → X` with a potential `ρ`, in two exact
//! backends: piecewise-affine interval maps and boundary-path shifts of finite
//! graphs.

use std::collections::BTreeSet;
use std::fmt;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Cyl, CylinderSet, Edge, Graph, PathPoint};
use crate::interval::{Interval, IntervalSet, Side};
use crate::rational::{fmt_q, serde_q, Q};

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Point {
    Real(#[serde(with = "serde_q")] Q),
    Path(PathPoint),
}

impl Point {
    pub fn real(&self) -> Option<&Q> {
        match self {
            Point::Real(x) => Some(x),
            Point::Path(_) => None,
        }
    }
    pub fn path(&self) -> Option<&PathPoint> {
        match self {
            Point::Path(p) => Some(p),
            Point::Real(_) => None,
        }
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Point::Real(x) => write!(f, "{}", fmt_q(x)),
            Point::Path(p) => write!(f, "{p}"),
        }
    }
}

/// `x -> slope*x + intercept`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Affine {
    pub slope: Q,
    pub intercept: Q,
}

impl Affine {
    pub fn new(slope: Q, intercept: Q) -> Self {
        Affine { slope, intercept }
    }
    pub fn identity() -> Self {
        Affine { slope: Q::one(), intercept: Q::zero() }
    }
    pub fn constant(c: Q) -> Self {
        Affine { slope: Q::zero(), intercept: c }
    }
    pub fn eval(&self, x: &Q) -> Q {
        &self.slope * x + &self.intercept
    }
    /// `self ∘ inner`.
    pub fn compose(&self, inner: &Affine) -> Affine {
        Affine {
            slope: &self.slope * &inner.slope,
            intercept: &self.slope * &inner.intercept + &self.intercept,
        }
    }
    pub fn inverse_at(&self, y: &Q) -> Q {
        (y - &self.intercept) / &self.slope
    }
    /// `{x ∈ dom : self(x) > 0}`.
    pub fn positive_part(&self, dom: &Interval) -> IntervalSet {
        if self.slope.is_zero() {
            return if self.intercept.is_positive() {
                IntervalSet::from_interval(dom.clone())
            } else {
                IntervalSet::empty()
            };
        }
        let root = -(&self.intercept) / &self.slope;
        let half = if self.slope.is_positive() {
            Interval::new(root, dom.hi.clone(), false, true)
        } else {
            Interval::new(dom.lo.clone(), root, true, false)
        };
        IntervalSet::from_interval(dom.intersect(&half))
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AffineBranch {
    pub domain: Interval,
    pub map: Affine,
}

impl AffineBranch {
    pub fn new(domain: Interval, slope: Q, intercept: Q) -> Self {
        AffineBranch { domain, map: Affine::new(slope, intercept) }
    }
    pub fn image(&self) -> Interval {
        self.domain.affine_image(&self.map.slope, &self.map.intercept)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IntervalSystem {
    pub space: IntervalSet,
    pub branches: Vec<AffineBranch>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GraphSystem {
    pub graph: Graph,
    pub truncation_depth: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum PartialSystem {
    Interval(IntervalSystem),
    Graph(GraphSystem),
}

/// Product of affine factors on one piece of the potential. The input format
/// only produces single factors; powers of a system multiply them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RhoPiece {
    pub domain: Interval,
    pub factors: Vec<Affine>,
}

impl RhoPiece {
    pub fn affine(domain: Interval, slope: Q, intercept: Q) -> Self {
        RhoPiece { domain, factors: vec![Affine::new(slope, intercept)] }
    }
    pub fn eval(&self, x: &Q) -> Q {
        self.factors.iter().fold(Q::one(), |acc, f| acc * f.eval(x))
    }
    pub fn positive_part(&self) -> IntervalSet {
        let mut s = IntervalSet::from_interval(self.domain.clone());
        for f in &self.factors {
            s = s.intersect(&f.positive_part(&self.domain));
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiecewisePotential {
    pub pieces: Vec<RhoPiece>,
    pub overrides: Vec<(Q, Q)>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Potential {
    Interval(PiecewisePotential),
    Graph(Vec<Q>),
}

/// A set of points in either backend.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SetDesc {
    Intervals(IntervalSet),
    Cylinders(CylinderSet),
}

impl SetDesc {
    pub fn intervals(&self) -> Option<&IntervalSet> {
        match self {
            SetDesc::Intervals(s) => Some(s),
            _ => None,
        }
    }
    pub fn cylinders(&self) -> Option<&CylinderSet> {
        match self {
            SetDesc::Cylinders(s) => Some(s),
            _ => None,
        }
    }
    pub fn is_empty(&self) -> bool {
        match self {
            SetDesc::Intervals(s) => s.is_empty(),
            SetDesc::Cylinders(s) => s.is_empty(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IrregularReason {
    ZeroPotential,
    RhoDiscontinuous,
    NotLocallyInjective,
}

impl fmt::Display for IrregularReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            IrregularReason::ZeroPotential => "zero_potential",
            IrregularReason::RhoDiscontinuous => "rho_discontinuous",
            IrregularReason::NotLocallyInjective => "not_locally_injective",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IrregularPoint {
    pub point: Point,
    pub reasons: Vec<IrregularReason>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionReport {
    pub delta: SetDesc,
    pub delta_pos: SetDesc,
    pub delta_reg: SetDesc,
    /// `Δ ∖ Δ_pos`, every point of which is irregular for the reason zero_potential.
    pub zero_set: SetDesc,
    pub irregular_points: Vec<IrregularPoint>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EssentialDomain {
    pub set: SetDesc,
    pub depth: usize,
    pub stabilized: bool,
    pub stabilized_at: Option<usize>,
}

/// A system together with its potential and the configured depth bound.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Model {
    pub sys: PartialSystem,
    pub pot: Potential,
    pub depth_bound: usize,
}

pub const DEFAULT_DEPTH_BOUND: usize = 16;

impl Model {
    pub fn new(sys: PartialSystem, pot: Potential) -> Self {
        Model { sys, pot, depth_bound: DEFAULT_DEPTH_BOUND }
    }

    pub fn interval_sys(&self) -> Option<&IntervalSystem> {
        match &self.sys {
            PartialSystem::Interval(s) => Some(s),
            _ => None,
        }
    }

    pub fn graph(&self) -> Option<&Graph> {
        match &self.sys {
            PartialSystem::Graph(g) => Some(&g.graph),
            _ => None,
        }
    }

    pub fn is_graph(&self) -> bool {
        matches!(self.sys, PartialSystem::Graph(_))
    }

    pub fn piecewise(&self) -> Option<&PiecewisePotential> {
        match &self.pot {
            Potential::Interval(p) => Some(p),
            _ => None,
        }
    }

    pub fn weights(&self) -> Option<&[Q]> {
        match &self.pot {
            Potential::Graph(w) => Some(w),
            _ => None,
        }
    }

    pub fn show(&self, x: &Point) -> String {
        match (x, self.graph()) {
            (Point::Path(p), Some(g)) => p.display(g),
            _ => x.to_string(),
        }
    }

    // ---- point-level dynamics ----

    pub fn in_space(&self, x: &Point) -> bool {
        match (&self.sys, x) {
            (PartialSystem::Interval(s), Point::Real(v)) => s.space.contains(v),
            (PartialSystem::Graph(g), Point::Path(p)) => p.is_valid(&g.graph),
            _ => false,
        }
    }

    pub fn branch_at(&self, x: &Q) -> Option<&AffineBranch> {
        self.interval_sys()?.branches.iter().find(|b| b.domain.contains(x))
    }

    pub fn in_domain(&self, x: &Point) -> bool {
        self.phi(x).is_some()
    }

    pub fn phi(&self, x: &Point) -> Option<Point> {
        match (&self.sys, x) {
            (PartialSystem::Interval(_), Point::Real(v)) => {
                self.branch_at(v).map(|b| Point::Real(b.map.eval(v)))
            }
            (PartialSystem::Graph(_), Point::Path(p)) => Some(Point::Path(p.shift())),
            _ => None,
        }
    }

    pub fn phi_n(&self, n: usize, x: &Point) -> Option<Point> {
        let mut cur = x.clone();
        for _ in 0..n {
            cur = self.phi(&cur)?;
        }
        Some(cur)
    }

    /// Exact `φ^{-1}(y)`, sorted.
    pub fn preimages1(&self, y: &Point) -> Vec<Point> {
        let mut out = BTreeSet::new();
        match (&self.sys, y) {
            (PartialSystem::Interval(s), Point::Real(v)) => {
                for b in &s.branches {
                    let x = b.map.inverse_at(v);
                    if b.domain.contains(&x) {
                        out.insert(Point::Real(x));
                    }
                }
            }
            (PartialSystem::Graph(g), Point::Path(p)) => {
                for e in g.graph.emitting(p.range(&g.graph)) {
                    out.insert(Point::Path(p.prepend(e)));
                }
            }
            _ => {}
        }
        out.into_iter().collect()
    }

    pub fn preimages_n(&self, y: &Point, n: usize) -> Vec<Point> {
        let mut cur = vec![y.clone()];
        for _ in 0..n {
            let mut next = BTreeSet::new();
            for p in &cur {
                next.extend(self.preimages1(p));
            }
            cur = next.into_iter().collect();
        }
        cur
    }

    /// `ρ(x)`, zero off `Δ`.
    pub fn rho(&self, x: &Point) -> Q {
        match (&self.pot, x) {
            (Potential::Interval(p), Point::Real(v)) => {
                if !self.in_domain(x) {
                    return Q::zero();
                }
                if let Some((_, val)) = p.overrides.iter().find(|(pt, _)| pt == v) {
                    return val.clone();
                }
                p.pieces.iter().find(|pc| pc.domain.contains(v)).map(|pc| pc.eval(v)).unwrap_or_default()
            }
            (Potential::Graph(w), Point::Path(p)) => w[p.edge(0)].clone(),
            _ => Q::zero(),
        }
    }

    pub fn rho_f64(&self, x: &Point) -> f64 {
        crate::rational::to_f64(&self.rho(x))
    }

    /// One-sided limit of `ρ` at `x` along the potential piece on `side`.
    pub fn rho_limit(&self, x: &Q, side: Side) -> Option<Q> {
        let p = self.piecewise()?;
        p.pieces.iter().find(|pc| pc.domain.has_germ(x, side)).map(|pc| pc.eval(x))
    }

    /// Branch of `φ` with points of its domain arbitrarily close to `x` on `side`.
    pub fn branch_germ(&self, x: &Q, side: Side) -> Option<&AffineBranch> {
        self.interval_sys()?.branches.iter().find(|b| b.domain.has_germ(x, side))
    }

    /// Cocycle `ρ_n(x) = ∏_{i<n} ρ(φ^i(x))`.
    pub fn rho_n(&self, n: usize, x: &Point) -> Result<Q> {
        let mut acc = Q::one();
        let mut cur = x.clone();
        for _ in 0..n {
            let nxt = self.phi(&cur).ok_or_else(|| Error::OutOfDomain(self.show(x)))?;
            acc *= self.rho(&cur);
            cur = nxt;
        }
        Ok(acc)
    }

    // ---- set-level dynamics ----

    pub fn space_set(&self) -> SetDesc {
        match &self.sys {
            PartialSystem::Interval(s) => SetDesc::Intervals(s.space.clone()),
            PartialSystem::Graph(g) => SetDesc::Cylinders(CylinderSet::full(&g.graph)),
        }
    }

    pub fn domain_set(&self) -> SetDesc {
        match &self.sys {
            PartialSystem::Interval(s) => SetDesc::Intervals(IntervalSet::from_intervals(
                s.branches.iter().map(|b| b.domain.clone()).collect(),
            )),
            PartialSystem::Graph(g) => SetDesc::Cylinders(CylinderSet::full(&g.graph)),
        }
    }

    /// `φ(S ∩ Δ)`.
    pub fn image_set(&self, s: &SetDesc) -> SetDesc {
        match (&self.sys, s) {
            (PartialSystem::Interval(sys), SetDesc::Intervals(u)) => {
                let mut acc = IntervalSet::empty();
                for b in &sys.branches {
                    let part = u.intersect_interval(&b.domain);
                    acc = acc.union(&part.affine_image(&b.map.slope, &b.map.intercept));
                }
                SetDesc::Intervals(acc)
            }
            (PartialSystem::Graph(g), SetDesc::Cylinders(c)) => SetDesc::Cylinders(c.shift_image(&g.graph)),
            _ => s.clone(),
        }
    }

    /// `φ^{-1}(S)`.
    pub fn preimage_set(&self, s: &SetDesc) -> SetDesc {
        match (&self.sys, s) {
            (PartialSystem::Interval(sys), SetDesc::Intervals(u)) => {
                let mut acc = IntervalSet::empty();
                for b in &sys.branches {
                    let pre = u.affine_preimage(&b.map.slope, &b.map.intercept);
                    acc = acc.union(&pre.intersect_interval(&b.domain));
                }
                SetDesc::Intervals(acc)
            }
            (PartialSystem::Graph(g), SetDesc::Cylinders(c)) => SetDesc::Cylinders(c.shift_preimage(&g.graph)),
            _ => s.clone(),
        }
    }

    pub fn set_intersect(&self, a: &SetDesc, b: &SetDesc) -> SetDesc {
        match (a, b) {
            (SetDesc::Intervals(x), SetDesc::Intervals(y)) => SetDesc::Intervals(x.intersect(y)),
            (SetDesc::Cylinders(x), SetDesc::Cylinders(y)) => {
                SetDesc::Cylinders(x.intersect(self.graph().unwrap(), y))
            }
            _ => a.clone(),
        }
    }

    pub fn set_union(&self, a: &SetDesc, b: &SetDesc) -> SetDesc {
        match (a, b) {
            (SetDesc::Intervals(x), SetDesc::Intervals(y)) => SetDesc::Intervals(x.union(y)),
            (SetDesc::Cylinders(x), SetDesc::Cylinders(y)) => SetDesc::Cylinders(x.union(self.graph().unwrap(), y)),
            _ => a.clone(),
        }
    }

    pub fn set_difference(&self, a: &SetDesc, b: &SetDesc) -> SetDesc {
        match (a, b) {
            (SetDesc::Intervals(x), SetDesc::Intervals(y)) => SetDesc::Intervals(x.difference(y)),
            (SetDesc::Cylinders(x), SetDesc::Cylinders(y)) => {
                SetDesc::Cylinders(x.difference(self.graph().unwrap(), y))
            }
            _ => a.clone(),
        }
    }

    pub fn set_subset(&self, a: &SetDesc, b: &SetDesc) -> bool {
        self.set_difference(a, b).is_empty()
    }

    pub fn set_contains(&self, s: &SetDesc, x: &Point) -> bool {
        match (s, x) {
            (SetDesc::Intervals(u), Point::Real(v)) => u.contains(v),
            (SetDesc::Cylinders(c), Point::Path(p)) => c.contains(self.graph().unwrap(), p),
            _ => false,
        }
    }

    pub fn show_set(&self, s: &SetDesc) -> String {
        match s {
            SetDesc::Intervals(u) => u.to_string(),
            SetDesc::Cylinders(c) => c.display(self.graph().unwrap()),
        }
    }

    /// `Δ_n = φ^{-n}(X)`.
    pub fn iterate_domain(&self, n: usize) -> SetDesc {
        let mut cur = self.space_set();
        for _ in 0..n {
            cur = self.preimage_set(&cur);
        }
        cur
    }

    /// `Δ_pos = Δ ∖ ρ^{-1}(0)`.
    pub fn delta_pos(&self) -> SetDesc {
        match (&self.sys, &self.pot) {
            (PartialSystem::Interval(_), Potential::Interval(p)) => {
                let delta = self.domain_set();
                let delta = delta.intervals().unwrap();
                let mut pos = IntervalSet::empty();
                for pc in &p.pieces {
                    pos = pos.union(&pc.positive_part());
                }
                for (pt, val) in &p.overrides {
                    if val.is_positive() {
                        pos = pos.union(&IntervalSet::from_points([pt.clone()]));
                    } else {
                        pos = pos.remove_points(std::slice::from_ref(pt));
                    }
                }
                SetDesc::Intervals(pos.intersect(delta))
            }
            (PartialSystem::Graph(g), Potential::Graph(w)) => {
                let zero: Vec<Cyl> = (0..w.len())
                    .filter(|&e| w[e].is_zero())
                    .map(|e| Cyl::word(&g.graph, vec![e]))
                    .collect();
                let z = CylinderSet::new(&g.graph, zero);
                SetDesc::Cylinders(CylinderSet::full(&g.graph).difference(&g.graph, &z))
            }
            _ => SetDesc::Intervals(IntervalSet::empty()),
        }
    }

    /// Points where something in the interval data changes.
    pub fn candidate_points(&self) -> Vec<Q> {
        let mut v = BTreeSet::new();
        if let Some(s) = self.interval_sys() {
            for b in &s.branches {
                v.insert(b.domain.lo.clone());
                v.insert(b.domain.hi.clone());
            }
        }
        if let Some(p) = self.piecewise() {
            for pc in &p.pieces {
                v.insert(pc.domain.lo.clone());
                v.insert(pc.domain.hi.clone());
            }
            for (pt, _) in &p.overrides {
                v.insert(pt.clone());
            }
        }
        v.into_iter().collect()
    }

    /// Irregularity reasons for a point of `Δ_pos` on the interval backend
    /// (empty when regular).
    pub fn irregular_reasons(&self, x: &Q) -> Vec<IrregularReason> {
        let mut reasons = Vec::new();
        let pt = Point::Real(x.clone());
        let rx = self.rho(&pt);
        if !rx.is_positive() {
            return vec![IrregularReason::ZeroPotential];
        }
        let left = self.branch_germ(x, Side::Left);
        let right = self.branch_germ(x, Side::Right);
        if let (Some(l), Some(r)) = (left, right) {
            if Side::Left.through(&l.map.slope) == Side::Right.through(&r.map.slope) {
                reasons.push(IrregularReason::NotLocallyInjective);
            }
        }
        for (side, germ) in [(Side::Left, left), (Side::Right, right)] {
            if germ.is_some() && self.rho_limit(x, side).as_ref() != Some(&rx) {
                reasons.push(IrregularReason::RhoDiscontinuous);
                break;
            }
        }
        reasons
    }

    pub fn regular_set(&self) -> RegionReport {
        let delta = self.domain_set();
        let pos = self.delta_pos();
        let zero_set = self.set_difference(&delta, &pos);
        match &self.sys {
            PartialSystem::Graph(_) => RegionReport {
                delta,
                delta_reg: pos.clone(),
                delta_pos: pos,
                zero_set,
                irregular_points: Vec::new(),
            },
            PartialSystem::Interval(_) => {
                let pos_i = pos.intervals().unwrap().clone();
                let mut irregular = Vec::new();
                let mut bad = Vec::new();
                for c in self.candidate_points() {
                    if !pos_i.contains(&c) {
                        continue;
                    }
                    let reasons = self.irregular_reasons(&c);
                    if !reasons.is_empty() {
                        bad.push(c.clone());
                        irregular.push(IrregularPoint { point: Point::Real(c), reasons });
                    }
                }
                let reg = pos_i.remove_points(&bad);
                RegionReport {
                    delta,
                    delta_pos: pos,
                    delta_reg: SetDesc::Intervals(reg),
                    zero_set,
                    irregular_points: irregular,
                }
            }
        }
    }

    pub fn is_regular(&self, x: &Point) -> bool {
        match x {
            Point::Real(v) => {
                self.in_domain(x) && self.rho(x).is_positive() && self.irregular_reasons(v).is_empty()
            }
            Point::Path(_) => self.rho(x).is_positive(),
        }
    }

    /// `x, φ(x), …, φ^{n-1}(x)` all regular.
    pub fn is_regular_n(&self, n: usize, x: &Point) -> bool {
        let mut cur = x.clone();
        for _ in 0..n {
            if !self.is_regular(&cur) {
                return false;
            }
            match self.phi(&cur) {
                Some(nx) => cur = nx,
                None => return false,
            }
        }
        true
    }

    /// `Δ_reg^n = {x ∈ Δ_n : φ^i(x) ∈ Δ_reg, i < n}` as a set.
    pub fn delta_reg_n(&self, n: usize) -> SetDesc {
        let reg = self.regular_set().delta_reg;
        let mut cur = self.space_set();
        for _ in 0..n {
            cur = self.set_intersect(&self.preimage_set(&cur), &reg);
        }
        cur
    }

    /// `φ^n` restricted to `Δ_pos,n` mapped forward: `φ^n(Δ_pos,n)`.
    pub fn image_of_pos_n(&self, n: usize) -> SetDesc {
        let pos = self.delta_pos();
        let mut cur = self.space_set();
        for _ in 0..n {
            cur = self.set_intersect(&self.preimage_set(&cur), &pos);
        }
        // cur = Δ_pos,n; push forward n times
        for _ in 0..n {
            cur = self.image_set(&cur);
        }
        cur
    }

    /// `Δ_pos,n = {x ∈ Δ_n : ρ_n(x) > 0}`.
    pub fn delta_pos_n(&self, n: usize) -> SetDesc {
        let pos = self.delta_pos();
        let mut cur = self.space_set();
        for _ in 0..n {
            cur = self.set_intersect(&self.preimage_set(&cur), &pos);
        }
        cur
    }

    pub fn essential_domain(&self, depth: usize) -> EssentialDomain {
        let mut dn = self.space_set();
        let mut img = self.space_set();
        let mut acc = self.space_set();
        let mut stabilized_at = None;
        for n in 1..=depth {
            let dn2 = self.preimage_set(&dn);
            let img2 = self.image_set(&img);
            if dn2 == dn && img2 == img && stabilized_at.is_none() {
                stabilized_at = Some(n);
            }
            dn = dn2;
            img = img2;
            acc = self.set_intersect(&acc, &self.set_intersect(&dn, &img));
        }
        EssentialDomain { set: acc, depth, stabilized: stabilized_at.is_some(), stabilized_at }
    }

    /// `φ^{-n}(y)`, optionally without the zeros of `ρ_n`, each with `ρ_n`.
    pub fn preimages(&self, y: &Point, n: usize, drop_zero: bool) -> Result<Vec<(Point, Q)>> {
        if n > self.depth_bound {
            return Err(Error::DepthExceeded { requested: n, bound: self.depth_bound });
        }
        let mut out = Vec::new();
        for x in self.preimages_n(y, n) {
            let r = self.rho_n(n, &x)?;
            if drop_zero && r.is_zero() {
                continue;
            }
            out.push((x, r));
        }
        Ok(out)
    }

    pub fn cocycle(&self, n: usize, x: &Point) -> Result<Q> {
        self.rho_n(n, x)
    }

    /// The system of `φ^n` on `Δ_n` with potential `ρ_n`.
    pub fn power(&self, n: usize) -> Model {
        assert!(n >= 1);
        match (&self.sys, &self.pot) {
            (PartialSystem::Interval(s), Potential::Interval(p)) => {
                let (branches, pieces) = compose_interval(s, p, n);
                let mut m = Model {
                    sys: PartialSystem::Interval(IntervalSystem { space: s.space.clone(), branches }),
                    pot: Potential::Interval(PiecewisePotential { pieces, overrides: Vec::new() }),
                    depth_bound: self.depth_bound,
                };
                // exact values at every point whose orbit meets special data
                let mut special = BTreeSet::new();
                for c in self.candidate_points() {
                    let mut layer = vec![Point::Real(c)];
                    for _ in 0..n {
                        let mut next = Vec::new();
                        for y in &layer {
                            special.insert(y.clone());
                            next.extend(self.preimages1(y));
                        }
                        layer = next;
                    }
                }
                let mut overrides = Vec::new();
                for x in special {
                    if let Ok(v) = self.rho_n(n, &x) {
                        overrides.push((x.real().unwrap().clone(), v));
                    }
                }
                if let Potential::Interval(pp) = &mut m.pot {
                    pp.overrides = overrides;
                }
                m
            }
            (PartialSystem::Graph(g), Potential::Graph(w)) => {
                let words = g.graph.words(n);
                let mut edges = Vec::new();
                let mut weights = Vec::new();
                for word in &words {
                    edges.push(Edge {
                        name: g.graph.word_name(word),
                        s: g.graph.edges[*word.last().unwrap()].s,
                        r: g.graph.edges[word[0]].r,
                    });
                    weights.push(word.iter().fold(Q::one(), |a, &e| a * &w[e]));
                }
                Model {
                    sys: PartialSystem::Graph(GraphSystem {
                        graph: Graph { vertices: g.graph.vertices.clone(), edges },
                        truncation_depth: g.truncation_depth,
                    }),
                    pot: Potential::Graph(weights),
                    depth_bound: self.depth_bound,
                }
            }
            _ => self.clone(),
        }
    }

    /// Composite branches of `φ^n` whose orbit stays in `Δ_reg` (interval backend).
    pub fn regular_composites(&self, n: usize) -> Vec<(Interval, Affine)> {
        let Some(s) = self.interval_sys() else { return Vec::new() };
        let reg = self.regular_set().delta_reg;
        let reg = reg.intervals().unwrap();
        let mut cur: Vec<(Interval, Affine)> = s
            .space
            .parts()
            .iter()
            .map(|i| (i.clone(), Affine::identity()))
            .collect();
        for _ in 0..n {
            let mut next = Vec::new();
            for (dom, g) in &cur {
                for b in &s.branches {
                    // points x in dom with g(x) in b.domain ∩ Δ_reg
                    let target = reg.intersect_interval(&b.domain);
                    for part in target.parts() {
                        let pre = if g.slope.is_zero() {
                            continue;
                        } else {
                            part.affine_preimage(&g.slope, &g.intercept)
                        };
                        let d = dom.intersect(&pre);
                        if !d.is_empty() {
                            next.push((d, b.map.compose(g)));
                        }
                    }
                }
            }
            cur = next;
        }
        cur
    }
}

fn compose_interval(s: &IntervalSystem, p: &PiecewisePotential, n: usize) -> (Vec<AffineBranch>, Vec<RhoPiece>) {
    // branches
    let mut br: Vec<(Interval, Affine)> = s.branches.iter().map(|b| (b.domain.clone(), b.map.clone())).collect();
    for _ in 1..n {
        let mut next = Vec::new();
        for (dom, g) in &br {
            for b in &s.branches {
                let pre = b.domain.affine_preimage(&g.slope, &g.intercept);
                let d = dom.intersect(&pre);
                if !d.is_empty() {
                    next.push((d, b.map.compose(g)));
                }
            }
        }
        br = next;
    }
    br.sort_by(|a, b| a.0.lo.cmp(&b.0.lo));
    let branches = br.into_iter().map(|(d, m)| AffineBranch { domain: d, map: m }).collect();

    // potential pieces: follow (piece, branch) choices along the orbit
    let mut cur: Vec<(Interval, Affine, Vec<Affine>)> =
        s.space.parts().iter().map(|i| (i.clone(), Affine::identity(), Vec::new())).collect();
    for _ in 0..n {
        let mut next = Vec::new();
        for (dom, g, facs) in &cur {
            for pc in &p.pieces {
                for b in &s.branches {
                    let both = pc.domain.intersect(&b.domain);
                    if both.is_empty() {
                        continue;
                    }
                    let d = dom.intersect(&both.affine_preimage(&g.slope, &g.intercept));
                    if d.is_empty() {
                        continue;
                    }
                    let mut f2 = facs.clone();
                    f2.extend(pc.factors.iter().map(|f| f.compose(g)));
                    next.push((d, b.map.compose(g), f2));
                }
            }
        }
        cur = next;
    }
    cur.sort_by(|a, b| a.0.lo.cmp(&b.0.lo));
    let pieces = cur
        .into_iter()
        .map(|(d, _, mut f)| {
            // fold constant factors together for a tidier description
            let c = f.iter().filter(|a| a.slope.is_zero()).fold(Q::one(), |acc, a| acc * &a.intercept);
            f.retain(|a| !a.slope.is_zero());
            if !c.is_one() || f.is_empty() {
                f.insert(0, Affine::constant(c));
            }
            RhoPiece { domain: d, factors: f }
        })
        .collect();
    (branches, pieces)
}

impl Model {
    pub fn sample_points(&self, count: usize, seed: u64) -> Vec<Point> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        match &self.sys {
            PartialSystem::Interval(s) => {
                for _ in 0..count {
                    let part = &s.space.parts()[rng.gen_range(0..s.space.parts().len())];
                    let den: i64 = 1 << rng.gen_range(1..8);
                    let k: i64 = rng.gen_range(0..=den);
                    let x = &part.lo + part.length() * Q::new(k.into(), den.into());
                    if s.space.contains(&x) {
                        out.push(Point::Real(x));
                    }
                }
            }
            PartialSystem::Graph(g) => {
                let cycles = g.graph.simple_cycles();
                if cycles.is_empty() {
                    return out;
                }
                for _ in 0..count {
                    let c = cycles[rng.gen_range(0..cycles.len())].clone();
                    let mut p = PathPoint::periodic(c);
                    for _ in 0..rng.gen_range(0..4) {
                        let es = g.graph.emitting(p.range(&g.graph));
                        if es.is_empty() {
                            break;
                        }
                        p = p.prepend(es[rng.gen_range(0..es.len())]);
                    }
                    out.push(Point::Path(p));
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::rational::{q, qi};

    fn r(a: i64, b: i64) -> Point {
        Point::Real(q(a, b))
    }

    #[test]
    fn tent_domains() {
        let m = bundled::load("tent_std").unwrap();
        let unit = SetDesc::Intervals(IntervalSet::from_interval(Interval::closed(qi(0), qi(1))));
        assert_eq!(m.iterate_domain(0), unit);
        assert_eq!(m.iterate_domain(2), unit);
    }

    #[test]
    fn half_defined_domain() {
        let m = Model::new(
            PartialSystem::Interval(IntervalSystem {
                space: IntervalSet::from_interval(Interval::closed(qi(0), qi(1))),
                branches: vec![AffineBranch::new(Interval::closed(qi(0), q(1, 2)), qi(2), qi(0))],
            }),
            Potential::Interval(PiecewisePotential {
                pieces: vec![RhoPiece::affine(Interval::closed(qi(0), q(1, 2)), qi(0), qi(1))],
                overrides: vec![],
            }),
        );
        assert_eq!(
            m.iterate_domain(2),
            SetDesc::Intervals(IntervalSet::from_interval(Interval::closed(qi(0), q(1, 4))))
        );
    }

    #[test]
    fn tent_preimages_and_cocycle() {
        let m = bundled::load("tent_std").unwrap();
        let p = m.preimages(&r(1, 1), 1, false).unwrap();
        assert_eq!(p, vec![(r(1, 2), qi(1))]);
        assert_eq!(m.preimages(&r(1, 1), 3, false).unwrap().len(), 4);
        assert_eq!(m.preimages(&r(0, 1), 3, false).unwrap().len(), 5);
        assert_eq!(m.cocycle(0, &r(1, 3)).unwrap(), qi(1));
        assert_eq!(m.cocycle(2, &r(1, 4)).unwrap(), q(1, 2));
        let h = bundled::load("tent_half").unwrap();
        assert_eq!(h.cocycle(1, &r(3, 4)).unwrap(), qi(0));
        assert!(matches!(m.preimages(&r(0, 1), 99, false), Err(Error::DepthExceeded { .. })));
    }

    #[test]
    fn tent_regular_sets() {
        let m = bundled::load("tent_std").unwrap();
        let rep = m.regular_set();
        assert_eq!(m.show_set(&rep.delta_reg), "[0,1/2)∪(1/2,1]");
        assert_eq!(rep.irregular_points.len(), 1);
        assert_eq!(
            rep.irregular_points[0].reasons,
            vec![IrregularReason::NotLocallyInjective, IrregularReason::RhoDiscontinuous]
        );
        let h = bundled::load("tent_half").unwrap();
        let rh = h.regular_set();
        assert_eq!(h.show_set(&rh.delta_pos), "[0,1/2]");
        assert_eq!(h.show_set(&rh.delta_reg), "[0,1/2)");
        let d = bundled::load("doubling").unwrap();
        let rd = d.regular_set();
        assert_eq!(rd.delta_reg, rd.delta);
    }

    #[test]
    fn tent_power_two() {
        let m = bundled::load("tent_std").unwrap();
        let p = m.power(2);
        let s = p.interval_sys().unwrap();
        assert_eq!(s.branches.len(), 4);
        assert!(s.branches.iter().all(|b| b.map.slope.abs() == qi(4)));
        let reg = p.regular_set().delta_reg;
        assert_eq!(p.show_set(&reg), "[0,1/4)∪(1/4,1/2)∪(1/2,3/4)∪(3/4,1]");
        assert_eq!(reg, m.delta_reg_n(2));
        assert_eq!(m.power(1).interval_sys().unwrap().branches, m.interval_sys().unwrap().branches);
    }

    #[test]
    fn graph_power_weights() {
        let m = bundled::load("fullshift2").unwrap();
        let p = m.power(2);
        assert_eq!(p.graph().unwrap().edges.len(), 4);
        assert!(p.weights().unwrap().iter().all(|w| *w == q(1, 4)));
    }

    #[test]
    fn essential_domains() {
        let m = bundled::load("tent_std").unwrap();
        let e = m.essential_domain(5);
        assert_eq!(e.stabilized_at, Some(1));
        let h = bundled::load("halving").unwrap();
        let e = h.essential_domain(4);
        assert!(!e.stabilized);
        assert_eq!(h.show_set(&e.set), "[0,1/16]");
    }

    #[test]
    fn tail_loop_essential_domain() {
        let m = bundled::tail_loop();
        let e = m.essential_domain(4);
        assert!(e.stabilized);
        let g = m.graph().unwrap();
        assert_eq!(e.set, SetDesc::Cylinders(CylinderSet::new(g, vec![Cyl::vertex(0)])));
    }
}
