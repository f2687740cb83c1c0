//! The transfer operator `L(a)(y) = Σ_{φ(x)=y} ρ(x) a(x)`: validation, evaluation,
//! dual action on measures and Ulam discretization.

use std::collections::BTreeMap;

use num_traits::{One, Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Affine, Model, PartialSystem, Point, Potential, SetDesc};
use crate::error::{Error, Result};
use crate::graph::{Cyl, CylinderSet};
use crate::interval::{Interval, IntervalSet, Side};
use crate::rational::{fmt_q, qi, serde_q, to_f64, Q};

/// Compactly supported continuous test function with rational data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum TestFunction {
    /// Piecewise-linear interpolation through the knots, zero outside them.
    Knots(Vec<Knot>),
    /// `Σ c_i 1_{Z_i}` over cylinders.
    Cylinders(Vec<(Cyl, Coef)>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Knot {
    #[serde(with = "serde_q")]
    pub x: Q,
    #[serde(with = "serde_q")]
    pub y: Q,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Coef(#[serde(with = "serde_q")] pub Q);

impl TestFunction {
    pub fn knots(pts: Vec<(Q, Q)>) -> Self {
        let mut v: Vec<Knot> = pts.into_iter().map(|(x, y)| Knot { x, y }).collect();
        v.sort_by(|a, b| a.x.cmp(&b.x));
        TestFunction::Knots(v)
    }

    pub fn zero() -> Self {
        TestFunction::Knots(Vec::new())
    }

    /// Constant `c` on `[lo, hi]` (discontinuous at interior ends unless they bound X).
    pub fn constant_on(c: Q, lo: Q, hi: Q) -> Self {
        Self::knots(vec![(lo, c.clone()), (hi, c)])
    }

    /// Tent function rising from `l` to height `h` at `m`, back to zero at `r`.
    pub fn hat(l: Q, m: Q, r: Q, h: Q) -> Self {
        Self::knots(vec![(l, Q::zero()), (m, h), (r, Q::zero())])
    }

    /// `x` restricted to `[lo, hi]`.
    pub fn identity_on(lo: Q, hi: Q) -> Self {
        Self::knots(vec![(lo.clone(), lo), (hi.clone(), hi)])
    }

    pub fn cylinders(v: Vec<(Cyl, Q)>) -> Self {
        TestFunction::Cylinders(v.into_iter().map(|(c, q)| (c, Coef(q))).collect())
    }

    pub fn eval_q(&self, m: &Model, p: &Point) -> Q {
        match (self, p) {
            (TestFunction::Knots(k), Point::Real(x)) => eval_knots(k, x),
            (TestFunction::Cylinders(cs), Point::Path(path)) => {
                let g = m.graph().expect("graph backend");
                cs.iter().filter(|(c, _)| c.contains(g, path)).fold(Q::zero(), |acc, (_, c)| acc + &c.0)
            }
            _ => Q::zero(),
        }
    }

    pub fn eval(&self, m: &Model, p: &Point) -> f64 {
        to_f64(&self.eval_q(m, p))
    }

    /// Closure of `{a ≠ 0}`.
    pub fn support(&self, m: &Model) -> SetDesc {
        match self {
            TestFunction::Knots(k) => {
                let mut v = Vec::new();
                for w in k.windows(2) {
                    if !(w[0].y.is_zero() && w[1].y.is_zero()) {
                        v.push(Interval::closed(w[0].x.clone(), w[1].x.clone()));
                    }
                }
                if k.len() == 1 && !k[0].y.is_zero() {
                    v.push(Interval::point(k[0].x.clone()));
                }
                SetDesc::Intervals(IntervalSet::from_intervals(v))
            }
            TestFunction::Cylinders(cs) => {
                let g = m.graph().expect("graph backend");
                SetDesc::Cylinders(CylinderSet::new(
                    g,
                    cs.iter().filter(|(_, c)| !c.0.is_zero()).map(|(c, _)| c.clone()).collect(),
                ))
            }
        }
    }

    /// Supremum norm (exact: attained at knots or cylinder combinations).
    pub fn sup_norm(&self) -> Q {
        match self {
            TestFunction::Knots(k) => k.iter().map(|p| p.y.abs()).max().unwrap_or_default(),
            TestFunction::Cylinders(cs) => cs.iter().map(|(_, c)| c.0.abs()).fold(Q::zero(), |a, b| a + b),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            TestFunction::Knots(k) => k.iter().all(|p| !p.y.is_negative()),
            TestFunction::Cylinders(cs) => cs.iter().all(|(_, c)| !c.0.is_negative()),
        }
    }

    pub fn describe(&self, m: &Model) -> String {
        match self {
            TestFunction::Knots(k) => {
                let s: Vec<String> = k.iter().map(|p| format!("({},{})", fmt_q(&p.x), fmt_q(&p.y))).collect();
                format!("pl[{}]", s.join(" "))
            }
            TestFunction::Cylinders(cs) => {
                let g = m.graph().expect("graph backend");
                let s: Vec<String> = cs.iter().map(|(c, q)| format!("{}·{}", fmt_q(&q.0), c.display(g))).collect();
                s.join(" + ")
            }
        }
    }
}

fn eval_knots(k: &[Knot], x: &Q) -> Q {
    if k.is_empty() || x < &k[0].x || x > &k[k.len() - 1].x {
        return Q::zero();
    }
    for w in k.windows(2) {
        if x >= &w[0].x && x <= &w[1].x {
            if w[0].x == w[1].x {
                return w[1].y.clone();
            }
            let t = (x - &w[0].x) / (&w[1].x - &w[0].x);
            return &w[0].y + t * (&w[1].y - &w[0].y);
        }
    }
    k[0].y.clone()
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Defect {
    pub point: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub required: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub found: Option<String>,
}

impl Defect {
    fn new(point: String, message: impl Into<String>) -> Self {
        Defect { point, message: message.into(), required: None, found: None }
    }
}

impl std::fmt::Display for Defect {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "at {}: {}", self.point, self.message)?;
        if let (Some(r), Some(x)) = (&self.required, &self.found) {
            write!(f, " (required {r}, found {x})")?;
        }
        Ok(())
    }
}

/// A validated transfer operator.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferHandle {
    pub model: Model,
    pub validated: bool,
    /// `sup_y Σ_{φ(x)=y} ρ(x)`.
    pub norm: Q,
    pub norm_witness: String,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Validation {
    Valid(TransferHandle),
    Invalid(Vec<Defect>),
}

impl Validation {
    pub fn handle(self) -> Result<TransferHandle> {
        match self {
            Validation::Valid(h) => Ok(h),
            Validation::Invalid(d) => Err(Error::Validation(d.iter().map(|x| x.to_string()).collect())),
        }
    }
    pub fn is_valid(&self) -> bool {
        matches!(self, Validation::Valid(_))
    }
    pub fn defects(&self) -> &[Defect] {
        match self {
            Validation::Valid(_) => &[],
            Validation::Invalid(d) => d,
        }
    }
}

pub fn validate(m: &Model) -> Validation {
    let mut defects = Vec::new();
    let norm = match (&m.sys, &m.pot) {
        (PartialSystem::Interval(_), Potential::Interval(_)) => {
            validate_interval(m, &mut defects);
            interval_norm(m)
        }
        (PartialSystem::Graph(g), Potential::Graph(w)) => {
            if w.len() != g.graph.edges.len() {
                defects.push(Defect::new("weights".into(), "one weight per edge required"));
            }
            for (e, x) in g.graph.edges.iter().zip(w) {
                if x.is_negative() {
                    defects.push(Defect::new(e.name.clone(), "negative weight"));
                }
            }
            let mut best = (Q::zero(), String::new());
            for v in 0..g.graph.n_vertices() {
                let s = g.graph.emitting(v).iter().fold(Q::zero(), |a, &e| a + &w[e]);
                if s > best.0 || best.1.is_empty() {
                    best = (s, format!("paths with range {}", g.graph.vertices[v]));
                }
            }
            best
        }
        _ => {
            defects.push(Defect::new("spec".into(), "system and potential backends differ"));
            (Q::zero(), String::new())
        }
    };
    if defects.is_empty() {
        Validation::Valid(TransferHandle { model: m.clone(), validated: true, norm: norm.0, norm_witness: norm.1 })
    } else {
        Validation::Invalid(defects)
    }
}

fn validate_interval(m: &Model, defects: &mut Vec<Defect>) {
    let s = m.interval_sys().unwrap();
    let p = m.piecewise().unwrap();
    let space = &s.space;
    // structure of φ
    for (i, b) in s.branches.iter().enumerate() {
        if !IntervalSet::from_interval(b.domain.clone()).is_subset(space) {
            defects.push(Defect::new(format!("branch {i}"), format!("domain {} not inside X", b.domain)));
        }
        if !IntervalSet::from_interval(b.image()).is_subset(space) {
            defects.push(Defect::new(format!("branch {i}"), format!("image {} not inside X", b.image())));
        }
        for (j, c) in s.branches.iter().enumerate().skip(i + 1) {
            let both = b.domain.intersect(&c.domain);
            if both.is_empty() {
                continue;
            }
            if !both.is_degenerate() {
                defects.push(Defect::new(format!("branches {i},{j}"), "domains overlap in an interval"));
            } else if b.map.eval(&both.lo) != c.map.eval(&both.lo) {
                defects.push(Defect::new(fmt_q(&both.lo), "branches disagree at a shared point"));
            }
        }
    }
    let delta = m.domain_set();
    let delta = delta.intervals().unwrap();
    if !delta.is_open_in(space) {
        defects.push(Defect::new(delta.to_string(), "Δ is not open in X"));
    }
    // potential covers Δ and is well defined
    let cover = IntervalSet::from_intervals(p.pieces.iter().map(|pc| pc.domain.clone()).collect());
    let uncovered = delta.difference(&cover);
    if !uncovered.is_empty() {
        defects.push(Defect::new(uncovered.to_string(), "potential pieces do not cover Δ"));
    }
    for (i, a) in p.pieces.iter().enumerate() {
        for b in p.pieces.iter().skip(i + 1) {
            let both = a.domain.intersect(&b.domain);
            if both.is_empty() {
                continue;
            }
            if !both.is_degenerate() {
                defects.push(Defect::new(both.to_string(), "potential pieces overlap"));
            } else if a.eval(&both.lo) != b.eval(&both.lo) && !p.overrides.iter().any(|(x, _)| *x == both.lo) {
                defects.push(Defect::new(fmt_q(&both.lo), "potential pieces disagree at a shared point"));
            }
        }
        // (i) nonnegativity: sign is constant between factor roots
        let mut probes = vec![a.domain.lo.clone(), a.domain.hi.clone()];
        for f in &a.factors {
            if !f.slope.is_zero() {
                let r = -(&f.intercept) / &f.slope;
                if a.domain.contains(&r) {
                    probes.push(r);
                }
            }
        }
        probes.sort();
        probes.dedup();
        let mids: Vec<Q> = probes.windows(2).map(|w| (&w[0] + &w[1]) / qi(2)).collect();
        probes.extend(mids);
        for x in probes {
            if a.eval(&x).is_negative() {
                defects.push(Defect::new(fmt_q(&x), "potential is negative"));
                break;
            }
        }
    }
    for (x, v) in &p.overrides {
        if v.is_negative() {
            defects.push(Defect::new(fmt_q(x), "override value is negative"));
        }
        if !delta.contains(x) {
            defects.push(Defect::new(fmt_q(x), "override point outside Δ"));
        }
    }
    if !defects.is_empty() {
        return;
    }
    // (iii) collision-sum rule at every candidate point of Δ
    for x in m.candidate_points() {
        if !delta.contains(&x) {
            continue;
        }
        let px = Point::Real(x.clone());
        let rho_x = m.rho(&px);
        let y = m.phi(&px).unwrap();
        let yv = y.real().unwrap().clone();
        for yside in Side::BOTH {
            if !space.has_germ(&yv, yside) {
                continue;
            }
            let mut sum = Q::zero();
            for xside in Side::BOTH {
                if let Some(b) = m.branch_germ(&x, xside) {
                    if xside.through(&b.map.slope) == yside {
                        sum += m.rho_limit(&x, xside).unwrap_or_default();
                    }
                }
            }
            if sum != rho_x {
                defects.push(Defect {
                    point: fmt_q(&x),
                    message: format!(
                        "collision-sum rule fails: L(a) would jump at y={} from the {} side",
                        fmt_q(&yv),
                        if yside == Side::Left { "left" } else { "right" }
                    ),
                    required: Some(fmt_q(&sum)),
                    found: Some(fmt_q(&rho_x)),
                });
            }
        }
    }
}

/// Exact fiber sum `Σ_{φ(x)=y} ρ(x)` and its one-sided limits.
pub fn fiber_sum(m: &Model, y: &Point) -> Q {
    m.preimages1(y).iter().map(|x| m.rho(x)).fold(Q::zero(), |a, b| a + b)
}

fn fiber_sum_limit(m: &Model, y: &Q, yside: Side) -> Q {
    let s = m.interval_sys().unwrap();
    let mut sum = Q::zero();
    for b in &s.branches {
        let x = b.map.inverse_at(y);
        let xside = yside.through(&b.map.slope);
        if b.domain.has_germ(&x, xside) {
            sum += m.rho_limit(&x, xside).unwrap_or_default();
        }
    }
    sum
}

fn interval_norm(m: &Model) -> (Q, String) {
    let s = m.interval_sys().unwrap();
    let mut ys: Vec<Q> = s.space.endpoints();
    for x in m.candidate_points() {
        for b in &s.branches {
            ys.push(b.map.eval(&x));
        }
    }
    // multi-factor pieces are not affine; probe their midpoints too
    if let Some(p) = m.piecewise() {
        for pc in &p.pieces {
            if pc.factors.iter().filter(|f| !f.slope.is_zero()).count() > 1 {
                for k in 1..16 {
                    let x = &pc.domain.lo + pc.domain.length() * Q::new(k.into(), 16.into());
                    for b in &s.branches {
                        ys.push(b.map.eval(&x));
                    }
                }
            }
        }
    }
    ys.sort();
    ys.dedup();
    let mut best = (Q::zero(), String::from("(no mass)"));
    for y in ys {
        if !s.space.contains(&y) {
            continue;
        }
        let v = fiber_sum(m, &Point::Real(y.clone()));
        if v > best.0 {
            best = (v, format!("y={}", fmt_q(&y)));
        }
        for side in Side::BOTH {
            if s.space.has_germ(&y, side) {
                let l = fiber_sum_limit(m, &y, side);
                if l > best.0 {
                    best = (l, format!("y→{}{}", fmt_q(&y), if side == Side::Left { "-" } else { "+" }));
                }
            }
        }
    }
    best
}

/// `L^n(a)(y)`, exact.
pub fn apply(h: &TransferHandle, a: &TestFunction, y: &Point, n: usize) -> Result<Q> {
    let m = &h.model;
    if !m.in_space(y) {
        return Err(Error::OutOfDomain(m.show(y)));
    }
    if n == 0 {
        return Ok(a.eval_q(m, y));
    }
    let mut acc = Q::zero();
    for x in m.preimages_n(y, n) {
        acc += m.rho_n(n, &x)? * a.eval_q(m, &x);
    }
    Ok(acc)
}

/// `L^n(f)(y)` for an arbitrary real function.
pub fn apply_fn(m: &Model, f: &dyn Fn(&Point) -> f64, y: &Point, n: usize) -> f64 {
    if n == 0 {
        return f(y);
    }
    m.preimages_n(y, n)
        .iter()
        .map(|x| to_f64(&m.rho_n(n, x).unwrap_or_default()) * f(x))
        .sum()
}

/// `max_y |L((a∘φ)b)(y) − a(y)L(b)(y)|`.
pub fn transfer_identity_check(h: &TransferHandle, a: &TestFunction, b: &TestFunction, samples: &[Point]) -> Result<Q> {
    let m = &h.model;
    let mut worst = Q::zero();
    for y in samples {
        let mut lhs = Q::zero();
        for x in m.preimages1(y) {
            let ax = a.eval_q(m, &m.phi(&x).unwrap());
            lhs += m.rho(&x) * ax * b.eval_q(m, &x);
        }
        let rhs = a.eval_q(m, y) * apply(h, b, y, 1)?;
        let d = (lhs - rhs).abs();
        if d > worst {
            worst = d;
        }
    }
    Ok(worst)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    pub atoms: Vec<(Point, f64)>,
}

impl AtomicMeasure {
    pub fn new(atoms: Vec<(Point, f64)>) -> Self {
        let mut map: BTreeMap<Point, f64> = BTreeMap::new();
        for (p, w) in atoms {
            *map.entry(p).or_default() += w;
        }
        AtomicMeasure { atoms: map.into_iter().collect() }
    }
    pub fn dirac(p: Point) -> Self {
        AtomicMeasure { atoms: vec![(p, 1.0)] }
    }
    pub fn mass(&self) -> f64 {
        self.atoms.iter().map(|(_, w)| w).sum()
    }
    pub fn integrate(&self, f: &dyn Fn(&Point) -> f64) -> f64 {
        self.atoms.iter().map(|(p, w)| w * f(p)).sum()
    }
    pub fn weight_of(&self, p: &Point) -> f64 {
        self.atoms.iter().find(|(q, _)| q == p).map(|(_, w)| *w).unwrap_or(0.0)
    }
}

/// Absolutely continuous measure with constant density on uniform bins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UlamMeasure {
    #[serde(with = "serde_q")]
    pub lo: Q,
    #[serde(with = "serde_q")]
    pub hi: Q,
    pub densities: Vec<f64>,
}

impl UlamMeasure {
    pub fn uniform(lo: Q, hi: Q, m: usize) -> Self {
        let len = to_f64(&(&hi - &lo));
        UlamMeasure { lo, hi, densities: vec![1.0 / len; m] }
    }
    pub fn bins(&self) -> usize {
        self.densities.len()
    }
    pub fn bin_width(&self) -> f64 {
        to_f64(&(&self.hi - &self.lo)) / self.bins() as f64
    }
    pub fn bin(&self, i: usize) -> Interval {
        let w = (&self.hi - &self.lo) / Q::from_integer((self.bins() as i64).into());
        let lo = &self.lo + &w * Q::from_integer((i as i64).into());
        Interval::closed(lo.clone(), lo + w)
    }
    pub fn mass(&self) -> f64 {
        self.densities.iter().sum::<f64>() * self.bin_width()
    }
    /// `∫ f dμ` by Gauss-Legendre quadrature on every bin.
    pub fn integrate(&self, f: &dyn Fn(f64) -> f64) -> f64 {
        let h = self.bin_width();
        let lo = to_f64(&self.lo);
        self.densities
            .iter()
            .enumerate()
            .map(|(i, d)| {
                if *d == 0.0 {
                    return 0.0;
                }
                d * gauss(&|x| f(x), lo + i as f64 * h, lo + (i + 1) as f64 * h)
            })
            .sum()
    }
    pub fn total_variation(&self, o: &UlamMeasure) -> f64 {
        let h = self.bin_width();
        0.5 * self.densities.iter().zip(&o.densities).map(|(a, b)| (a - b).abs() * h).sum::<f64>()
    }
}

/// Five-point Gauss-Legendre rule on `[a, b]`.
pub fn gauss(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    const X: [f64; 5] = [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
    const W: [f64; 5] = [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1, 0.236_926_885_056_189_1];
    let c = 0.5 * (a + b);
    let r = 0.5 * (b - a);
    X.iter().zip(W.iter()).map(|(x, w)| w * f(c + r * x)).sum::<f64>() * r
}

#[derive(Clone, Debug, PartialEq)]
pub enum Measure {
    Atomic(AtomicMeasure),
    Ulam(UlamMeasure),
}

/// `L*μ`, defined by `∫ a d(L*μ) = ∫ L(a) dμ`.
pub fn dual_apply(h: &TransferHandle, mu: &Measure) -> Result<Measure> {
    let m = &h.model;
    match mu {
        Measure::Atomic(a) => {
            let mut out = Vec::new();
            for (y, w) in &a.atoms {
                for x in m.preimages1(y) {
                    let r = to_f64(&m.rho(&x));
                    if r > 0.0 && *w > 0.0 {
                        out.push((x, r * w));
                    }
                }
            }
            Ok(Measure::Atomic(AtomicMeasure::new(out)))
        }
        Measure::Ulam(u) => {
            let mat = ulam_matrix(h, u.bins())?;
            let k = u.bins();
            let mut d = vec![0.0; k];
            for j in 0..k {
                for i in 0..k {
                    d[j] += mat[i][j] * u.densities[i];
                }
            }
            Ok(Measure::Ulam(UlamMeasure { lo: u.lo.clone(), hi: u.hi.clone(), densities: d }))
        }
    }
}

/// Polynomial coefficients (lowest degree first) of a product of affine factors.
pub fn expand(factors: &[Affine]) -> Vec<Q> {
    let mut c = vec![Q::one()];
    for f in factors {
        let mut n = vec![Q::zero(); c.len() + 1];
        for (i, ci) in c.iter().enumerate() {
            n[i] += ci * &f.intercept;
            n[i + 1] += ci * &f.slope;
        }
        c = n;
    }
    c
}

pub fn integrate_poly(c: &[Q], a: &Q, b: &Q) -> Q {
    let mut acc = Q::zero();
    for (i, ci) in c.iter().enumerate() {
        let k = Q::from_integer(((i + 1) as i64).into());
        let pa = num_traits::pow(a.clone(), i + 1);
        let pb = num_traits::pow(b.clone(), i + 1);
        acc += ci * (pb - pa) / k;
    }
    acc
}

/// Exact `∫_{S} ρ(x) dx` for a subinterval `S` of one branch domain.
fn integrate_rho(m: &Model, s: &Interval) -> Q {
    let p = m.piecewise().unwrap();
    let mut acc = Q::zero();
    for pc in &p.pieces {
        let part = pc.domain.intersect(s);
        if part.is_empty() || part.is_degenerate() {
            continue;
        }
        acc += integrate_poly(&expand(&pc.factors), &part.lo, &part.hi);
    }
    acc
}

/// Exact `∫_{bin_i} L(1_{bin_j})(y) dy / |bin_i|`, laid out as `U[i][j]`.
///
/// With this convention `∫ L(a) dμ = Σ_i μ_i U[i][j] a_j`, so the dual action on
/// densities is the transpose.
pub fn ulam_matrix(h: &TransferHandle, bins: usize) -> Result<Vec<Vec<f64>>> {
    let m = &h.model;
    let s = m.interval_sys().ok_or(Error::WrongBackend("interval"))?;
    let (lo, hi) = (s.space.lower().unwrap(), s.space.upper().unwrap());
    let u = UlamMeasure { lo, hi, densities: vec![0.0; bins] };
    let width = to_f64(&u.bin(0).length());
    let mut out = vec![vec![0.0; bins]; bins];
    for (j, row) in (0..bins).map(|j| (j, u.bin(j))) {
        for b in &s.branches {
            let dom = b.domain.intersect(&row);
            if dom.is_empty() || dom.is_degenerate() {
                continue;
            }
            let img = dom.affine_image(&b.map.slope, &b.map.intercept);
            for (i, col) in out.iter_mut().enumerate() {
                let bi = u.bin(i);
                let hit = img.intersect(&bi);
                if hit.is_empty() || hit.is_degenerate() {
                    continue;
                }
                let pre = hit.affine_preimage(&b.map.slope, &b.map.intercept).intersect(&dom);
                // ∫_{hit} ρ(B^{-1}y) dy = |slope| ∫_{pre} ρ(x) dx
                let v = b.map.slope.abs() * integrate_rho(m, &pre);
                col[j] += to_f64(&v) / width;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::rational::q;

    fn r(a: i64, b: i64) -> Point {
        Point::Real(q(a, b))
    }

    fn tent() -> TransferHandle {
        validate(&bundled::load("tent_std").unwrap()).handle().unwrap()
    }

    #[test]
    fn validation_examples() {
        assert!(validate(&bundled::load("tent_std").unwrap()).is_valid());
        assert!(validate(&bundled::load("tent_half").unwrap()).is_valid());
        assert!(validate(&bundled::load("doubling").unwrap()).is_valid());
        assert!(validate(&bundled::load("halving").unwrap()).is_valid());
        let mut m = bundled::load("tent_std").unwrap();
        if let Potential::Interval(p) = &mut m.pot {
            p.overrides.clear();
        }
        let v = validate(&m);
        let d = v.defects();
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].point, "1/2");
        assert_eq!(d[0].required.as_deref(), Some("1"));
        assert_eq!(d[0].found.as_deref(), Some("1/2"));
    }

    #[test]
    fn norm_is_exact() {
        assert_eq!(tent().norm, qi(1));
        let h = validate(&bundled::load("tent_half").unwrap()).handle().unwrap();
        assert_eq!(h.norm, qi(1));
    }

    #[test]
    fn apply_examples() {
        let h = tent();
        let a = TestFunction::identity_on(qi(0), qi(1));
        assert_eq!(apply(&h, &a, &r(3, 4), 1).unwrap(), q(1, 2));
        let one = TestFunction::constant_on(qi(1), qi(0), qi(1));
        for y in [r(0, 1), r(1, 3), r(1, 1)] {
            assert_eq!(apply(&h, &one, &y, 1).unwrap(), qi(1));
        }
        assert_eq!(apply(&h, &TestFunction::zero(), &r(1, 5), 2).unwrap(), qi(0));
        assert!(apply(&h, &one, &r(2, 1), 1).is_err());
    }

    #[test]
    fn transfer_identity() {
        let h = tent();
        let a = TestFunction::identity_on(qi(0), qi(1));
        let one = TestFunction::constant_on(qi(1), qi(0), qi(1));
        assert_eq!(transfer_identity_check(&h, &a, &one, &[r(1, 2), r(1, 3)]).unwrap(), qi(0));
    }

    #[test]
    fn dual_examples() {
        let h = tent();
        let Measure::Atomic(a) = dual_apply(&h, &Measure::Atomic(AtomicMeasure::dirac(r(1, 1)))).unwrap() else {
            panic!()
        };
        assert_eq!(a.atoms, vec![(r(1, 2), 1.0)]);
        let Measure::Atomic(a) = dual_apply(&h, &Measure::Atomic(AtomicMeasure::dirac(r(0, 1)))).unwrap() else {
            panic!()
        };
        assert_eq!(a.atoms, vec![(r(0, 1), 0.5), (r(1, 1), 0.5)]);
        let Measure::Atomic(a) = dual_apply(&h, &Measure::Atomic(AtomicMeasure::new(vec![]))).unwrap() else {
            panic!()
        };
        assert!(a.atoms.is_empty());
    }

    #[test]
    fn ulam_examples() {
        let h = tent();
        let u = ulam_matrix(&h, 2).unwrap();
        for j in 0..2 {
            assert!((u[0][j] + u[1][j] - 1.0).abs() < 1e-15);
        }
        let u1 = ulam_matrix(&h, 1).unwrap();
        assert!((u1[0][0] - 1.0).abs() < 1e-15);
        let mut m = bundled::load("tent_std").unwrap();
        if let Potential::Interval(p) = &mut m.pot {
            p.pieces[0].factors[0].intercept = qi(0);
            p.overrides[0].1 = qi(0);
        }
        let hz = validate(&m).handle().unwrap();
        assert!(ulam_matrix(&hz, 4).unwrap().iter().flatten().all(|v| *v == 0.0));
    }
}
