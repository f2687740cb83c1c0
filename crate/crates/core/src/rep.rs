//! Truncated orbit and regular representations `(π, T)` as sparse matrices and
//! residual checks for the relations of the crossed product.
//!
//! Truncation policy: a relation is compared on the columns where every word
//! involved is exact, i.e. evaluating the word on the basis vector never needs
//! a point (or `Z`-level) outside the truncated basis. On those columns the
//! truncated matrices agree with the infinite operators.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_traits::Zero;
use serde::Serialize;
use sprs::{CsMat, TriMat};

use crate::dynamics::{Model, Point, SetDesc};
use crate::error::{Error, Result};
use crate::graph::{Cyl, PathPoint};
use crate::interval::{Interval, IntervalSet};
use crate::rational::{dyadic, qi, to_f64, Q};
use crate::transfer::{apply_fn, TestFunction};

pub type Func = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;

pub fn func(m: &Arc<Model>, a: &TestFunction) -> Func {
    let m = m.clone();
    let a = a.clone();
    Arc::new(move |p| a.eval(&m, p))
}

pub fn constant(c: f64) -> Func {
    Arc::new(move |_| c)
}

/// Truncated basis `∪_{k≤depth} φ^{-k}(seeds)`.
#[derive(Clone, Debug)]
pub struct OrbitBasis {
    pub seeds: Vec<Point>,
    pub depth: usize,
    pub points: Vec<Point>,
    pub index: HashMap<Point, usize>,
    /// Every preimage with positive weight is listed.
    pub fiber_complete: Vec<bool>,
    /// `φ(x)` is listed, or `T*` kills `1_x`.
    pub image_present: Vec<bool>,
    pub sqrt_rho: Vec<f64>,
    pub image: Vec<Option<usize>>,
}

impl OrbitBasis {
    pub fn new(m: &Model, seeds: &[Point], depth: usize) -> Result<Self> {
        if seeds.is_empty() {
            return Err(Error::EmptyBasis);
        }
        let mut set: BTreeSet<Point> = BTreeSet::new();
        let mut layer: Vec<Point> = seeds.to_vec();
        set.extend(layer.iter().cloned());
        for _ in 0..depth {
            let mut next = Vec::new();
            for y in &layer {
                for x in m.preimages1(y) {
                    if set.insert(x.clone()) {
                        next.push(x);
                    }
                }
            }
            layer = next;
        }
        let points: Vec<Point> = set.into_iter().collect();
        let index: HashMap<Point, usize> = points.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
        let mut fiber_complete = Vec::new();
        let mut image_present = Vec::new();
        let mut sqrt_rho = Vec::new();
        let mut image = Vec::new();
        for p in &points {
            fiber_complete.push(m.preimages1(p).iter().all(|x| index.contains_key(x) || m.rho(x).is_zero()));
            let r = m.rho_f64(p);
            sqrt_rho.push(r.sqrt());
            let im = m.phi(p).and_then(|y| index.get(&y).copied());
            image.push(im);
            image_present.push(r == 0.0 || im.is_some());
        }
        Ok(OrbitBasis { seeds: seeds.to_vec(), depth, points, index, fiber_complete, image_present, sqrt_rho, image })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Indices whose full fiber is listed.
    pub fn interior(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.fiber_complete[i]).collect()
    }
}

/// Periodic points of period at most `max_period`, used as default seeds.
pub fn default_seeds(m: &Model, max_period: usize) -> Vec<Point> {
    let mut out = BTreeSet::new();
    match m.graph() {
        Some(g) => {
            for c in g.simple_cycles() {
                if c.len() <= max_period {
                    for k in 0..c.len() {
                        let mut r = c.clone();
                        r.rotate_left(k);
                        out.insert(Point::Path(PathPoint::periodic(r)));
                    }
                }
            }
        }
        None => {
            for p in 1..=max_period {
                let pw = m.power(p);
                for b in &pw.interval_sys().unwrap().branches {
                    let one = qi(1);
                    if b.map.slope == one {
                        continue;
                    }
                    let x = &b.map.intercept / (&one - &b.map.slope);
                    let px = Point::Real(x.clone());
                    if b.domain.contains(&x) && m.phi_n(p, &px) == Some(px.clone()) {
                        out.insert(px);
                    }
                }
            }
        }
    }
    out.into_iter().collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RepKind {
    Orbit,
    Regular { window: i64 },
}

/// One factor of an operator word.
#[derive(Clone)]
pub enum Factor {
    /// Multiplication by a function (values per basis point).
    D(Arc<Vec<f64>>),
    T,
    Ts,
}

/// `coeff · F1 F2 … Fr`.
#[derive(Clone)]
pub struct Word {
    pub coeff: f64,
    pub factors: Vec<Factor>,
}

impl Word {
    pub fn new(factors: Vec<Factor>) -> Self {
        Word { coeff: 1.0, factors }
    }
    pub fn scaled(mut self, c: f64) -> Self {
        self.coeff *= c;
        self
    }
    pub fn then(mut self, o: &Word) -> Self {
        self.coeff *= o.coeff;
        self.factors.extend(o.factors.iter().cloned());
        self
    }
}

/// `a tⁿ t*ᵐ b`.
#[derive(Clone)]
pub struct Monomial {
    pub a: Func,
    pub n: usize,
    pub m: usize,
    pub b: Func,
}

impl Monomial {
    pub fn new(a: Func, n: usize, m: usize, b: Func) -> Self {
        Monomial { a, n, m, b }
    }
    pub fn units(n: usize, m: usize) -> Self {
        Monomial { a: constant(1.0), n, m, b: constant(1.0) }
    }
}

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct Residual {
    pub value: f64,
    pub exact_columns: usize,
    pub total_columns: usize,
    pub worst_column: Option<String>,
}

impl Residual {
    pub fn ok(&self, tol: f64) -> bool {
        self.value <= tol && self.exact_columns > 0
    }
}

/// A truncated representation `(π, T)`.
#[derive(Clone)]
pub struct RepPair {
    pub model: Arc<Model>,
    pub basis: OrbitBasis,
    pub kind: RepKind,
    pub t: CsMat<f64>,
    pub ts: CsMat<f64>,
}

fn levels(kind: RepKind) -> (i64, usize) {
    match kind {
        RepKind::Orbit => (0, 1),
        RepKind::Regular { window } => (window, (2 * window + 1) as usize),
    }
}

/// `(π_o, T_o)` on `ℓ²` of the truncated orbit basis.
pub fn orbit_rep(m: &Model, seeds: &[Point], depth: usize) -> Result<RepPair> {
    RepPair::build(Arc::new(m.clone()), seeds, depth, RepKind::Orbit, None)
}

/// `(π_o ⊗ 1, T_o ⊗ λ)` on the basis times `{-w..w}`.
pub fn regular_rep(m: &Model, seeds: &[Point], depth: usize, window: i64) -> Result<RepPair> {
    RepPair::build(Arc::new(m.clone()), seeds, depth, RepKind::Regular { window }, None)
}

impl RepPair {
    /// `sqrt_weight` overrides `√ρ` (used for rescaled potentials).
    pub fn build(
        model: Arc<Model>,
        seeds: &[Point],
        depth: usize,
        kind: RepKind,
        sqrt_weight: Option<&dyn Fn(&Point) -> f64>,
    ) -> Result<Self> {
        let mut basis = OrbitBasis::new(&model, seeds, depth)?;
        if let Some(w) = sqrt_weight {
            basis.sqrt_rho = basis.points.iter().map(w).collect();
        }
        let (w, nl) = levels(kind);
        let dim = basis.len() * nl;
        let mut tri = TriMat::new((dim, dim));
        for (x, &im) in basis.image.iter().enumerate() {
            let Some(y) = im else { continue };
            let s = basis.sqrt_rho[x];
            if s == 0.0 {
                continue;
            }
            for l in 0..nl {
                // T 1_{y,n} has the entry √ρ(x) at (x, n+1)
                let n = l as i64 - w;
                if matches!(kind, RepKind::Regular { .. }) && n + 1 > w {
                    continue;
                }
                let lx = if matches!(kind, RepKind::Orbit) { l } else { l + 1 };
                tri.add_triplet(x * nl + lx, y * nl + l, s);
            }
        }
        let t: CsMat<f64> = tri.to_csc();
        let ts: CsMat<f64> = t.transpose_view().to_owned().to_csc();
        Ok(RepPair { model, basis, kind, t, ts })
    }

    pub fn n_levels(&self) -> usize {
        levels(self.kind).1
    }

    pub fn dim(&self) -> usize {
        self.basis.len() * self.n_levels()
    }

    pub fn point_of(&self, idx: usize) -> &Point {
        &self.basis.points[idx / self.n_levels()]
    }

    pub fn level_of(&self, idx: usize) -> i64 {
        let (w, nl) = levels(self.kind);
        (idx % nl) as i64 - w
    }

    pub fn describe_index(&self, idx: usize) -> String {
        match self.kind {
            RepKind::Orbit => self.model.show(self.point_of(idx)),
            RepKind::Regular { .. } => format!("({}, {})", self.model.show(self.point_of(idx)), self.level_of(idx)),
        }
    }

    pub fn d(&self, f: &dyn Fn(&Point) -> f64) -> Factor {
        Factor::D(Arc::new(self.basis.points.iter().map(f).collect()))
    }

    pub fn d_test(&self, a: &TestFunction) -> Factor {
        self.d(&|p| a.eval(&self.model, p))
    }

    fn factor_matrix(&self, f: &Factor) -> CsMat<f64> {
        match f {
            Factor::T => self.t.clone(),
            Factor::Ts => self.ts.clone(),
            Factor::D(v) => {
                let nl = self.n_levels();
                let dim = self.dim();
                let mut tri = TriMat::new((dim, dim));
                for i in 0..dim {
                    let x = v[i / nl];
                    if x != 0.0 {
                        tri.add_triplet(i, i, x);
                    }
                }
                tri.to_csc()
            }
        }
    }

    pub fn word_matrix(&self, w: &Word) -> CsMat<f64> {
        let dim = self.dim();
        let mut acc: CsMat<f64> = CsMat::eye_csc(dim);
        for f in &w.factors {
            let m = self.factor_matrix(f);
            acc = (&acc * &m).to_csc();
        }
        acc.map(|v| v * w.coeff)
    }

    pub fn expr_matrix(&self, e: &[Word]) -> CsMat<f64> {
        let dim = self.dim();
        let mut acc: CsMat<f64> = CsMat::zero((dim, dim)).to_csc();
        for w in e {
            acc = (&acc + &self.word_matrix(w)).to_csc();
        }
        acc
    }

    fn t_col_exact(&self, idx: usize) -> bool {
        let nl = self.n_levels();
        let p = idx / nl;
        if !self.basis.fiber_complete[p] {
            return false;
        }
        match self.kind {
            RepKind::Orbit => true,
            RepKind::Regular { window } => self.level_of(idx) < window,
        }
    }

    fn ts_col_exact(&self, idx: usize) -> bool {
        let nl = self.n_levels();
        let p = idx / nl;
        if self.basis.sqrt_rho[p] == 0.0 {
            return true;
        }
        if !self.basis.image_present[p] {
            return false;
        }
        match self.kind {
            RepKind::Orbit => true,
            RepKind::Regular { window } => self.level_of(idx) > -window,
        }
    }

    fn word_exact_col(&self, w: &Word, j: usize) -> bool {
        let nl = self.n_levels();
        let mut support: BTreeSet<usize> = BTreeSet::from([j]);
        for f in w.factors.iter().rev() {
            let mut next = BTreeSet::new();
            match f {
                Factor::D(v) => {
                    for &s in &support {
                        if v[s / nl] != 0.0 {
                            next.insert(s);
                        }
                    }
                }
                Factor::T | Factor::Ts => {
                    let (mat, exact): (&CsMat<f64>, fn(&Self, usize) -> bool) = match f {
                        Factor::T => (&self.t, Self::t_col_exact),
                        _ => (&self.ts, Self::ts_col_exact),
                    };
                    for &s in &support {
                        if !exact(self, s) {
                            return false;
                        }
                        if let Some(col) = mat.outer_view(s) {
                            for (r, _) in col.iter() {
                                next.insert(r);
                            }
                        }
                    }
                }
            }
            if next.is_empty() {
                return true;
            }
            support = next;
        }
        true
    }

    pub fn exact_columns(&self, words: &[&Word]) -> Vec<bool> {
        (0..self.dim()).map(|j| words.iter().all(|w| self.word_exact_col(w, j))).collect()
    }

    /// `max |LHS − RHS|` over exact columns.
    pub fn residual(&self, lhs: &[Word], rhs: &[Word]) -> Residual {
        let words: Vec<&Word> = lhs.iter().chain(rhs.iter()).collect();
        let exact = self.exact_columns(&words);
        let diff = (&self.expr_matrix(lhs) - &self.expr_matrix(rhs)).to_csc();
        self.max_on_columns(&diff, &exact)
    }

    fn max_on_columns(&self, diff: &CsMat<f64>, exact: &[bool]) -> Residual {
        let mut best = 0.0;
        let mut worst = None;
        for (j, col) in diff.outer_iterator().enumerate() {
            if !exact[j] {
                continue;
            }
            for (_, v) in col.iter() {
                if v.abs() > best {
                    best = v.abs();
                    worst = Some(j);
                }
            }
        }
        Residual {
            value: best,
            exact_columns: exact.iter().filter(|&&b| b).count(),
            total_columns: exact.len(),
            worst_column: worst.map(|j| self.describe_index(j)),
        }
    }

    pub fn monomial_word(&self, mono: &Monomial) -> Word {
        let mut f = vec![self.d(&*mono.a)];
        f.extend(std::iter::repeat_n(Factor::T, mono.n));
        f.extend(std::iter::repeat_n(Factor::Ts, mono.m));
        f.push(self.d(&*mono.b));
        Word::new(f)
    }

    /// Matrix of `π(a) Tⁿ T*ᵐ π(b)`.
    pub fn monomial_matrix(&self, mono: &Monomial) -> CsMat<f64> {
        self.word_matrix(&self.monomial_word(mono))
    }

    /// Function `x ↦ L^k(f)(φ^l(x))`, zero off `Δ_l`.
    pub fn l_then_alpha(&self, f: Func, k: usize, l: usize) -> Func {
        l_then_alpha(&self.model, f, k, l)
    }
}

pub fn dense(m: &CsMat<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::zeros(m.rows(), m.cols());
    for (v, (i, j)) in m.iter() {
        d[(i, j)] += *v;
    }
    d
}

/// Operator norm: exact SVD for small matrices, power iteration otherwise.
pub fn op_norm(m: &CsMat<f64>) -> f64 {
    if m.rows().max(m.cols()) <= 700 {
        let d = dense(m);
        return d.singular_values().iter().cloned().fold(0.0, f64::max);
    }
    let mt = m.transpose_view().to_owned().to_csc();
    let mut v = vec![1.0 / (m.cols() as f64).sqrt(); m.cols()];
    let mut est = 0.0;
    for _ in 0..300 {
        let w = csc_mul_vec(m, &v);
        let u = csc_mul_vec(&mt, &w);
        let nrm = u.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return 0.0;
        }
        est = nrm.sqrt();
        v = u.iter().map(|x| x / nrm).collect();
    }
    est
}

pub fn csc_mul_vec(m: &CsMat<f64>, v: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; m.rows()];
    for (val, (i, j)) in m.iter() {
        out[i] += val * v[j];
    }
    out
}

// ---------------------------------------------------------------- relations

/// `π(L(a)) = T* π(a) T`.
pub fn check_transfer_relation(rep: &RepPair, a: &Func) -> Residual {
    let la = rep.l_then_alpha(a.clone(), 1, 0);
    let lhs = vec![Word::new(vec![Factor::Ts, rep.d(&**a), Factor::T])];
    let rhs = vec![Word::new(vec![rep.d(&*la)])];
    rep.residual(&lhs, &rhs)
}

/// `π(b) T π(a) = π(b · a∘φ) T`.
pub fn check_commutation(rep: &RepPair, a: &Func, b: &Func) -> Residual {
    let m = rep.model.clone();
    let a2 = a.clone();
    let b2 = b.clone();
    let ba = move |x: &Point| match m.phi(x) {
        Some(y) => b2(x) * a2(&y),
        None => 0.0,
    };
    let lhs = vec![Word::new(vec![rep.d(&**b), Factor::T, rep.d(&**a)])];
    let rhs = vec![Word::new(vec![rep.d(&ba), Factor::T])];
    rep.residual(&lhs, &rhs)
}

#[derive(Clone)]
pub struct QuasiBasis {
    /// `v_i`, a partition of unity on `K`.
    pub partition: Vec<TestFunction>,
    /// `u_i = √(v_i/ρ)`.
    pub functions: Vec<Func>,
    pub cover: Vec<SetDesc>,
    pub k: SetDesc,
}

fn sqrt_ratio(m: &Arc<Model>, v: &TestFunction) -> Func {
    let m = m.clone();
    let v = v.clone();
    Arc::new(move |p| {
        let num = v.eval(&m, p);
        let r = m.rho_f64(p);
        if num <= 0.0 || r <= 0.0 {
            0.0
        } else {
            (num / r).sqrt()
        }
    })
}

/// `φ` is injective on `J` (interval backend, exact).
fn injective_on(m: &Model, j: &Interval) -> bool {
    let s = m.interval_sys().unwrap();
    let mut images: Vec<IntervalSet> = Vec::new();
    for b in &s.branches {
        let part = j.intersect(&b.domain);
        if part.is_empty() {
            continue;
        }
        let im = IntervalSet::from_interval(part.affine_image(&b.map.slope, &b.map.intercept));
        if images.iter().any(|o| !o.intersect(&im).is_empty()) {
            return false;
        }
        images.push(im);
    }
    // a point shared by two branches counts once
    true
}

/// Quasi-basis for a compact `K ⊆ Δ_reg`.
pub fn quasi_basis(m: &Arc<Model>, k: &SetDesc) -> Result<QuasiBasis> {
    let reg = m.regular_set().delta_reg;
    if !m.set_subset(k, &reg) {
        return Err(Error::NotRegular(m.show_set(&m.set_difference(k, &reg))));
    }
    match k {
        SetDesc::Cylinders(_) => {
            let g = m.graph().unwrap();
            let mut partition = Vec::new();
            let mut functions = Vec::new();
            let mut cover = Vec::new();
            for e in 0..g.edges.len() {
                let c = Cyl::word(g, vec![e]);
                let v = TestFunction::cylinders(vec![(c.clone(), qi(1))]);
                functions.push(sqrt_ratio(m, &v));
                partition.push(v);
                cover.push(SetDesc::Cylinders(crate::graph::CylinderSet::new(g, vec![c])));
            }
            Ok(QuasiBasis { partition, functions, cover, k: k.clone() })
        }
        SetDesc::Intervals(ks) => {
            let space = m.interval_sys().unwrap().space.clone();
            let reg_i = reg.intervals().unwrap().clone();
            let mut partition = Vec::new();
            let mut cover = Vec::new();
            for c in ks.parts() {
                if let Some((v, j)) = trapezoid(m, c, &reg_i, &space) {
                    partition.push(v);
                    cover.push(SetDesc::Intervals(IntervalSet::from_interval(j)));
                } else {
                    let (vs, js) = hat_cover(m, c, &reg_i)?;
                    partition.extend(vs);
                    cover.extend(js.into_iter().map(|j| SetDesc::Intervals(IntervalSet::from_interval(j))));
                }
            }
            let functions = partition.iter().map(|v| sqrt_ratio(m, v)).collect();
            Ok(QuasiBasis { partition, functions, cover, k: k.clone() })
        }
    }
}

/// One trapezoid equal to 1 on `c`, supported in an injectivity interval inside `Δ_reg`.
fn trapezoid(m: &Model, c: &Interval, reg: &IntervalSet, space: &IntervalSet) -> Option<(TestFunction, Interval)> {
    let comp = reg.parts().iter().find(|p| p.contains(&c.lo) && p.contains(&c.hi))?.clone();
    for k in 2..12u32 {
        let d = dyadic(k);
        let lo = if space.has_germ(&c.lo, crate::interval::Side::Left) { &c.lo - &d } else { c.lo.clone() };
        let hi = if space.has_germ(&c.hi, crate::interval::Side::Right) { &c.hi + &d } else { c.hi.clone() };
        let j = Interval::closed(lo.clone(), hi.clone());
        let j_in_x = IntervalSet::from_interval(j.clone()).intersect(space);
        if !j_in_x.is_subset(&IntervalSet::from_interval(comp.clone())) || !injective_on(m, &j) {
            continue;
        }
        let mut knots = Vec::new();
        if lo < c.lo {
            knots.push((lo.clone(), Q::zero()));
        }
        knots.push((c.lo.clone(), qi(1)));
        if c.hi > c.lo {
            knots.push((c.hi.clone(), qi(1)));
        }
        if hi > c.hi {
            knots.push((hi.clone(), Q::zero()));
        }
        return Some((TestFunction::knots(knots), j));
    }
    None
}

/// Partition of unity by hats on a dyadic grid (fallback when one interval does not suffice).
fn hat_cover(m: &Model, c: &Interval, reg: &IntervalSet) -> Result<(Vec<TestFunction>, Vec<Interval>)> {
    let space = &m.interval_sys().unwrap().space;
    for k in 3..16u32 {
        let h = dyadic(k);
        let start = (&c.lo / &h).floor() * &h;
        let mut grid = vec![start.clone()];
        while grid.last().unwrap() < &c.hi {
            let nx = grid.last().unwrap() + &h;
            grid.push(nx);
        }
        let mut vs = Vec::new();
        let mut js = Vec::new();
        let mut ok = true;
        for g in &grid {
            let j = Interval::closed(g - &h, g + &h);
            let jx = IntervalSet::from_interval(j.clone()).intersect(space);
            if !jx.is_subset(reg) || !injective_on(m, &j) {
                ok = false;
                break;
            }
            vs.push(TestFunction::hat(g - &h, g.clone(), g + &h, qi(1)));
            js.push(j);
        }
        if ok {
            return Ok((vs, js));
        }
    }
    Err(Error::NotRegular(format!("no injective cover found for {c}")))
}

impl QuasiBasis {
    /// A single `u = √(v/ρ)` with `v` a trapezoid on `j`, ignoring regularity.
    /// Used as a negative control across irregular points.
    pub fn forced(m: &Arc<Model>, j: &Interval) -> QuasiBasis {
        let v = TestFunction::knots(vec![(j.lo.clone(), qi(1)), (j.hi.clone(), qi(1))]);
        QuasiBasis {
            functions: vec![sqrt_ratio(m, &v)],
            partition: vec![v],
            cover: vec![SetDesc::Intervals(IntervalSet::from_interval(j.clone()))],
            k: SetDesc::Intervals(IntervalSet::from_interval(j.clone())),
        }
    }
}

/// `π(a) Σ π(u_i) T T* π(u_i) = π(a)`.
pub fn check_covariance(rep: &RepPair, a: &Func, qb: &QuasiBasis) -> Residual {
    let da = rep.d(&**a);
    let lhs: Vec<Word> = qb
        .functions
        .iter()
        .map(|u| {
            let du = rep.d(&**u);
            Word::new(vec![da.clone(), du.clone(), Factor::T, Factor::Ts, du])
        })
        .collect();
    let rhs = vec![Word::new(vec![da])];
    rep.residual(&lhs, &rhs)
}

/// Closed form of `(a tⁿ t*ᵐ b)(c tᵏ t*ˡ d)`.
/// Function `x ↦ L^k(f)(φ^l(x))`, zero off `Δ_l`.
pub fn l_then_alpha(model: &Arc<Model>, f: Func, k: usize, l: usize) -> Func {
    let m = model.clone();
    Arc::new(move |x| match m.phi_n(l, x) {
        Some(y) => apply_fn(&m, &*f, &y, k),
        None => 0.0,
    })
}

pub fn product_closed_form(rep: &RepPair, m1: &Monomial, m2: &Monomial) -> Monomial {
    product_monomial(&rep.model, m1, m2)
}

/// `(a tⁿ t*ᵐ b)(c tᵏ t*ˡ d)` rewritten as a single monomial.
pub fn product_monomial(model: &Arc<Model>, m1: &Monomial, m2: &Monomial) -> Monomial {
    let (b, c) = (m1.b.clone(), m2.a.clone());
    let bc: Func = Arc::new(move |x| b(x) * c(x));
    if m1.m >= m2.n {
        let k = m2.n;
        let l = m2.m;
        let g = l_then_alpha(model, bc, k, l);
        let d = m2.b.clone();
        Monomial::new(m1.a.clone(), m1.n, m1.m - k + l, Arc::new(move |x| g(x) * d(x)))
    } else {
        let g = l_then_alpha(model, bc, m1.m, m1.n);
        let a = m1.a.clone();
        Monomial::new(Arc::new(move |x| a(x) * g(x)), m2.n - m1.m + m1.n, m2.m, m2.b.clone())
    }
}

pub fn product_check(rep: &RepPair, m1: &Monomial, m2: &Monomial) -> Residual {
    let lhs = vec![rep.monomial_word(m1).then(&rep.monomial_word(m2))];
    let rhs = vec![rep.monomial_word(&product_closed_form(rep, m1, m2))];
    rep.residual(&lhs, &rhs)
}

/// `(a tⁿ t*ᵐ b)* = b̄ tᵐ t*ⁿ ā` as matrices (real functions).
pub fn adjoint_check(rep: &RepPair, mono: &Monomial) -> f64 {
    let m = rep.monomial_matrix(mono);
    let adj = rep.monomial_matrix(&Monomial::new(mono.b.clone(), mono.m, mono.n, mono.a.clone()));
    let mt = m.transpose_view().to_owned().to_csc();
    (&mt - &adj).to_csc().iter().map(|(v, _)| v.abs()).fold(0.0, f64::max)
}

/// Keeps the terms with `n = m`.
pub fn expectation_e(terms: &[(f64, Monomial)]) -> Vec<(f64, Monomial)> {
    terms.iter().filter(|(_, m)| m.n == m.m).cloned().collect()
}

pub fn sum_matrix(rep: &RepPair, terms: &[(f64, Monomial)]) -> CsMat<f64> {
    let words: Vec<Word> = terms.iter().map(|(c, m)| rep.monomial_word(m).scaled(*c)).collect();
    rep.expr_matrix(&words)
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpectationReport {
    pub kept_terms: usize,
    pub norm_in: f64,
    pub norm_out: f64,
    pub contractive: bool,
}

/// `‖E(x)‖ ≤ ‖x‖ + tol` on the regular representation.
pub fn expectation_e_check(rep: &RepPair, terms: &[(f64, Monomial)], tol: f64) -> ExpectationReport {
    let kept = expectation_e(terms);
    let norm_in = op_norm(&sum_matrix(rep, terms));
    let norm_out = op_norm(&sum_matrix(rep, &kept));
    ExpectationReport { kept_terms: kept.len(), norm_in, norm_out, contractive: norm_out <= norm_in + tol }
}

/// `G(M) = Σ P_{x,n} M P_{x,n}`, returned as the diagonal.
pub fn expectation_g(rep: &RepPair, m: &CsMat<f64>) -> Vec<f64> {
    let mut d = vec![0.0; rep.dim()];
    for (v, (i, j)) in m.iter() {
        if i == j {
            d[i] += *v;
        }
    }
    d
}

/// Compares `G(a tᵏ t*ˡ b)` with `δ_{kl} a b ρ_k` on exact columns.
pub fn g_check(rep: &RepPair, mono: &Monomial) -> Residual {
    let w = rep.monomial_word(mono);
    let exact = rep.exact_columns(&[&w]);
    let g = expectation_g(rep, &rep.word_matrix(&w));
    let mut best = 0.0;
    let mut worst = None;
    for j in 0..rep.dim() {
        if !exact[j] {
            continue;
        }
        let x = rep.point_of(j);
        let expect = if mono.n == mono.m {
            let rk = rep.model.rho_n(mono.n, x).map(|r| to_f64(&r)).unwrap_or(0.0);
            (mono.a)(x) * (mono.b)(x) * rk
        } else {
            0.0
        };
        let d = (g[j] - expect).abs();
        if d > best {
            best = d;
            worst = Some(j);
        }
    }
    Residual {
        value: best,
        exact_columns: exact.iter().filter(|&&b| b).count(),
        total_columns: exact.len(),
        worst_column: worst.map(|j| rep.describe_index(j)),
    }
}

/// `U_z (Σ aⁱ tⁿⁱ t*ᵐⁱ bⁱ) U_z* = Σ z^{nᵢ−mᵢ} aⁱ tⁿⁱ t*ᵐⁱ bⁱ`.
pub fn check_gauge(rep: &RepPair, z: Complex64, monos: &[Monomial]) -> f64 {
    let mut entries: HashMap<(usize, usize), Complex64> = HashMap::new();
    for mono in monos {
        let mat = rep.monomial_matrix(mono);
        let deg = mono.n as i32 - mono.m as i32;
        for (v, (i, j)) in mat.iter() {
            let shift = (rep.level_of(i) - rep.level_of(j)) as i32;
            let lhs = z.powi(shift) * v;
            let rhs = z.powi(deg) * v;
            *entries.entry((i, j)).or_insert(Complex64::zero()) += lhs - rhs;
        }
    }
    entries.values().map(|c| c.norm()).fold(0.0, f64::max)
}

/// `π(a) T' = π(a ω^{1/2}) T` where `T'` is built from `ρ' = ρ ω`.
pub fn rescale_check(
    m: &Model,
    omega: &Func,
    a: &Func,
    seeds: &[Point],
    depth: usize,
    window: i64,
) -> Result<Residual> {
    let model = Arc::new(m.clone());
    let base = RepPair::build(model.clone(), seeds, depth, RepKind::Regular { window }, None)?;
    let mm = model.clone();
    let om = omega.clone();
    let sw = move |p: &Point| (mm.rho_f64(p) * om(p)).sqrt();
    let scaled = RepPair::build(model, seeds, depth, RepKind::Regular { window }, Some(&sw))?;
    let lhs_m = scaled.word_matrix(&Word::new(vec![scaled.d(&**a), Factor::T]));
    let o2 = omega.clone();
    let a2 = a.clone();
    let aw = move |p: &Point| a2(p) * o2(p).sqrt();
    let rhs_w = Word::new(vec![base.d(&aw), Factor::T]);
    let exact = base.exact_columns(&[&rhs_w]);
    let diff = (&lhs_m - &base.word_matrix(&rhs_w)).to_csc();
    Ok(base.max_on_columns(&diff, &exact))
}

/// Random rational hat functions with supports inside `region` (interval backend)
/// or random cylinder combinations (graph backend).
pub fn battery(m: &Model, region: &SetDesc, count: usize, seed: u64) -> Vec<TestFunction> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    match region {
        SetDesc::Intervals(s) => {
            let parts: Vec<&Interval> = s.parts().iter().filter(|p| !p.is_degenerate()).collect();
            let mut guard = 0;
            while out.len() < count && guard < 100 * count {
                guard += 1;
                let p = parts[rng.gen_range(0..parts.len())];
                let den = 64i64;
                let u = |rng: &mut rand_chacha::ChaCha8Rng| Q::new(rng.gen_range(0..=den).into(), den.into());
                let (mut t0, mut t1) = (u(&mut rng), u(&mut rng));
                if t0 > t1 {
                    std::mem::swap(&mut t0, &mut t1);
                }
                if t0 == t1 {
                    continue;
                }
                let l = &p.lo + p.length() * &t0;
                let r = &p.lo + p.length() * &t1;
                let mid = (&l + &r) / qi(2);
                let h = Q::new(rng.gen_range(-8..=8i64).into(), 4.into());
                if h.is_zero() {
                    continue;
                }
                let hat = TestFunction::hat(l.clone(), mid, r.clone(), h);
                // keep the closed support inside the region
                let supp = IntervalSet::from_interval(Interval::closed(l, r));
                if supp.is_subset(s) {
                    out.push(hat);
                }
            }
        }
        SetDesc::Cylinders(_) => {
            let g = m.graph().unwrap();
            for _ in 0..count {
                let terms = rng.gen_range(1..=3);
                let mut v = Vec::new();
                for _ in 0..terms {
                    let len = rng.gen_range(1..=3);
                    let words = g.words(len);
                    let w = words[rng.gen_range(0..words.len())].clone();
                    let c = Q::new(rng.gen_range(-8..=8i64).into(), 4.into());
                    v.push((Cyl::word(g, w), c));
                }
                out.push(TestFunction::cylinders(v));
            }
        }
    }
    out
}

/// One residual of a relation battery.
#[derive(Clone, Debug, Serialize)]
pub struct RelationRow {
    pub relation: &'static str,
    pub item: usize,
    pub residual: Residual,
}

pub const RELATIONS: [&str; 6] = ["transfer", "commutation", "covariance", "product", "gauge", "g_formula"];

/// Every crossed-product relation over a `count`-function battery on the regular representation.
///
/// Covariance uses a second battery supported in `Δ_reg`; monomials take exponents in `0..=2`.
pub fn relation_battery(m: &Model, depth: usize, count: usize, seed: u64) -> Result<Vec<RelationRow>> {
    use rand::{Rng, SeedableRng};
    let model = Arc::new(m.clone());
    let seeds = default_seeds(m, 2);
    let rep = RepPair::build(model.clone(), &seeds, depth, RepKind::Regular { window: 3 }, None)?;
    let fs: Vec<Func> = battery(m, &m.space_set(), count, seed).iter().map(|t| func(&model, t)).collect();
    let reg_tests = battery(m, &m.regular_set().delta_reg, count, seed ^ 0x5eed);
    if fs.is_empty() {
        return Err(Error::EmptyBasis);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let monos: Vec<Monomial> = (0..fs.len())
        .map(|i| {
            let (n, k) = (rng.gen_range(0..=2), rng.gen_range(0..=2));
            Monomial::new(fs[i].clone(), n, k, fs[(i + 1) % fs.len()].clone())
        })
        .collect();
    let mut rows = Vec::new();
    let mut push = |relation, item, residual| rows.push(RelationRow { relation, item, residual });
    for (i, a) in fs.iter().enumerate() {
        let b = &fs[(i + 1) % fs.len()];
        push("transfer", i, check_transfer_relation(&rep, a));
        push("commutation", i, check_commutation(&rep, a, b));
        let gauge = check_gauge(&rep, Complex64::from_polar(1.0, 0.7 + i as f64), &monos[i..=i]);
        let dim = rep.dim();
        push("gauge", i, Residual { value: gauge, exact_columns: dim, total_columns: dim, worst_column: None });
        push("product", i, product_check(&rep, &monos[i], &monos[(i + 1) % monos.len()]));
        push("g_formula", i, g_check(&rep, &monos[i]));
    }
    for (i, t) in reg_tests.iter().enumerate() {
        let qb = quasi_basis(&model, &t.support(m))?;
        push("covariance", i, check_covariance(&rep, &func(&model, t), &qb));
    }
    rows.sort_by_key(|r| (RELATIONS.iter().position(|x| *x == r.relation), r.item));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::rational::q;

    fn r(a: i64, b: i64) -> Point {
        Point::Real(q(a, b))
    }

    fn tent() -> Arc<Model> {
        Arc::new(bundled::load("tent_std").unwrap())
    }

    #[test]
    fn relation_battery_small() {
        for name in ["tent_std", "doubling", "fullshift2"] {
            let m = bundled::load(name).unwrap();
            let rows = relation_battery(&m, 4, 6, 3).unwrap();
            assert_eq!(rows.len(), 36, "{name}");
            for r in &rows {
                assert!(r.residual.ok(1e-10), "{name} {} {} {:?}", r.relation, r.item, r.residual);
            }
        }
    }

    #[test]
    fn orbit_rep_examples() {
        let m = tent();
        let rep = orbit_rep(&m, &[r(1, 1)], 1).unwrap();
        assert_eq!(rep.basis.points, vec![r(1, 2), r(1, 1)]);
        let t = dense(&rep.t);
        // T 1_1 = 1·1_{1/2}
        assert_eq!(t[(0, 1)], 1.0);
        let rep0 = orbit_rep(&m, &[r(0, 1)], 1).unwrap();
        assert_eq!(rep0.basis.points, vec![r(0, 1), r(1, 1)]);
        let t0 = dense(&rep0.t);
        assert!((t0[(0, 0)] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!((t0[(1, 0)] - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(matches!(orbit_rep(&m, &[], 2), Err(Error::EmptyBasis)));
    }

    #[test]
    fn seeds_are_periodic() {
        let m = tent();
        let s = default_seeds(&m, 2);
        assert!(s.contains(&r(0, 1)) && s.contains(&r(2, 3)) && s.contains(&r(2, 5)) && s.contains(&r(4, 5)));
    }

    #[test]
    fn transfer_relation_tent() {
        let m = tent();
        let seeds = default_seeds(&m, 2);
        let rep = orbit_rep(&m, &seeds, 4).unwrap();
        let res = check_transfer_relation(&rep, &constant(1.0));
        assert!(res.ok(1e-10), "{res:?}");
        let res0 = check_transfer_relation(&rep, &constant(0.0));
        assert_eq!(res0.value, 0.0);
    }

    #[test]
    fn quasi_basis_examples() {
        let m = tent();
        let k = SetDesc::Intervals(IntervalSet::from_interval(Interval::closed(qi(0), q(3, 8))));
        let qb = quasi_basis(&m, &k).unwrap();
        assert_eq!(qb.functions.len(), 1);
        let u = &qb.functions[0];
        assert!((u(&r(1, 4)).powi(2) - 2.0).abs() < 1e-12);
        let k2 = SetDesc::Intervals(IntervalSet::from_intervals(vec![
            Interval::closed(q(1, 4), q(7, 16)),
            Interval::closed(q(9, 16), q(3, 4)),
        ]));
        assert_eq!(quasi_basis(&m, &k2).unwrap().functions.len(), 2);
        let bad = SetDesc::Intervals(IntervalSet::from_interval(Interval::closed(q(1, 4), q(3, 4))));
        assert!(matches!(quasi_basis(&m, &bad), Err(Error::NotRegular(_))));
    }

    #[test]
    fn covariance_and_negative_control() {
        let m = tent();
        let seeds = default_seeds(&m, 2);
        let rep = orbit_rep(&m, &seeds, 5).unwrap();
        let k = SetDesc::Intervals(IntervalSet::from_interval(Interval::closed(qi(0), q(3, 8))));
        let qb = quasi_basis(&m, &k).unwrap();
        let a = func(&m, &TestFunction::hat(qi(0), q(1, 8), q(3, 8), qi(1)));
        assert!(check_covariance(&rep, &a, &qb).ok(1e-10));
        let forced = QuasiBasis::forced(&m, &Interval::closed(q(1, 4), q(3, 4)));
        let a2 = func(&m, &TestFunction::hat(q(1, 4), q(1, 2), q(3, 4), qi(1)));
        let res = check_covariance(&rep, &a2, &forced);
        assert!(res.value >= 0.1, "{res:?}");
    }

    #[test]
    fn product_and_adjoint() {
        let m = tent();
        let seeds = default_seeds(&m, 2);
        let rep = orbit_rep(&m, &seeds, 5).unwrap();
        let one = Monomial::units(1, 1);
        let res = product_check(&rep, &one, &one);
        assert!(res.ok(1e-10), "{res:?}");
        let a = func(&m, &TestFunction::identity_on(qi(0), qi(1)));
        let mono = Monomial::new(a.clone(), 2, 1, constant(1.0));
        assert!(adjoint_check(&rep, &mono) < 1e-14);
        let d = Monomial::new(a.clone(), 0, 0, a.clone());
        let mat = dense(&rep.monomial_matrix(&d));
        for (i, p) in rep.basis.points.iter().enumerate() {
            assert!((mat[(i, i)] - a(p) * a(p)).abs() < 1e-15);
        }
    }

    #[test]
    fn g_for_half_tent() {
        let m = Arc::new(bundled::load("tent_half").unwrap());
        let seeds = default_seeds(&m, 2);
        let rep = regular_rep(&m, &seeds, 6, 7).unwrap();
        for n in 1..=3 {
            let w = rep.monomial_word(&Monomial::units(n, n));
            let exact = rep.exact_columns(&[&w]);
            let g = expectation_g(&rep, &rep.word_matrix(&w));
            let bound = dyadic(n as u32);
            let mut seen = 0;
            for j in 0..rep.dim() {
                if exact[j] {
                    seen += 1;
                    let x = rep.point_of(j).real().unwrap();
                    let expect = if *x <= bound { 1.0 } else { 0.0 };
                    assert!((g[j] - expect).abs() < 1e-12, "n={n} x={x}");
                }
            }
            assert!(seen > 0);
        }
        let off = g_check(&rep, &Monomial::units(2, 1));
        assert_eq!(off.value, 0.0);
    }

    #[test]
    fn gauge_and_rescale() {
        let m = tent();
        let seeds = default_seeds(&m, 1);
        let rep = regular_rep(&m, &seeds, 3, 4).unwrap();
        let i = Complex64::new(0.0, 1.0);
        assert!(check_gauge(&rep, i, &[Monomial::units(1, 0)]) < 1e-12);
        assert_eq!(check_gauge(&rep, Complex64::new(1.0, 0.0), &[Monomial::units(2, 1)]), 0.0);
        let omega: Func = Arc::new(|p| 1.0 + to_f64(p.real().unwrap()));
        let a = func(&m, &TestFunction::identity_on(qi(0), qi(1)));
        assert!(rescale_check(&m, &omega, &a, &seeds, 3, 4).unwrap().ok(1e-10));
        let four = constant(4.0);
        assert!(rescale_check(&m, &four, &a, &seeds, 3, 4).unwrap().value <= 1e-12);
    }

    #[test]
    fn expectation_contractive() {
        let m = tent();
        let seeds = default_seeds(&m, 1);
        let rep = regular_rep(&m, &seeds, 3, 3).unwrap();
        let a = func(&m, &TestFunction::identity_on(qi(0), qi(1)));
        let terms = vec![
            (1.0, Monomial::new(a.clone(), 1, 1, constant(1.0))),
            (0.5, Monomial::units(1, 0)),
            (-0.7, Monomial::new(constant(1.0), 0, 2, a.clone())),
        ];
        assert!(expectation_e(&[(1.0, Monomial::units(1, 0))]).is_empty());
        assert_eq!(expectation_e(&[(1.0, Monomial::units(1, 1))]).len(), 1);
        let rep_e = expectation_e_check(&rep, &terms, 1e-8);
        assert!(rep_e.contractive, "{rep_e:?}");
    }
}
