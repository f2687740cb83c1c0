//! The dynamics `σ^ψ`, conformal and weakly conformal measures, the `β`
//! solver, and KMS checks through the generalized expectation.

use std::cell::RefCell;
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use num_complex::Complex64;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::dynamics::{Affine, Model, Point};
use crate::error::{Error, Result};
use crate::graph::{Graph, PathPoint};
use crate::interval::{Interval, IntervalSet};
use crate::rational::{fmt_q, parse_q, serde_q, to_f64, Q};
use crate::rep::{product_monomial, Func, Monomial};
use crate::transfer::{apply_fn, expand, AtomicMeasure, TestFunction, UlamMeasure};
use crate::verdicts::{Certificate, Property, Status, Verdict};

// ------------------------------------------------------------------ potential

/// Real potential `ψ` on `Δ`.
#[derive(Clone, Debug, PartialEq)]
pub enum Psi {
    /// Affine pieces; the first piece containing a point wins, zero elsewhere.
    Interval(Vec<(Interval, Affine)>),
    /// `ψ(x) = ψ_e` where `e` is the first edge of `x`.
    Graph(Vec<Q>),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PsiPiece {
    pub domain: Interval,
    #[serde(with = "serde_q")]
    pub slope: Q,
    #[serde(with = "serde_q")]
    pub intercept: Q,
}

/// On-disk form: exactly one of the three fields.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PsiFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constant: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pieces: Option<Vec<PsiPiece>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<BTreeMap<String, String>>,
}

impl Psi {
    pub fn constant(m: &Model, c: Q) -> Psi {
        match (m.interval_sys(), m.graph()) {
            (Some(s), _) => Psi::Interval(s.space.parts().iter().map(|p| (p.clone(), Affine::constant(c.clone()))).collect()),
            (_, Some(g)) => Psi::Graph(vec![c; g.edges.len()]),
            _ => unreachable!(),
        }
    }

    pub fn from_file(m: &Model, f: &PsiFile) -> Result<Psi> {
        let given = f.constant.is_some() as u8 + f.pieces.is_some() as u8 + f.edges.is_some() as u8;
        if given != 1 {
            return Err(Error::Parse("ψ file needs exactly one of `constant`, `pieces`, `edges`".into()));
        }
        if let Some(c) = &f.constant {
            return Ok(Psi::constant(m, parse_q(c)?));
        }
        if let Some(p) = &f.pieces {
            if m.is_graph() {
                return Err(Error::WrongBackend("interval"));
            }
            let psi = Psi::Interval(p.iter().map(|pc| (pc.domain.clone(), Affine::new(pc.slope.clone(), pc.intercept.clone()))).collect());
            psi.check_interval(m)?;
            return Ok(psi);
        }
        let edges = f.edges.as_ref().unwrap();
        let g = m.graph().ok_or(Error::WrongBackend("graph"))?;
        let mut w = vec![Q::zero(); g.edges.len()];
        for (name, v) in edges {
            let e = g
                .edges
                .iter()
                .position(|e| &e.name == name)
                .ok_or_else(|| Error::Parse(format!("unknown edge `{name}` in ψ")))?;
            w[e] = parse_q(v)?;
        }
        Ok(Psi::Graph(w))
    }

    pub fn parse(m: &Model, text: &str) -> Result<Psi> {
        let f: PsiFile = serde_json::from_str(text).map_err(|e| Error::Parse(format!("ψ file: {e}")))?;
        Psi::from_file(m, &f)
    }

    pub fn to_file(&self, m: &Model) -> PsiFile {
        match self {
            Psi::Interval(p) => PsiFile {
                pieces: Some(
                    p.iter()
                        .map(|(d, a)| PsiPiece { domain: d.clone(), slope: a.slope.clone(), intercept: a.intercept.clone() })
                        .collect(),
                ),
                ..Default::default()
            },
            Psi::Graph(w) => {
                let g = m.graph().unwrap();
                PsiFile {
                    edges: Some(g.edges.iter().zip(w).map(|(e, v)| (e.name.clone(), fmt_q(v))).collect()),
                    ..Default::default()
                }
            }
        }
    }

    /// Coverage of `Δ` and continuity where two pieces meet.
    fn check_interval(&self, m: &Model) -> Result<()> {
        let Psi::Interval(p) = self else { return Ok(()) };
        let cover = IntervalSet::from_intervals(p.iter().map(|(d, _)| d.clone()).collect());
        let delta = m.domain_set();
        if !delta.intervals().unwrap().is_subset(&cover) {
            return Err(Error::Parse("ψ pieces do not cover Δ".into()));
        }
        for (i, (d1, a1)) in p.iter().enumerate() {
            for (d2, a2) in &p[i + 1..] {
                for x in [&d1.lo, &d1.hi] {
                    let c2 = d2.closure();
                    if c2.contains(x) && d1.closure().contains(x) && a1.eval(x) != a2.eval(x) {
                        return Err(Error::Parse(format!("ψ is discontinuous at {}", fmt_q(x))));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn eval_q(&self, x: &Point) -> Q {
        match (self, x) {
            (Psi::Interval(p), Point::Real(v)) => {
                p.iter().find(|(d, _)| d.contains(v)).map(|(_, a)| a.eval(v)).unwrap_or_default()
            }
            (Psi::Graph(w), Point::Path(p)) => w[p.edge(0)].clone(),
            _ => Q::zero(),
        }
    }

    pub fn eval(&self, x: &Point) -> f64 {
        to_f64(&self.eval_q(x))
    }

    /// `Σ_{k<n} ψ(φ^k(x))`, stopping early where `φ` is undefined.
    pub fn birkhoff(&self, m: &Model, n: usize, x: &Point) -> f64 {
        let mut s = 0.0;
        let mut cur = x.clone();
        for k in 0..n {
            s += self.eval(&cur);
            if k + 1 < n {
                match m.phi(&cur) {
                    Some(y) => cur = y,
                    None => break,
                }
            }
        }
        s
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Psi::Interval(p) => p.iter().all(|(_, a)| a.slope.is_zero() && a.intercept.is_zero()),
            Psi::Graph(w) => w.iter().all(|v| v.is_zero()),
        }
    }

    pub fn is_piecewise_constant(&self) -> bool {
        match self {
            Psi::Interval(p) => p.iter().all(|(_, a)| a.slope.is_zero()),
            Psi::Graph(_) => true,
        }
    }
}

// ------------------------------------------------------------------ σ action

pub type CFunc = Arc<dyn Fn(&Point) -> Complex64 + Send + Sync>;

/// `a tⁿ t*ᵐ b` with complex multipliers.
#[derive(Clone)]
pub struct SigmaMonomial {
    pub a: CFunc,
    pub n: usize,
    pub m: usize,
    pub b: CFunc,
}

/// `σ_λ(a tⁿ t*ᵐ b) = e^{iλ S_n ψ} a tⁿ t*ᵐ b e^{−iλ S_m ψ}`.
pub fn sigma_action(model: &Arc<Model>, psi: &Arc<Psi>, mono: &Monomial, lambda: Complex64) -> SigmaMonomial {
    let i = Complex64::i();
    let (m1, p1, a, n) = (model.clone(), psi.clone(), mono.a.clone(), mono.n);
    let (m2, p2, b, mm) = (model.clone(), psi.clone(), mono.b.clone(), mono.m);
    SigmaMonomial {
        a: Arc::new(move |x| (i * lambda * p1.birkhoff(&m1, n, x)).exp() * a(x)),
        n: mono.n,
        m: mono.m,
        b: Arc::new(move |x| b(x) * (-i * lambda * p2.birkhoff(&m2, mm, x)).exp()),
    }
}

/// `σ_{iβ}` as a real monomial: `a ↦ e^{−β S_n ψ} a`, `b ↦ b e^{β S_m ψ}`.
pub fn sigma_imaginary(model: &Arc<Model>, psi: &Arc<Psi>, mono: &Monomial, beta: f64) -> Monomial {
    let (m1, p1, a, n) = (model.clone(), psi.clone(), mono.a.clone(), mono.n);
    let (m2, p2, b, mm) = (model.clone(), psi.clone(), mono.b.clone(), mono.m);
    Monomial::new(
        Arc::new(move |x| (-beta * p1.birkhoff(&m1, n, x)).exp() * a(x)),
        mono.n,
        mono.m,
        Arc::new(move |x| b(x) * (beta * p2.birkhoff(&m2, mm, x)).exp()),
    )
}

// ------------------------------------------------------------ positive energy

const MAX_ENERGY_PIECES: usize = 1 << 20;

/// Searches for a zero of `S_n ψ` on `Δ_n`, `n ≤ depth`.
pub fn check_positive_energy(m: &Model, psi: &Psi, depth: usize) -> Verdict {
    match (m.interval_sys(), psi) {
        (Some(s), Psi::Interval(pp)) => {
            // (x-domain, φ^k on it, S_k ψ on it)
            let mut cur: Vec<(Interval, Affine, Affine)> =
                s.space.parts().iter().map(|p| (p.clone(), Affine::identity(), Affine::constant(Q::zero()))).collect();
            let mut inspected = Vec::new();
            for n in 1..=depth {
                let mut next = Vec::new();
                for (d, g, sum) in &cur {
                    for b in &s.branches {
                        let d1 = b.domain.affine_preimage(&g.slope, &g.intercept).intersect(d);
                        if d1.is_empty() {
                            continue;
                        }
                        let mut rest = IntervalSet::from_interval(d1);
                        for (pd, pa) in pp {
                            let here = rest.intersect_interval(&pd.affine_preimage(&g.slope, &g.intercept));
                            rest = rest.difference(&here);
                            for part in here.parts() {
                                let s2 = Affine::new(
                                    &sum.slope + &pa.slope * &g.slope,
                                    &sum.intercept + pa.eval(&g.intercept),
                                );
                                if let Some(x) = affine_zero(&s2, part) {
                                    return Verdict::new(
                                        Property::PositiveEnergy,
                                        Status::Fails,
                                        Certificate::EnergyZero { n, x: Point::Real(x) },
                                        depth,
                                    );
                                }
                                next.push((part.clone(), b.map.compose(g), s2));
                            }
                        }
                        // ψ is zero where no piece applies
                        for part in rest.parts() {
                            if let Some(x) = affine_zero(sum, part) {
                                return Verdict::new(
                                    Property::PositiveEnergy,
                                    Status::Fails,
                                    Certificate::EnergyZero { n, x: Point::Real(x) },
                                    depth,
                                );
                            }
                            next.push((part.clone(), b.map.compose(g), sum.clone()));
                        }
                    }
                }
                inspected.push(next.len());
                cur = next;
                if cur.len() > MAX_ENERGY_PIECES {
                    let mut v = Verdict::new(Property::PositiveEnergy, Status::Unknown, Certificate::DepthExhausted, n);
                    v.notes.push(format!("piece budget exceeded at n = {n}"));
                    return v;
                }
            }
            let mut v =
                Verdict::new(Property::PositiveEnergy, Status::Holds, Certificate::SearchLog { inspected }, depth);
            v.notes.push(format!("certified for n ≤ {depth}"));
            v
        }
        (_, Psi::Graph(w)) if m.is_graph() => {
            let g = m.graph().unwrap();
            let mut inspected = Vec::new();
            for n in 1..=depth {
                let words = g.words(n);
                inspected.push(words.len());
                for word in &words {
                    let s: Q = word.iter().map(|&e| w[e].clone()).fold(Q::zero(), |a, b| a + b);
                    if s.is_zero() {
                        return Verdict::new(
                            Property::PositiveEnergy,
                            Status::Fails,
                            Certificate::EnergyZero { n, x: Point::Path(extend_to_path(g, word)) },
                            depth,
                        );
                    }
                }
                if words.len() > MAX_ENERGY_PIECES {
                    return Verdict::new(Property::PositiveEnergy, Status::Unknown, Certificate::DepthExhausted, n);
                }
            }
            let mut v =
                Verdict::new(Property::PositiveEnergy, Status::Holds, Certificate::SearchLog { inspected }, depth);
            v.notes.push(format!("certified for n ≤ {depth}"));
            v
        }
        _ => {
            let mut v = Verdict::new(Property::PositiveEnergy, Status::Unknown, Certificate::DepthExhausted, 0);
            v.notes.push("ψ and system use different backends".into());
            v
        }
    }
}

fn affine_zero(f: &Affine, dom: &Interval) -> Option<Q> {
    if dom.is_empty() {
        return None;
    }
    if f.slope.is_zero() {
        return f.intercept.is_zero().then(|| if dom.contains(&dom.midpoint()) { dom.midpoint() } else { dom.lo.clone() });
    }
    let r = -(&f.intercept) / &f.slope;
    dom.contains(&r).then_some(r)
}

/// Some infinite path starting with `word`, following first receiving edges.
pub fn extend_to_path(g: &Graph, word: &[usize]) -> PathPoint {
    let mut p = word.to_vec();
    let mut seen: HashMap<usize, usize> = HashMap::new();
    let mut v = g.edges[*p.last().unwrap()].s;
    loop {
        if let Some(&i) = seen.get(&v) {
            return PathPoint::new(p[..i].to_vec(), p[i..].to_vec());
        }
        seen.insert(v, p.len());
        let e = g.receiving(v)[0];
        p.push(e);
        v = g.edges[e].s;
    }
}

// ------------------------------------------------------------ measures

/// Anything that integrates real functions on `X`.
pub trait Integrate {
    fn integrate(&self, f: &dyn Fn(&Point) -> f64) -> f64;
}

impl Integrate for AtomicMeasure {
    fn integrate(&self, f: &dyn Fn(&Point) -> f64) -> f64 {
        AtomicMeasure::integrate(self, f)
    }
}

impl Integrate for UlamMeasure {
    fn integrate(&self, f: &dyn Fn(&Point) -> f64) -> f64 {
        UlamMeasure::integrate(self, &|x| f(&real_point(x)))
    }
}

pub fn real_point(x: f64) -> Point {
    Point::Real(Q::from_float(x).expect("finite"))
}

/// Path-space measure given by vertex masses and the conformal cylinder rule
/// `μ(Z(eμ)) = e^{−βψ_e} μ(Z(μ))` on positive-weight edges.
#[derive(Clone, Debug)]
pub struct CylinderMeasure {
    pub model: Arc<Model>,
    pub psi: Arc<Psi>,
    pub beta: f64,
    pub masses: Vec<f64>,
    /// Functions are integrated as if they depended on this many edges.
    pub resolution: usize,
}

impl CylinderMeasure {
    pub fn cylinder_mass(&self, word: &[usize]) -> f64 {
        let g = self.model.graph().unwrap();
        let (Psi::Graph(psi), Some(w)) = (&*self.psi, self.model.weights()) else { return 0.0 };
        let mut mass = self.masses[g.edges[*word.last().unwrap()].s];
        for &e in word {
            if !w[e].is_positive() {
                return 0.0;
            }
            mass *= (-self.beta * to_f64(&psi[e])).exp();
        }
        mass
    }
}

impl Integrate for CylinderMeasure {
    fn integrate(&self, f: &dyn Fn(&Point) -> f64) -> f64 {
        let g = self.model.graph().unwrap();
        g.words(self.resolution.max(1))
            .iter()
            .map(|w| {
                let c = self.cylinder_mass(w);
                if c == 0.0 {
                    0.0
                } else {
                    c * f(&Point::Path(extend_to_path(g, w)))
                }
            })
            .sum()
    }
}

// ------------------------------------------------------------ residuals

/// `max_a |∫ L(a) dμ − ∫ a e^{βψ} ρ dμ|`.
pub fn conformal_residual(m: &Arc<Model>, psi: &Psi, beta: f64, mu: &dyn Integrate, tests: &[TestFunction]) -> f64 {
    tests
        .iter()
        .map(|a| {
            let af = |x: &Point| a.eval(m, x);
            let lhs = mu.integrate(&|y| if m.in_space(y) { apply_fn(m, &af, y, 1) } else { 0.0 });
            let rhs = mu.integrate(&|x| a.eval(m, x) * (beta * psi.eval(x)).exp() * m.rho_f64(x));
            (lhs - rhs).abs()
        })
        .fold(0.0, f64::max)
}

/// Rejects test functions whose closed support leaves `Δ_reg`.
pub fn check_regular_support(m: &Model, tests: &[TestFunction]) -> Result<()> {
    let reg = m.regular_set().delta_reg;
    for a in tests {
        let s = a.support(m);
        if !m.set_subset(&s, &reg) {
            return Err(Error::SupportViolation(format!("{} touches Δ∖Δ_reg", a.describe(m))));
        }
    }
    Ok(())
}

/// `max_a |∫ Σ_{φ(x)=y} a(x) dμ(y) − ∫ a e^{βψ} dμ|` over `C_c(Δ_reg)`.
pub fn weakly_conformal_residual(
    m: &Arc<Model>,
    psi: &Psi,
    beta: f64,
    mu: &dyn Integrate,
    tests: &[TestFunction],
) -> Result<f64> {
    check_regular_support(m, tests)?;
    Ok(tests
        .iter()
        .map(|a| {
            let lhs = mu.integrate(&|y| {
                if !m.in_space(y) {
                    return 0.0;
                }
                m.preimages1(y).iter().map(|x| a.eval(m, x)).sum()
            });
            let rhs = mu.integrate(&|x| a.eval(m, x) * (beta * psi.eval(x)).exp());
            (lhs - rhs).abs()
        })
        .fold(0.0, f64::max))
}

// ------------------------------------------------------------ μ_β series

const MOMENTS: usize = 4;
type Moments = [Q; MOMENTS];

/// Disjoint polynomial pieces: `Σ_k c_k x^k` on each interval.
pub type PolyPieces = Vec<(Interval, Vec<f64>)>;

/// `Σ_{n≤d} w_n Σ_{x∈φ^{-n}(seed)} δ_x`, normalized to mass one.
///
/// Integrals of piecewise polynomials are exact up to the final conversion to
/// floating point: per-level power sums over `φ^{-n}(seed) ∩ E` are computed by
/// a memoized recursion over branch images instead of enumerating atoms.
pub struct SeriesMeasure {
    model: Arc<Model>,
    pub seed: Q,
    pub beta: f64,
    pub depth: usize,
    /// Weight of each single atom at level `n`.
    pub level_weights: Vec<f64>,
    /// `|φ^{-n}(seed)|` for `n ≤ depth + 1`.
    pub level_counts: Vec<Q>,
    /// Mass of the infinite series beyond `depth`, relative to the untruncated sum.
    pub tail_bound: f64,
    branches: Vec<(IntervalSet, Affine)>,
    memo: RefCell<HashMap<(usize, Interval), Moments>>,
}

impl SeriesMeasure {
    pub fn new(model: &Arc<Model>, seed: Q, beta: f64, depth: usize) -> Result<Self> {
        let s = model.interval_sys().ok_or(Error::WrongBackend("interval"))?;
        let mut taken = IntervalSet::empty();
        let mut branches = Vec::new();
        for b in &s.branches {
            let own = IntervalSet::from_interval(b.domain.clone()).difference(&taken);
            taken = taken.union(&own);
            branches.push((own, b.map.clone()));
        }
        let mut me = SeriesMeasure {
            model: model.clone(),
            seed,
            beta,
            depth,
            level_weights: Vec::new(),
            level_counts: Vec::new(),
            tail_bound: 0.0,
            branches,
            memo: RefCell::new(HashMap::new()),
        };
        let full: Vec<Interval> = s.space.parts().to_vec();
        me.level_counts = (0..=depth + 1)
            .map(|n| full.iter().map(|e| me.moments(n, e)[0].clone()).fold(Q::zero(), |a, b| a + b))
            .collect();
        let raw: Vec<f64> = (0..=depth).map(|n| (-(n as f64) * beta).exp()).collect();
        let total: f64 = raw.iter().zip(&me.level_counts).map(|(w, c)| w * to_f64(c)).sum();
        me.level_weights = raw.iter().map(|w| w / total).collect();
        // growth factor of the preimage counts at the last level
        let k = to_f64(&me.level_counts[depth + 1]) / to_f64(&me.level_counts[depth]).max(1.0);
        let r = k * (-beta).exp();
        if r >= 1.0 {
            return Err(Error::HypothesisViolated(format!(
                "series diverges: e^{{-β}}·{k} = {r} ≥ 1 (β must exceed ln {k})"
            )));
        }
        me.tail_bound = r.powi(depth as i32 + 1) / (1.0 - r);
        Ok(me)
    }

    /// `[#, Σx, Σx², Σx³]` over `φ^{-j}(seed) ∩ e`.
    fn moments(&self, j: usize, e: &Interval) -> Moments {
        if e.is_empty() {
            return Default::default();
        }
        if let Some(v) = self.memo.borrow().get(&(j, e.clone())) {
            return v.clone();
        }
        let mut out: Moments = Default::default();
        if j == 0 {
            if e.contains(&self.seed) {
                let mut p = Q::one();
                for o in out.iter_mut() {
                    *o = p.clone();
                    p *= &self.seed;
                }
            }
        } else {
            for (dom, map) in &self.branches {
                for part in dom.intersect_interval(e).parts() {
                    let img = part.affine_image(&map.slope, &map.intercept);
                    let mz = self.moments(j - 1, &img);
                    if mz[0].is_zero() {
                        continue;
                    }
                    // x = (z − c)/s
                    let neg_c = -(&map.intercept);
                    let mut sk = Q::one();
                    for (k, o) in out.iter_mut().enumerate() {
                        let mut acc = Q::zero();
                        let mut binom = Q::one();
                        for (i, mzi) in mz.iter().enumerate().take(k + 1) {
                            acc += &binom * mzi * num_traits::pow(neg_c.clone(), k - i);
                            binom = binom * Q::from_integer(((k - i) as i64).into()) / Q::from_integer(((i + 1) as i64).into());
                        }
                        *o += acc / &sk;
                        sk *= &map.slope;
                    }
                }
            }
        }
        self.memo.borrow_mut().insert((j, e.clone()), out.clone());
        out
    }

    /// `Σ_{x∈φ^{-n}(seed)} f(x)` for piecewise polynomial `f` of degree < 4.
    pub fn level_sum(&self, n: usize, f: &PolyPieces) -> f64 {
        let mut s = 0.0;
        for (dom, c) in f {
            let mo = self.moments(n, dom);
            for (k, ck) in c.iter().enumerate() {
                assert!(k < MOMENTS, "degree too high");
                if *ck != 0.0 {
                    s += ck * to_f64(&mo[k]);
                }
            }
        }
        s
    }

    pub fn mass(&self) -> f64 {
        self.level_weights.iter().zip(&self.level_counts).map(|(w, c)| w * to_f64(c)).sum()
    }

    /// `Σ_n w_n Σ_{x∈φ^{-(n+shift)}(seed)} f(x)`.
    pub fn integrate_pieces(&self, f: &PolyPieces, shift: usize) -> f64 {
        self.level_weights.iter().enumerate().map(|(n, w)| w * self.level_sum(n + shift, f)).sum()
    }

    /// Atom enumeration for arbitrary functions, levels `≤ min(depth, max_level)`.
    pub fn integrate_enumerated(&self, f: &dyn Fn(&Point) -> f64, shift: usize, max_level: usize) -> f64 {
        let m = &self.model;
        let mut level = vec![Point::Real(self.seed.clone())];
        for _ in 0..shift {
            level = level.iter().flat_map(|y| m.preimages1(y)).collect();
        }
        let mut acc = 0.0;
        for n in 0..=self.depth.min(max_level) {
            acc += self.level_weights[n] * level.iter().map(f).sum::<f64>();
            level = level.iter().flat_map(|y| m.preimages1(y)).collect();
        }
        acc
    }

    /// Exact truncation term of the weak residual: `w_d Σ_{φ^{-(d+1)}(seed)} |a| ≤ w_d·#·‖a‖`.
    pub fn weak_truncation_bound(&self, sup_norm: f64) -> f64 {
        self.level_weights[self.depth] * to_f64(&self.level_counts[self.depth + 1]) * sup_norm
    }

    /// Weak residual for one test function in `C_c(Δ_reg)`, or an error.
    pub fn weakly_conformal_residual(&self, psi: &Psi, a: &TestFunction) -> Result<f64> {
        check_regular_support(&self.model, std::slice::from_ref(a))?;
        let ap = pl_pieces(a);
        let lhs = self.integrate_pieces(&ap, 1);
        let rhs = match exp_pieces(psi, self.beta) {
            Some(e) => self.integrate_pieces(&mul_pieces(&ap, &e), 0),
            None => self.integrate_enumerated(&|x| a.eval(&self.model, x) * (self.beta * psi.eval(x)).exp(), 0, 16),
        };
        Ok((lhs - rhs).abs())
    }

    /// Strong residual `|∫ L(a) dμ − ∫ a e^{βψ} ρ dμ|` for one test function.
    pub fn conformal_residual(&self, psi: &Psi, a: &TestFunction) -> f64 {
        let arho = mul_pieces(&pl_pieces(a), &rho_pieces(&self.model));
        let lhs = self.integrate_pieces(&arho, 1);
        let rhs = match exp_pieces(psi, self.beta) {
            Some(e) => self.integrate_pieces(&mul_pieces(&arho, &e), 0),
            None => self.integrate_enumerated(
                &|x| a.eval(&self.model, x) * (self.beta * psi.eval(x)).exp() * self.model.rho_f64(x),
                0,
                16,
            ),
        };
        (lhs - rhs).abs()
    }
}

/// The truncated `μ_β` series at `seed` (for the tent: `½`).
pub fn mu_beta(model: &Arc<Model>, seed: Q, beta: f64, depth: usize) -> Result<SeriesMeasure> {
    SeriesMeasure::new(model, seed, beta, depth)
}

fn poly_mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut c = vec![0.0; a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            c[i + j] += x * y;
        }
    }
    c
}

/// Piecewise-linear test function as disjoint pieces.
pub fn pl_pieces(a: &TestFunction) -> PolyPieces {
    let TestFunction::Knots(k) = a else { return Vec::new() };
    let mut out = Vec::new();
    if k.len() == 1 {
        out.push((Interval::point(k[0].x.clone()), vec![to_f64(&k[0].y)]));
        return out;
    }
    for (i, w) in k.windows(2).enumerate() {
        if w[0].x == w[1].x {
            continue;
        }
        let slope = (&w[1].y - &w[0].y) / (&w[1].x - &w[0].x);
        let icpt = &w[0].y - &slope * &w[0].x;
        let last = i + 2 == k.len();
        let dom = Interval::new(w[0].x.clone(), w[1].x.clone(), true, last);
        out.push((dom, vec![to_f64(&icpt), to_f64(&slope)]));
    }
    out
}

/// `ρ` on `Δ` as disjoint polynomial pieces, point overrides included.
pub fn rho_pieces(m: &Model) -> PolyPieces {
    let Some(p) = m.piecewise() else { return Vec::new() };
    let delta = m.domain_set();
    let delta = delta.intervals().unwrap();
    let mut taken = IntervalSet::empty();
    let mut out = Vec::new();
    for (pt, v) in &p.overrides {
        if delta.contains(pt) {
            out.push((Interval::point(pt.clone()), vec![to_f64(v)]));
            taken = taken.union(&IntervalSet::from_points([pt.clone()]));
        }
    }
    for pc in &p.pieces {
        let own = IntervalSet::from_interval(pc.domain.clone()).intersect(delta).difference(&taken);
        taken = taken.union(&own);
        let c: Vec<f64> = expand(&pc.factors).iter().map(to_f64).collect();
        for part in own.parts() {
            out.push((part.clone(), c.clone()));
        }
    }
    out
}

/// `e^{βψ}` as pieces when `ψ` is piecewise constant.
fn exp_pieces(psi: &Psi, beta: f64) -> Option<PolyPieces> {
    let Psi::Interval(p) = psi else { return None };
    if !psi.is_piecewise_constant() {
        return None;
    }
    let mut taken = IntervalSet::empty();
    let mut out = Vec::new();
    for (d, a) in p {
        let own = IntervalSet::from_interval(d.clone()).difference(&taken);
        taken = taken.union(&own);
        for part in own.parts() {
            out.push((part.clone(), vec![(beta * to_f64(&a.intercept)).exp()]));
        }
    }
    Some(out)
}

fn mul_pieces(a: &PolyPieces, b: &PolyPieces) -> PolyPieces {
    let mut out = Vec::new();
    for (da, ca) in a {
        for (db, cb) in b {
            let d = da.intersect(db);
            if !d.is_empty() {
                out.push((d, poly_mul(ca, cb)));
            }
        }
    }
    out
}

// ------------------------------------------------------------ solver

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasureKind {
    Conformal,
    WeaklyConformal,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CandidateMeasure {
    Ulam(UlamMeasure),
    Atomic(AtomicMeasure),
    /// Vertex masses `μ(Z(v))` of a path-space measure.
    Vertex { masses: Vec<f64> },
}

/// A `β` with a measure claimed to be conformal.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct KmsCandidate {
    pub beta: f64,
    pub kind: MeasureKind,
    pub measure: CandidateMeasure,
    /// `r(β)` is constant on the bracket; `β` is not determined.
    #[serde(default)]
    pub degenerate: bool,
    /// Perron root at the returned `β`.
    pub perron_root: f64,
    pub eigen_residual: f64,
    /// `(β, r(β))` for every evaluation, in order.
    #[serde(default)]
    pub trace: Vec<(f64, f64)>,
}

impl KmsCandidate {
    pub fn mass(&self) -> f64 {
        match &self.measure {
            CandidateMeasure::Ulam(u) => u.mass(),
            CandidateMeasure::Atomic(a) => a.mass(),
            CandidateMeasure::Vertex { masses } => masses.iter().sum(),
        }
    }
}

/// One entry `∫_{bin_i} Q(1_{bin_j})` contributes `|s|·∫_u^v e^{−β(px+q)} dx`.
#[derive(Clone, Debug)]
struct UlamEntry {
    i: usize,
    j: usize,
    scale: f64,
    u: f64,
    v: f64,
    p: f64,
    q: f64,
}

/// Discretization of `Q(f)(y) = Σ_{φ(x)=y} e^{−βψ(x)} f(x) 1_{ρ(x)>0}`; a
/// conformal measure is a left eigenvector with eigenvalue one.
struct Discretized {
    size: usize,
    entries: Vec<UlamEntry>,
    width: f64,
}

impl Discretized {
    fn interval(m: &Model, psi: &Psi, bins: usize) -> Result<Self> {
        let s = m.interval_sys().ok_or(Error::WrongBackend("interval"))?;
        let Psi::Interval(pp) = psi else { return Err(Error::WrongBackend("interval")) };
        let (lo, hi) = (s.space.lower().unwrap(), s.space.upper().unwrap());
        let u = UlamMeasure { lo: lo.clone(), hi: hi.clone(), densities: vec![0.0; bins] };
        let bw = (&hi - &lo) / Q::from_integer((bins as i64).into());
        let pos = m.delta_pos();
        let pos = pos.intervals().unwrap();
        // ψ pieces made disjoint; zero where none applies
        let mut taken = IntervalSet::empty();
        let mut psi_parts: Vec<(Interval, Affine)> = Vec::new();
        for (d, a) in pp {
            let own = IntervalSet::from_interval(d.clone()).difference(&taken);
            taken = taken.union(&own);
            psi_parts.extend(own.parts().iter().map(|p| (p.clone(), a.clone())));
        }
        let rest = s.space.difference(&taken);
        psi_parts.extend(rest.parts().iter().map(|p| (p.clone(), Affine::constant(Q::zero()))));
        let mut entries = Vec::new();
        for j in 0..bins {
            let bj = u.bin(j);
            for b in &s.branches {
                let dom = pos.intersect_interval(&b.domain.intersect(&bj));
                for (pd, pa) in &psi_parts {
                    for part in dom.intersect_interval(pd).parts() {
                        if part.is_degenerate() {
                            continue;
                        }
                        let img = part.affine_image(&b.map.slope, &b.map.intercept);
                        let first = ((&img.lo - &lo) / &bw).floor().to_integer().to_usize().unwrap_or(0);
                        let last = ((&img.hi - &lo) / &bw).ceil().to_integer().to_usize().unwrap_or(0);
                        for i in first..last.min(bins) {
                            let hit = img.intersect(&u.bin(i));
                            if hit.is_empty() || hit.is_degenerate() {
                                continue;
                            }
                            let pre = hit.affine_preimage(&b.map.slope, &b.map.intercept).intersect(part);
                            entries.push(UlamEntry {
                                i,
                                j,
                                scale: to_f64(&b.map.slope.abs()),
                                u: to_f64(&pre.lo),
                                v: to_f64(&pre.hi),
                                p: to_f64(&pa.slope),
                                q: to_f64(&pa.intercept),
                            });
                        }
                    }
                }
            }
        }
        Ok(Discretized { size: bins, entries, width: to_f64(&bw) })
    }

    fn graph(m: &Model, psi: &Psi) -> Result<Self> {
        let g = m.graph().ok_or(Error::WrongBackend("graph"))?;
        let Psi::Graph(pv) = psi else { return Err(Error::WrongBackend("graph")) };
        let w = m.weights().unwrap();
        let entries = g
            .edges
            .iter()
            .enumerate()
            .filter(|(e, _)| w[*e].is_positive())
            // mass flows from s(e) into r(e): m_{r} += e^{−βψ_e} m_{s}
            .map(|(e, ed)| UlamEntry { i: ed.s, j: ed.r, scale: 1.0, u: 0.0, v: 1.0, p: 0.0, q: to_f64(&pv[e]) })
            .collect();
        Ok(Discretized { size: g.n_vertices(), entries, width: 1.0 })
    }

    /// Entries of the matrix `U[i][j]` at `β`.
    fn values(&self, beta: f64) -> Vec<(usize, usize, f64)> {
        self.entries
            .iter()
            .map(|e| {
                let bp = beta * e.p;
                let int = if bp.abs() < 1e-14 {
                    (e.v - e.u) * (-beta * (e.p * 0.5 * (e.u + e.v) + e.q)).exp()
                } else {
                    (-beta * e.q).exp() * ((-bp * e.u).exp() - (-bp * e.v).exp()) / bp
                };
                (e.i, e.j, e.scale * int / self.width)
            })
            .collect()
    }

    /// Perron root and left eigenvector of `U` (`p = Uᵀ p`), by shifted power iteration.
    fn perron(&self, beta: f64, start: &[f64]) -> (f64, Vec<f64>, f64) {
        let vals = self.values(beta);
        let apply = |p: &[f64]| {
            let mut out = vec![0.0; self.size];
            for (i, j, v) in &vals {
                out[*j] += v * p[*i];
            }
            out
        };
        let mut p = start.to_vec();
        let norm = |v: &mut Vec<f64>| {
            let s: f64 = v.iter().sum();
            if s > 0.0 {
                v.iter_mut().for_each(|x| *x /= s);
            }
        };
        norm(&mut p);
        let mut r = 0.0;
        let mut res = f64::INFINITY;
        for _ in 0..50_000 {
            let up = apply(&p);
            r = up.iter().sum::<f64>();
            res = up.iter().zip(&p).map(|(a, b)| (a - r * b).abs()).sum::<f64>();
            if res <= 1e-13 {
                break;
            }
            let mut next: Vec<f64> = up.iter().zip(&p).map(|(a, b)| a + b).collect();
            norm(&mut next);
            p = next;
        }
        (r, p, res)
    }
}

fn discretize(m: &Model, psi: &Psi, bins: usize) -> Result<Discretized> {
    if m.is_graph() {
        Discretized::graph(m, psi)
    } else {
        Discretized::interval(m, psi, bins)
    }
}

#[allow(clippy::too_many_arguments)]
fn candidate(
    m: &Model,
    disc: &Discretized,
    beta: f64,
    r: f64,
    p: Vec<f64>,
    res: f64,
    degenerate: bool,
    trace: Vec<(f64, f64)>,
) -> KmsCandidate {
    let measure = match m.interval_sys() {
        Some(s) => CandidateMeasure::Ulam(UlamMeasure {
            lo: s.space.lower().unwrap(),
            hi: s.space.upper().unwrap(),
            densities: p.iter().map(|x| x / disc.width).collect(),
        }),
        None => CandidateMeasure::Vertex { masses: p },
    };
    KmsCandidate { beta, kind: MeasureKind::Conformal, measure, degenerate, perron_root: r, eigen_residual: res, trace }
}

/// Perron eigenmeasure at a fixed `β`; conformal only when `perron_root` is 1.
pub fn eigenmeasure_at(m: &Model, psi: &Psi, bins: usize, beta: f64) -> Result<KmsCandidate> {
    let disc = discretize(m, psi, bins)?;
    let (r, p, res) = disc.perron(beta, &vec![1.0; disc.size]);
    Ok(candidate(m, &disc, beta, r, p, res, false, vec![(beta, r)]))
}

/// Bisection on the Perron root `r(β)` of the discretized conformality operator.
///
/// Interval systems use `bins` Ulam bins; graphs use the weighted adjacency
/// matrix and ignore `bins`.
pub fn solve_conformal(m: &Model, psi: &Psi, bins: usize, bracket: (f64, f64)) -> Result<KmsCandidate> {
    let disc = discretize(m, psi, bins)?;
    let (mut a, mut b) = if bracket.0 <= bracket.1 { bracket } else { (bracket.1, bracket.0) };
    let mut trace = Vec::new();
    let uniform = vec![1.0; disc.size];
    let (ra, pa, ea) = disc.perron(a, &uniform);
    let (rb, _, _) = disc.perron(b, &pa);
    trace.push((a, ra));
    trace.push((b, rb));
    let finish = |beta, r, p, res, degenerate, trace| candidate(m, &disc, beta, r, p, res, degenerate, trace);
    if (ra - rb).abs() <= 1e-12 {
        if (ra - 1.0).abs() <= 1e-9 {
            return Ok(finish(a, ra, pa, ea, true, trace));
        }
        return Err(Error::NoSolution(format!("flat bracket [{a}, {b}]: r(β) ≡ {ra}")));
    }
    if (ra - 1.0).signum() == (rb - 1.0).signum() && (ra - 1.0).abs() > 1e-10 && (rb - 1.0).abs() > 1e-10 {
        return Err(Error::NoSolution(format!("r({a}) = {ra}, r({b}) = {rb}: no crossing of 1")));
    }
    let dec = ra > rb;
    let mut p = pa;
    loop {
        let mid = 0.5 * (a + b);
        let (r, pm, res) = disc.perron(mid, &p);
        trace.push((mid, r));
        p = pm;
        if (r - 1.0).abs() <= 1e-10 || b - a < 1e-15 {
            return Ok(finish(mid, r, p, res, false, trace));
        }
        if (r > 1.0) == dec {
            a = mid;
        } else {
            b = mid;
        }
    }
}

// ------------------------------------------------------------ KMS checks

/// `(β, μ, ψ)` ready for state evaluation `φ_μ(b) = ∫ G(b) dμ`.
pub struct KmsSetup {
    pub model: Arc<Model>,
    pub psi: Arc<Psi>,
    pub beta: f64,
    pub mu: Box<dyn Integrate + Send + Sync>,
}

impl KmsSetup {
    pub fn new(model: &Arc<Model>, psi: &Arc<Psi>, cand: &KmsCandidate) -> Self {
        let mu: Box<dyn Integrate + Send + Sync> = match &cand.measure {
            CandidateMeasure::Ulam(u) => Box::new(u.clone()),
            CandidateMeasure::Atomic(a) => Box::new(a.clone()),
            CandidateMeasure::Vertex { masses } => Box::new(CylinderMeasure {
                model: model.clone(),
                psi: psi.clone(),
                beta: cand.beta,
                masses: masses.clone(),
                resolution: 6,
            }),
        };
        KmsSetup { model: model.clone(), psi: psi.clone(), beta: cand.beta, mu }
    }

    /// `G(a tⁿ t*ᵐ b) = δ_{nm} a b ρ_n`, as a function.
    pub fn g_of(&self, mono: &Monomial) -> Option<Func> {
        if mono.n != mono.m {
            return None;
        }
        let (m, a, b, n) = (self.model.clone(), mono.a.clone(), mono.b.clone(), mono.n);
        Some(Arc::new(move |x| {
            let r = m.rho_n(n, x).map(|r| to_f64(&r)).unwrap_or(0.0);
            if r == 0.0 {
                0.0
            } else {
                a(x) * b(x) * r
            }
        }))
    }

    pub fn state(&self, mono: &Monomial) -> f64 {
        match self.g_of(mono) {
            Some(g) => self.mu.integrate(&|x| g(x)),
            None => 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct KmsPair {
    pub id: usize,
    pub label: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
}

/// `|φ_μ(M1 σ_{iβ}(M2)) − φ_μ(M2 M1)|`.
pub fn kms_residual(setup: &KmsSetup, m1: &Monomial, m2: &Monomial) -> (f64, f64, f64) {
    let s2 = sigma_imaginary(&setup.model, &setup.psi, m2, setup.beta);
    let lhs = setup.state(&product_monomial(&setup.model, m1, &s2));
    let rhs = setup.state(&product_monomial(&setup.model, m2, m1));
    (lhs, rhs, (lhs - rhs).abs())
}

/// `|∫ G(a tⁿ t*ⁿ b) dμ − μ(Lⁿ(e^{−β S_n ψ} a b))|`.
pub fn core_kms_check(setup: &KmsSetup, a: &Func, b: &Func, n: usize) -> f64 {
    let mono = Monomial::new(a.clone(), n, n, b.clone());
    let lhs = setup.state(&mono);
    let m = &setup.model;
    let rhs = if n == 0 {
        setup.mu.integrate(&|x| {
            let r = m.rho_n(0, x).map(|r| to_f64(&r)).unwrap_or(0.0);
            if r == 0.0 {
                0.0
            } else {
                a(x) * b(x) * r
            }
        })
    } else {
        let f = |x: &Point| (-setup.beta * setup.psi.birkhoff(m, n, x)).exp() * a(x) * b(x);
        setup.mu.integrate(&|y| if m.in_space(y) { apply_fn(m, &f, y, n) } else { 0.0 })
    };
    (lhs - rhs).abs()
}

/// Monomial pairs `(a tⁿ t*ᵐ b, c tᵏ t*ˡ d)` with `n, m, k, l ≤ 2`, including
/// off-diagonal ones.
pub fn kms_battery_pairs(m: &Arc<Model>, count: usize, seed: u64) -> Vec<(String, Monomial, Monomial)> {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let fns = crate::rep::battery(m, &m.space_set(), 4 * count, seed);
    let mut out = Vec::new();
    for i in 0..count {
        let pick = |k: usize| crate::rep::func(m, &fns[k % fns.len().max(1)]);
        let (n1, m1) = (rng.gen_range(0..=2usize), rng.gen_range(0..=2usize));
        let (n2, m2) = if i % 4 == 3 {
            // force an off-diagonal product
            (rng.gen_range(0..=2usize), rng.gen_range(0..=2usize))
        } else {
            (m1, n1)
        };
        let label = format!("({},{})x({},{})", n1, m1, n2, m2);
        let one = crate::rep::constant(1.0);
        let (a, b) = if fns.is_empty() { (one.clone(), one.clone()) } else { (pick(4 * i), pick(4 * i + 1)) };
        let (c, d) = if fns.is_empty() { (one.clone(), one) } else { (pick(4 * i + 2), pick(4 * i + 3)) };
        out.push((label, Monomial::new(a, n1, m1, b), Monomial::new(c, n2, m2, d)));
    }
    out
}

/// Evaluates the pairs on scoped worker threads; the output order is fixed by pair id.
pub fn kms_battery(setup: &KmsSetup, count: usize, seed: u64) -> Vec<KmsPair> {
    let pairs = kms_battery_pairs(&setup.model, count, seed);
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(pairs.len().max(1));
    let mut out: Vec<KmsPair> = std::thread::scope(|sc| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let pairs = &pairs;
                sc.spawn(move || {
                    pairs
                        .iter()
                        .enumerate()
                        .skip(w)
                        .step_by(workers)
                        .map(|(id, (label, m1, m2))| {
                            let (lhs, rhs, residual) = kms_residual(setup, m1, m2);
                            KmsPair { id, label: label.clone(), lhs, rhs, residual }
                        })
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("worker panicked")).collect()
    });
    out.sort_by_key(|p| p.id);
    out
}

pub fn kms_csv(pairs: &[KmsPair]) -> String {
    let mut s = String::from("pair,label,lhs,rhs,residual\n");
    for p in pairs {
        s.push_str(&format!("{},{},{:.12e},{:.12e},{:.3e}\n", p.id, p.label, p.lhs, p.rhs, p.residual));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::rational::{q, qi};
    use crate::rep::{constant, func};

    fn model(name: &str) -> Arc<Model> {
        Arc::new(bundled::load(name).unwrap())
    }

    fn pwc(m: &Model, pieces: Vec<(Interval, Affine)>) -> Psi {
        let _ = m;
        Psi::Interval(pieces)
    }

    #[test]
    fn sigma_identity_group_and_scaling() {
        let m = model("tent_std");
        let psi = Arc::new(Psi::constant(&m, qi(1)));
        let a = func(&m, &TestFunction::hat(q(1, 8), q(1, 4), q(3, 8), qi(1)));
        let mono = Monomial::new(a.clone(), 2, 2, constant(1.0));
        let x = Point::Real(q(1, 5));
        let s0 = sigma_action(&m, &psi, &mono, Complex64::new(0.0, 0.0));
        assert!(((s0.a)(&x) - Complex64::new(a(&x), 0.0)).norm() < 1e-15);
        let (l1, l2) = (Complex64::new(0.3, 0.2), Complex64::new(-1.1, 0.5));
        let one = sigma_action(&m, &psi, &mono, l1);
        let comp = (one.a)(&x) / a(&x) * sigma_action(&m, &psi, &mono, l2).a.as_ref()(&x);
        let both = sigma_action(&m, &psi, &mono, l1 + l2);
        assert!((comp - (both.a)(&x)).norm() < 1e-12);
        // λ = iβ on (a,1,0,1) multiplies a by e^{−β}
        let beta = 0.7;
        let s = sigma_action(&m, &psi, &Monomial::new(a.clone(), 1, 0, constant(1.0)), Complex64::new(0.0, beta));
        assert!(((s.a)(&x) - Complex64::new((-beta).exp() * a(&x), 0.0)).norm() < 1e-15);
        let r = sigma_imaginary(&m, &psi, &Monomial::new(a.clone(), 1, 0, constant(1.0)), beta);
        assert!(((r.a)(&x) - (-beta).exp() * a(&x)).abs() < 1e-15);
    }

    #[test]
    fn positive_energy_examples() {
        let m = model("tent_std");
        assert_eq!(check_positive_energy(&m, &Psi::constant(&m, qi(1)), 6).status, Status::Holds);
        let v = check_positive_energy(&m, &Psi::constant(&m, qi(0)), 6);
        assert_eq!(v.status, Status::Fails);
        assert!(matches!(v.certificate, Certificate::EnergyZero { n: 1, .. }));
        let psi = pwc(&m, vec![(Interval::closed(qi(0), qi(1)), Affine::new(qi(1), q(-1, 4)))]);
        let v = check_positive_energy(&m, &psi, 6);
        assert_eq!(v.status, Status::Fails);
        match v.certificate {
            Certificate::EnergyZero { n, x } => {
                // oracle: direct evaluation of the Birkhoff sum at the witness
                assert_eq!(n, 1);
                assert_eq!(x, Point::Real(q(1, 4)));
            }
            c => panic!("{c:?}"),
        }
        let g = model("fullshift2");
        assert_eq!(check_positive_energy(&g, &Psi::constant(&g, qi(1)), 6).status, Status::Holds);
    }

    #[test]
    fn energy_witness_is_a_zero() {
        // ψ = x − 3/4: S_1 has no zero in [0,1]? it does at 3/4; S_2 = x − 3/4 + φ(x) − 3/4
        let m = model("tent_std");
        let psi = pwc(&m, vec![(Interval::closed(qi(0), qi(1)), Affine::new(qi(1), q(-3, 4)))]);
        if let Certificate::EnergyZero { n, x } = check_positive_energy(&m, &psi, 4).certificate {
            assert_eq!(psi.birkhoff(&m, n, &x), 0.0);
        } else {
            panic!()
        }
    }

    #[test]
    fn solver_tent() {
        let m = model("tent_std");
        let psi = Psi::constant(&m, qi(1));
        let c = solve_conformal(&m, &psi, 256, (0.1, 3.0)).unwrap();
        assert!((c.beta - 2f64.ln()).abs() <= 1e-8, "{}", c.beta);
        assert!((c.mass() - 1.0).abs() <= 1e-9);
        if let CandidateMeasure::Ulam(u) = &c.measure {
            let lebesgue = UlamMeasure::uniform(qi(0), qi(1), 256);
            assert!(u.total_variation(&lebesgue) <= 5.0 / 256.0);
        } else {
            panic!()
        }
        let at = eigenmeasure_at(&m, &psi, 256, 2f64.ln()).unwrap();
        assert!((at.perron_root - 1.0).abs() < 1e-9);
        let off = eigenmeasure_at(&m, &psi, 256, 1.0).unwrap();
        assert!((off.perron_root - 2.0 * (-1f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn solver_loop_and_flat() {
        let m = model("loop1");
        let psi = Psi::constant(&m, qi(1));
        let c = solve_conformal(&m, &psi, 0, (-1.0, 1.0)).unwrap();
        assert!(c.beta.abs() < 1e-9);
        assert!(matches!(&c.measure, CandidateMeasure::Vertex { masses } if (masses[0] - 1.0).abs() < 1e-12));
        let t = model("tent_std");
        let e = solve_conformal(&t, &Psi::constant(&t, qi(0)), 64, (0.1, 3.0)).unwrap_err();
        assert!(matches!(e, Error::NoSolution(ref s) if s.contains("flat")));
        let e = solve_conformal(&t, &Psi::constant(&t, qi(1)), 64, (1.0, 3.0)).unwrap_err();
        assert!(matches!(e, Error::NoSolution(_)));
    }

    #[test]
    fn lebesgue_is_conformal_and_dirac_is_not() {
        let m = model("tent_std");
        let psi = Psi::constant(&m, qi(1));
        let beta = 2f64.ln();
        let bins = 128;
        let leb = UlamMeasure::uniform(qi(0), qi(1), bins);
        let tests = crate::rep::battery(&m, &m.space_set(), 8, 3);
        let r = conformal_residual(&m, &psi, beta, &leb, &tests);
        assert!(r <= 1.0 / bins as f64, "{r}");
        let zero = vec![TestFunction::zero()];
        assert_eq!(conformal_residual(&m, &psi, beta, &leb, &zero), 0.0);
        let dirac = AtomicMeasure::dirac(Point::Real(q(1, 4)));
        let hat = vec![TestFunction::hat(q(3, 16), q(1, 4), q(5, 16), qi(1))];
        assert!(conformal_residual(&m, &psi, beta, &dirac, &hat) >= 0.1);
        // regular-support family: weak residual also small
        let reg = m.regular_set().delta_reg;
        let rt = crate::rep::battery(&m, &reg, 6, 4);
        assert!(weakly_conformal_residual(&m, &psi, beta, &leb, &rt).unwrap() <= 2.0 / bins as f64);
        let bad = vec![TestFunction::hat(q(1, 4), q(1, 2), q(3, 4), qi(1))];
        assert!(matches!(weakly_conformal_residual(&m, &psi, beta, &leb, &bad), Err(Error::SupportViolation(_))));
    }

    #[test]
    fn mu_beta_series() {
        let m = model("tent_std");
        let psi = Psi::constant(&m, qi(1));
        for beta in [0.75, 1.0, 1.5] {
            let mu = mu_beta(&m, q(1, 2), beta, 30).unwrap();
            // |φ^{-n}(½)| = 2ⁿ, checked by enumeration for small n
            let mut lvl = vec![Point::Real(q(1, 2))];
            for n in 0..10 {
                assert_eq!(mu.level_counts[n], Q::from_integer((lvl.len() as i64).into()));
                lvl = lvl.iter().flat_map(|y| m.preimages1(y)).collect();
            }
            assert!((mu.mass() - 1.0).abs() <= 1e-9);
            let r = 2.0 * (-beta).exp();
            assert!((mu.tail_bound - r.powi(31) / (1.0 - r)).abs() < 1e-12);
            let a = TestFunction::hat(q(1, 8), q(3, 16), q(1, 4), qi(1));
            let w = mu.weakly_conformal_residual(&psi, &a).unwrap();
            assert!(w <= 2.0 * r.powi(30) + 1e-12, "{beta}: {w}");
            // hat at ½ separates the conformal and weakly conformal notions
            let h = TestFunction::hat(q(7, 16), q(1, 2), q(9, 16), qi(1));
            assert!(mu.conformal_residual(&psi, &h) >= 0.05, "{beta}");
        }
    }

    #[test]
    fn series_matches_enumeration() {
        let m = model("tent_std");
        let mu = mu_beta(&m, q(1, 2), 1.0, 8).unwrap();
        let a = TestFunction::hat(q(1, 8), q(3, 10), q(5, 8), q(3, 2));
        let exact = mu.integrate_pieces(&pl_pieces(&a), 0);
        let brute = mu.integrate_enumerated(&|x| a.eval(&m, x), 0, 8);
        assert!((exact - brute).abs() < 1e-12);
        let exact1 = mu.integrate_pieces(&mul_pieces(&pl_pieces(&a), &rho_pieces(&m)), 1);
        let brute1 = mu.integrate_enumerated(&|x| a.eval(&m, x) * m.rho_f64(x), 1, 8);
        assert!((exact1 - brute1).abs() < 1e-12);
    }

    #[test]
    fn kms_pairs_on_lebesgue() {
        let m = model("tent_std");
        let psi = Arc::new(Psi::constant(&m, qi(1)));
        let cand = solve_conformal(&m, &psi, 256, (0.1, 3.0)).unwrap();
        let setup = KmsSetup::new(&m, &psi, &cand);
        let a = func(&m, &TestFunction::hat(qi(0), q(1, 4), q(1, 2), qi(1)));
        let b = func(&m, &TestFunction::hat(q(1, 4), q(1, 2), q(3, 4), qi(2)));
        let c = func(&m, &TestFunction::identity_on(qi(0), qi(1)));
        let d = constant(1.0);
        let (l, r, res) = kms_residual(&setup, &Monomial::new(a.clone(), 1, 1, b.clone()), &Monomial::new(c.clone(), 1, 1, d.clone()));
        assert!(res <= 1e-6 + 1.0 / 256.0, "{l} {r}");
        let (l, r, _) = kms_residual(&setup, &Monomial::new(a.clone(), 1, 1, b.clone()), &Monomial::new(c.clone(), 2, 1, d));
        assert!(l.abs() <= 1e-12 && r.abs() <= 1e-12);
        assert_eq!(core_kms_check(&setup, &a, &b, 0), 0.0);
        assert!(core_kms_check(&setup, &a, &b, 1) <= 1e-6 + 1.0 / 256.0);
    }

    #[test]
    fn core_check_zero_potential() {
        let mut raw = bundled::load("tent_std").unwrap();
        if let crate::Potential::Interval(p) = &mut raw.pot {
            for pc in &mut p.pieces {
                pc.factors = vec![Affine::constant(Q::zero())];
            }
            p.overrides.clear();
        }
        let m = Arc::new(raw);
        let psi = Arc::new(Psi::constant(&m, qi(1)));
        let cand = KmsCandidate {
            beta: 1.0,
            kind: MeasureKind::Conformal,
            measure: CandidateMeasure::Ulam(UlamMeasure::uniform(qi(0), qi(1), 32)),
            degenerate: false,
            perron_root: 0.0,
            eigen_residual: 0.0,
            trace: vec![],
        };
        let s = KmsSetup::new(&m, &psi, &cand);
        let a = constant(1.0);
        assert_eq!(core_kms_check(&s, &a, &a, 1), 0.0);
        assert_eq!(s.state(&Monomial::new(a.clone(), 1, 1, a)), 0.0);
    }

    #[test]
    fn psi_file_roundtrip() {
        let m = model("tent_std");
        let p = Psi::parse(&m, r#"{"pieces":[{"domain":{"lo":"0","hi":"1"},"slope":"1","intercept":"-1/4"}]}"#).unwrap();
        assert_eq!(p, pwc(&m, vec![(Interval::closed(qi(0), qi(1)), Affine::new(qi(1), q(-1, 4)))]));
        let text = serde_json::to_string(&p.to_file(&m)).unwrap();
        assert_eq!(Psi::parse(&m, &text).unwrap(), p);
        assert_eq!(Psi::parse(&m, r#"{"constant":"2"}"#).unwrap(), Psi::constant(&m, qi(2)));
        assert!(Psi::parse(&m, r#"{}"#).is_err());
        let g = model("loops2");
        let names: Vec<String> = g.graph().unwrap().edges.iter().map(|e| e.name.clone()).collect();
        let text = format!(r#"{{"edges":{{"{}":"3"}}}}"#, names[0]);
        let gp = Psi::parse(&g, &text).unwrap();
        assert!(matches!(gp, Psi::Graph(ref w) if w[0] == qi(3)));
    }
}
