//! Bounded-depth, certificate-carrying decisions for topological freeness,
//! minimality, contractivity, simplicity and pure infiniteness.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use num_traits::{One, Signed};
use serde::Serialize;

use crate::dynamics::{Affine, Model, Point, SetDesc};
use crate::graph::{Cyl, CylinderSet, PathPoint};
use crate::interval::{Interval, IntervalSet};
use crate::rational::{dyadic, q, qi, Q};
use crate::rep::{self, Factor, RepKind, RepPair, Word};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Property {
    TopFree,
    Minimal,
    Contracting,
    Simple,
    PurelyInfiniteSimple,
    OneCircuit,
    PositiveEnergy,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Status {
    Holds,
    Fails,
    Unknown,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Status::Holds => "Holds",
            Status::Fails => "Fails",
            Status::Unknown => "Unknown",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, Serialize)]
pub enum Certificate {
    /// A composite branch of `φⁿ` equal to the identity on `domain`.
    IdentityBranch { n: usize, domain: Interval },
    /// A cycle (edge names) none of whose vertices receives another edge.
    Circuit { edges: Vec<String> },
    /// Exhaustive search log: composites (or cycles) inspected per level.
    SearchLog { inspected: Vec<usize> },
    InvariantSet { set: SetDesc },
    AllSeedsReachX { seeds: usize },
    Contracting { x0: Point, sets: Vec<ContractingSet> },
    Obstruction { reason: String },
    /// A point where the Birkhoff sum `Σ_{i<n} ψ(φ^i(x))` vanishes.
    EnergyZero { n: usize, x: Point },
    Combined { parts: Vec<Verdict> },
    DepthExhausted,
}

/// `V` with pairs `(U_k, n_k)`.
#[derive(Clone, Debug, Serialize)]
pub struct ContractingSet {
    pub v: SetDesc,
    pub u: Vec<(SetDesc, usize)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Verdict {
    pub property: Property,
    pub status: Status,
    pub certificate: Certificate,
    pub depth: usize,
    pub notes: Vec<String>,
}

impl Verdict {
    pub(crate) fn new(property: Property, status: Status, certificate: Certificate, depth: usize) -> Self {
        Verdict { property, status, certificate, depth, notes: Vec::new() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.status {
            Status::Holds => 0,
            Status::Fails => 1,
            Status::Unknown => 2,
        }
    }

    pub fn to_text(&self, m: &Model) -> String {
        let mut s = format!("{:?}: {} (depth {})\n", self.property, self.status, self.depth);
        s.push_str(&describe_certificate(m, &self.certificate, 1));
        for n in &self.notes {
            s.push_str(&format!("  note: {n}\n"));
        }
        s
    }
}

fn describe_certificate(m: &Model, c: &Certificate, indent: usize) -> String {
    let pad = "  ".repeat(indent);
    match c {
        Certificate::IdentityBranch { n, domain } => format!("{pad}certificate: φ^{n} = id on {domain}\n"),
        Certificate::Circuit { edges } => format!("{pad}certificate: circuit without exit {}\n", edges.join(".")),
        Certificate::SearchLog { inspected } => format!("{pad}certificate: exhaustive search, inspected {inspected:?}\n"),
        Certificate::InvariantSet { set } => format!("{pad}certificate: invariant open set {}\n", m.show_set(set)),
        Certificate::AllSeedsReachX { seeds } => format!("{pad}certificate: all {seeds} seed closures reach X\n"),
        Certificate::Contracting { x0, sets } => {
            let mut s = format!("{pad}certificate: x0 = {}\n", m.show(x0));
            for cs in sets {
                let us: Vec<String> = cs.u.iter().map(|(u, n)| format!("(U={}, n={n})", m.show_set(u))).collect();
                s.push_str(&format!("{pad}  V = {}: {}\n", m.show_set(&cs.v), us.join(" ")));
            }
            s
        }
        Certificate::Obstruction { reason } => format!("{pad}obstruction: {reason}\n"),
        Certificate::EnergyZero { n, x } => format!("{pad}certificate: S_{n}ψ({}) = 0\n", m.show(x)),
        Certificate::Combined { parts } => {
            let mut s = String::new();
            for p in parts {
                s.push_str(&format!("{pad}{:?}: {}\n", p.property, p.status));
                s.push_str(&describe_certificate(m, &p.certificate, indent + 1));
            }
            s
        }
        Certificate::DepthExhausted => format!("{pad}depth exhausted\n"),
    }
}

fn combine(property: Property, parts: Vec<Verdict>, depth: usize) -> Verdict {
    let status = if parts.iter().any(|p| p.status == Status::Fails) {
        Status::Fails
    } else if parts.iter().all(|p| p.status == Status::Holds) {
        Status::Holds
    } else {
        Status::Unknown
    };
    Verdict::new(property, status, Certificate::Combined { parts }, depth)
}

// ------------------------------------------------------------ graph helpers

fn positive_edges(m: &Model) -> Vec<bool> {
    m.weights().unwrap().iter().map(|w| w.is_positive()).collect()
}

/// Cycles of the positive-weight subgraph.
fn positive_cycles(m: &Model) -> Vec<Vec<usize>> {
    let g = m.graph().unwrap();
    let pos = positive_edges(m);
    g.simple_cycles().into_iter().filter(|c| c.iter().all(|&e| pos[e])).collect()
}

fn cycle_without_exit(m: &Model, c: &[usize]) -> bool {
    let g = m.graph().unwrap();
    c.iter().all(|&e| g.receiving(g.edges[e].s).len() == 1)
}

/// The boundary path space is finite (word counts stop growing).
fn graph_space_finite(m: &Model) -> bool {
    let g = m.graph().unwrap();
    let n = 2 * g.edges.len() + 1;
    let a = g.words(n).len();
    a == g.words(n + 1).len() && a == g.words(n + 2).len()
}

// -------------------------------------------------------------- top freeness

pub fn check_top_free(m: &Model, depth: usize) -> Verdict {
    match m.graph() {
        Some(g) => {
            let cycles = positive_cycles(m);
            for c in &cycles {
                if cycle_without_exit(m, c) {
                    let edges = c.iter().map(|&e| g.edges[e].name.clone()).collect();
                    return Verdict::new(Property::TopFree, Status::Fails, Certificate::Circuit { edges }, depth);
                }
            }
            Verdict::new(Property::TopFree, Status::Holds, Certificate::SearchLog { inspected: vec![cycles.len()] }, depth)
        }
        None => {
            let mut inspected = Vec::new();
            for n in 1..=depth {
                let comps = m.regular_composites(n);
                inspected.push(comps.len());
                for (dom, f) in comps {
                    if f == Affine::identity() && !dom.is_degenerate() {
                        return Verdict::new(
                            Property::TopFree,
                            Status::Fails,
                            Certificate::IdentityBranch { n, domain: dom },
                            depth,
                        );
                    }
                }
            }
            let mut v = Verdict::new(Property::TopFree, Status::Holds, Certificate::SearchLog { inspected }, depth);
            v.notes.push("fixed-point sets of non-identity affine composites are single points".into());
            v
        }
    }
}

/// Re-verifies a `TopFree` failure certificate.
pub fn replay_top_free_failure(m: &Model, c: &Certificate) -> bool {
    match c {
        Certificate::IdentityBranch { n, domain } => {
            let mid = Point::Real(domain.midpoint());
            m.is_regular_n(*n, &mid)
                && m.phi_n(*n, &mid) == Some(mid.clone())
                && m.regular_composites(*n).iter().any(|(d, f)| d == domain && *f == Affine::identity())
        }
        Certificate::Circuit { edges } => {
            let g = m.graph().unwrap();
            let ids: Vec<usize> =
                edges.iter().map(|n| g.edges.iter().position(|e| &e.name == n).unwrap()).collect();
            g.is_path(&ids) && cycle_without_exit(m, &ids)
        }
        _ => false,
    }
}

// ------------------------------------------------------------- invariance

/// `(φ(U ∩ Δ_pos) ⊆ U, φ^{-1}(U) ∩ Δ_reg ⊆ U)`.
pub fn check_invariant(m: &Model, u: &SetDesc) -> (bool, bool) {
    let reg = m.regular_set();
    let fwd = m.image_set(&m.set_intersect(u, &reg.delta_pos));
    let back = m.set_intersect(&m.preimage_set(u), &reg.delta_reg);
    (m.set_subset(&fwd, u), m.set_subset(&back, u))
}

/// Iterates `U ← U ∪ φ(U∩Δ_pos) ∪ (φ^{-1}(U)∩Δ_reg)`; returns the set and whether it stabilised.
pub fn invariant_closure(m: &Model, u: &SetDesc, depth: usize) -> (SetDesc, bool) {
    let reg = m.regular_set();
    let mut cur = u.clone();
    for _ in 0..depth.max(1) * 4 {
        let fwd = m.image_set(&m.set_intersect(&cur, &reg.delta_pos));
        let back = m.set_intersect(&m.preimage_set(&cur), &reg.delta_reg);
        let next = m.set_union(&m.set_union(&cur, &fwd), &back);
        if next == cur {
            return (cur, true);
        }
        cur = next;
    }
    (cur, false)
}

fn minimal_seeds(m: &Model, depth: usize) -> Vec<SetDesc> {
    match m.graph() {
        Some(g) => {
            let mut out = Vec::new();
            for len in 1..=depth.min(4) {
                for w in g.words(len) {
                    out.push(SetDesc::Cylinders(CylinderSet::new(g, vec![Cyl::word(g, w)])));
                }
            }
            out
        }
        None => {
            let space = &m.interval_sys().unwrap().space;
            let mut out = Vec::new();
            let r = depth.min(8) as u32;
            let h = dyadic(r);
            let lo = space.lower().unwrap();
            let hi = space.upper().unwrap();
            let mut a = (&lo / &h).floor() * &h;
            while a < hi {
                let b = &a + &h;
                let s = IntervalSet::from_interval(Interval::open(a.clone(), b.clone())).intersect(space);
                if !s.is_empty() {
                    out.push(SetDesc::Intervals(s));
                }
                a = b;
            }
            out
        }
    }
}

fn open_part(m: &Model, s: &SetDesc) -> SetDesc {
    match s {
        SetDesc::Intervals(u) => SetDesc::Intervals(u.interior_in(&m.interval_sys().unwrap().space)),
        SetDesc::Cylinders(_) => s.clone(),
    }
}

pub fn check_minimal(m: &Model, depth: usize) -> Verdict {
    let space = m.space_set();
    let seeds = minimal_seeds(m, depth);
    let mut unknown = false;
    for s in &seeds {
        let (c, stable) = invariant_closure(m, s, depth);
        if m.set_subset(&space, &c) {
            continue;
        }
        let open = open_part(m, &c);
        if stable && !open.is_empty() && !m.set_subset(&space, &open) && check_invariant(m, &open) == (true, true) {
            return Verdict::new(Property::Minimal, Status::Fails, Certificate::InvariantSet { set: open }, depth);
        }
        unknown = true;
    }
    if unknown {
        Verdict::new(Property::Minimal, Status::Unknown, Certificate::DepthExhausted, depth)
    } else {
        Verdict::new(Property::Minimal, Status::Holds, Certificate::AllSeedsReachX { seeds: seeds.len() }, depth)
    }
}

// ------------------------------------------------------------ contracting

fn closure_in(m: &Model, s: &SetDesc) -> SetDesc {
    match s {
        SetDesc::Intervals(u) => SetDesc::Intervals(u.closure().intersect(&m.interval_sys().unwrap().space)),
        SetDesc::Cylinders(_) => s.clone(),
    }
}

fn image_n(m: &Model, s: &SetDesc, n: usize) -> SetDesc {
    let mut cur = s.clone();
    for _ in 0..n {
        cur = m.image_set(&cur);
    }
    cur
}

/// Exact check of the contracting-set conditions.
pub fn check_contracting_set(m: &Model, v: &SetDesc, us: &[(SetDesc, usize)]) -> Result<ContractingSet, String> {
    if v.is_empty() {
        return Err("V is empty".into());
    }
    if us.is_empty() {
        return Err("no sets U_k given".into());
    }
    for i in 0..us.len() {
        for j in i + 1..us.len() {
            if !m.set_intersect(&us[i].0, &us[j].0).is_empty() {
                return Err(format!("U_{} and U_{} intersect", i + 1, j + 1));
            }
        }
    }
    for (i, (u, n)) in us.iter().enumerate() {
        let allowed = m.set_intersect(&m.delta_reg_n(*n), v);
        if !m.set_subset(u, &allowed) {
            let bad = m.set_difference(u, &allowed);
            return Err(format!("U_{} ⊄ Δ_reg,{n} ∩ V: {} lies outside", i + 1, m.show_set(&bad)));
        }
    }
    let mut union = us[0].0.clone();
    let mut images = image_n(m, &us[0].0, us[0].1);
    for (u, n) in &us[1..] {
        union = m.set_union(&union, u);
        images = m.set_union(&images, &image_n(m, u, *n));
    }
    if m.set_subset(v, &closure_in(m, &union)) {
        return Err("V ⊆ closure(∪U_k)".into());
    }
    let cv = closure_in(m, v);
    if !m.set_subset(&cv, &images) {
        let missing = m.set_difference(&cv, &images);
        return Err(format!("closure(V) ⊄ ∪φ^n_k(U_k): {} is not covered", m.show_set(&missing)));
    }
    Ok(ContractingSet { v: v.clone(), u: us.to_vec() })
}

/// Structural reasons why no contracting set can exist.
pub fn contracting_obstruction(m: &Model) -> Option<String> {
    let reg = m.regular_set();
    if !m.set_subset(&reg.delta, &reg.delta_pos) {
        return Some(format!("Δ ≠ Δ_pos: ρ vanishes on {}", m.show_set(&reg.zero_set)));
    }
    match m.graph() {
        Some(_) => {
            if graph_space_finite(m) {
                return Some("X is finite: no open set can be covered by images of a proper part of itself".into());
            }
            None
        }
        None => {
            let s = m.interval_sys().unwrap();
            if s.branches.iter().all(|b| b.map.slope.abs() <= Q::one()) {
                return Some("all branches have |slope| ≤ 1, so φⁿ(U) never has larger length than U".into());
            }
            None
        }
    }
}

/// Points `∪_{k≤depth} (φ|_{Δ_reg})^{-k}(x0)`.
fn regular_inverse_orbit(m: &Model, x0: &Point, depth: usize) -> Vec<Point> {
    let mut all = BTreeSet::from([x0.clone()]);
    let mut layer = vec![x0.clone()];
    for _ in 0..depth {
        let mut next = Vec::new();
        for y in &layer {
            for x in m.preimages1(y) {
                if m.is_regular(&x) && all.insert(x.clone()) {
                    next.push(x);
                }
            }
        }
        layer = next;
    }
    all.into_iter().collect()
}

/// The inverse orbit meets every dyadic cell (interval) or every cylinder of the given length.
pub fn inverse_orbit_dense(m: &Model, x0: &Point, depth: usize, resolution: usize) -> bool {
    let orbit = regular_inverse_orbit(m, x0, depth);
    match m.graph() {
        Some(g) => {
            let seen: BTreeSet<Vec<usize>> =
                orbit.iter().map(|p| p.path().unwrap().first_edges(resolution)).collect();
            g.words(resolution).into_iter().all(|w| seen.contains(&w))
        }
        None => {
            let space = &m.interval_sys().unwrap().space;
            let h = dyadic(resolution as u32);
            let lo = space.lower().unwrap();
            let hi = space.upper().unwrap();
            let mut a = (&lo / &h).floor() * &h;
            while a < hi {
                let cell = Interval::closed(a.clone(), &a + &h);
                let meets_x = !IntervalSet::from_interval(cell.clone()).intersect(space).interior().is_empty();
                if meets_x && !orbit.iter().any(|p| cell.contains(p.real().unwrap())) {
                    return false;
                }
                a = &a + &h;
            }
            true
        }
    }
}

fn x0_candidates(m: &Model) -> Vec<Point> {
    match m.graph() {
        Some(_) => rep::default_seeds(m, 3),
        None => {
            let space = &m.interval_sys().unwrap().space;
            let mut out = Vec::new();
            for (a, b) in [(1, 3), (2, 3), (1, 5), (2, 5), (3, 7), (1, 7), (5, 11)] {
                let x = q(a, b);
                if space.contains(&x) {
                    out.push(Point::Real(x));
                }
            }
            out.extend(rep::default_seeds(m, 2));
            out
        }
    }
}

fn interval_contracting_near(m: &Model, x0: &Q, r: u32, comps: &[Vec<(Interval, Affine)>]) -> Option<ContractingSet> {
    let space = &m.interval_sys().unwrap().space;
    let h = dyadic(r);
    let i = (x0 / &h).floor();
    let mut lo = &i * &h;
    if lo == *x0 {
        lo = &lo - &h;
    }
    let hi = &i * &h + &h;
    let v = IntervalSet::from_interval(Interval::open(lo.clone(), hi.clone())).intersect(space).interior_in(space);
    if v.is_empty() {
        return None;
    }
    let cv = v.closure().intersect(space);
    let (p, qq) = (cv.lower()?, cv.upper()?);
    let delta = dyadic(r + 2);
    let w = IntervalSet::from_interval(Interval::open(&p - &delta, &qq + &delta)).intersect(space);
    let vd = SetDesc::Intervals(v.clone());
    for (n1, level) in comps.iter().enumerate() {
        let n = n1 + 1;
        for (dom, f) in level {
            if f.slope.abs() <= Q::one() {
                continue;
            }
            let u = w.affine_preimage(&f.slope, &f.intercept).intersect_interval(dom);
            if u.is_empty() || !u.is_subset(&v) {
                continue;
            }
            if let Ok(cs) = check_contracting_set(m, &vd, &[(SetDesc::Intervals(u), n)]) {
                return Some(cs);
            }
        }
    }
    None
}

fn graph_contracting_near(m: &Model, x0: &PathPoint, r: usize, depth: usize) -> Option<ContractingSet> {
    let g = m.graph().unwrap();
    let mu = x0.first_edges(r);
    let v = SetDesc::Cylinders(CylinderSet::new(g, vec![Cyl::word(g, mu.clone())]));
    for len in 0..=depth {
        let middles: Vec<Vec<usize>> = if len == 0 { vec![Vec::new()] } else { g.words(len) };
        for w in middles {
            let mut word = mu.clone();
            word.extend(&w);
            let n = word.len();
            word.extend(&mu);
            if !g.is_path(&word) {
                continue;
            }
            let u = SetDesc::Cylinders(CylinderSet::new(g, vec![Cyl::word(g, word)]));
            if let Ok(cs) = check_contracting_set(m, &v, &[(u, n)]) {
                return Some(cs);
            }
        }
    }
    None
}

pub fn check_contracting(m: &Model, depth: usize) -> Verdict {
    if let Some(reason) = contracting_obstruction(m) {
        return Verdict::new(Property::Contracting, Status::Fails, Certificate::Obstruction { reason }, depth);
    }
    let resolution = depth.saturating_sub(2).max(1);
    let comps: Vec<Vec<(Interval, Affine)>> =
        if m.is_graph() { Vec::new() } else { (1..=depth).map(|n| m.regular_composites(n)).collect() };
    let radii: Vec<usize> = (2..=depth.saturating_sub(2).max(2)).collect();
    'cand: for x0 in x0_candidates(m) {
        if !m.in_domain(&x0) || !inverse_orbit_dense(m, &x0, depth, resolution) {
            continue;
        }
        let mut sets = Vec::new();
        for &r in &radii {
            let found = match &x0 {
                Point::Real(x) => interval_contracting_near(m, x, r as u32, &comps),
                Point::Path(p) => graph_contracting_near(m, p, r, depth),
            };
            match found {
                Some(cs) => sets.push(cs),
                None => continue 'cand,
            }
        }
        let mut v = Verdict::new(Property::Contracting, Status::Holds, Certificate::Contracting { x0, sets }, depth);
        v.notes.push(format!("inverse orbit dense at resolution {resolution}; contracting sets in every tested neighbourhood"));
        return v;
    }
    Verdict::new(Property::Contracting, Status::Unknown, Certificate::DepthExhausted, depth)
}

// ---------------------------------------------------------------- combined

/// Directed graph with one circuit: `X` countable discrete and every point eventually lands on one periodic point.
pub fn check_one_circuit(m: &Model, depth: usize) -> Verdict {
    let status = match m.graph() {
        Some(g) => {
            if graph_space_finite(m) && g.simple_cycles().len() == 1 {
                Status::Holds
            } else {
                Status::Fails
            }
        }
        None => {
            let reg = m.regular_set().delta_reg;
            if reg.intervals().unwrap().parts().iter().any(|p| !p.is_degenerate()) {
                Status::Fails
            } else {
                Status::Unknown
            }
        }
    };
    let cert = match status {
        Status::Holds => Certificate::Circuit {
            edges: g_names(m, &m.graph().unwrap().simple_cycles()[0]),
        },
        Status::Fails => Certificate::Obstruction { reason: "X is not a countable discrete set with a single circuit".into() },
        Status::Unknown => Certificate::DepthExhausted,
    };
    Verdict::new(Property::OneCircuit, status, cert, depth)
}

fn g_names(m: &Model, c: &[usize]) -> Vec<String> {
    let g = m.graph().unwrap();
    c.iter().map(|&e| g.edges[e].name.clone()).collect()
}

fn delta_reg_infinite(m: &Model) -> bool {
    let reg = m.regular_set().delta_reg;
    match &reg {
        SetDesc::Intervals(u) => u.parts().iter().any(|p| !p.is_degenerate()),
        SetDesc::Cylinders(c) => !c.is_empty() && !graph_space_finite(m),
    }
}

pub fn verdict_simple(m: &Model, depth: usize) -> Verdict {
    let mut parts = vec![check_minimal(m, depth), check_top_free(m, depth)];
    let one = if m.is_graph() { Some(check_one_circuit(m, depth)) } else { None };
    let mut v = combine(Property::Simple, parts.clone(), depth);
    if let Some(oc) = one {
        if oc.status == Status::Holds && parts[1].status == Status::Holds {
            v.notes.push("inconsistent: one circuit but topologically free".into());
        }
        if oc.status == Status::Holds {
            v.notes.push("φ: Δ_reg → X is a directed graph with one circuit".into());
        }
        parts.push(oc);
        v.certificate = Certificate::Combined { parts };
    }
    if !delta_reg_infinite(m) {
        v.notes.push("Δ_reg is finite: the infinite-Δ_reg hypothesis of the simplicity criterion fails".into());
    }
    v
}

pub fn verdict_purely_infinite(m: &Model, depth: usize) -> Verdict {
    let parts = vec![check_minimal(m, depth), check_contracting(m, depth)];
    let mut v = combine(Property::PurelyInfiniteSimple, parts, depth);
    if v.status == Status::Holds {
        v.notes.push("X is second countable: the crossed product is a Kirchberg algebra".into());
    }
    v
}

// ---------------------------------------------------- matrix witness (free)

#[derive(Clone, Debug, Serialize)]
pub struct WitnessNorms {
    pub n: usize,
    pub orbit_norm: f64,
    pub regular_norm: f64,
}

fn restricted_norm(rep: &RepPair, w: &[Word], v: &[Word]) -> f64 {
    let words: Vec<&Word> = w.iter().chain(v.iter()).collect();
    let exact = rep.exact_columns(&words);
    let diff = (&rep.expr_matrix(w) - &rep.expr_matrix(v)).to_csc();
    let dim = rep.dim();
    let mut tri = sprs::TriMat::new((dim, dim));
    for (val, (i, j)) in diff.iter() {
        if exact[j] {
            tri.add_triplet(i, j, *val);
        }
    }
    rep::op_norm(&tri.to_csc())
}

/// Norms of `a tⁿ − a√ρ_n` in the orbit and regular representations, with `a`
/// supported on the periodic part named by a `TopFree` failure certificate.
pub fn circuit_witness_norms(m: &Model, cert: &Certificate, depth: usize, window: i64) -> Option<WitnessNorms> {
    let model = Arc::new(m.clone());
    let (n, a): (usize, rep::Func) = match cert {
        Certificate::Circuit { edges } => {
            let g = m.graph()?;
            let ids: Vec<usize> =
                edges.iter().map(|nm| g.edges.iter().position(|e| &e.name == nm).unwrap()).collect();
            let c = Cyl::word(g, ids.clone());
            let gg = g.clone();
            (ids.len(), Arc::new(move |p: &Point| if c.contains(&gg, p.path().unwrap()) { 1.0 } else { 0.0 }))
        }
        Certificate::IdentityBranch { n, domain } => {
            let l = domain.lo.clone();
            let r = domain.hi.clone();
            let hat = crate::transfer::TestFunction::hat(l.clone(), (&l + &r) / qi(2), r, qi(1));
            (*n, rep::func(&model, &hat))
        }
        _ => return None,
    };
    let seeds = rep::default_seeds(m, n.max(2));
    let mm = model.clone();
    let aa = a.clone();
    let a_sqrt = move |p: &Point| aa(p) * mm.rho_n(n, p).map(|r| crate::rational::to_f64(&r).sqrt()).unwrap_or(0.0);
    let mut norms = [0.0; 2];
    for (i, kind) in [RepKind::Orbit, RepKind::Regular { window }].into_iter().enumerate() {
        let rep = RepPair::build(model.clone(), &seeds, depth, kind, None).ok()?;
        let mut f = vec![rep.d(&*a)];
        f.extend(std::iter::repeat_n(Factor::T, n));
        let lhs = vec![Word::new(f)];
        let rhs = vec![Word::new(vec![rep.d(&a_sqrt)])];
        norms[i] = restricted_norm(&rep, &lhs, &rhs);
    }
    Some(WitnessNorms { n, orbit_norm: norms[0], regular_norm: norms[1] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    fn load(n: &str) -> Model {
        bundled::load(n).unwrap()
    }

    #[test]
    fn top_free_examples() {
        assert_eq!(check_top_free(&load("tent_std"), 8).status, Status::Holds);
        let l1 = load("loop1");
        let v = check_top_free(&l1, 8);
        assert_eq!(v.status, Status::Fails);
        assert!(replay_top_free_failure(&l1, &v.certificate));
        assert_eq!(check_top_free(&load("fullshift2"), 8).status, Status::Holds);
    }

    #[test]
    fn identity_branch_found() {
        let m = crate::spec_file::parse_str(
            r#"{"backend":"interval","space":[{"lo":"0","hi":"1"}],
                "branches":[{"domain":{"lo":"0","hi":"1"},"slope":"1","intercept":"0"}],
                "potential":{"pieces":[{"domain":{"lo":"0","hi":"1"},"slope":"0","intercept":"1"}]}}"#,
        )
        .unwrap();
        let v = check_top_free(&m, 3);
        assert_eq!(v.status, Status::Fails);
        assert!(replay_top_free_failure(&m, &v.certificate));
    }

    #[test]
    fn invariance_examples() {
        let t = load("tent_std");
        assert_eq!(check_invariant(&t, &t.space_set()), (true, true));
        let u = SetDesc::Intervals(IntervalSet::from_interval(Interval::open(qi(0), qi(1))));
        assert!(!check_invariant(&t, &u).0);
        let l2 = load("loops2");
        let g = l2.graph().unwrap();
        let e = SetDesc::Cylinders(CylinderSet::new(g, vec![Cyl::word(g, vec![0])]));
        assert_eq!(check_invariant(&l2, &e), (true, true));
    }

    #[test]
    fn minimal_examples() {
        assert_eq!(check_minimal(&load("tent_std"), 6).status, Status::Holds);
        assert_eq!(check_minimal(&load("loop1"), 6).status, Status::Holds);
        let l2 = load("loops2");
        let v = check_minimal(&l2, 6);
        assert_eq!(v.status, Status::Fails);
        let Certificate::InvariantSet { set } = &v.certificate else { panic!() };
        assert_eq!(check_invariant(&l2, set), (true, true));
    }

    #[test]
    fn contracting_set_checks() {
        let t = load("tent_std");
        let iv = |a: Q, b: Q| SetDesc::Intervals(IntervalSet::from_interval(Interval::open(a, b)));
        let v = iv(q(1, 16), q(3, 8));
        let err = check_contracting_set(&t, &v, &[(iv(q(1, 32), q(3, 16)), 1)]).unwrap_err();
        assert!(err.contains("⊄"), "{err}");
        let empty = SetDesc::Intervals(IntervalSet::empty());
        assert!(check_contracting_set(&t, &empty, &[(v.clone(), 1)]).is_err());
        // U = φ^{-1}((1/16-δ, 3/8+δ)) on the left branch
        let ok = check_contracting_set(&t, &iv(q(1, 8), q(1, 4)), &[(iv(q(1, 8) - q(1, 64), q(1, 8) + q(1, 64)), 3)]);
        assert!(ok.is_err());
    }

    #[test]
    fn contracting_verdicts() {
        let t = load("tent_std");
        let v = check_contracting(&t, 8);
        assert_eq!(v.status, Status::Holds, "{}", v.to_text(&t));
        if let Certificate::Contracting { sets, .. } = &v.certificate {
            for cs in sets {
                assert!(check_contracting_set(&t, &cs.v, &cs.u).is_ok());
            }
        }
        let h = check_contracting(&load("halving"), 8);
        assert_eq!(h.status, Status::Fails);
        assert_eq!(check_contracting(&load("loop1"), 8).status, Status::Fails);
        assert_eq!(check_contracting(&load("fullshift2"), 8).status, Status::Holds);
    }

    #[test]
    fn combined_verdicts() {
        let l1 = load("loop1");
        let s = verdict_simple(&l1, 8);
        assert_eq!(s.status, Status::Fails);
        assert_eq!(check_one_circuit(&l1, 8).status, Status::Holds);
        assert_eq!(verdict_simple(&load("fullshift2"), 8).status, Status::Holds);
        assert_eq!(verdict_simple(&load("loops2"), 8).status, Status::Fails);
        assert_eq!(verdict_purely_infinite(&load("tent_std"), 8).status, Status::Holds);
        assert_eq!(verdict_purely_infinite(&load("fullshift2"), 8).status, Status::Holds);
        assert_eq!(verdict_purely_infinite(&load("halving"), 8).status, Status::Fails);
    }

    #[test]
    fn witness_on_loop() {
        let l1 = load("loop1");
        let v = check_top_free(&l1, 8);
        let w = circuit_witness_norms(&l1, &v.certificate, 4, 4).unwrap();
        assert!(w.orbit_norm <= 1e-10, "{w:?}");
        assert!(w.regular_norm >= 0.1, "{w:?}");
    }
}
