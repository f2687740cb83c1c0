//! Truncated Renault-Deaconu groupoids, GAP relations, the isomorphism with the
//! crossed product on matrices, and graph-algebra generators.

use std::collections::{BTreeSet, HashMap};
use std::sync::Arc;

use num_traits::Signed;
use serde::Serialize;

use crate::dynamics::{AffineBranch, IntervalSystem, Model, PartialSystem, PiecewisePotential, Point, Potential};
use crate::error::{Error, Result};
use crate::graph::Cyl;
use crate::rational::to_f64;
use crate::rep::{
    battery, default_seeds, expectation_g, func, regular_rep, Factor, Func, OrbitBasis, RepKind, RepPair, Residual, Word,
};

/// Refuses systems with `Δ_reg ≠ Δ` (which also forces `Δ_pos = Δ`).
pub fn require_local_homeo(m: &Model) -> Result<()> {
    let r = m.regular_set();
    if m.set_subset(&r.delta, &r.delta_reg) {
        return Ok(());
    }
    let mut why: Vec<String> = r.irregular_points.iter().map(|p| m.show(&p.point)).collect();
    if !r.zero_set.is_empty() {
        why.push(format!("ρ = 0 on {}", m.show_set(&r.zero_set)));
    }
    Err(Error::NotLocalHomeo(format!("irregular points: {}", why.join(", "))))
}

/// The same system with `φ` restricted to `Δ_reg` (interval backend only).
pub fn restrict_regular(m: &Model) -> Result<Model> {
    let s = m.interval_sys().ok_or(Error::WrongBackend("interval"))?;
    let reg = m.regular_set().delta_reg;
    let reg = reg.intervals().unwrap();
    let mut branches = Vec::new();
    for b in &s.branches {
        for part in reg.intersect_interval(&b.domain).parts() {
            branches.push(AffineBranch { domain: part.clone(), map: b.map.clone() });
        }
    }
    let Potential::Interval(p) = &m.pot else { unreachable!() };
    let overrides = p.overrides.iter().filter(|(x, _)| reg.contains(x)).cloned().collect();
    let mut out = Model::new(
        PartialSystem::Interval(IntervalSystem { space: s.space.clone(), branches }),
        Potential::Interval(PiecewisePotential { pieces: p.pieces.clone(), overrides }),
    );
    out.depth_bound = m.depth_bound;
    Ok(out)
}

/// `(x, n−m, y)` with witness `(n, m)`, minimal in `n`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GroupoidElement {
    pub x: usize,
    pub k: i64,
    pub y: usize,
    pub n: usize,
    pub m: usize,
}

/// All elements between points of a truncated orbit basis with `n, m ≤ depth`.
pub struct TruncatedGroupoid {
    pub model: Arc<Model>,
    pub points: Vec<Point>,
    pub depth: usize,
    pub elements: Vec<GroupoidElement>,
    index: HashMap<(usize, i64, usize), usize>,
    by_range: HashMap<usize, Vec<usize>>,
}

pub fn build_deaconu(m: &Arc<Model>, seeds: &[Point], depth: usize) -> Result<TruncatedGroupoid> {
    let basis = OrbitBasis::new(m, seeds, depth)?;
    build_deaconu_on(m, &basis.points, depth)
}

pub fn build_deaconu_on(m: &Arc<Model>, points: &[Point], depth: usize) -> Result<TruncatedGroupoid> {
    require_local_homeo(m)?;
    // orbits[i][n] = φⁿ(points[i])
    let orbits: Vec<Vec<Point>> = points
        .iter()
        .map(|p| {
            let mut o = vec![p.clone()];
            while o.len() <= depth {
                match m.phi(o.last().unwrap()) {
                    Some(q) => o.push(q),
                    None => break,
                }
            }
            o
        })
        .collect();
    let mut landing: HashMap<&Point, Vec<(usize, usize)>> = HashMap::new();
    for (i, o) in orbits.iter().enumerate() {
        for (n, q) in o.iter().enumerate() {
            landing.entry(q).or_default().push((i, n));
        }
    }
    let mut elements: Vec<GroupoidElement> = Vec::new();
    let mut index = HashMap::new();
    for (x, o) in orbits.iter().enumerate() {
        for (n, q) in o.iter().enumerate() {
            for &(y, mm) in &landing[q] {
                let k = n as i64 - mm as i64;
                match index.get(&(x, k, y)) {
                    Some(&e) => {
                        let el: &mut GroupoidElement = &mut elements[e];
                        if n < el.n {
                            el.n = n;
                            el.m = mm;
                        }
                    }
                    None => {
                        index.insert((x, k, y), elements.len());
                        elements.push(GroupoidElement { x, k, y, n, m: mm });
                    }
                }
            }
        }
    }
    let mut by_range: HashMap<usize, Vec<usize>> = HashMap::new();
    for (i, e) in elements.iter().enumerate() {
        by_range.entry(e.x).or_default().push(i);
    }
    Ok(TruncatedGroupoid { model: m.clone(), points: points.to_vec(), depth, elements, index, by_range })
}

impl TruncatedGroupoid {
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn find(&self, x: usize, k: i64, y: usize) -> Option<usize> {
        self.index.get(&(x, k, y)).copied()
    }

    pub fn unit(&self, x: usize) -> Option<usize> {
        self.find(x, 0, x)
    }

    pub fn inverse(&self, e: usize) -> Option<usize> {
        let g = &self.elements[e];
        self.find(g.y, -g.k, g.x)
    }

    /// `g·h` when composable and present in the truncation.
    pub fn compose(&self, g: usize, h: usize) -> Option<usize> {
        let (a, b) = (&self.elements[g], &self.elements[h]);
        if a.y != b.x {
            return None;
        }
        self.find(a.x, a.k + b.k, b.y)
    }

    /// Elements `(x, ·, ·)` with range `x`.
    pub fn with_range(&self, x: usize) -> &[usize] {
        self.by_range.get(&x).map(|v| v.as_slice()).unwrap_or(&[])
    }

    /// Composable pairs with their product (if in the truncation).
    pub fn composition_table(&self) -> Vec<(usize, usize, Option<usize>)> {
        let mut out = Vec::new();
        for (g, a) in self.elements.iter().enumerate() {
            for &h in self.with_range(a.y) {
                out.push((g, h, self.compose(g, h)));
            }
        }
        out
    }

    /// Associativity, inverses and units on the table; returns the violations.
    pub fn axiom_violations(&self) -> Vec<String> {
        let mut bad = Vec::new();
        for (g, a) in self.elements.iter().enumerate() {
            if let Some(i) = self.inverse(g) {
                match self.compose(g, i) {
                    Some(u) if self.elements[u].k == 0 && self.elements[u].x == a.x && self.elements[u].y == a.x => {}
                    Some(_) => bad.push(format!("g·g⁻¹ is not a unit for {g}")),
                    None => {}
                }
            } else {
                bad.push(format!("missing inverse of {g}"));
            }
            if let Some(u) = self.unit(a.x) {
                if self.compose(u, g) != Some(g) {
                    bad.push(format!("unit does not act trivially on {g}"));
                }
            }
            for &h in self.with_range(a.y) {
                let Some(gh) = self.compose(g, h) else { continue };
                for &l in self.with_range(self.elements[h].y) {
                    let (Some(hl), Some(l1)) = (self.compose(h, l), self.compose(gh, l)) else { continue };
                    if self.compose(g, hl) != Some(l1) {
                        bad.push(format!("associativity fails at ({g},{h},{l})"));
                    }
                }
            }
        }
        bad
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,k,y,n,m\n");
        for e in &self.elements {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                self.model.show(&self.points[e.x]),
                e.k,
                self.model.show(&self.points[e.y]),
                e.n,
                e.m
            ));
        }
        s
    }
}

/// Brute-force element count over all pairs and witnesses, for cross-checks.
pub fn brute_force_count(m: &Model, points: &[Point], depth: usize) -> usize {
    let orbits: Vec<Vec<Option<Point>>> =
        points.iter().map(|x| (0..=depth).map(|n| m.phi_n(n, x)).collect()).collect();
    let mut set = BTreeSet::new();
    for (i, ox) in orbits.iter().enumerate() {
        for (j, oy) in orbits.iter().enumerate() {
            for (n, a) in ox.iter().enumerate() {
                for (mm, b) in oy.iter().enumerate() {
                    if a.is_some() && a == b {
                        set.insert((i, n as i64 - mm as i64, j));
                    }
                }
            }
        }
    }
    set.len()
}

// ------------------------------------------------------------ GAP relation

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GapPair {
    pub n: usize,
    pub x: Point,
    pub y: Point,
}

pub fn in_gap(m: &Model, n: usize, x: &Point, y: &Point) -> bool {
    match (m.phi_n(n, x), m.phi_n(n, y)) {
        (Some(a), Some(b)) => a == b,
        _ => false,
    }
}

/// Ordered pairs of samples in `R_n`.
pub fn gap_relation(m: &Model, n: usize, samples: &[Point]) -> Result<Vec<GapPair>> {
    require_local_homeo(m)?;
    let mut out = Vec::new();
    for x in samples {
        for y in samples {
            if in_gap(m, n, x, y) {
                out.push(GapPair { n, x: x.clone(), y: y.clone() });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    pub max_n: usize,
    pub pairs: usize,
    pub reflexive: bool,
    pub symmetric: bool,
    pub transitive: bool,
    /// `R_n ⊆ R_{n+1}` wherever `φ^{n+1}` is defined on both points.
    pub nested: bool,
}

/// Equivalence-relation checks for `R = ∪_{n ≤ max_n} R_n` on samples.
pub fn gap_check(m: &Model, samples: &[Point], max_n: usize) -> Result<GapReport> {
    require_local_homeo(m)?;
    let k = samples.len();
    let mut rel = vec![vec![false; k]; k];
    let mut nested = true;
    for n in 0..=max_n {
        for i in 0..k {
            for j in 0..k {
                if in_gap(m, n, &samples[i], &samples[j]) {
                    rel[i][j] = true;
                    let both = m.phi_n(n + 1, &samples[i]).is_some() && m.phi_n(n + 1, &samples[j]).is_some();
                    if both && !in_gap(m, n + 1, &samples[i], &samples[j]) {
                        nested = false;
                    }
                }
            }
        }
    }
    let reflexive = (0..k).all(|i| rel[i][i] || m.phi_n(0, &samples[i]).is_none());
    let symmetric = (0..k).all(|i| (0..k).all(|j| rel[i][j] == rel[j][i]));
    let transitive = (0..k).all(|i| (0..k).all(|j| !rel[i][j] || (0..k).all(|l| !rel[j][l] || rel[i][l])));
    let pairs = rel.iter().flatten().filter(|&&b| b).count();
    Ok(GapReport { max_n, pairs, reflexive, symmetric, transitive, nested })
}

// ------------------------------------------------------------ the isomorphism Φ

/// `a ⊗ b`: the function `(x, n−m, y) ↦ a(x) b(y)` on `{φⁿ(x) = φᵐ(y)}`.
#[derive(Clone)]
pub struct Tensor {
    pub a: Func,
    pub n: usize,
    pub b: Func,
    pub m: usize,
}

impl Tensor {
    pub fn new(a: Func, n: usize, b: Func, m: usize) -> Self {
        Tensor { a, n, b, m }
    }

    pub fn eval(&self, g: &TruncatedGroupoid, e: &GroupoidElement) -> f64 {
        if e.k != self.n as i64 - self.m as i64 {
            return 0.0;
        }
        let (x, y) = (&g.points[e.x], &g.points[e.y]);
        if !in_witness(&g.model, x, self.n, y, self.m) {
            return 0.0;
        }
        (self.a)(x) * (self.b)(y)
    }

    /// `Φ(a⊗b) = a ρ_n^{-1/2} tⁿ t*ᵐ ρ_m^{-1/2} b` as an operator word.
    pub fn phi_word(&self, rep: &RepPair) -> Word {
        let m = &rep.model;
        let (n, mm) = (self.n, self.m);
        let a = self.a.clone();
        let b = self.b.clone();
        let left = rep.d(&|x| a(x) * inv_sqrt(m, n, x));
        let right = rep.d(&|x| inv_sqrt(m, mm, x) * b(x));
        let mut f = vec![left];
        f.extend(std::iter::repeat_n(Factor::T, n));
        f.extend(std::iter::repeat_n(Factor::Ts, mm));
        f.push(right);
        Word::new(f)
    }
}

fn in_witness(m: &Model, x: &Point, n: usize, y: &Point, mm: usize) -> bool {
    match (m.phi_n(n, x), m.phi_n(mm, y)) {
        (Some(a), Some(b)) => a == b,
        _ => false,
    }
}

fn inv_sqrt(m: &Model, n: usize, x: &Point) -> f64 {
    match m.rho_n(n, x) {
        Ok(r) if r.is_positive() => 1.0 / to_f64(&r).sqrt(),
        _ => 0.0,
    }
}

fn levels_of(rep: &RepPair) -> (i64, usize) {
    match rep.kind {
        RepKind::Orbit => (0, 1),
        RepKind::Regular { window } => (window, (2 * window + 1) as usize),
    }
}

/// Kernel of a function on the groupoid in the regular representation:
/// `((x, l+k), (y, l)) ↦ h(x, k, y)`. Entries are accumulated per column.
fn kernel_columns(rep: &RepPair, entries: &[(usize, i64, usize, f64)]) -> HashMap<usize, HashMap<usize, f64>> {
    let (w, nl) = levels_of(rep);
    let mut cols: HashMap<usize, HashMap<usize, f64>> = HashMap::new();
    for &(x, k, y, v) in entries {
        if v == 0.0 {
            continue;
        }
        for l in -w..=w {
            let lx = l + k;
            if lx < -w || lx > w {
                continue;
            }
            let (r, c) = (x * nl + (lx + w) as usize, y * nl + (l + w) as usize);
            if matches!(rep.kind, RepKind::Orbit) {
                // orbit representation forgets k
                *cols.entry(y).or_default().entry(x).or_default() += v;
                break;
            }
            *cols.entry(c).or_default().entry(r).or_default() += v;
        }
    }
    cols
}

fn compare_on_exact(rep: &RepPair, word: &Word, kernel: &HashMap<usize, HashMap<usize, f64>>) -> Residual {
    let mat = rep.word_matrix(word);
    let exact = rep.exact_columns(&[word]);
    let mut best = 0.0;
    let mut worst = None;
    let empty = HashMap::new();
    for (j, col) in mat.outer_iterator().enumerate() {
        if !exact[j] {
            continue;
        }
        let kc = kernel.get(&j).unwrap_or(&empty);
        let mut seen = BTreeSet::new();
        for (i, v) in col.iter() {
            seen.insert(i);
            let d = (v - kc.get(&i).copied().unwrap_or(0.0)).abs();
            if d > best {
                best = d;
                worst = Some(j);
            }
        }
        for (i, v) in kc {
            if !seen.contains(i) && v.abs() > best {
                best = v.abs();
                worst = Some(j);
            }
        }
    }
    Residual {
        value: best,
        exact_columns: exact.iter().filter(|&&b| b).count(),
        total_columns: exact.len(),
        worst_column: worst.map(|j| rep.describe_index(j)),
    }
}

/// `Φ(f)` from `T` against the kernel of `f` read off the element table.
pub fn phi_matrix_check(g: &TruncatedGroupoid, rep: &RepPair, f: &Tensor) -> Residual {
    let entries: Vec<_> = g.elements.iter().map(|e| (e.x, e.k, e.y, f.eval(g, e))).collect();
    compare_on_exact(rep, &f.phi_word(rep), &kernel_columns(rep, &entries))
}

/// `Φ(f)Φ(h)` against `Φ(f * h)`, the convolution summed over composable
/// truncated elements.
pub fn iso_phi_check(g: &TruncatedGroupoid, rep: &RepPair, f: &Tensor, h: &Tensor) -> Residual {
    let fv: Vec<f64> = g.elements.iter().map(|e| f.eval(g, e)).collect();
    let hv: Vec<f64> = g.elements.iter().map(|e| h.eval(g, e)).collect();
    let mut entries = Vec::new();
    for (i, a) in g.elements.iter().enumerate() {
        if fv[i] == 0.0 {
            continue;
        }
        for &j in g.with_range(a.y) {
            if hv[j] == 0.0 {
                continue;
            }
            let b = &g.elements[j];
            entries.push((a.x, a.k + b.k, b.y, fv[i] * hv[j]));
        }
    }
    let word = f.phi_word(rep).then(&h.phi_word(rep));
    compare_on_exact(rep, &word, &kernel_columns(rep, &entries))
}

/// `G(Φ(f))` on the diagonal against restriction of `f` to units.
pub fn expectation_check(g: &TruncatedGroupoid, rep: &RepPair, f: &Tensor) -> Residual {
    let word = f.phi_word(rep);
    let exact = rep.exact_columns(&[&word]);
    let diag = expectation_g(rep, &rep.word_matrix(&word));
    let nl = levels_of(rep).1;
    let mut best = 0.0;
    let mut worst = None;
    for (j, d) in diag.iter().enumerate() {
        if !exact[j] {
            continue;
        }
        let x = j / nl;
        let unit = g.unit(x).map(|u| f.eval(g, &g.elements[u])).unwrap_or(0.0);
        if (d - unit).abs() > best {
            best = (d - unit).abs();
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

/// `iso_phi_check` over `count` random tensor pairs `(a ⊗_n b, c ⊗_k d)` with
/// exponents in `0..=2`, on the regular representation seeded by periodic points.
pub fn iso_battery(m: &Arc<Model>, depth: usize, count: usize, seed: u64) -> Result<Vec<(String, Residual)>> {
    use rand::{Rng, SeedableRng};
    require_local_homeo(m)?;
    let seeds = default_seeds(m, 2);
    let rep = regular_rep(m, &seeds, depth, 3)?;
    let g = build_deaconu_on(m, &rep.basis.points, depth)?;
    let fns: Vec<Func> = battery(m, &m.space_set(), 4 * count, seed).iter().map(|t| func(m, t)).collect();
    if fns.is_empty() {
        return Err(Error::EmptyBasis);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for i in 0..count {
        let pick = |k: usize| fns[k % fns.len()].clone();
        let e: [usize; 4] = std::array::from_fn(|_| rng.gen_range(0..=2));
        let f = Tensor::new(pick(4 * i), e[0], pick(4 * i + 1), e[1]);
        let h = Tensor::new(pick(4 * i + 2), e[2], pick(4 * i + 3), e[3]);
        out.push((format!("({},{})*({},{})", e[0], e[1], e[2], e[3]), iso_phi_check(&g, &rep, &f, &h)));
    }
    Ok(out)
}

// ------------------------------------------------------------ graph generators

/// `s_e = π(1_{Z(e)}) λ_e^{-1/2} T` and `p_v = π(1_{Z(v)})` on the orbit representation.
pub struct GraphGenerators {
    pub rep: RepPair,
    pub s: Vec<Word>,
    pub p: Vec<Word>,
    /// `(relation, residual)` for every Cuntz-Krieger relation instance.
    pub residuals: Vec<(String, Residual)>,
    /// `max |s_e − prepend_e|` on exact columns.
    pub consistency: f64,
}

impl GraphGenerators {
    pub fn worst(&self) -> f64 {
        self.residuals.iter().map(|(_, r)| r.value).fold(self.consistency, f64::max)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("relation,residual,exact_columns,total_columns\n");
        for (name, r) in &self.residuals {
            s.push_str(&format!("{},{:.3e},{},{}\n", name, r.value, r.exact_columns, r.total_columns));
        }
        s.push_str(&format!("s_e = prepend_e,{:.3e},,\n", self.consistency));
        s
    }
}

pub fn graph_generators(m: &Arc<Model>, depth: usize) -> Result<GraphGenerators> {
    let g = m.graph().ok_or(Error::WrongBackend("graph"))?;
    let w = m.weights().unwrap();
    if let Some(e) = (0..w.len()).find(|&e| !w[e].is_positive()) {
        return Err(Error::HypothesisViolated(format!("λ_{} must be positive", g.edges[e].name)));
    }
    let seeds = default_seeds(m, g.n_vertices().max(1));
    let rep = RepPair::build(m.clone(), &seeds, depth, RepKind::Orbit, None)?;
    let gg = g.clone();
    let s: Vec<Word> = (0..g.edges.len())
        .map(|e| {
            let c = Cyl::word(&gg, vec![e]);
            let scale = 1.0 / to_f64(&w[e]).sqrt();
            let gr = gg.clone();
            Word::new(vec![
                rep.d(&move |x: &Point| if x.path().is_some_and(|p| c.contains(&gr, p)) { scale } else { 0.0 }),
                Factor::T,
            ])
        })
        .collect();
    let sstar = |e: usize| {
        let mut f = s[e].factors.clone();
        f.reverse();
        let f = f.into_iter().map(|x| match x {
            Factor::T => Factor::Ts,
            Factor::Ts => Factor::T,
            d => d,
        });
        Word::new(f.collect())
    };
    let p: Vec<Word> = (0..g.n_vertices())
        .map(|v| {
            let c = Cyl::vertex(v);
            let gr = gg.clone();
            Word::new(vec![rep.d(&move |x: &Point| if x.path().is_some_and(|p| c.contains(&gr, p)) { 1.0 } else { 0.0 })])
        })
        .collect();
    let name = |e: usize| g.edges[e].name.clone();
    let mut residuals = Vec::new();
    for e in 0..g.edges.len() {
        let lhs = sstar(e).then(&s[e]);
        residuals.push((format!("s_{0}*s_{0} = p_{1}", name(e), g.vertices[g.edges[e].s]), rep.residual(&[lhs], &[p[g.edges[e].s].clone()])));
        let proj = s[e].clone().then(&sstar(e));
        let under = p[g.edges[e].r].clone().then(&proj);
        residuals.push((format!("p_{1} s_{0}s_{0}* = s_{0}s_{0}*", name(e), g.vertices[g.edges[e].r]), rep.residual(&[under], &[proj])));
        for f in 0..g.edges.len() {
            if f != e && g.edges[f].r == g.edges[e].r {
                let lhs = sstar(e).then(&s[f]);
                residuals.push((format!("s_{}*s_{} = 0", name(e), name(f)), rep.residual(&[lhs], &[])));
            }
        }
    }
    for v in 0..g.n_vertices() {
        let recv = g.receiving(v);
        if recv.is_empty() {
            continue;
        }
        let rhs: Vec<Word> = recv.iter().map(|&e| s[e].clone().then(&sstar(e))).collect();
        residuals.push((format!("p_{} = Σ s_e s_e*", g.vertices[v]), rep.residual(&[p[v].clone()], &rhs)));
    }
    // direct prepend operator
    let mut consistency: f64 = 0.0;
    for (e, word) in s.iter().enumerate() {
        let mat = rep.word_matrix(word);
        let exact = rep.exact_columns(&[word]);
        for (j, y) in rep.basis.points.iter().enumerate() {
            if !exact[j] {
                continue;
            }
            let yp = y.path().unwrap();
            let target = (yp.range(g) == g.edges[e].s)
                .then(|| rep.basis.index.get(&Point::Path(yp.prepend(e))).copied())
                .flatten();
            let col = mat.outer_view(j);
            let mut seen = false;
            if let Some(col) = col {
                for (i, v) in col.iter() {
                    let expect = if Some(i) == target { 1.0 } else { 0.0 };
                    if Some(i) == target {
                        seen = true;
                    }
                    consistency = consistency.max((v - expect).abs());
                }
            }
            if target.is_some() && !seen {
                consistency = consistency.max(1.0);
            }
        }
    }
    Ok(GraphGenerators { rep, s, p, residuals, consistency })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;
    use crate::rational::{q, qi};
    use crate::rep::{constant, func, regular_rep};
    use crate::transfer::TestFunction;

    fn model(name: &str) -> Arc<Model> {
        Arc::new(bundled::load(name).unwrap())
    }

    fn r(a: i64, b: i64) -> Point {
        Point::Real(q(a, b))
    }

    #[test]
    fn tent_is_rejected_doubling_accepted() {
        let t = model("tent_std");
        assert!(matches!(build_deaconu(&t, &[r(0, 1)], 1), Err(Error::NotLocalHomeo(_))));
        let d = model("doubling");
        let g = build_deaconu(&d, &[r(1, 3)], 1).unwrap();
        // (x,1,φ(x)) for x = 1/6, 2/3 over the seed 1/3
        let i = g.points.iter().position(|p| *p == r(1, 6)).unwrap();
        let j = g.points.iter().position(|p| *p == r(1, 3)).unwrap();
        assert!(g.find(i, 1, j).is_some());
        for x in 0..g.points.len() {
            let u = g.unit(x).unwrap();
            for &e in g.with_range(x) {
                assert_eq!(g.compose(u, e), Some(e));
            }
        }
        assert!(g.axiom_violations().is_empty());
        let restricted = restrict_regular(&t).unwrap();
        assert!(require_local_homeo(&restricted).is_ok());
    }

    #[test]
    fn fullshift_counts_match_enumeration() {
        let m = model("fullshift2");
        let seeds = default_seeds(&m, 1);
        for depth in 1..=3 {
            let g = build_deaconu(&m, &seeds, depth).unwrap();
            assert_eq!(g.len(), brute_force_count(&m, &g.points, depth), "depth {depth}");
            assert!(g.axiom_violations().is_empty());
        }
    }

    #[test]
    fn gap_examples() {
        let d = model("doubling");
        assert!(in_gap(&d, 1, &r(1, 8), &r(5, 8)));
        assert!(in_gap(&d, 0, &r(1, 8), &r(1, 8)));
        assert!(!in_gap(&d, 0, &r(1, 8), &r(5, 8)));
        let samples: Vec<Point> = (1..16).filter(|k| k % 2 == 1).map(|k| r(k, 16)).collect();
        let rep = gap_check(&d, &samples, 3).unwrap();
        assert!(rep.reflexive && rep.symmetric && rep.transitive && rep.nested);
        // loops2 has two components
        let m = model("loops2");
        let x = default_seeds(&m, 1);
        assert_eq!(x.len(), 2);
        for n in 0..5 {
            assert!(!in_gap(&m, n, &x[0], &x[1]));
        }
    }

    #[test]
    fn iso_on_doubling_and_fullshift() {
        let d = model("doubling");
        let seeds = vec![r(1, 3), r(2, 3)];
        let depth = 5;
        let rep = regular_rep(&d, &seeds, depth, 4).unwrap();
        let g = build_deaconu_on(&d, &rep.basis.points, depth).unwrap();
        let a = func(&d, &TestFunction::hat(q(1, 16), q(1, 4), q(7, 16), qi(1)));
        let b = func(&d, &TestFunction::hat(q(9, 16), q(3, 4), q(15, 16), qi(2)));
        let f = Tensor::new(a.clone(), 1, b.clone(), 0);
        let h = Tensor::new(b.clone(), 0, a.clone(), 1);
        let res = iso_phi_check(&g, &rep, &f, &h);
        assert!(res.ok(1e-10), "{res:?}");
        assert!(phi_matrix_check(&g, &rep, &f).ok(1e-10));
        let unit = Tensor::new(a.clone(), 0, constant(1.0), 0);
        let diag = Tensor::new(b.clone(), 0, constant(1.0), 0);
        assert!(iso_phi_check(&g, &rep, &unit, &diag).ok(1e-10));
        let e = expectation_check(&g, &rep, &Tensor::new(a.clone(), 1, b.clone(), 1));
        assert!(e.ok(1e-10), "{e:?}");

        let m = model("fullshift2");
        let seeds = default_seeds(&m, 1);
        let rep = regular_rep(&m, &seeds, 4, 3).unwrap();
        let g = build_deaconu_on(&m, &rep.basis.points, 4).unwrap();
        let gr = m.graph().unwrap().clone();
        let cyl = |w: Vec<usize>| {
            let c = Cyl::word(&gr, w);
            let gr = gr.clone();
            let f: Func = Arc::new(move |x: &Point| if c.contains(&gr, x.path().unwrap()) { 1.0 } else { 0.0 });
            f
        };
        let f = Tensor::new(cyl(vec![0, 1]), 1, cyl(vec![1]), 2);
        let h = Tensor::new(cyl(vec![1]), 1, cyl(vec![0]), 0);
        assert!(iso_phi_check(&g, &rep, &f, &h).ok(1e-10));
    }

    #[test]
    fn iso_battery_doubling() {
        let rows = iso_battery(&model("doubling"), 4, 5, 1).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|(_, r)| r.ok(1e-10)), "{rows:?}");
        assert!(matches!(iso_battery(&model("tent_std"), 3, 2, 0), Err(Error::NotLocalHomeo(_))));
    }

    #[test]
    fn generators_fullshift_and_loop() {
        for name in ["fullshift2", "loop1", "loops2"] {
            let m = model(name);
            let gens = graph_generators(&m, 5).unwrap();
            for (rel, r) in &gens.residuals {
                assert!(r.ok(1e-10), "{name}: {rel} {r:?}");
            }
            assert!(gens.consistency <= 1e-12, "{name}");
        }
    }
}
