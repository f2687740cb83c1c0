//! Spectra of the core algebras `K_n` and `A_n`: strata, representation
//! dimensions, pushout topology generators, explicit `π_y^k` matrices and
//! quasi-orbit classes.

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::DMatrix;
use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::dynamics::{IrregularReason, Model, Point, SetDesc};
use crate::error::{Error, Result};
use crate::graph::{Cyl, CylinderSet, PathPoint};
use crate::interval::{Interval, IntervalSet, Side};
use crate::rational::{dyadic, fmt_q, to_f64, Q};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Stratum {
    Interior,
    Top,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumPoint {
    pub level: usize,
    pub base: Point,
    pub dimension: usize,
    pub stratum: Stratum,
    /// Dimension is a lower bound (fiber truncated).
    pub truncated: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct TopologyGenerator {
    pub anchor_level: usize,
    pub anchor: Point,
    /// `U_0, …, U_n`.
    pub sets: Vec<SetDesc>,
    pub compatible: bool,
    pub open: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumDescription {
    pub n: usize,
    /// `φ^k(Δ_pos,k) ∖ Δ_reg` for `k < n`, then `φ^n(Δ_pos,n)`.
    pub strata: Vec<SetDesc>,
    pub sampled_points: Vec<SpectrumPoint>,
    pub topology_generators: Vec<TopologyGenerator>,
    /// Set when the pushout topology may be strictly coarser than the spectrum topology.
    pub topology_warning: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct KnSpectrum {
    pub n: usize,
    pub stratum: SetDesc,
    pub sampled_points: Vec<SpectrumPoint>,
}

fn sample_set(m: &Model, s: &SetDesc) -> Vec<Point> {
    match s {
        SetDesc::Intervals(u) => {
            let mut pts = BTreeSet::new();
            for p in u.parts() {
                for x in [&p.lo, &p.hi] {
                    if p.contains(x) {
                        pts.insert(x.clone());
                    }
                }
                if !p.is_degenerate() {
                    pts.insert(p.midpoint());
                    let quarter = &p.lo + p.length() / Q::from_integer(4.into());
                    pts.insert(quarter);
                }
            }
            pts.into_iter().map(Point::Real).collect()
        }
        SetDesc::Cylinders(c) => {
            let g = m.graph().unwrap();
            let mut pts = BTreeSet::new();
            for cyc in g.simple_cycles() {
                for k in 0..cyc.len() {
                    let mut r = cyc.clone();
                    r.rotate_left(k);
                    let p = PathPoint::periodic(r);
                    if c.contains(g, &p) {
                        pts.insert(Point::Path(p));
                    }
                }
            }
            pts.into_iter().collect()
        }
    }
}

fn dimension(m: &Model, y: &Point, k: usize) -> Result<usize> {
    Ok(m.preimages(y, k, true)?.len())
}

/// `K̂_n ≅ φ^n(Δ_pos,n)` with sampled dimensions.
pub fn spectrum_kn(m: &Model, n: usize) -> Result<KnSpectrum> {
    let stratum = m.image_of_pos_n(n);
    let mut pts = Vec::new();
    for y in sample_set(m, &stratum) {
        let d = dimension(m, &y, n)?;
        if d > 0 {
            pts.push(SpectrumPoint { level: n, base: y, dimension: d, stratum: Stratum::Top, truncated: false });
        }
    }
    Ok(KnSpectrum { n, stratum, sampled_points: pts })
}

/// Stratified spectrum of `A_n` with pushout topology data.
pub fn spectrum_an(m: &Model, n: usize) -> Result<SpectrumDescription> {
    let reg = m.regular_set();
    let mut hosts = Vec::new();
    let mut strata = Vec::new();
    for k in 0..=n {
        let host = m.image_of_pos_n(k);
        let s = if k < n { m.set_difference(&host, &reg.delta_reg) } else { host.clone() };
        hosts.push(host);
        strata.push(s);
    }
    let mut sampled = Vec::new();
    for (k, s) in strata.iter().enumerate() {
        for y in sample_set(m, s) {
            let d = dimension(m, &y, k)?;
            if d == 0 {
                continue;
            }
            let stratum = if k < n { Stratum::Interior } else { Stratum::Top };
            sampled.push(SpectrumPoint { level: k, base: y, dimension: d, stratum, truncated: false });
        }
    }
    sampled.sort_by(|a, b| (a.level, &a.base).cmp(&(b.level, &b.base)));

    let mut gens = Vec::new();
    for p in &sampled {
        if p.level < n || gens.len() < 2 * n + 2 {
            gens.push(topology_generator(m, &hosts, &reg.delta_reg, p.level, &p.base, n));
        }
    }

    let warning = topology_warning(m, &reg.irregular_points);
    Ok(SpectrumDescription { n, strata, sampled_points: sampled, topology_generators: gens, topology_warning: warning })
}

/// Warns when `ρ` drops to zero on one side of an irregular point of `Δ_pos`: then
/// elements such as `1 − tt*` can separate strata in a way the pushout data misses.
fn topology_warning(m: &Model, irregular: &[crate::dynamics::IrregularPoint]) -> Option<String> {
    let mut bad = Vec::new();
    for ip in irregular {
        if !ip.reasons.contains(&IrregularReason::RhoDiscontinuous) {
            continue;
        }
        let x = ip.point.real().unwrap();
        for side in Side::BOTH {
            if m.branch_germ(x, side).is_some() && m.rho_limit(x, side).is_some_and(|v| v.is_zero()) {
                bad.push(fmt_q(x));
                break;
            }
        }
    }
    if bad.is_empty() {
        None
    } else {
        Some(format!(
            "rho vanishes on one side of {}; the pushout topology is reported and may be strictly coarser than the spectrum topology",
            bad.join(", ")
        ))
    }
}

fn neighbourhood(m: &Model, y: &Point, host: &SetDesc) -> SetDesc {
    match y {
        Point::Real(v) => {
            let eps = dyadic(4);
            let b = IntervalSet::from_interval(Interval::open(v - &eps, v + &eps));
            m.set_intersect(&SetDesc::Intervals(b), host)
        }
        Point::Path(p) => {
            let g = m.graph().unwrap();
            let c = Cyl::word(g, p.first_edges(3));
            m.set_intersect(&SetDesc::Cylinders(CylinderSet::new(g, vec![c])), host)
        }
    }
}

fn topology_generator(m: &Model, hosts: &[SetDesc], reg: &SetDesc, level: usize, y: &Point, n: usize) -> TopologyGenerator {
    let empty = match y {
        Point::Real(_) => SetDesc::Intervals(IntervalSet::empty()),
        Point::Path(_) => SetDesc::Cylinders(CylinderSet::empty()),
    };
    let mut u = vec![empty; n + 1];
    u[level] = neighbourhood(m, y, &hosts[level]);
    for k in level..n {
        let img = m.image_set(&m.set_intersect(&u[k], reg));
        u[k + 1] = m.set_intersect(&img, &hosts[k + 1]);
    }
    for k in (0..n).rev() {
        let pulled = m.set_intersect(&m.set_intersect(&m.preimage_set(&u[k + 1]), reg), &hosts[k]);
        let irregular = m.set_difference(&u[k], reg);
        u[k] = m.set_union(&pulled, &irregular);
    }
    let compatible = generator_compatible(m, hosts, reg, &u);
    let space = m.space_set();
    let open = u.iter().all(|s| match (s, &space) {
        (SetDesc::Intervals(a), SetDesc::Intervals(x)) => a.is_open_in(x),
        _ => true,
    });
    TopologyGenerator { anchor_level: level, anchor: y.clone(), sets: u, compatible, open }
}

/// `U_k ∩ Δ_reg = φ^{-1}(U_{k+1}) ∩ Δ_reg` within the stratum hosts.
pub fn generator_compatible(m: &Model, hosts: &[SetDesc], reg: &SetDesc, u: &[SetDesc]) -> bool {
    (0..u.len().saturating_sub(1)).all(|k| {
        let lhs = m.set_intersect(&u[k], reg);
        let rhs = m.set_intersect(&m.set_intersect(&m.preimage_set(&u[k + 1]), reg), &hosts[k]);
        m.set_subset(&lhs, &rhs) && m.set_subset(&rhs, &lhs)
    })
}

/// Explicit `π_y^k` on `ℓ²(φ^{-k}(y) ∖ ρ_k^{-1}(0), ρ_k)`.
#[derive(Clone, Debug)]
pub struct PiYK {
    pub y: Point,
    pub k: usize,
    pub basis: Vec<Point>,
    pub weights: Vec<Q>,
}

pub fn rep_pi_y_k(m: &Model, y: &Point, k: usize) -> Result<PiYK> {
    let fib = m.preimages(y, k, true)?;
    if fib.is_empty() {
        return Err(Error::OutOfSpectrum(format!("{} has no level-{k} preimage with positive weight", m.show(y))));
    }
    let (basis, weights) = fib.into_iter().unzip();
    Ok(PiYK { y: y.clone(), k, basis, weights })
}

impl PiYK {
    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Matrix of `π_y^k(a tⁱ t*ⁱ b)`, `i ≤ k`.
    pub fn monomial(&self, m: &Model, a: &dyn Fn(&Point) -> f64, i: usize, b: &dyn Fn(&Point) -> f64) -> DMatrix<f64> {
        assert!(i <= self.k);
        let d = self.dim();
        let img: Vec<Option<Point>> = self.basis.iter().map(|x| m.phi_n(i, x)).collect();
        let ri: Vec<f64> = self.basis.iter().map(|x| m.rho_n(i, x).map(|r| to_f64(&r)).unwrap_or(0.0)).collect();
        DMatrix::from_fn(d, d, |r, c| {
            if img[r].is_some() && img[r] == img[c] {
                a(&self.basis[r]) * ri[c] * b(&self.basis[c])
            } else {
                0.0
            }
        })
    }

    /// Smallest singular value of the span of `{π(a_x t^k t*^k) h}` for a fixed nonzero `h`.
    pub fn irreducibility_witness(&self, m: &Model) -> f64 {
        let d = self.dim();
        let h = DMatrix::from_fn(d, 1, |r, _| 1.0 + r as f64 / (d as f64 + 1.0));
        let mut cols = Vec::new();
        for x in &self.basis {
            let xc = x.clone();
            let a = move |p: &Point| if *p == xc { 1.0 } else { 0.0 };
            let mat = self.monomial(m, &a, self.k, &|_| 1.0);
            cols.push(mat * &h);
        }
        let span = DMatrix::from_fn(d, d, |r, c| cols[c][(r, 0)]);
        span.singular_values().iter().cloned().fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct QuasiOrbitPartition {
    pub representatives: Vec<Point>,
    /// Class representative of each sampled point.
    pub classes: Vec<(Point, Point)>,
    /// Truncated orbit closure of each representative.
    pub orbit_closures: Vec<String>,
}

/// Cells (dyadic bins or cylinders) met by the truncated orbit `O(x)`.
pub fn orbit_signature(m: &Model, x: &Point, depth: usize, resolution: usize) -> Result<BTreeSet<String>> {
    let mut sig = BTreeSet::new();
    for k in 0..=depth {
        if !m.rho_n(k, x).map(|r| r.is_positive()).unwrap_or(false) {
            break;
        }
        let Some(y) = m.phi_n(k, x) else { break };
        for (z, _) in m.preimages(&y, k, false)? {
            sig.insert(cell(m, &z, resolution));
        }
    }
    Ok(sig)
}

fn cell(m: &Model, z: &Point, resolution: usize) -> String {
    match z {
        Point::Real(v) => {
            let scale = Q::from_integer(num_bigint::BigInt::from(1u64 << resolution));
            let i = (v * &scale).floor();
            format!("[{},{}]", fmt_q(&(&i / &scale)), fmt_q(&((&i + Q::from_integer(1.into())) / &scale)))
        }
        Point::Path(p) => m.graph().unwrap().word_name(&p.first_edges(resolution)),
    }
}

pub fn quasi_orbits(m: &Model, depth: usize, samples: &[Point]) -> Result<QuasiOrbitPartition> {
    let reg = m.regular_set();
    if reg.irregular_points.iter().any(|p| p.reasons.contains(&IrregularReason::RhoDiscontinuous)) {
        return Err(Error::HypothesisViolated("rho is not continuous on its domain".into()));
    }
    if !m.set_subset(&reg.delta_pos, &reg.delta_reg) {
        return Err(Error::HypothesisViolated("Δ_reg ≠ Δ_pos".into()));
    }
    let resolution = depth.min(6);
    let mut by_sig: BTreeMap<BTreeSet<String>, Point> = BTreeMap::new();
    let mut classes = Vec::new();
    for x in samples {
        let sig = orbit_signature(m, x, depth, resolution)?;
        let rep = by_sig.entry(sig).or_insert_with(|| x.clone()).clone();
        classes.push((x.clone(), rep));
    }
    let mut reps: Vec<(Point, String)> =
        by_sig.iter().map(|(s, p)| (p.clone(), s.iter().cloned().collect::<Vec<_>>().join(" "))).collect();
    reps.sort();
    Ok(QuasiOrbitPartition {
        representatives: reps.iter().map(|r| r.0.clone()).collect(),
        classes,
        orbit_closures: reps.into_iter().map(|r| r.1).collect(),
    })
}

impl SpectrumDescription {
    pub fn to_text(&self, m: &Model) -> String {
        let mut s = format!("spectrum of A_{}\n", self.n);
        for (k, st) in self.strata.iter().enumerate() {
            let tag = if k < self.n { "interior" } else { "top" };
            s.push_str(&format!("stratum k={k} ({tag}): {}\n", m.show_set(st)));
        }
        for p in &self.sampled_points {
            s.push_str(&format!("  pi^{}_{}  dim {}\n", p.level, m.show(&p.base), p.dimension));
        }
        for g in &self.topology_generators {
            let sets: Vec<String> = g.sets.iter().map(|u| m.show_set(u)).collect();
            s.push_str(&format!(
                "  nbhd of pi^{}_{}: ({}) compatible={} open={}\n",
                g.anchor_level,
                m.show(&g.anchor),
                sets.join(" ; "),
                g.compatible,
                g.open
            ));
        }
        if let Some(w) = &self.topology_warning {
            s.push_str(&format!("warning: {w}\n"));
        }
        s
    }

    pub fn to_csv(&self, m: &Model) -> String {
        let mut s = String::from("k,y,dimension\n");
        for p in &self.sampled_points {
            s.push_str(&format!("{},{},{}\n", p.level, m.show(&p.base), p.dimension));
        }
        s
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
    fn kn_examples() {
        let tent = bundled::load("tent_std").unwrap();
        let s = spectrum_kn(&tent, 1).unwrap();
        assert_eq!(tent.show_set(&s.stratum), "[0,1]");
        let dim = |y: Point| s.sampled_points.iter().find(|p| p.base == y).unwrap().dimension;
        assert_eq!(dim(r(1, 1)), 1);
        assert_eq!(dim(r(0, 1)), 2);
        let half = bundled::load("tent_half").unwrap();
        let s = spectrum_kn(&half, 1).unwrap();
        assert_eq!(half.show_set(&s.stratum), "[0,1]");
        assert!(s.sampled_points.iter().all(|p| p.dimension == 1));
    }

    #[test]
    fn tent_std_strata() {
        let m = bundled::load("tent_std").unwrap();
        let d = spectrum_an(&m, 3).unwrap();
        let shown: Vec<String> = d.strata.iter().map(|s| m.show_set(s)).collect();
        assert_eq!(shown, vec!["{1/2}", "{1/2}", "{1/2}", "[0,1]"]);
        for k in 0..3 {
            let p = d.sampled_points.iter().find(|p| p.level == k).unwrap();
            assert_eq!(p.dimension, 1 << k);
        }
        assert!(d.topology_warning.is_none());
        assert!(d.topology_generators.iter().all(|g| g.compatible && g.open));
        // nbhd of pi^0_{1/2} reaches the top stratum near 0, pi^2_{1/2} near 1
        let g0 = d.topology_generators.iter().find(|g| g.anchor_level == 0).unwrap();
        assert!(m.set_contains(&g0.sets[3], &r(1, 1000)));
        let g2 = d.topology_generators.iter().find(|g| g.anchor_level == 2).unwrap();
        assert!(m.set_contains(&g2.sets[3], &r(999, 1000)));
    }

    #[test]
    fn tent_half_pushout() {
        let m = bundled::load("tent_half").unwrap();
        let d = spectrum_an(&m, 1).unwrap();
        assert_eq!(m.show_set(&d.strata[0]), "[1/2,1]");
        assert_eq!(m.show_set(&d.strata[1]), "[0,1]");
        assert!(d.topology_warning.is_some());
        let g = d.topology_generators.iter().find(|g| g.anchor_level == 0 && g.anchor == r(1, 2)).unwrap();
        assert!(g.compatible);
        assert_eq!(m.show_set(&g.sets[1]), "(7/8,1)");
    }

    #[test]
    fn graph_has_only_top() {
        let m = bundled::load("fullshift2").unwrap();
        let d = spectrum_an(&m, 3).unwrap();
        assert!(d.strata[..3].iter().all(|s| s.is_empty()));
        assert!(!d.strata[3].is_empty());
    }

    #[test]
    fn empty_spectrum_for_zero_potential() {
        let mut m = bundled::load("tent_half").unwrap();
        if let crate::Potential::Interval(p) = &mut m.pot {
            for pc in &mut p.pieces {
                pc.factors = vec![crate::dynamics::Affine::constant(qi(0))];
            }
            p.overrides.clear();
        }
        assert!(spectrum_kn(&m, 1).unwrap().stratum.is_empty());
    }

    #[test]
    fn pi_y_k_dimensions() {
        let m = bundled::load("tent_std").unwrap();
        for n in 1..=5 {
            assert_eq!(rep_pi_y_k(&m, &r(1, 1), n).unwrap().dim(), 1 << (n - 1));
            assert_eq!(rep_pi_y_k(&m, &r(0, 1), n).unwrap().dim(), (1 << (n - 1)) + 1);
        }
        let p0 = rep_pi_y_k(&m, &r(1, 3), 0).unwrap();
        assert_eq!(p0.dim(), 1);
        let a = |p: &Point| to_f64(p.real().unwrap()) + 2.0;
        assert_eq!(p0.monomial(&m, &a, 0, &|_| 1.0)[(0, 0)], 2.0 + 1.0 / 3.0);
        let p = rep_pi_y_k(&m, &r(1, 1), 3).unwrap();
        assert!(p.irreducibility_witness(&m) >= 1e-8);
        let halving = bundled::load("halving").unwrap();
        assert!(matches!(rep_pi_y_k(&halving, &r(3, 4), 1), Err(Error::OutOfSpectrum(_))));
    }

    #[test]
    fn quasi_orbit_examples() {
        let full = bundled::load("fullshift2").unwrap();
        let s = full.sample_points(12, 3);
        assert_eq!(quasi_orbits(&full, 6, &s).unwrap().representatives.len(), 1);
        let two = bundled::load("loops2").unwrap();
        let s = two.sample_points(12, 3);
        assert_eq!(quasi_orbits(&two, 6, &s).unwrap().representatives.len(), 2);
        let one = bundled::load("loop1").unwrap();
        let s = one.sample_points(3, 1);
        assert_eq!(quasi_orbits(&one, 6, &s).unwrap().representatives.len(), 1);
        let tent = bundled::load("tent_std").unwrap();
        assert!(matches!(quasi_orbits(&tent, 4, &[r(0, 1)]), Err(Error::HypothesisViolated(_))));
    }
}
