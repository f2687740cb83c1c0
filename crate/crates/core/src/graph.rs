//! Finite directed graphs, eventually periodic boundary paths, and cylinder sets.
//!
//! Paths follow the range-to-source convention: in `μ = μ1 μ2 ...` consecutive
//! edges satisfy `s(μi) = r(μi+1)`, the range of the path is `r(μ1)`, and the
//! shift drops the first edge.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub name: String,
    pub s: usize,
    pub r: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    pub vertices: Vec<String>,
    pub edges: Vec<Edge>,
}

impl Graph {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    /// Edges `e` with `r(e) = v`; these extend a path whose last edge has source `v`.
    pub fn receiving(&self, v: usize) -> Vec<usize> {
        (0..self.edges.len()).filter(|&e| self.edges[e].r == v).collect()
    }

    /// Edges `e` with `s(e) = v`; prepending these to a path of range `v` is legal.
    pub fn emitting(&self, v: usize) -> Vec<usize> {
        (0..self.edges.len()).filter(|&e| self.edges[e].s == v).collect()
    }

    pub fn sourceless_vertices(&self) -> Vec<usize> {
        (0..self.n_vertices()).filter(|&v| self.receiving(v).is_empty()).collect()
    }

    pub fn is_path(&self, w: &[usize]) -> bool {
        w.windows(2).all(|p| self.edges[p[0]].s == self.edges[p[1]].r)
    }

    pub fn word_name(&self, w: &[usize]) -> String {
        w.iter().map(|&e| self.edges[e].name.as_str()).collect::<Vec<_>>().join(".")
    }

    /// All paths of length `n` (as edge words); length 0 is excluded.
    pub fn words(&self, n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return Vec::new();
        }
        let mut cur: Vec<Vec<usize>> = (0..self.edges.len()).map(|e| vec![e]).collect();
        for _ in 1..n {
            let mut next = Vec::new();
            for w in &cur {
                for f in self.receiving(self.edges[*w.last().unwrap()].s) {
                    let mut x = w.clone();
                    x.push(f);
                    next.push(x);
                }
            }
            cur = next;
        }
        cur
    }

    /// Simple cycles as edge words, each in its lexicographically least rotation.
    pub fn simple_cycles(&self) -> Vec<Vec<usize>> {
        let mut found = BTreeSet::new();
        let nv = self.n_vertices();
        for start in 0..nv {
            // walk forward along paths: next edge f must have r(f) = s(last)
            let mut stack: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
            for e in self.receiving(start) {
                stack.push((vec![e], vec![start]));
            }
            while let Some((w, seen)) = stack.pop() {
                let tail = self.edges[*w.last().unwrap()].s;
                if tail == start {
                    found.insert(least_rotation(&w));
                    continue;
                }
                if seen.contains(&tail) || w.len() >= nv {
                    continue;
                }
                for f in self.receiving(tail) {
                    let mut w2 = w.clone();
                    w2.push(f);
                    let mut s2 = seen.clone();
                    s2.push(tail);
                    stack.push((w2, s2));
                }
            }
        }
        found.into_iter().collect()
    }
}

pub fn least_rotation(w: &[usize]) -> Vec<usize> {
    (0..w.len())
        .map(|i| w[i..].iter().chain(w[..i].iter()).copied().collect::<Vec<_>>())
        .min()
        .unwrap_or_default()
}

fn primitive_root(c: &[usize]) -> Vec<usize> {
    let n = c.len();
    for p in 1..=n {
        if n.is_multiple_of(p) && (0..n).all(|i| c[i] == c[i % p]) {
            return c[..p].to_vec();
        }
    }
    c.to_vec()
}

/// Eventually periodic infinite path `prefix · cycle^∞` in canonical form.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PathPoint {
    pub prefix: Vec<usize>,
    pub cycle: Vec<usize>,
}

impl PathPoint {
    pub fn new(prefix: Vec<usize>, cycle: Vec<usize>) -> Self {
        assert!(!cycle.is_empty(), "cycle must be nonempty");
        let mut p = PathPoint { prefix, cycle: primitive_root(&cycle) };
        while let (Some(&a), Some(&b)) = (p.prefix.last(), p.cycle.last()) {
            if a != b {
                break;
            }
            p.prefix.pop();
            p.cycle.rotate_right(1);
        }
        p
    }

    pub fn periodic(cycle: Vec<usize>) -> Self {
        Self::new(Vec::new(), cycle)
    }

    pub fn edge(&self, i: usize) -> usize {
        if i < self.prefix.len() {
            self.prefix[i]
        } else {
            self.cycle[(i - self.prefix.len()) % self.cycle.len()]
        }
    }

    pub fn first_edges(&self, k: usize) -> Vec<usize> {
        (0..k).map(|i| self.edge(i)).collect()
    }

    pub fn range(&self, g: &Graph) -> usize {
        g.edges[self.edge(0)].r
    }

    pub fn shift(&self) -> PathPoint {
        if self.prefix.is_empty() {
            let mut c = self.cycle.clone();
            c.rotate_left(1);
            PathPoint { prefix: Vec::new(), cycle: c }
        } else {
            PathPoint::new(self.prefix[1..].to_vec(), self.cycle.clone())
        }
    }

    pub fn prepend(&self, e: usize) -> PathPoint {
        let mut p = vec![e];
        p.extend(self.prefix.iter().copied());
        PathPoint::new(p, self.cycle.clone())
    }

    pub fn is_valid(&self, g: &Graph) -> bool {
        let mut w = self.prefix.clone();
        w.extend(self.cycle.iter().copied());
        w.push(self.cycle[0]);
        g.is_path(&w)
    }

    pub fn display(&self, g: &Graph) -> String {
        if self.prefix.is_empty() {
            format!("({})^∞", g.word_name(&self.cycle))
        } else {
            format!("{}.({})^∞", g.word_name(&self.prefix), g.word_name(&self.cycle))
        }
    }
}

/// Cylinder `Z(v)` (empty word) or `Z(μ)` with `v = r(μ1)`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Cyl {
    pub v: usize,
    pub word: Vec<usize>,
}

impl Cyl {
    pub fn vertex(v: usize) -> Self {
        Cyl { v, word: Vec::new() }
    }

    pub fn word(g: &Graph, word: Vec<usize>) -> Self {
        assert!(!word.is_empty());
        Cyl { v: g.edges[word[0]].r, word }
    }

    pub fn contains(&self, g: &Graph, x: &PathPoint) -> bool {
        x.range(g) == self.v && self.word.iter().enumerate().all(|(i, &e)| x.edge(i) == e)
    }

    /// `self` contains `o` as a set.
    pub fn covers(&self, o: &Cyl) -> bool {
        self.v == o.v && o.word.len() >= self.word.len() && o.word[..self.word.len()] == self.word[..]
    }

    pub fn children(&self, g: &Graph) -> Vec<Cyl> {
        let tail = match self.word.last() {
            None => self.v,
            Some(&e) => g.edges[e].s,
        };
        g.receiving(tail)
            .into_iter()
            .map(|f| {
                let mut w = self.word.clone();
                w.push(f);
                Cyl { v: self.v, word: w }
            })
            .collect()
    }

    pub fn parent(&self) -> Option<Cyl> {
        if self.word.is_empty() {
            None
        } else {
            Some(Cyl { v: self.v, word: self.word[..self.word.len() - 1].to_vec() })
        }
    }

    /// Vertex at the far end of the word (where extensions attach).
    pub fn tail(&self, g: &Graph) -> usize {
        match self.word.last() {
            None => self.v,
            Some(&e) => g.edges[e].s,
        }
    }

    pub fn display(&self, g: &Graph) -> String {
        if self.word.is_empty() {
            format!("Z({})", g.vertices[self.v])
        } else {
            format!("Z({})", g.word_name(&self.word))
        }
    }
}

/// Finite union of cylinders, kept as the unique antichain of maximal cylinders.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct CylinderSet {
    cyls: Vec<Cyl>,
}

impl CylinderSet {
    pub fn empty() -> Self {
        CylinderSet { cyls: Vec::new() }
    }

    pub fn full(g: &Graph) -> Self {
        Self::new(g, (0..g.n_vertices()).map(Cyl::vertex).collect())
    }

    pub fn new(g: &Graph, mut v: Vec<Cyl>) -> Self {
        loop {
            v.sort();
            v.dedup();
            let snapshot = v.clone();
            v.retain(|c| !snapshot.iter().any(|d| d != c && d.covers(c)));
            let mut by_parent: BTreeMap<Cyl, usize> = BTreeMap::new();
            for c in &v {
                if let Some(p) = c.parent() {
                    *by_parent.entry(p).or_default() += 1;
                }
            }
            let mut merged = false;
            for (p, count) in by_parent {
                if count == p.children(g).len() {
                    v.retain(|c| c.parent().as_ref() != Some(&p));
                    v.push(p);
                    merged = true;
                }
            }
            if !merged {
                v.sort();
                return CylinderSet { cyls: v };
            }
        }
    }

    pub fn cyls(&self) -> &[Cyl] {
        &self.cyls
    }

    pub fn is_empty(&self) -> bool {
        self.cyls.is_empty()
    }

    pub fn contains(&self, g: &Graph, x: &PathPoint) -> bool {
        self.cyls.iter().any(|c| c.contains(g, x))
    }

    pub fn union(&self, g: &Graph, o: &CylinderSet) -> CylinderSet {
        let mut v = self.cyls.clone();
        v.extend(o.cyls.iter().cloned());
        Self::new(g, v)
    }

    pub fn intersect(&self, g: &Graph, o: &CylinderSet) -> CylinderSet {
        let mut v = Vec::new();
        for a in &self.cyls {
            for b in &o.cyls {
                if a.covers(b) {
                    v.push(b.clone());
                } else if b.covers(a) {
                    v.push(a.clone());
                }
            }
        }
        Self::new(g, v)
    }

    fn complement_within(&self, g: &Graph, c: &Cyl, out: &mut Vec<Cyl>) {
        if self.cyls.iter().any(|d| d.covers(c)) {
            return;
        }
        if !self.cyls.iter().any(|d| c.covers(d)) {
            out.push(c.clone());
            return;
        }
        for ch in c.children(g) {
            self.complement_within(g, &ch, out);
        }
    }

    pub fn complement(&self, g: &Graph) -> CylinderSet {
        let mut out = Vec::new();
        for v in 0..g.n_vertices() {
            self.complement_within(g, &Cyl::vertex(v), &mut out);
        }
        Self::new(g, out)
    }

    pub fn difference(&self, g: &Graph, o: &CylinderSet) -> CylinderSet {
        self.intersect(g, &o.complement(g))
    }

    pub fn is_subset(&self, g: &Graph, o: &CylinderSet) -> bool {
        self.difference(g, o).is_empty()
    }

    /// `φ(U)` under the shift.
    pub fn shift_image(&self, g: &Graph) -> CylinderSet {
        let mut v = Vec::new();
        for c in &self.cyls {
            match c.word.len() {
                0 => {
                    for f in g.receiving(c.v) {
                        v.push(Cyl::vertex(g.edges[f].s));
                    }
                }
                1 => v.push(Cyl::vertex(g.edges[c.word[0]].s)),
                _ => v.push(Cyl::word(g, c.word[1..].to_vec())),
            }
        }
        Self::new(g, v)
    }

    /// `φ^{-1}(U)`.
    pub fn shift_preimage(&self, g: &Graph) -> CylinderSet {
        let mut v = Vec::new();
        for c in &self.cyls {
            for e in g.emitting(c.v) {
                let mut w = vec![e];
                w.extend(c.word.iter().copied());
                v.push(Cyl::word(g, w));
            }
        }
        Self::new(g, v)
    }

    pub fn max_len(&self) -> usize {
        self.cyls.iter().map(|c| c.word.len()).max().unwrap_or(0)
    }

    pub fn display(&self, g: &Graph) -> String {
        if self.cyls.is_empty() {
            return "∅".into();
        }
        self.cyls.iter().map(|c| c.display(g)).collect::<Vec<_>>().join("∪")
    }
}

impl fmt::Display for PathPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}({:?})^∞", self.prefix, self.cycle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fullshift() -> Graph {
        Graph {
            vertices: vec!["v".into()],
            edges: vec![
                Edge { name: "a".into(), s: 0, r: 0 },
                Edge { name: "b".into(), s: 0, r: 0 },
            ],
        }
    }

    fn tail_loop() -> Graph {
        Graph {
            vertices: vec!["v".into(), "u".into()],
            edges: vec![
                Edge { name: "e".into(), s: 0, r: 0 },
                Edge { name: "f".into(), s: 0, r: 1 },
            ],
        }
    }

    #[test]
    fn canonical_paths() {
        let p = PathPoint::new(vec![0, 0], vec![0, 0]);
        assert_eq!(p, PathPoint::periodic(vec![0]));
        let q = PathPoint::new(vec![1, 0], vec![0, 1]);
        // 1.0.(0.1)^∞ = 1.(0.0.1 ...) -> prefix [1,0] ends with 0? cycle [0,1] ends with 1: kept
        assert_eq!(q.prefix, vec![1, 0]);
        let r = PathPoint::new(vec![1], vec![0, 1]);
        assert_eq!(r, PathPoint::periodic(vec![1, 0]));
        assert_eq!(r.shift(), PathPoint::periodic(vec![0, 1]));
        assert_eq!(PathPoint::periodic(vec![0]).prepend(1).shift(), PathPoint::periodic(vec![0]));
    }

    #[test]
    fn cylinder_merging_and_complement() {
        let g = fullshift();
        let s = CylinderSet::new(&g, vec![Cyl::word(&g, vec![0]), Cyl::word(&g, vec![1])]);
        assert_eq!(s, CylinderSet::full(&g));
        let a = CylinderSet::new(&g, vec![Cyl::word(&g, vec![0, 1])]);
        let c = a.complement(&g);
        assert_eq!(c.union(&g, &a), CylinderSet::full(&g));
        assert!(c.intersect(&g, &a).is_empty());
    }

    #[test]
    fn shift_images() {
        let g = tail_loop();
        let full = CylinderSet::full(&g);
        let im = full.shift_image(&g);
        assert_eq!(im, CylinderSet::new(&g, vec![Cyl::vertex(0)]));
        let pre = im.shift_preimage(&g);
        assert_eq!(pre, full);
    }

    #[test]
    fn cycles_found() {
        assert_eq!(fullshift().simple_cycles(), vec![vec![0], vec![1]]);
        assert_eq!(tail_loop().simple_cycles(), vec![vec![0]]);
    }

    #[test]
    fn word_counts() {
        assert_eq!(fullshift().words(3).len(), 8);
        // tail loop: paths of length 2 are e.e and f.e
        assert_eq!(tail_loop().words(2).len(), 2);
    }
}
