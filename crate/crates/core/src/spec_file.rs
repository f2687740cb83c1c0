//! System-spec files: JSON text with rationals written as `"p/q"`.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    Affine, AffineBranch, GraphSystem, IntervalSystem, Model, PartialSystem, PiecewisePotential, Potential,
    RhoPiece, DEFAULT_DEPTH_BOUND,
};
use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::interval::{Interval, IntervalSet};
use crate::rational::{serde_q, Q};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AffineSpec {
    #[serde(with = "serde_q")]
    pub slope: Q,
    #[serde(with = "serde_q")]
    pub intercept: Q,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BranchSpec {
    pub domain: Interval,
    #[serde(with = "serde_q")]
    pub slope: Q,
    #[serde(with = "serde_q")]
    pub intercept: Q,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PieceSpec {
    pub domain: Interval,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_q")]
    pub slope: Option<Q>,
    #[serde(default, skip_serializing_if = "Option::is_none", with = "opt_q")]
    pub intercept: Option<Q>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub factors: Option<Vec<AffineSpec>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OverrideSpec {
    #[serde(with = "serde_q")]
    pub point: Q,
    #[serde(with = "serde_q")]
    pub value: Q,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EdgeSpec {
    pub name: String,
    pub s: String,
    pub r: String,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct PotentialSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pieces: Option<Vec<PieceSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub overrides: Option<Vec<OverrideSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<BTreeMap<String, String>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpecFile {
    pub backend: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub space: Option<Vec<Interval>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub branches: Option<Vec<BranchSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vertices: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<EdgeSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_depth: Option<usize>,
    pub potential: PotentialSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_bound: Option<usize>,
}

mod opt_q {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Option<Q>, s: S) -> std::result::Result<S::Ok, S::Error> {
        match x {
            Some(v) => serde_q::serialize(v, s),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Option<Q>, D::Error> {
        serde_q::deserialize(d).map(Some)
    }
}

fn check_interval(i: &Interval, field: &str) -> Result<()> {
    if i.lo > i.hi {
        return Err(Error::Parse(format!("{field}: lo > hi")));
    }
    if i.lo == i.hi && !(i.lo_closed && i.hi_closed) {
        return Err(Error::Parse(format!("{field}: degenerate interval must be closed")));
    }
    Ok(())
}

fn missing(field: &str) -> Error {
    Error::Parse(format!("missing field `{field}`"))
}

pub fn parse_str(text: &str) -> Result<Model> {
    let spec: SpecFile =
        serde_json::from_str(text).map_err(|e| Error::Parse(format!("line {} column {}: {e}", e.line(), e.column())))?;
    spec.to_model()
}

pub fn load_file(path: &std::path::Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    parse_str(&text)
}

impl SpecFile {
    pub fn to_model(&self) -> Result<Model> {
        let depth_bound = self.depth_bound.unwrap_or(DEFAULT_DEPTH_BOUND);
        match self.backend.as_str() {
            "interval" => {
                let space = self.space.as_ref().ok_or_else(|| missing("space"))?;
                for (i, s) in space.iter().enumerate() {
                    check_interval(s, &format!("space[{i}]"))?;
                }
                let branches = self.branches.as_ref().ok_or_else(|| missing("branches"))?;
                let mut bs = Vec::new();
                for (i, b) in branches.iter().enumerate() {
                    check_interval(&b.domain, &format!("branches[{i}].domain"))?;
                    if b.slope.is_zero() {
                        return Err(Error::Parse(format!("branches[{i}].slope: must be nonzero")));
                    }
                    bs.push(AffineBranch::new(b.domain.clone(), b.slope.clone(), b.intercept.clone()));
                }
                let pieces = self.potential.pieces.as_ref().ok_or_else(|| missing("potential.pieces"))?;
                let mut ps = Vec::new();
                for (i, p) in pieces.iter().enumerate() {
                    check_interval(&p.domain, &format!("potential.pieces[{i}].domain"))?;
                    let factors = match (&p.factors, &p.slope, &p.intercept) {
                        (Some(f), None, None) => f.iter().map(|a| Affine::new(a.slope.clone(), a.intercept.clone())).collect(),
                        (None, s, c) => {
                            vec![Affine::new(s.clone().unwrap_or_default(), c.clone().ok_or_else(|| {
                                missing(&format!("potential.pieces[{i}].intercept"))
                            })?)]
                        }
                        _ => {
                            return Err(Error::Parse(format!(
                                "potential.pieces[{i}]: give either slope/intercept or factors"
                            )))
                        }
                    };
                    ps.push(RhoPiece { domain: p.domain.clone(), factors });
                }
                let overrides = self
                    .potential
                    .overrides
                    .as_ref()
                    .map(|v| v.iter().map(|o| (o.point.clone(), o.value.clone())).collect())
                    .unwrap_or_default();
                Ok(Model {
                    sys: PartialSystem::Interval(IntervalSystem {
                        space: IntervalSet::from_intervals(space.clone()),
                        branches: bs,
                    }),
                    pot: Potential::Interval(PiecewisePotential { pieces: ps, overrides }),
                    depth_bound,
                })
            }
            "graph" => {
                let vertices = self.vertices.clone().ok_or_else(|| missing("vertices"))?;
                let edges = self.edges.as_ref().ok_or_else(|| missing("edges"))?;
                let idx = |name: &str, field: String| {
                    vertices
                        .iter()
                        .position(|v| v == name)
                        .ok_or_else(|| Error::Parse(format!("{field}: unknown vertex `{name}`")))
                };
                let mut es = Vec::new();
                for (i, e) in edges.iter().enumerate() {
                    es.push(Edge {
                        name: e.name.clone(),
                        s: idx(&e.s, format!("edges[{i}].s"))?,
                        r: idx(&e.r, format!("edges[{i}].r"))?,
                    });
                }
                let graph = Graph { vertices, edges: es };
                if let Some(v) = graph.sourceless_vertices().first() {
                    return Err(Error::Parse(format!(
                        "vertices: `{}` receives no edge; boundary paths would be finite",
                        graph.vertices[*v]
                    )));
                }
                let wmap = self.potential.weights.as_ref().ok_or_else(|| missing("potential.weights"))?;
                let mut weights = Vec::new();
                for e in &graph.edges {
                    let w = wmap
                        .get(&e.name)
                        .ok_or_else(|| Error::Parse(format!("potential.weights: no weight for edge `{}`", e.name)))?;
                    let w = crate::rational::parse_q(w)?;
                    if w.is_negative() {
                        return Err(Error::Parse(format!("potential.weights.{}: negative", e.name)));
                    }
                    weights.push(w);
                }
                Ok(Model {
                    sys: PartialSystem::Graph(GraphSystem {
                        graph,
                        truncation_depth: self.truncation_depth.unwrap_or(8),
                    }),
                    pot: Potential::Graph(weights),
                    depth_bound,
                })
            }
            other => Err(Error::Parse(format!("backend: unknown value `{other}`"))),
        }
    }

    pub fn from_model(m: &Model) -> SpecFile {
        match (&m.sys, &m.pot) {
            (PartialSystem::Interval(s), Potential::Interval(p)) => SpecFile {
                backend: "interval".into(),
                space: Some(s.space.parts().to_vec()),
                branches: Some(
                    s.branches
                        .iter()
                        .map(|b| BranchSpec {
                            domain: b.domain.clone(),
                            slope: b.map.slope.clone(),
                            intercept: b.map.intercept.clone(),
                        })
                        .collect(),
                ),
                vertices: None,
                edges: None,
                truncation_depth: None,
                potential: PotentialSpec {
                    pieces: Some(
                        p.pieces
                            .iter()
                            .map(|pc| {
                                if pc.factors.len() == 1 {
                                    PieceSpec {
                                        domain: pc.domain.clone(),
                                        slope: Some(pc.factors[0].slope.clone()),
                                        intercept: Some(pc.factors[0].intercept.clone()),
                                        factors: None,
                                    }
                                } else {
                                    PieceSpec {
                                        domain: pc.domain.clone(),
                                        slope: None,
                                        intercept: None,
                                        factors: Some(
                                            pc.factors
                                                .iter()
                                                .map(|f| AffineSpec { slope: f.slope.clone(), intercept: f.intercept.clone() })
                                                .collect(),
                                        ),
                                    }
                                }
                            })
                            .collect(),
                    ),
                    overrides: Some(
                        p.overrides.iter().map(|(a, b)| OverrideSpec { point: a.clone(), value: b.clone() }).collect(),
                    ),
                    weights: None,
                },
                depth_bound: Some(m.depth_bound),
            },
            (PartialSystem::Graph(g), Potential::Graph(w)) => SpecFile {
                backend: "graph".into(),
                space: None,
                branches: None,
                vertices: Some(g.graph.vertices.clone()),
                edges: Some(
                    g.graph
                        .edges
                        .iter()
                        .map(|e| EdgeSpec {
                            name: e.name.clone(),
                            s: g.graph.vertices[e.s].clone(),
                            r: g.graph.vertices[e.r].clone(),
                        })
                        .collect(),
                ),
                truncation_depth: Some(g.truncation_depth),
                potential: PotentialSpec {
                    pieces: None,
                    overrides: None,
                    weights: Some(
                        g.graph
                            .edges
                            .iter()
                            .zip(w)
                            .map(|(e, x)| (e.name.clone(), crate::rational::fmt_q(x)))
                            .collect(),
                    ),
                },
                depth_bound: Some(m.depth_bound),
            },
            _ => unreachable!("backend mismatch between system and potential"),
        }
    }
}

/// Canonical pretty-printed serialization.
pub fn to_canonical(m: &Model) -> String {
    serde_json::to_string_pretty(&SpecFile::from_model(m)).expect("spec serializes")
}

/// Parse then re-serialize.
pub fn roundtrip(text: &str) -> Result<String> {
    Ok(to_canonical(&parse_str(text)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bundled;

    #[test]
    fn bundled_roundtrip_fixed_point() {
        for name in bundled::NAMES {
            let text = bundled::text(name).unwrap();
            let once = roundtrip(text).unwrap();
            let twice = roundtrip(&once).unwrap();
            assert_eq!(once, twice, "{name}");
            assert_eq!(parse_str(&once).unwrap(), parse_str(text).unwrap());
        }
    }

    #[test]
    fn unreduced_rationals_canonicalize() {
        let text = bundled::text("tent_std").unwrap().replace("\"1/2\"", "\"2/4\"");
        let c = roundtrip(&text).unwrap();
        assert!(!c.contains("2/4"));
        assert!(c.contains("\"1/2\""));
    }

    #[test]
    fn malformed_interval_names_field() {
        let text = r#"{"backend":"interval","space":[{"lo":"1","hi":"0"}],"branches":[],"potential":{"pieces":[]}}"#;
        let err = parse_str(text).unwrap_err();
        assert!(err.to_string().contains("space[0]"), "{err}");
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_str("{\"backend\": ").unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }
}
