//! Compact metric graphs: vertices embedded in the plane, edges with
//! intrinsic arclength.
//!
//! An edge is identified with the interval `[0, length]`; a point on the
//! graph is an `(edge, t)` pair. All analysis is intrinsic — the planar
//! coordinates are only used for plotting and for coordinate-dependent
//! source terms.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

/// Tolerance used when deciding whether two graph points coincide.
const POINT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct Vertex {
    pub id: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone)]
pub struct Edge {
    pub id: String,
    /// Index of the source vertex.
    pub source: usize,
    /// Index of the target vertex.
    pub target: usize,
    /// Intrinsic length, strictly positive.
    pub length: f64,
}

/// A connected metric graph with finitely many vertices and edges of
/// finite positive length.
#[derive(Debug, Clone)]
pub struct MetricGraph {
    vertices: Vec<Vertex>,
    edges: Vec<Edge>,
    vertex_index: HashMap<String, usize>,
    edge_index: HashMap<String, usize>,
}

/// A point on a metric graph, addressed by edge index and arclength
/// coordinate `t` in `[0, length]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphPoint {
    pub edge: usize,
    pub t: f64,
}

impl GraphPoint {
    pub fn new(edge: usize, t: f64) -> Self {
        GraphPoint { edge, t }
    }
}

impl fmt::Display for GraphPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(edge {}, t = {})", self.edge, self.t)
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RawId {
    Int(i64),
    Str(String),
}

impl RawId {
    fn normalize(self) -> String {
        match self {
            RawId::Int(i) => i.to_string(),
            RawId::Str(s) => s,
        }
    }
}

#[derive(Deserialize)]
struct RawVertex {
    id: RawId,
    x: f64,
    y: f64,
}

#[derive(Deserialize)]
struct RawEdge {
    id: RawId,
    source: RawId,
    target: RawId,
    #[serde(default)]
    length: Option<f64>,
}

#[derive(Deserialize)]
struct RawGraph {
    vertices: Vec<RawVertex>,
    edges: Vec<RawEdge>,
}

/// Loads and validates a metric graph from a JSON or TOML document with
/// top-level keys `vertices` (list of `{id, x, y}`) and `edges` (list of
/// `{id, source, target, length?}`). Ids may be strings or integers.
/// Missing lengths are filled with the Euclidean distance between the
/// endpoint coordinates.
pub fn load_graph(path: impl AsRef<Path>) -> Result<MetricGraph> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let raw: RawGraph = if path.extension().is_some_and(|e| e == "toml") {
        toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
    } else {
        serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            message: e.to_string(),
        })?
    };
    MetricGraph::from_raw(raw)
}

impl MetricGraph {
    /// Builds a graph from explicit vertex and edge lists. Edge entries are
    /// `(id, source id, target id, optional length)`.
    pub fn new(
        vertices: Vec<(String, f64, f64)>,
        edges: Vec<(String, String, String, Option<f64>)>,
    ) -> Result<Self> {
        let raw = RawGraph {
            vertices: vertices
                .into_iter()
                .map(|(id, x, y)| RawVertex {
                    id: RawId::Str(id),
                    x,
                    y,
                })
                .collect(),
            edges: edges
                .into_iter()
                .map(|(id, s, t, length)| RawEdge {
                    id: RawId::Str(id),
                    source: RawId::Str(s),
                    target: RawId::Str(t),
                    length,
                })
                .collect(),
        };
        Self::from_raw(raw)
    }

    fn from_raw(raw: RawGraph) -> Result<Self> {
        if raw.vertices.is_empty() {
            return Err(Error::Validation("graph has no vertices".into()));
        }
        if raw.edges.is_empty() {
            return Err(Error::Validation("graph has no edges".into()));
        }

        let mut vertex_index = HashMap::new();
        let mut vertices = Vec::with_capacity(raw.vertices.len());
        for v in raw.vertices {
            let id = v.id.normalize();
            if !v.x.is_finite() || !v.y.is_finite() {
                return Err(Error::Validation(format!(
                    "vertex '{id}' has non-finite coordinates"
                )));
            }
            if vertex_index.insert(id.clone(), vertices.len()).is_some() {
                return Err(Error::Validation(format!("duplicate vertex id '{id}'")));
            }
            vertices.push(Vertex { id, x: v.x, y: v.y });
        }

        let mut edge_index = HashMap::new();
        let mut edges = Vec::with_capacity(raw.edges.len());
        for e in raw.edges {
            let id = e.id.normalize();
            let source_id = e.source.normalize();
            let target_id = e.target.normalize();
            let source = *vertex_index.get(&source_id).ok_or_else(|| {
                Error::Validation(format!(
                    "edge '{id}' references unknown vertex '{source_id}'"
                ))
            })?;
            let target = *vertex_index.get(&target_id).ok_or_else(|| {
                Error::Validation(format!(
                    "edge '{id}' references unknown vertex '{target_id}'"
                ))
            })?;
            let length = match e.length {
                Some(l) => {
                    if !l.is_finite() || l <= 0.0 {
                        return Err(Error::Validation(format!(
                            "edge '{id}' has non-positive length {l}"
                        )));
                    }
                    l
                }
                None => {
                    let (a, b) = (&vertices[source], &vertices[target]);
                    let l = ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt();
                    if l <= 0.0 {
                        return Err(Error::Validation(format!(
                            "edge '{id}' has coincident endpoints and no explicit length"
                        )));
                    }
                    l
                }
            };
            if edge_index.insert(id.clone(), edges.len()).is_some() {
                return Err(Error::Validation(format!("duplicate edge id '{id}'")));
            }
            edges.push(Edge {
                id,
                source,
                target,
                length,
            });
        }

        let graph = MetricGraph {
            vertices,
            edges,
            vertex_index,
            edge_index,
        };
        graph.check_connected()?;
        Ok(graph)
    }

    // Spectral theory on the graph assumes a single connected component.
    fn check_connected(&self) -> Result<()> {
        let n = self.vertices.len();
        let mut adjacency = vec![Vec::new(); n];
        for e in &self.edges {
            adjacency[e.source].push(e.target);
            adjacency[e.target].push(e.source);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(v) = stack.pop() {
            for &w in &adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        if let Some(v) = seen.iter().position(|s| !s) {
            return Err(Error::Validation(format!(
                "graph is disconnected: vertex '{}' is unreachable from '{}'",
                self.vertices[v].id, self.vertices[0].id
            )));
        }
        Ok(())
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn vertices(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn vertex_index(&self, id: &str) -> Option<usize> {
        self.vertex_index.get(id).copied()
    }

    pub fn edge_index(&self, id: &str) -> Option<usize> {
        self.edge_index.get(id).copied()
    }

    pub fn total_length(&self) -> f64 {
        self.edges.iter().map(|e| e.length).sum()
    }

    pub fn vertex_degree(&self, v: usize) -> usize {
        self.edges
            .iter()
            .map(|e| usize::from(e.source == v) + usize::from(e.target == v))
            .sum()
    }

    /// Constructs a validated point on edge `edge_id` at arclength `t`.
    pub fn point(&self, edge_id: &str, t: f64) -> Result<GraphPoint> {
        let edge = self
            .edge_index(edge_id)
            .ok_or_else(|| Error::Validation(format!("unknown edge id '{edge_id}'")))?;
        let len = self.edges[edge].length;
        if !(0.0..=len).contains(&t) {
            return Err(Error::Validation(format!(
                "arclength {t} outside [0, {len}] on edge '{edge_id}'"
            )));
        }
        Ok(GraphPoint { edge, t })
    }

    /// Maps a point to the vertex it sits on, if it is (numerically) at an
    /// edge endpoint.
    pub fn vertex_of_point(&self, p: &GraphPoint) -> Option<usize> {
        let e = &self.edges[p.edge];
        if p.t.abs() <= POINT_TOL * e.length.max(1.0) {
            Some(e.source)
        } else if (p.t - e.length).abs() <= POINT_TOL * e.length.max(1.0) {
            Some(e.target)
        } else {
            None
        }
    }

    /// Point-equality predicate: interior points compare by edge and
    /// arclength; every endpoint representation of a shared vertex compares
    /// equal regardless of which incident edge carries it.
    pub fn points_coincide(&self, a: &GraphPoint, b: &GraphPoint) -> bool {
        match (self.vertex_of_point(a), self.vertex_of_point(b)) {
            (Some(va), Some(vb)) => va == vb,
            (None, None) => {
                a.edge == b.edge && (a.t - b.t).abs() <= POINT_TOL * self.edges[a.edge].length
            }
            _ => false,
        }
    }

    /// Planar coordinates of a point, by linear interpolation along the
    /// straight-segment embedding of its edge.
    pub fn embed(&self, p: &GraphPoint) -> (f64, f64) {
        let e = &self.edges[p.edge];
        let (a, b) = (&self.vertices[e.source], &self.vertices[e.target]);
        let s = (p.t / e.length).clamp(0.0, 1.0);
        (a.x + s * (b.x - a.x), a.y + s * (b.y - a.y))
    }
}
