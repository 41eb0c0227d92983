//! View-graph container, triangle enumeration and graph statistics.

use std::collections::HashMap;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::Direction;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("edge ({0}, {1}) is a self-loop")]
    SelfLoop(usize, usize),
    #[error("edge ({0}, {1}) references a camera outside 0..{2}")]
    CameraOutOfRange(usize, usize, usize),
    #[error("edge ({0}, {1}) appears more than once")]
    DuplicateEdge(usize, usize),
    #[error("expected {expected} evidence lists, got {got}")]
    EvidenceCount { expected: usize, got: usize },
    #[error("edge index {0} out of range")]
    IndexError(usize),
}

/// Cameras, undirected edges and per-edge correspondence normals.
///
/// Edges are stored with `i < j`; the order of the edge list is preserved and
/// defines edge ids.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewGraph {
    n_cam: usize,
    edges: Vec<(usize, usize)>,
    evidence: Vec<Vec<Direction>>,
    lookup: HashMap<(usize, usize), usize>,
}

impl ViewGraph {
    /// Builds a graph, normalizing each pair to `i < j`.
    pub fn new(n_cam: usize, edges: Vec<(usize, usize)>, evidence: Vec<Vec<Direction>>) -> Result<Self, GraphError> {
        if evidence.len() != edges.len() {
            return Err(GraphError::EvidenceCount { expected: edges.len(), got: evidence.len() });
        }
        let mut lookup = HashMap::with_capacity(edges.len());
        let mut normalized = Vec::with_capacity(edges.len());
        for (id, &(a, b)) in edges.iter().enumerate() {
            if a == b {
                return Err(GraphError::SelfLoop(a, b));
            }
            if a >= n_cam || b >= n_cam {
                return Err(GraphError::CameraOutOfRange(a, b, n_cam));
            }
            let key = (a.min(b), a.max(b));
            if lookup.insert(key, id).is_some() {
                return Err(GraphError::DuplicateEdge(key.0, key.1));
            }
            normalized.push(key);
        }
        Ok(ViewGraph { n_cam, edges: normalized, evidence, lookup })
    }

    /// A graph with empty evidence on every edge.
    pub fn skeleton(n_cam: usize, edges: Vec<(usize, usize)>) -> Result<Self, GraphError> {
        let evidence = vec![Vec::new(); edges.len()];
        Self::new(n_cam, edges, evidence)
    }

    pub fn n_cam(&self) -> usize {
        self.n_cam
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge(&self, id: usize) -> (usize, usize) {
        self.edges[id]
    }

    pub fn edge_id(&self, i: usize, j: usize) -> Option<usize> {
        self.lookup.get(&(i.min(j), i.max(j))).copied()
    }

    pub fn evidence(&self, id: usize) -> &[Direction] {
        &self.evidence[id]
    }

    pub fn all_evidence(&self) -> &[Vec<Direction>] {
        &self.evidence
    }

    /// Replaces the evidence lists. Used by generators before refinement starts.
    pub fn with_evidence(mut self, evidence: Vec<Vec<Direction>>) -> Result<Self, GraphError> {
        if evidence.len() != self.edges.len() {
            return Err(GraphError::EvidenceCount { expected: self.edges.len(), got: evidence.len() });
        }
        self.evidence = evidence;
        Ok(self)
    }

    /// Sorted neighbor lists.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n_cam];
        for &(i, j) in &self.edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        for list in &mut adj {
            list.sort_unstable();
        }
        adj
    }
}

/// A camera triple `i < j < k` with edge ids `[e_ij, e_jk, e_ik]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Triangle {
    pub cams: [usize; 3],
    pub edges: [usize; 3],
}

/// One triangle seen from one of its edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Incidence {
    pub triangle: usize,
    /// The camera opposite the edge.
    pub witness: usize,
    /// The other two edges of the triangle: `[e_{i,witness}, e_{j,witness}]`.
    pub others: [usize; 2],
}

#[derive(Debug, Clone)]
pub struct TriangleIndex {
    triangles: Vec<Triangle>,
    incidence: Vec<Vec<Incidence>>,
}

impl TriangleIndex {
    pub fn triangles(&self) -> &[Triangle] {
        &self.triangles
    }

    pub fn n_triangles(&self) -> usize {
        self.triangles.len()
    }

    /// Incidence list of an edge, in ascending triangle id.
    pub fn incident_triangles(&self, edge_id: usize) -> Result<&[Incidence], GraphError> {
        self.incidence.get(edge_id).map(Vec::as_slice).ok_or(GraphError::IndexError(edge_id))
    }

    pub fn incidence(&self) -> &[Vec<Incidence>] {
        &self.incidence
    }
}

/// Lists every triple of mutually adjacent cameras once, in lexicographic
/// order, by intersecting sorted adjacency lists.
pub fn enumerate_triangles(graph: &ViewGraph) -> TriangleIndex {
    let adj = graph.adjacency();
    let mut triangles = Vec::new();
    for i in 0..graph.n_cam() {
        for &j in adj[i].iter().filter(|&&j| j > i) {
            let (a, b) = (&adj[i], &adj[j]);
            let (mut p, mut q) = (0, 0);
            while p < a.len() && q < b.len() {
                match a[p].cmp(&b[q]) {
                    std::cmp::Ordering::Less => p += 1,
                    std::cmp::Ordering::Greater => q += 1,
                    std::cmp::Ordering::Equal => {
                        let k = a[p];
                        if k > j {
                            let id = |x, y| graph.edge_id(x, y).expect("adjacent cameras share an edge");
                            triangles.push(Triangle { cams: [i, j, k], edges: [id(i, j), id(j, k), id(i, k)] });
                        }
                        p += 1;
                        q += 1;
                    }
                }
            }
        }
    }

    let mut incidence = vec![Vec::new(); graph.n_edges()];
    for (t, tri) in triangles.iter().enumerate() {
        let [i, j, k] = tri.cams;
        let [e_ij, e_jk, e_ik] = tri.edges;
        incidence[e_ij].push(Incidence { triangle: t, witness: k, others: [e_ik, e_jk] });
        incidence[e_jk].push(Incidence { triangle: t, witness: i, others: [e_ij, e_ik] });
        incidence[e_ik].push(Incidence { triangle: t, witness: j, others: [e_ij, e_jk] });
    }
    TriangleIndex { triangles, incidence }
}

/// View-graph and triangle-context statistics. Medians are lower medians.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GraphStats {
    pub n_cam: usize,
    pub n_edges: usize,
    pub n_triangles: usize,
    pub median_incident_triangles: usize,
    pub fraction_in_triangle: f64,
    pub median_evidence: usize,
}

pub(crate) fn lower_median<T: Copy + PartialOrd>(values: &mut [T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).expect("comparable"));
    Some(values[(values.len() - 1) / 2])
}

pub fn graph_stats(graph: &ViewGraph, tri: &TriangleIndex) -> GraphStats {
    let mut degrees: Vec<usize> = tri.incidence.iter().map(Vec::len).collect();
    let mut counts: Vec<usize> = graph.evidence.iter().map(Vec::len).collect();
    let in_triangle = degrees.iter().filter(|&&d| d > 0).count();
    let m = graph.n_edges();
    GraphStats {
        n_cam: graph.n_cam(),
        n_edges: m,
        n_triangles: tri.n_triangles(),
        median_incident_triangles: lower_median(&mut degrees).unwrap_or(0),
        fraction_in_triangle: if m == 0 { 0.0 } else { in_triangle as f64 / m as f64 },
        median_evidence: lower_median(&mut counts).unwrap_or(0),
    }
}
