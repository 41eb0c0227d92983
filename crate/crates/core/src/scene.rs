//! JSON scene files: a view graph with per-edge normals and an optional truth
//! section.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{unit_normalize, Direction, GeometryError};
use crate::synthetic::{Instance, SceneTruth};
use crate::viewgraph::{GraphError, ViewGraph};

/// Normals with norms further than this from one are rejected.
pub const UNIT_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("edge {edge}: normal {index} is not a finite unit vector")]
    BadNormal { edge: usize, index: usize },
    #[error("truth: {0}")]
    Truth(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthSection {
    pub locations: Vec<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupted: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneFile {
    pub n_cam: usize,
    pub edges: Vec<[usize; 2]>,
    pub normals: Vec<Vec<[f64; 3]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<TruthSection>,
}

/// A loaded scene.
#[derive(Debug, Clone)]
pub struct Scene {
    pub graph: ViewGraph,
    pub truth: Option<SceneTruth>,
    pub corrupted: Option<Vec<bool>>,
}

fn to_direction(v: [f64; 3]) -> Result<Direction, GeometryError> {
    let n = nalgebra::Vector3::from(v);
    if !n.iter().all(|c| c.is_finite()) || (n.norm() - 1.0).abs() > UNIT_TOL {
        return Err(GeometryError::DegenerateVector);
    }
    if (n.norm() - 1.0).abs() <= 1e-14 {
        return Ok(Direction::from(v).canonical());
    }
    unit_normalize(n)
}

impl SceneFile {
    pub fn from_instance(instance: &Instance) -> Self {
        let mut file = Self::from_graph(&instance.graph);
        file.truth = Some(TruthSection { locations: instance.truth.locations.clone(), corrupted: Some(instance.corrupted.clone()) });
        file
    }

    pub fn from_graph(graph: &ViewGraph) -> Self {
        SceneFile {
            n_cam: graph.n_cam(),
            edges: graph.edges().iter().map(|&(i, j)| [i, j]).collect(),
            normals: graph.all_evidence().iter().map(|ev| ev.iter().map(|d| d.to_array()).collect()).collect(),
            truth: None,
        }
    }

    pub fn into_scene(self) -> Result<Scene, SceneError> {
        let evidence = self
            .normals
            .iter()
            .enumerate()
            .map(|(e, ev)| {
                ev.iter()
                    .enumerate()
                    .map(|(k, &v)| to_direction(v).map_err(|_| SceneError::BadNormal { edge: e, index: k }))
                    .collect::<Result<Vec<_>, _>>()
            })
            .collect::<Result<Vec<_>, _>>()?;
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e[0], e[1])).collect();
        let graph = ViewGraph::new(self.n_cam, edges, evidence)?;
        let (truth, corrupted) = match self.truth {
            None => (None, None),
            Some(t) => {
                if t.locations.len() != self.n_cam {
                    return Err(SceneError::Truth(format!("{} locations for {} cameras", t.locations.len(), self.n_cam)));
                }
                if t.corrupted.as_ref().is_some_and(|m| m.len() != graph.n_edges()) {
                    return Err(SceneError::Truth("corruption mask length differs from edge count".into()));
                }
                let truth = SceneTruth::from_locations(t.locations, graph.edges())
                    .ok_or_else(|| SceneError::Truth("coincident or non-finite camera locations".into()))?;
                (Some(truth), t.corrupted)
            }
        };
        Ok(Scene { graph, truth, corrupted })
    }
}

pub fn parse_scene(json: &str) -> Result<Scene, SceneError> {
    serde_json::from_str::<SceneFile>(json)?.into_scene()
}

pub fn load_scene(path: &std::path::Path) -> Result<Scene, SceneError> {
    parse_scene(&std::fs::read_to_string(path)?)
}

pub fn scene_to_json(file: &SceneFile) -> String {
    serde_json::to_string(file).expect("scene files serialize")
}
