//! Edge-local initial directions: least-squares PCA, the Fast Median Subspace
//! reweighting, and a random diagnostic start.

use log::warn;
use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{unit_normalize, Direction};
use crate::rng::{self, Stream};
use crate::tride::badness;
use crate::viewgraph::ViewGraph;

/// Eigenvalues closer than this are treated as tied.
pub const EIGEN_TIE: f64 = 1e-12;
pub const FMS_DELTA: f64 = 1e-10;
pub const FMS_MAX_ITER: usize = 100;
const FMS_CONVERGED_RAD: f64 = 1e-7;
const JACOBI_SWEEPS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum InitError {
    #[error("at least two normals are needed, got {0}")]
    InsufficientEvidence(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMethod {
    Pca,
    Fms,
    Random,
}

impl InitMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            InitMethod::Pca => "pca",
            InitMethod::Fms => "fms",
            InitMethod::Random => "random",
        }
    }
}

impl std::str::FromStr for InitMethod {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "pca" => Ok(InitMethod::Pca),
            "fms" => Ok(InitMethod::Fms),
            "random" | "ran" => Ok(InitMethod::Random),
            other => Err(format!("unknown initializer `{other}`")),
        }
    }
}

/// Initial direction and badness for every edge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InitResult {
    pub directions: Vec<Direction>,
    pub badness: Vec<f64>,
}

/// Eigen-decomposition of a symmetric 3×3 matrix by cyclic Jacobi rotations.
/// Returns eigenvalues and the matching eigenvectors as columns.
pub fn symmetric_eigen3(m: &Matrix3<f64>) -> (Vector3<f64>, Matrix3<f64>) {
    let mut a = *m;
    let mut v = Matrix3::identity();
    for _ in 0..JACOBI_SWEEPS {
        let off = a[(0, 1)].powi(2) + a[(0, 2)].powi(2) + a[(1, 2)].powi(2);
        if off == 0.0 {
            break;
        }
        for (p, q) in [(0, 1), (0, 2), (1, 2)] {
            let apq = a[(p, q)];
            if apq == 0.0 {
                continue;
            }
            let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
            let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
            let t = if theta == 0.0 { 1.0 } else { t };
            let c = 1.0 / (t * t + 1.0).sqrt();
            let s = t * c;
            let mut rot = Matrix3::identity();
            rot[(p, p)] = c;
            rot[(q, q)] = c;
            rot[(p, q)] = s;
            rot[(q, p)] = -s;
            a = rot.transpose() * a * rot;
            a[(p, q)] = 0.0;
            a[(q, p)] = 0.0;
            v *= rot;
        }
    }
    (a.diagonal(), v)
}

/// Unit eigenvector of the smallest eigenvalue. Ties pick the
/// lexicographically largest canonical eigenvector.
fn smallest_eigenvector(m: &Matrix3<f64>) -> Direction {
    let (values, vectors) = symmetric_eigen3(m);
    let min = values.min();
    (0..3)
        .filter(|&i| values[i] - min <= EIGEN_TIE)
        .map(|i| unit_normalize(vectors.column(i).into_owned()).expect("Jacobi columns are orthonormal"))
        .max_by(|a, b| a.to_array().partial_cmp(&b.to_array()).expect("finite"))
        .expect("at least one eigenvalue attains the minimum")
}

fn weighted_scatter(normals: &[Direction], weight: impl Fn(&Direction) -> f64) -> Matrix3<f64> {
    let mut total = 0.0;
    let mut m = Matrix3::zeros();
    for x in normals {
        let w = weight(x);
        m += w * x.vector() * x.vector().transpose();
        total += w;
    }
    m / total
}

/// Direction minimizing `Σ (g·x)²`: the least-variance axis of the normals.
pub fn pca_direction(normals: &[Direction]) -> Result<Direction, InitError> {
    if normals.len() < 2 {
        return Err(InitError::InsufficientEvidence(normals.len()));
    }
    Ok(smallest_eigenvector(&weighted_scatter(normals, |_| 1.0)))
}

/// Iteratively reweighted PCA with weights `1 / max(|g·x|, delta)`, started at
/// the PCA solution.
pub fn fms_direction(normals: &[Direction], max_iter: usize, delta: f64) -> Result<Direction, InitError> {
    let mut g = pca_direction(normals)?;
    for _ in 0..max_iter {
        let next = smallest_eigenvector(&weighted_scatter(normals, |x| 1.0 / g.dot(x).abs().max(delta)));
        let moved = next.cross(&g).norm();
        g = next;
        if moved < FMS_CONVERGED_RAD {
            break;
        }
    }
    Ok(g)
}

/// Uniform direction on the sphere determined by `(seed, edge_id)`.
pub fn random_direction(seed: u64, edge_id: usize) -> Direction {
    let mut rng = rng::stream(seed, Stream::RandomInit, edge_id as u64, 0);
    loop {
        let v = Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        if let Ok(d) = unit_normalize(v) {
            return d;
        }
    }
}

/// Initial field for the whole graph. Badness is `1 - support(g)` except for the
/// random method, which draws it uniformly.
pub fn initialize(graph: &ViewGraph, method: InitMethod, sigma_deg: f64, seed: u64) -> InitResult {
    let sigma = sigma_deg.to_radians();
    let per_edge = |e: usize| -> (Direction, f64) {
        let evidence = graph.evidence(e);
        let estimate = match method {
            InitMethod::Pca => pca_direction(evidence),
            InitMethod::Fms => fms_direction(evidence, FMS_MAX_ITER, FMS_DELTA),
            InitMethod::Random => {
                let u: f64 = rng::stream(seed, Stream::RandomBadness, e as u64, 0).random();
                return (random_direction(seed, e), u);
            }
        };
        let g = estimate.unwrap_or_else(|err| {
            warn!("edge {e}: {err}; falling back to a random direction");
            random_direction(seed, e)
        });
        (g, badness(&g, evidence, sigma))
    };
    let (directions, badness) = crate::map_edges(graph.n_edges(), per_edge).into_iter().unzip();
    InitResult { directions, badness }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::unoriented_angle;

    #[test]
    fn jacobi_diagonalizes() {
        let m = Matrix3::new(4.0, 1.0, -2.0, 1.0, 2.0, 0.5, -2.0, 0.5, 3.0);
        let (vals, vecs) = symmetric_eigen3(&m);
        let recon = vecs * Matrix3::from_diagonal(&vals) * vecs.transpose();
        assert!((recon - m).amax() < 1e-12);
        assert!((vecs.transpose() * vecs - Matrix3::identity()).amax() < 1e-12);
    }

    #[test]
    fn pca_plane() {
        let s = 0.5f64.sqrt();
        let normals = [Direction::x(), Direction::y(), Direction::from_unit(Vector3::new(s, s, 0.0))];
        assert_eq!(pca_direction(&normals).unwrap(), Direction::z());
        assert_eq!(pca_direction(&normals[..1]), Err(InitError::InsufficientEvidence(1)));
        assert_eq!(fms_direction(&[], 10, FMS_DELTA), Err(InitError::InsufficientEvidence(0)));
    }

    #[test]
    fn pca_tie_break_is_deterministic() {
        // isotropic scatter: every axis ties, the largest canonical one is e_x
        let normals = [Direction::x(), Direction::y(), Direction::z()];
        assert_eq!(pca_direction(&normals).unwrap(), Direction::x());
    }

    #[test]
    fn fms_respects_iteration_cap() {
        let normals: Vec<_> = (0..20).map(|e| random_direction(5, e)).collect();
        let g = fms_direction(&normals, 100, FMS_DELTA).unwrap();
        assert!((g.vector().norm() - 1.0).abs() < 1e-12);
        assert!(fms_direction(&normals, 0, FMS_DELTA).unwrap() == pca_direction(&normals).unwrap());
    }

    #[test]
    fn random_is_keyed() {
        assert_eq!(random_direction(11, 4), random_direction(11, 4));
        assert!(unoriented_angle(&random_direction(11, 4), &random_direction(11, 5)) > 0.0);
        assert!(random_direction(11, 4).is_canonical());
    }

    #[test]
    fn fallback_for_thin_evidence() {
        let g = ViewGraph::new(2, vec![(0, 1)], vec![vec![Direction::x()]]).unwrap();
        let init = initialize(&g, InitMethod::Pca, 1.0, 9);
        assert_eq!(init.directions[0], random_direction(9, 0));
    }
}
