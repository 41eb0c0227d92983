//! Ground-truth scenes, correspondence-normal evidence, the edge/match
//! corruption model, and two-class instances for exact-recovery experiments.

use nalgebra::Vector3;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{unit_normalize, unoriented_error, Direction};
use crate::gnlm::tangent_basis;
use crate::init::{random_direction, InitResult};
use crate::rng::{self, Stream, StreamRng};
use crate::tride::{badness, build_candidate_pool, pool_rng, point_support, triangle_normal, DirectionField, SweepConfig};
use crate::viewgraph::{TriangleIndex, ViewGraph};

const MAX_LOCATION_RETRIES: u64 = 16;
const COINCIDENT: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SyntheticError {
    #[error("invalid graph model: {0}")]
    InvalidModel(String),
    #[error("could not place cameras without coincident pairs after {0} attempts")]
    GenerationFailure(u64),
    #[error("invalid fraction {0}; expected a value in [0, 1]")]
    InvalidFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GraphKind {
    Complete,
    ErdosRenyi { p: f64 },
    Rgg { r: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraphModel {
    pub kind: GraphKind,
    pub n: usize,
}

impl GraphModel {
    pub fn complete(n: usize) -> Self {
        GraphModel { kind: GraphKind::Complete, n }
    }

    pub fn erdos_renyi(n: usize, p: f64) -> Self {
        GraphModel { kind: GraphKind::ErdosRenyi { p }, n }
    }

    pub fn rgg(n: usize, r: f64) -> Self {
        GraphModel { kind: GraphKind::Rgg { r }, n }
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        match self.kind {
            // p = 0 is accepted to produce empty graphs
            GraphKind::ErdosRenyi { p } if !(0.0..=1.0).contains(&p) => {
                Err(SyntheticError::InvalidModel(format!("edge probability {p} outside [0, 1]")))
            }
            GraphKind::Rgg { r } if !(r > 0.0) => Err(SyntheticError::InvalidModel(format!("radius {r} must be positive"))),
            _ => Ok(()),
        }
    }
}

/// Camera locations and the true direction of every edge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneTruth {
    pub locations: Vec<[f64; 3]>,
    pub directions: Vec<Direction>,
}

impl SceneTruth {
    /// Directions `normalize(y_i - y_j)` for the given edges.
    pub fn from_locations(locations: Vec<[f64; 3]>, edges: &[(usize, usize)]) -> Option<Self> {
        let directions = edges
            .iter()
            .map(|&(i, j)| unit_normalize(Vector3::from(locations[i]) - Vector3::from(locations[j])).ok())
            .collect::<Option<Vec<_>>>()?;
        Some(SceneTruth { locations, directions })
    }
}

fn uniform_sphere(rng: &mut StreamRng) -> Direction {
    loop {
        let v = Vector3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        if let Ok(d) = unit_normalize(v) {
            return d;
        }
    }
}

/// `n` independent uniform-sphere normals (pure background evidence).
pub fn uniform_sphere_normals(n: usize, seed: u64) -> Vec<Direction> {
    let mut rng = rng::stream(seed, Stream::Evidence, u64::MAX, 0);
    (0..n).map(|_| uniform_sphere(&mut rng)).collect()
}

/// Uniform point on the great circle orthogonal to `g`.
fn on_great_circle(g: &Direction, rng: &mut StreamRng) -> Direction {
    let u = tangent_basis(g);
    let phi = rng.random_range(0.0..std::f64::consts::TAU);
    unit_normalize(u.column(0) * phi.cos() + u.column(1) * phi.sin()).expect("unit combination")
}

/// Camera locations uniform in the unit cube and edges per the model.
pub fn gen_scene(model: &GraphModel, seed: u64) -> Result<(ViewGraph, SceneTruth), SyntheticError> {
    model.validate()?;
    let n = model.n;
    let mut edges = Vec::new();
    match model.kind {
        GraphKind::Complete => edges.extend((0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j)))),
        GraphKind::ErdosRenyi { p } => {
            let mut rng = rng::stream(seed, Stream::Edges, 0, 0);
            for i in 0..n {
                for j in i + 1..n {
                    if rng.random::<f64>() < p {
                        edges.push((i, j));
                    }
                }
            }
        }
        GraphKind::Rgg { .. } => {}
    }

    for attempt in 0..MAX_LOCATION_RETRIES {
        let mut rng = rng::stream(seed, Stream::Locations, attempt, 0);
        let locations: Vec<[f64; 3]> = (0..n).map(|_| [rng.random(), rng.random(), rng.random()]).collect();
        let dist = |i: usize, j: usize| (Vector3::from(locations[i]) - Vector3::from(locations[j])).norm();
        let edges = match model.kind {
            GraphKind::Rgg { r } => (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).filter(|&(i, j)| dist(i, j) <= r).collect(),
            _ => edges.clone(),
        };
        if edges.iter().any(|&(i, j)| dist(i, j) <= COINCIDENT) {
            continue;
        }
        let truth = SceneTruth::from_locations(locations, &edges).expect("non-coincident endpoints");
        let graph = ViewGraph::skeleton(n, edges).expect("generated edges are valid");
        return Ok((graph, truth));
    }
    Err(SyntheticError::GenerationFailure(MAX_LOCATION_RETRIES))
}

/// `ceil(frac * n)` with protection against representation error.
fn fraction_count(frac: f64, n: usize) -> usize {
    ((frac * n as f64 - 1e-9).ceil().max(0.0) as usize).min(n)
}

/// Inliers on the great circle `g*⟂` perturbed by a folded-Gaussian rotation,
/// followed by uniform-sphere outliers, in shuffled order.
pub fn gen_evidence(truth: &Direction, n_matches: usize, inlier_frac: f64, noise_deg: f64, rng: &mut StreamRng) -> Vec<Direction> {
    let inliers = fraction_count(inlier_frac, n_matches);
    let noise = Normal::new(0.0, noise_deg.to_radians()).expect("noise must be finite and non-negative");
    let mut normals = Vec::with_capacity(n_matches);
    for _ in 0..inliers {
        let x = on_great_circle(truth, rng);
        let alpha: f64 = noise.sample(rng).abs();
        if alpha == 0.0 {
            normals.push(x);
            continue;
        }
        let axis = on_great_circle(&x, rng);
        let rotated = x.vector() * alpha.cos() + axis.cross(&x) * alpha.sin();
        normals.push(unit_normalize(rotated).expect("rotation keeps unit length"));
    }
    normals.extend((inliers..n_matches).map(|_| uniform_sphere(rng)));
    normals.shuffle(rng);
    normals
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorruptionSpec {
    /// Probability that an edge is corrupted.
    pub edge_fraction: f64,
    /// Fraction of normals replaced on a corrupted edge.
    pub match_fraction: f64,
    pub inlier_noise_deg: f64,
}

impl CorruptionSpec {
    pub fn none() -> Self {
        CorruptionSpec { edge_fraction: 0.0, match_fraction: 0.0, inlier_noise_deg: 0.0 }
    }

    pub fn validate(&self) -> Result<(), SyntheticError> {
        for f in [self.edge_fraction, self.match_fraction] {
            if !(0.0..=1.0).contains(&f) {
                return Err(SyntheticError::InvalidFraction(f));
            }
        }
        if !(self.inlier_noise_deg >= 0.0) {
            return Err(SyntheticError::InvalidModel("noise must be non-negative".into()));
        }
        Ok(())
    }
}

/// Marks each edge corrupted with probability `edge_fraction` and replaces
/// `round(match_fraction * n_e)` of its normals, chosen without replacement,
/// with uniform-sphere normals. Returns the new graph and the corruption mask.
pub fn corrupt(graph: &ViewGraph, spec: &CorruptionSpec, seed: u64) -> (ViewGraph, Vec<bool>) {
    let mut mask = Vec::with_capacity(graph.n_edges());
    let mut evidence = Vec::with_capacity(graph.n_edges());
    for e in 0..graph.n_edges() {
        let mut rng = rng::stream(seed, Stream::Corruption, e as u64, 0);
        let mut normals = graph.evidence(e).to_vec();
        let hit = rng.random::<f64>() < spec.edge_fraction;
        if hit {
            let k = ((spec.match_fraction * normals.len() as f64).round() as usize).min(normals.len());
            for r in index::sample(&mut rng, normals.len(), k) {
                normals[r] = uniform_sphere(&mut rng);
            }
        }
        mask.push(hit);
        evidence.push(normals);
    }
    (graph.clone().with_evidence(evidence).expect("same edge count"), mask)
}

/// Parameters of a generated, possibly corrupted, instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub model: GraphModel,
    pub n_matches: usize,
    pub inlier_frac: f64,
    pub corruption: CorruptionSpec,
    pub seed: u64,
}

impl InstanceSpec {
    /// Twelve cameras, complete graph, 80 exact matches per edge.
    pub fn stress_test(edge_fraction: f64, match_fraction: f64, seed: u64) -> Self {
        InstanceSpec {
            model: GraphModel::complete(12),
            n_matches: 80,
            inlier_frac: 1.0,
            corruption: CorruptionSpec { edge_fraction, match_fraction, inlier_noise_deg: 0.0 },
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: ViewGraph,
    pub truth: SceneTruth,
    pub corrupted: Vec<bool>,
}

pub fn gen_instance(spec: &InstanceSpec) -> Result<Instance, SyntheticError> {
    spec.corruption.validate()?;
    if !(0.0..=1.0).contains(&spec.inlier_frac) {
        return Err(SyntheticError::InvalidFraction(spec.inlier_frac));
    }
    let (skeleton, truth) = gen_scene(&spec.model, spec.seed)?;
    let evidence = truth
        .directions
        .iter()
        .enumerate()
        .map(|(e, g)| {
            let mut rng = rng::stream(spec.seed, Stream::Evidence, e as u64, 0);
            gen_evidence(g, spec.n_matches, spec.inlier_frac, spec.corruption.inlier_noise_deg, &mut rng)
        })
        .collect();
    let clean = skeleton.with_evidence(evidence).expect("one list per edge");
    let (graph, corrupted) = corrupt(&clean, &spec.corruption, spec.seed);
    Ok(Instance { graph, truth, corrupted })
}

/// Expected support of a uniformly random normal:
/// `∫_0^{π/2} exp(-α²/(2σ²)) cos α dα`, by adaptive Simpson quadrature.
pub fn background_support_constant(sigma_rad: f64) -> f64 {
    let f = |a: f64| (-(a * a) / (2.0 * sigma_rad * sigma_rad)).exp() * a.cos();
    let end = std::f64::consts::FRAC_PI_2;
    // panels at 0, σ, 2σ, 4σ, ... resolve the peak when σ is small
    let mut knots = vec![0.0];
    let mut x = sigma_rad;
    while x < end {
        knots.push(x);
        x *= 2.0;
    }
    knots.push(end);
    knots.windows(2).map(|w| adaptive_simpson(&f, w[0], w[1], 1e-13, 48)).sum()
}

fn adaptive_simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(f: &impl Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + recurse(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    recurse(f, a, b, fa, fm, fb, simpson(fa, fm, fb, a, b), tol, depth)
}

/// One-sweep error bound `(1-a)/(a c_wd) · exp(-β Δ)`.
pub fn theory_bound(a: f64, c_wd: f64, beta: f64, delta: f64) -> f64 {
    (1.0 - a) / (a * c_wd) * (-beta * delta).exp()
}

/// Parameters of a two-class (clean anchor / weak edge) instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheorySpec {
    pub model: GraphModel,
    /// Probability that an edge is weak.
    pub q: f64,
    /// Weak edges carry a `weak_truth_fraction` of exact truth inliers when
    /// set, and only two otherwise.
    pub pool_contains_truth: bool,
    pub weak_truth_fraction: f64,
    /// Target support of clean anchors at their (true) initial direction.
    pub anchor_support: f64,
    /// Target support of weak edges at their (wrong) initial direction.
    pub weak_support: f64,
    pub n_matches: usize,
    pub sigma_deg: f64,
    pub seed: u64,
}

impl TheorySpec {
    pub fn new(model: GraphModel, q: f64, seed: u64) -> Self {
        TheorySpec {
            model,
            q,
            pool_contains_truth: true,
            weak_truth_fraction: 0.6,
            anchor_support: 0.8,
            weak_support: 0.1,
            n_matches: 100,
            sigma_deg: 1.0,
            seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TheoryInstance {
    pub graph: ViewGraph,
    pub truth: SceneTruth,
    pub init: InitResult,
    pub clean: Vec<bool>,
}

/// Builds a two-class instance. Clean edges start at `±g*` with an exact
/// inlier fraction giving support near `anchor_support`; weak edges start at a
/// random direction backed by decoy normals giving support near
/// `weak_support`, plus exact truth inliers for candidate recall.
pub fn gen_theory_instance(spec: &TheorySpec) -> Result<TheoryInstance, SyntheticError> {
    if !(0.0..=1.0).contains(&spec.q) {
        return Err(SyntheticError::InvalidFraction(spec.q));
    }
    if !(spec.anchor_support > spec.weak_support) {
        return Err(SyntheticError::InvalidModel("anchor support must exceed weak support".into()));
    }
    let (skeleton, truth) = gen_scene(&spec.model, spec.seed)?;
    let sigma = spec.sigma_deg.to_radians();
    let b = background_support_constant(sigma);
    let inlier_share = |target: f64| ((target - b) / (1.0 - b)).clamp(0.0, 1.0);
    let n = spec.n_matches;

    let mut evidence = Vec::with_capacity(skeleton.n_edges());
    let mut directions = Vec::with_capacity(skeleton.n_edges());
    let mut badness_values = Vec::with_capacity(skeleton.n_edges());
    let mut clean = Vec::with_capacity(skeleton.n_edges());
    for (e, g_star) in truth.directions.iter().enumerate() {
        let mut rng = rng::stream(spec.seed, Stream::TheoryInstance, e as u64, 0);
        let is_clean = rng.random::<f64>() >= spec.q;
        let mut normals = Vec::with_capacity(n);
        let start = if is_clean {
            let k = (inlier_share(spec.anchor_support) * n as f64).round() as usize;
            normals.extend((0..k.min(n)).map(|_| on_great_circle(g_star, &mut rng)));
            *g_star
        } else {
            let g0 = random_direction(spec.seed ^ 0x7EA4, e);
            let decoys = ((inlier_share(spec.weak_support) * n as f64).round() as usize).min(n);
            let wanted = if spec.pool_contains_truth { fraction_count(spec.weak_truth_fraction, n) } else { 2 };
            let inliers = wanted.max(2).min(n - decoys);
            normals.extend((0..decoys).map(|_| on_great_circle(&g0, &mut rng)));
            normals.extend((0..inliers).map(|_| on_great_circle(g_star, &mut rng)));
            g0
        };
        while normals.len() < n {
            normals.push(uniform_sphere(&mut rng));
        }
        normals.shuffle(&mut rng);
        badness_values.push(badness(&start, &normals, sigma));
        directions.push(start);
        evidence.push(normals);
        clean.push(is_clean);
    }
    let graph = skeleton.with_evidence(evidence).expect("one list per edge");
    Ok(TheoryInstance { graph, truth, init: InitResult { directions, badness: badness_values }, clean })
}

/// Minimum over unit `h ⟂ g` of the mean `|h·n_k|` for normals `n_k ⟂ g`.
///
/// The objective is a sum of `|cos(θ - φ_k)|`, concave between consecutive
/// zeros, so the minimum sits at one of the zeros `θ = φ_k + π/2`.
pub fn well_distributedness(g: &Direction, normals: &[Direction]) -> f64 {
    if normals.is_empty() {
        return 0.0;
    }
    let u = tangent_basis(g);
    let (u1, u2) = (u.column(0), u.column(1));
    let angles: Vec<f64> = normals.iter().map(|n| n.vector().dot(&u2).atan2(n.vector().dot(&u1))).collect();
    angles
        .iter()
        .map(|phi| {
            let theta = phi + std::f64::consts::FRAC_PI_2;
            angles.iter().map(|p| (theta - p).cos().abs()).sum::<f64>() / angles.len() as f64
        })
        .fold(f64::INFINITY, f64::min)
}

/// Realized constants of the one-sweep error bound for a given state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WitnessConstants {
    /// Minimum fraction of retained witnesses that are clean-clean.
    pub a: f64,
    /// Minimum well-distributedness of clean-clean witness normals.
    pub c_wd: f64,
    /// Minimum support-sum gap (infinite when no edge has a non-clean witness).
    pub delta: f64,
}

/// Computes `(a, c_wd, Δ)` from the retained triangle contexts of `init`.
pub fn witness_constants(
    graph: &ViewGraph,
    tri: &TriangleIndex,
    truth: &SceneTruth,
    clean: &[bool],
    init: &InitResult,
    a_min: f64,
) -> WitnessConstants {
    let mut out = WitnessConstants { a: 1.0, c_wd: f64::INFINITY, delta: f64::INFINITY };
    for e in 0..graph.n_edges() {
        let mut good_h = f64::INFINITY;
        let mut bad_h = f64::NEG_INFINITY;
        let mut good_normals = Vec::new();
        let mut retained = 0usize;
        for inc in tri.incident_triangles(e).expect("edge id in range") {
            let [a, b] = inc.others;
            if triangle_normal(&init.directions[a], &init.directions[b], a_min).is_none() {
                continue;
            }
            retained += 1;
            let h = 2.0 - init.badness[a] - init.badness[b];
            if clean[a] && clean[b] {
                good_h = good_h.min(h);
                if let Ok(n) = unit_normalize(truth.directions[a].cross(&truth.directions[b])) {
                    good_normals.push(n);
                }
            } else {
                bad_h = bad_h.max(h);
            }
        }
        if retained == 0 {
            continue;
        }
        out.a = out.a.min(good_normals.len() as f64 / retained as f64);
        out.c_wd = out.c_wd.min(well_distributedness(&truth.directions[e], &good_normals));
        out.delta = out.delta.min(good_h - bad_h);
    }
    out
}

/// Smallest error of a non-true candidate over every first-sweep pool, or
/// `None` if some pool misses the true direction (within `exact_tol`).
pub fn candidate_separation(
    graph: &ViewGraph,
    field: &DirectionField,
    truth: &SceneTruth,
    config: &SweepConfig,
    exact_tol: f64,
) -> Option<f64> {
    let mut eta = f64::INFINITY;
    for e in 0..graph.n_edges() {
        let mut rng = pool_rng(config.seed, field.sweep, e);
        let pool = build_candidate_pool(graph.evidence(e), field.directions[e], config.n_cand, config.a_min, &mut rng);
        let errors: Vec<f64> = pool.iter().map(|c| unoriented_error(c, &truth.directions[e])).collect();
        if !errors.iter().any(|&x| x <= exact_tol) {
            return None;
        }
        eta = errors.iter().copied().filter(|&x| x > exact_tol).fold(eta, f64::min);
    }
    Some(eta)
}

/// Point support of the true direction on every edge.
pub fn truth_support(graph: &ViewGraph, truth: &SceneTruth, sigma_rad: f64) -> Vec<f64> {
    (0..graph.n_edges()).map(|e| point_support(&truth.directions[e], graph.evidence(e), sigma_rad)).collect()
}
