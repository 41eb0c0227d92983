//! Triangle-weighted direction refinement.
//!
//! Each sweep reads the previous direction field and writes a fresh one. For
//! every edge it samples two-normal hypotheses from the edge evidence, keeps
//! the current direction as candidate zero, scores every candidate against
//! the normals of incident triangles (weighted by the badness of the two
//! neighbouring edges) and keeps the argmin. Badness is then refreshed from
//! the original evidence.

use log::warn;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angular_residual, unit_normalize, unoriented_angle, Direction};
use crate::init::InitResult;
use crate::rng::{self, Stream, StreamRng};
use crate::viewgraph::{lower_median, TriangleIndex, ViewGraph};

/// How triangle weights are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    /// No triangles: pick the candidate with the lowest badness.
    PointOnly,
    /// Equal weight for every valid triangle.
    Uniform,
    /// Weights from the initial badness, never refreshed.
    Static,
    /// Weights from the current badness.
    Dynamic,
}

impl WeightMode {
    pub fn as_str(self) -> &'static str {
        match self {
            WeightMode::PointOnly => "point-only",
            WeightMode::Uniform => "uniform",
            WeightMode::Static => "static",
            WeightMode::Dynamic => "dynamic",
        }
    }
}

impl std::str::FromStr for WeightMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "point-only" | "point_only" => Ok(WeightMode::PointOnly),
            "uniform" => Ok(WeightMode::Uniform),
            "static" => Ok(WeightMode::Static),
            "dynamic" => Ok(WeightMode::Dynamic),
            other => Err(format!("unknown weighting mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid sweep configuration: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Support scale in degrees.
    pub sigma_deg: f64,
    pub n_cand: usize,
    pub beta: f64,
    pub a_min: f64,
    pub k_max: usize,
    /// Stopping tolerance on the median direction change, in degrees.
    pub tau_stop_deg: f64,
    pub mode: WeightMode,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            sigma_deg: 1.0,
            n_cand: 25,
            beta: 15.0,
            a_min: 1e-3,
            k_max: 4,
            tau_stop_deg: 1e-3,
            mode: WeightMode::Dynamic,
            seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError(m.to_string()));
        if !(self.sigma_deg > 0.0 && self.sigma_deg.is_finite()) {
            return fail("sigma must be positive");
        }
        if !(self.beta >= 0.0) {
            return fail("beta must be non-negative");
        }
        if !(self.a_min > 0.0) {
            return fail("a_min must be positive");
        }
        if self.k_max < 1 {
            return fail("k_max must be at least 1");
        }
        if !(self.tau_stop_deg >= 0.0) {
            return fail("tau_stop must be non-negative");
        }
        Ok(())
    }

    pub fn sigma_rad(&self) -> f64 {
        self.sigma_deg.to_radians()
    }
}

/// Per-edge directions and badness at one sweep index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionField {
    pub directions: Vec<Direction>,
    pub badness: Vec<f64>,
    pub sweep: usize,
}

impl DirectionField {
    pub fn from_init(init: &InitResult) -> Self {
        DirectionField { directions: init.directions.clone(), badness: init.badness.clone(), sweep: 0 }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct SweepReport {
    /// Median unoriented change per sweep, degrees.
    pub delta_deg: Vec<f64>,
    /// Edges that left their incumbent direction, per sweep.
    pub changed: Vec<usize>,
    /// Triangle-score evaluations per sweep.
    pub evaluations: Vec<u64>,
    /// Wall time per sweep in milliseconds (zero where no clock is available).
    pub wall_ms: Vec<f64>,
}

impl SweepReport {
    pub fn sweeps(&self) -> usize {
        self.delta_deg.len()
    }
}

/// Mean Gaussian-kernel support of `g` on the evidence, in [0, 1].
pub fn point_support(g: &Direction, evidence: &[Direction], sigma_rad: f64) -> f64 {
    if evidence.is_empty() {
        warn!("point support requested on an edge without evidence");
        return 0.0;
    }
    let denom = 2.0 * sigma_rad * sigma_rad;
    let sum: f64 = evidence
        .iter()
        .map(|x| {
            let r = angular_residual(g, x);
            (-(r * r) / denom).exp()
        })
        .sum();
    sum / evidence.len() as f64
}

#[inline]
pub fn badness(g: &Direction, evidence: &[Direction], sigma_rad: f64) -> f64 {
    1.0 - point_support(g, evidence, sigma_rad)
}

/// Candidate zero is `current`; then up to `n_cand` normalized cross products of
/// sampled ordered pairs `r1 != r2`. Pairs whose cross product norm is at most
/// `a_min` use up their draw without being replaced.
pub fn build_candidate_pool(
    evidence: &[Direction],
    current: Direction,
    n_cand: usize,
    a_min: f64,
    rng: &mut StreamRng,
) -> Vec<Direction> {
    let mut pool = Vec::with_capacity(n_cand + 1);
    pool.push(current);
    let n = evidence.len();
    if n < 2 {
        return pool;
    }
    for _ in 0..n_cand {
        let r1 = rng.random_range(0..n);
        let mut r2 = rng.random_range(0..n - 1);
        if r2 >= r1 {
            r2 += 1;
        }
        let c = evidence[r1].cross(&evidence[r2]);
        if c.norm() > a_min {
            pool.push(unit_normalize(c).expect("norm above a_min"));
        }
    }
    pool
}

/// The stream used for edge `edge` in sweep `sweep`.
pub fn pool_rng(seed: u64, sweep: usize, edge: usize) -> StreamRng {
    rng::stream(seed, Stream::CandidatePool, sweep as u64, edge as u64)
}

/// Normalized `ga × gb`, or `None` when the triangle context is degenerate.
pub fn triangle_normal(ga: &Direction, gb: &Direction, a_min: f64) -> Option<Direction> {
    let c = ga.cross(gb);
    if c.norm() <= a_min {
        return None;
    }
    unit_normalize(c).ok()
}

/// Softmax of `-beta (s_a + s_b)` over the given triangles.
pub fn triangle_weights(badness_pairs: &[(f64, f64)], beta: f64) -> Vec<f64> {
    let logits: Vec<f64> = badness_pairs.iter().map(|(a, b)| -beta * (a + b)).collect();
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let raw: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / total).collect()
}

/// `Σ w_τ |c · n_τ|`.
#[inline]
pub fn score_candidate(c: &Direction, normals: &[Direction], weights: &[f64]) -> f64 {
    normals.iter().zip(weights).map(|(n, w)| w * c.dot(n).abs()).sum()
}

/// Index of the smallest value; ties go to the lowest index.
fn argmin(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (i, v) in values.enumerate() {
        if v < best.1 {
            best = (i, v);
        }
    }
    best.0
}

/// Result of updating one edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeUpdate {
    pub direction: Direction,
    pub badness: f64,
    /// Pool index of the selected candidate; `None` for a carried-over edge.
    pub selected: Option<usize>,
    pub evaluations: u64,
}

/// Computes the next state of one edge from the previous field only.
///
/// `frozen_badness` is consulted in [`WeightMode::Static`].
pub fn update_edge(
    graph: &ViewGraph,
    tri: &TriangleIndex,
    field: &DirectionField,
    frozen_badness: &[f64],
    config: &SweepConfig,
    edge: usize,
) -> EdgeUpdate {
    let evidence = graph.evidence(edge);
    let current = field.directions[edge];
    let sigma = config.sigma_rad();
    let carry = EdgeUpdate { direction: current, badness: field.badness[edge], selected: None, evaluations: 0 };

    let mut rng = pool_rng(config.seed, field.sweep, edge);
    let pool = build_candidate_pool(evidence, current, config.n_cand, config.a_min, &mut rng);

    if config.mode == WeightMode::PointOnly {
        if evidence.is_empty() {
            return carry;
        }
        let scores: Vec<f64> = pool.iter().map(|c| badness(c, evidence, sigma)).collect();
        let best = argmin(scores.iter().copied());
        return EdgeUpdate { direction: pool[best], badness: scores[best], selected: Some(best), evaluations: 0 };
    }

    let incidences = tri.incident_triangles(edge).expect("edge id in range");
    let mut normals = Vec::with_capacity(incidences.len());
    let mut pairs = Vec::with_capacity(incidences.len());
    let source = match config.mode {
        WeightMode::Static => frozen_badness,
        _ => &field.badness,
    };
    for inc in incidences {
        let [a, b] = inc.others;
        if let Some(n) = triangle_normal(&field.directions[a], &field.directions[b], config.a_min) {
            normals.push(n);
            pairs.push((source[a], source[b]));
        }
    }
    if normals.is_empty() {
        return carry;
    }

    let weights = match config.mode {
        WeightMode::Uniform => vec![1.0 / normals.len() as f64; normals.len()],
        _ => triangle_weights(&pairs, config.beta),
    };
    let best = argmin(pool.iter().map(|c| score_candidate(c, &normals, &weights)));
    let direction = pool[best];
    EdgeUpdate {
        direction,
        badness: badness(&direction, evidence, sigma),
        selected: Some(best),
        evaluations: (pool.len() * normals.len()) as u64,
    }
}

/// Per-sweep statistics returned alongside the next field.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepStats {
    pub delta_deg: f64,
    pub changed: usize,
    pub evaluations: u64,
}

/// One synchronous sweep.
pub fn sweep(
    graph: &ViewGraph,
    tri: &TriangleIndex,
    field: &DirectionField,
    frozen_badness: &[f64],
    config: &SweepConfig,
) -> (DirectionField, SweepStats) {
    let m = graph.n_edges();
    let updates = crate::map_edges(m, |e| update_edge(graph, tri, field, frozen_badness, config, e));

    let mut next = DirectionField {
        directions: Vec::with_capacity(m),
        badness: Vec::with_capacity(m),
        sweep: field.sweep + 1,
    };
    let mut changes = Vec::with_capacity(m);
    let mut stats = SweepStats { delta_deg: 0.0, changed: 0, evaluations: 0 };
    for (e, u) in updates.into_iter().enumerate() {
        changes.push(unoriented_angle(&u.direction, &field.directions[e]));
        if u.selected.is_some_and(|s| s > 0) {
            stats.changed += 1;
        }
        stats.evaluations += u.evaluations;
        next.directions.push(u.direction);
        next.badness.push(u.badness);
    }
    stats.delta_deg = lower_median(&mut changes).unwrap_or(0.0);
    (next, stats)
}

/// Runs up to `k_max` sweeps, stopping once `t >= 1` and the median change
/// drops below `tau_stop_deg`.
pub fn run(graph: &ViewGraph, tri: &TriangleIndex, init: &InitResult, config: &SweepConfig) -> (DirectionField, SweepReport) {
    run_sweeps(graph, tri, init, config, config.k_max)
}

/// As [`run`] with an explicit sweep cap (zero returns the initial field).
pub fn run_sweeps(
    graph: &ViewGraph,
    tri: &TriangleIndex,
    init: &InitResult,
    config: &SweepConfig,
    max_sweeps: usize,
) -> (DirectionField, SweepReport) {
    let mut field = DirectionField::from_init(init);
    let mut report = SweepReport::default();
    for t in 0..max_sweeps {
        let clock = crate::clock::Stopwatch::start();
        let (next, stats) = sweep(graph, tri, &field, &init.badness, config);
        report.wall_ms.push(clock.elapsed_ms());
        report.delta_deg.push(stats.delta_deg);
        report.changed.push(stats.changed);
        report.evaluations.push(stats.evaluations);
        field = next;
        if t >= 1 && stats.delta_deg < config.tau_stop_deg {
            break;
        }
    }
    (field, report)
}
