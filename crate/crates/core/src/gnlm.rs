//! Determinant-enforcement baselines on the product of spheres.
//!
//! Both methods linearize the triangle residual `d = g_a · (g_b × g_c)` in
//! per-edge tangent coordinates and retract by normalization after every
//! step. GN projects onto the linearized constraint set with a minimum-norm
//! step; LM minimizes a robust point term plus weighted triangle residuals.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, Matrix2, Matrix3x2, RowVector2, Vector2, Vector3};
use std::ops::AddAssign;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{triple_product, unit_normalize, Direction, GeometryError};
use crate::viewgraph::{TriangleIndex, ViewGraph};

/// Regularization used when the unregularized KKT system is singular.
pub const FALLBACK_RHO: f64 = 1e-8;
const SIGMA_FLOOR: f64 = 1e-6;
const MAD_SCALE: f64 = 1.4826;
const PIVOT_RATIO: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GnlmError {
    #[error("KKT system is singular")]
    SolveFailure,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// `[u1 u2]` spanning `g⟂`: Gram–Schmidt on the coordinate axis least aligned
/// with `g` (lowest index on ties), then `u2 = g × u1`.
pub fn tangent_basis(g: &Direction) -> Matrix3x2<f64> {
    let v = g.vector();
    let k = (0..3).fold(0, |best, i| if v[i].abs() < v[best].abs() { i } else { best });
    let axis = Vector3::ith(k, 1.0);
    let u1 = (axis - axis.dot(v) * v).normalize();
    let u2 = v.cross(&u1);
    Matrix3x2::from_columns(&[u1, u2])
}

/// `normalize(g + U z)` with the canonical sign.
pub fn retract(g: &Direction, basis: &Matrix3x2<f64>, z: &Vector2<f64>) -> Result<Direction, GeometryError> {
    unit_normalize(g.vector() + basis * z)
}

/// Directions with their tangent bases.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentState {
    directions: Vec<Direction>,
    bases: Vec<Matrix3x2<f64>>,
}

impl TangentState {
    pub fn new(directions: Vec<Direction>) -> Self {
        let bases = directions.iter().map(tangent_basis).collect();
        TangentState { directions, bases }
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn bases(&self) -> &[Matrix3x2<f64>] {
        &self.bases
    }

    pub fn into_directions(self) -> Vec<Direction> {
        self.directions
    }

    pub fn n_edges(&self) -> usize {
        self.directions.len()
    }

    /// Applies a stacked tangent increment (two entries per edge).
    pub fn retracted(&self, z: &DVector<f64>) -> Result<TangentState, GeometryError> {
        let dirs = self
            .directions
            .iter()
            .zip(&self.bases)
            .enumerate()
            .map(|(e, (g, u))| retract(g, u, &Vector2::new(z[2 * e], z[2 * e + 1])))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(TangentState::new(dirs))
    }
}

/// One linearized determinant constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleRow {
    pub triangle: usize,
    pub residual: f64,
    /// `(edge id, 1×2 block)` for edges a, b, c.
    pub blocks: [(usize, RowVector2<f64>); 3],
    pub gamma: f64,
}

fn triangle_row(state: &TangentState, tri: &TriangleIndex, t: usize) -> TriangleRow {
    let [a, b, c] = tri.triangles()[t].edges;
    let (ga, gb, gc) = (&state.directions[a], &state.directions[b], &state.directions[c]);
    let bc = gb.cross(gc);
    let ca = gc.cross(ga);
    let ab = ga.cross(gb);
    let gamma = (bc.norm() * ca.norm() * ab.norm()).cbrt();
    TriangleRow {
        triangle: t,
        residual: triple_product(ga, gb, gc),
        blocks: [
            (a, bc.transpose() * state.bases[a]),
            (b, ca.transpose() * state.bases[b]),
            (c, ab.transpose() * state.bases[c]),
        ],
        gamma,
    }
}

/// Rows for every triangle whose geometric-mean cross norm exceeds `a_min`.
pub fn build_det_system(state: &TangentState, tri: &TriangleIndex, a_min: f64) -> Vec<TriangleRow> {
    (0..tri.n_triangles()).map(|t| triangle_row(state, tri, t)).filter(|r| r.gamma > a_min).collect()
}

/// Dense stacked Jacobian (`rows × 2m`) and residual vector.
pub fn stack_rows(rows: &[TriangleRow], n_edges: usize) -> (DMatrix<f64>, DVector<f64>) {
    let mut c = DMatrix::zeros(rows.len(), 2 * n_edges);
    let mut d = DVector::zeros(rows.len());
    for (r, row) in rows.iter().enumerate() {
        d[r] = row.residual;
        for (e, block) in &row.blocks {
            c[(r, 2 * e)] += block[0];
            c[(r, 2 * e + 1)] += block[1];
        }
    }
    (c, d)
}

fn well_conditioned(chol: &Cholesky<f64, Dyn>) -> bool {
    let diag = chol.l_dirty().diagonal();
    let (min, max) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v * v), hi.max(v * v)));
    min > PIVOT_RATIO * max
}

/// Minimum-norm tangent step solving the KKT system through its Schur
/// complement `(C Cᵀ + ρ I) λ = d`, `z = -Cᵀ λ`. Returns the step and the
/// regularization actually used.
pub fn gn_increment(c: &DMatrix<f64>, d: &DVector<f64>, rho: f64) -> Result<(DVector<f64>, f64), GnlmError> {
    let attempt = |rho: f64| {
        let mut s = c * c.transpose();
        for i in 0..s.nrows() {
            s[(i, i)] += rho;
        }
        Cholesky::new(s).filter(|ch| rho > 0.0 || well_conditioned(ch)).map(|ch| ch.solve(d))
    };
    let (lambda, used) = match attempt(rho) {
        Some(l) => (l, rho),
        None if rho == 0.0 => (attempt(FALLBACK_RHO).ok_or(GnlmError::SolveFailure)?, FALLBACK_RHO),
        None => return Err(GnlmError::SolveFailure),
    };
    let z = -(c.transpose() * lambda);
    if z.iter().all(|v| v.is_finite()) {
        Ok((z, used))
    } else {
        Err(GnlmError::SolveFailure)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GnStats {
    pub rows: usize,
    pub rho: f64,
    pub max_residual: f64,
    pub step_norm: f64,
    pub empty: bool,
}

pub fn gn_step(state: &TangentState, tri: &TriangleIndex, rho: f64, a_min: f64) -> Result<(TangentState, GnStats), GnlmError> {
    let rows = build_det_system(state, tri, a_min);
    if rows.is_empty() {
        let stats = GnStats { rows: 0, rho, max_residual: 0.0, step_norm: 0.0, empty: true };
        return Ok((state.clone(), stats));
    }
    let (c, d) = stack_rows(&rows, state.n_edges());
    let (z, used) = gn_increment(&c, &d, rho)?;
    let stats = GnStats { rows: rows.len(), rho: used, max_residual: d.amax(), step_norm: z.norm(), empty: false };
    Ok((state.retracted(&z)?, stats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnRun {
    pub state: TangentState,
    /// Max |d| over retained rows: the initial value, then one per completed iteration.
    pub residual_trace: Vec<f64>,
    pub failure: Option<GnlmError>,
}

fn max_residual(state: &TangentState, tri: &TriangleIndex, a_min: f64) -> f64 {
    build_det_system(state, tri, a_min).iter().map(|r| r.residual.abs()).fold(0.0, f64::max)
}

pub fn run_gn(state: TangentState, tri: &TriangleIndex, iters: usize, rho: f64, a_min: f64) -> GnRun {
    let mut trace = vec![max_residual(&state, tri, a_min)];
    let mut state = state;
    for _ in 0..iters {
        match gn_step(&state, tri, rho, a_min) {
            Ok((next, _)) => state = next,
            Err(err) => return GnRun { state, residual_trace: trace, failure: Some(err) },
        }
        trace.push(max_residual(&state, tri, a_min));
    }
    GnRun { state, residual_trace: trace, failure: None }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    /// Normals per edge entering the point term.
    pub k_pt: usize,
    pub cauchy_c: f64,
    pub lambda_tri: f64,
    pub beta: f64,
    pub mu: f64,
    pub mu_up: f64,
    pub mu_down: f64,
    pub iters: usize,
    pub a_min: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            k_pt: 50,
            cauchy_c: 2.385,
            lambda_tri: 1.0,
            beta: 15.0,
            mu: 1e-3,
            mu_up: 10.0,
            mu_down: 1.0 / 3.0,
            iters: 10,
            a_min: 1e-3,
        }
    }
}

/// Indices of the `k` normals with the smallest `|g·x|`.
fn smallest_residuals(g: &Direction, evidence: &[Direction], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..evidence.len()).collect();
    idx.sort_by(|&a, &b| g.dot(&evidence[a]).abs().total_cmp(&g.dot(&evidence[b]).abs()).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}

/// Robust scales and triangle weights held fixed while an LM objective is
/// minimized, so that successive objective values are comparable.
#[derive(Debug, Clone, PartialEq)]
pub struct LmModel {
    pub sigma: Vec<f64>,
    pub reliability: Vec<f64>,
    pub triangles: Vec<usize>,
    pub omega: Vec<f64>,
}

impl LmModel {
    pub fn at(state: &TangentState, graph: &ViewGraph, tri: &TriangleIndex, cfg: &LmConfig) -> Self {
        let mut sigma = Vec::with_capacity(state.n_edges());
        let mut reliability = Vec::with_capacity(state.n_edges());
        for (e, g) in state.directions.iter().enumerate() {
            let evidence = graph.evidence(e);
            let mut abs: Vec<f64> =
                smallest_residuals(g, evidence, cfg.k_pt).iter().map(|&r| g.dot(&evidence[r]).abs()).collect();
            if abs.is_empty() {
                sigma.push(SIGMA_FLOOR);
                reliability.push((-cfg.beta).exp());
                continue;
            }
            let mean = abs.iter().sum::<f64>() / abs.len() as f64;
            let median = crate::viewgraph::lower_median(&mut abs).expect("non-empty");
            sigma.push((MAD_SCALE * median).max(SIGMA_FLOOR));
            reliability.push((-cfg.beta * mean).exp());
        }
        let rows = build_det_system(state, tri, cfg.a_min);
        let raw: Vec<f64> = rows
            .iter()
            .map(|r| r.blocks.iter().map(|(e, _)| reliability[*e]).product::<f64>())
            .collect();
        let total: f64 = raw.iter().sum();
        let omega = raw.iter().map(|w| if total > 0.0 { w / total } else { 1.0 / raw.len() as f64 }).collect();
        LmModel { sigma, reliability, triangles: rows.iter().map(|r| r.triangle).collect(), omega }
    }

    /// Trimmed Cauchy point cost plus weighted squared determinant residuals.
    pub fn objective(&self, state: &TangentState, graph: &ViewGraph, tri: &TriangleIndex, cfg: &LmConfig) -> f64 {
        let c = cfg.cauchy_c;
        let mut total = 0.0;
        for (e, g) in state.directions.iter().enumerate() {
            let evidence = graph.evidence(e);
            for r in smallest_residuals(g, evidence, cfg.k_pt) {
                let u = g.dot(&evidence[r]) / (c * self.sigma[e]);
                total += 0.5 * c * c * (u * u).ln_1p();
            }
        }
        for (&t, &w) in self.triangles.iter().zip(&self.omega) {
            let [a, b, cc] = tri.triangles()[t].edges;
            let d = triple_product(&state.directions[a], &state.directions[b], &state.directions[cc]);
            total += 0.5 * cfg.lambda_tri * w * d * d;
        }
        total
    }

    /// Gauss–Newton normal equations `(H, b)` of the local quadratic model.
    pub fn normal_equations(
        &self,
        state: &TangentState,
        graph: &ViewGraph,
        tri: &TriangleIndex,
        cfg: &LmConfig,
    ) -> (DMatrix<f64>, DVector<f64>) {
        let n = 2 * state.n_edges();
        let mut h = DMatrix::zeros(n, n);
        let mut b = DVector::zeros(n);
        for (e, g) in state.directions.iter().enumerate() {
            let evidence = graph.evidence(e);
            let s = self.sigma[e];
            let mut he = Matrix2::zeros();
            let mut be = Vector2::zeros();
            for r in smallest_residuals(g, evidence, cfg.k_pt) {
                let p = g.dot(&evidence[r]);
                let a = (evidence[r].vector().transpose() * state.bases[e]).transpose();
                let w = 1.0 / (s * s) / (1.0 + (p / (cfg.cauchy_c * s)).powi(2));
                he += w * a * a.transpose();
                be += w * p * a;
            }
            h.fixed_view_mut::<2, 2>(2 * e, 2 * e).add_assign(&he);
            b.fixed_rows_mut::<2>(2 * e).add_assign(&be);
        }
        for (&t, &w) in self.triangles.iter().zip(&self.omega) {
            let row = triangle_row(state, tri, t);
            let scale = cfg.lambda_tri * w;
            for (ei, bi) in &row.blocks {
                b.fixed_rows_mut::<2>(2 * ei).add_assign(&(scale * row.residual * bi.transpose()));
                for (ej, bj) in &row.blocks {
                    h.fixed_view_mut::<2, 2>(2 * ei, 2 * ej).add_assign(&(scale * bi.transpose() * bj));
                }
            }
        }
        (h, b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmStep {
    pub state: TangentState,
    pub accepted: bool,
    pub mu_next: f64,
    pub objective_before: f64,
    pub objective_after: f64,
}

/// One damped step against a fixed model.
pub fn lm_step_with(
    model: &LmModel,
    state: &TangentState,
    graph: &ViewGraph,
    tri: &TriangleIndex,
    cfg: &LmConfig,
    mu: f64,
) -> LmStep {
    let before = model.objective(state, graph, tri, cfg);
    let reject = |after| LmStep {
        state: state.clone(),
        accepted: false,
        mu_next: mu * cfg.mu_up,
        objective_before: before,
        objective_after: after,
    };
    let (h, b) = model.normal_equations(state, graph, tri, cfg);
    let mut damped = h.clone();
    for i in 0..h.nrows() {
        damped[(i, i)] += mu * h[(i, i)].max(1e-12);
    }
    let z = match Cholesky::new(damped) {
        Some(ch) => -ch.solve(&b),
        None => return reject(f64::NAN),
    };
    if !z.iter().all(|v| v.is_finite()) {
        return reject(f64::NAN);
    }
    if z.iter().all(|v| *v == 0.0) {
        return LmStep { state: state.clone(), accepted: true, mu_next: mu * cfg.mu_down, objective_before: before, objective_after: before };
    }
    let next = match state.retracted(&z) {
        Ok(s) => s,
        Err(_) => return reject(f64::NAN),
    };
    let after = model.objective(&next, graph, tri, cfg);
    if after < before {
        LmStep { state: next, accepted: true, mu_next: mu * cfg.mu_down, objective_before: before, objective_after: after }
    } else {
        reject(after)
    }
}

/// One LM step with scales and weights taken from the current state.
pub fn lm_step(state: &TangentState, graph: &ViewGraph, tri: &TriangleIndex, cfg: &LmConfig, mu: f64) -> LmStep {
    let model = LmModel::at(state, graph, tri, cfg);
    lm_step_with(&model, state, graph, tri, cfg, mu)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmRun {
    pub state: TangentState,
    /// Objective at the start and after every accepted step.
    pub accepted_objectives: Vec<f64>,
    pub accepted: usize,
    pub mu_trace: Vec<f64>,
}

/// `cfg.iters` LM steps against a model frozen at the starting state.
pub fn run_lm(state: TangentState, graph: &ViewGraph, tri: &TriangleIndex, cfg: &LmConfig) -> LmRun {
    let model = LmModel::at(&state, graph, tri, cfg);
    let mut objectives = vec![model.objective(&state, graph, tri, cfg)];
    let mut mu = cfg.mu;
    let mut mu_trace = vec![mu];
    let mut accepted = 0;
    let mut state = state;
    for _ in 0..cfg.iters {
        let step = lm_step_with(&model, &state, graph, tri, cfg, mu);
        mu = step.mu_next;
        mu_trace.push(mu);
        if step.accepted {
            accepted += 1;
            objectives.push(step.objective_after);
            state = step.state;
        }
    }
    LmRun { state, accepted_objectives: objectives, accepted, mu_trace }
}
