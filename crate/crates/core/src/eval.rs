//! Error metrics, ablations, candidate-recall diagnostics and exact-recovery
//! phase sweeps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{unoriented_angle, Direction};
use crate::init::InitResult;
use crate::rng::{self, Stream};
use crate::synthetic::{gen_evidence, gen_theory_instance, GraphKind, GraphModel, SyntheticError, TheorySpec};
use crate::tride::{build_candidate_pool, run_sweeps, SweepConfig, WeightMode};
use crate::viewgraph::{enumerate_triangles, lower_median, TriangleIndex, ViewGraph};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("estimate has {estimate} edges but truth has {truth}")]
    InputMismatch { estimate: usize, truth: usize },
}

/// Unoriented angular errors in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub median: f64,
    pub p90: f64,
}

pub fn edge_errors(est: &[Direction], truth: &[Direction]) -> Result<Vec<f64>, EvalError> {
    if est.len() != truth.len() {
        return Err(EvalError::InputMismatch { estimate: est.len(), truth: truth.len() });
    }
    Ok(est.iter().zip(truth).map(|(a, b)| unoriented_angle(a, b)).collect())
}

/// Value at 0-based rank `floor(p n)` of the ascending sort, clamped to the last element.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let idx = ((p * sorted.len() as f64).floor() as usize).min(sorted.len() - 1);
    sorted[idx]
}

pub fn summarize(errors: &[f64]) -> ErrorStats {
    if errors.is_empty() {
        return ErrorStats { mean: 0.0, median: 0.0, p90: 0.0 };
    }
    let mut sorted = errors.to_vec();
    let median = lower_median(&mut sorted).expect("non-empty");
    ErrorStats { mean: errors.iter().sum::<f64>() / errors.len() as f64, median, p90: percentile(&sorted, 0.9) }
}

pub fn direction_error_stats(est: &[Direction], truth: &[Direction]) -> Result<ErrorStats, EvalError> {
    Ok(summarize(&edge_errors(est, truth)?))
}

/// Fraction of edges whose error is at most `tol_deg`.
pub fn recovery_fraction(est: &[Direction], truth: &[Direction], tol_deg: f64) -> Result<f64, EvalError> {
    let errors = edge_errors(est, truth)?;
    if errors.is_empty() {
        return Ok(1.0);
    }
    Ok(errors.iter().filter(|&&e| e <= tol_deg).count() as f64 / errors.len() as f64)
}

/// Rows of an ablation table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Input,
    PointOnly,
    Uniform,
    Static,
    Dynamic,
}

impl Variant {
    pub const ALL: [Variant; 5] = [Variant::Input, Variant::PointOnly, Variant::Uniform, Variant::Static, Variant::Dynamic];

    pub fn mode(self) -> Option<WeightMode> {
        match self {
            Variant::Input => None,
            Variant::PointOnly => Some(WeightMode::PointOnly),
            Variant::Uniform => Some(WeightMode::Uniform),
            Variant::Static => Some(WeightMode::Static),
            Variant::Dynamic => Some(WeightMode::Dynamic),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Variant::Input => "input",
            Variant::PointOnly => "point-only",
            Variant::Uniform => "uniform",
            Variant::Static => "static",
            Variant::Dynamic => "dynamic",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "input" => Ok(Variant::Input),
            other => other.parse::<WeightMode>().map(|m| match m {
                WeightMode::PointOnly => Variant::PointOnly,
                WeightMode::Uniform => Variant::Uniform,
                WeightMode::Static => Variant::Static,
                WeightMode::Dynamic => Variant::Dynamic,
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: Variant,
    pub stats: ErrorStats,
}

/// Runs each variant from the same initialization and seed.
pub fn ablation_run(
    graph: &ViewGraph,
    tri: &TriangleIndex,
    truth: &[Direction],
    init: &InitResult,
    variants: &[Variant],
    config: &SweepConfig,
) -> Result<Vec<AblationRow>, EvalError> {
    variants
        .iter()
        .map(|&variant| {
            let stats = match variant.mode() {
                None => direction_error_stats(&init.directions, truth)?,
                Some(mode) => {
                    let cfg = SweepConfig { mode, ..config.clone() };
                    let (field, _) = run_sweeps(graph, tri, init, &cfg, cfg.k_max);
                    direction_error_stats(&field.directions, truth)?
                }
            };
            Ok(AblationRow { variant, stats })
        })
        .collect()
}

/// One row of the candidate-recall diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RecallRow {
    pub budget: usize,
    pub recall: f64,
    pub median_best_deg: f64,
    pub p90_best_deg: f64,
    pub mean_best_deg: f64,
}

/// Best-of-`B` random two-normal hypotheses on synthetic edges, excluding
/// the retained current direction. Each trial draws the largest budget once
/// and smaller budgets use its prefix.
pub fn candidate_recall(
    budgets: &[usize],
    trials: usize,
    n_matches: usize,
    inlier_frac: f64,
    noise_deg: f64,
    tol_deg: f64,
    seed: u64,
) -> Vec<RecallRow> {
    let max_b = budgets.iter().copied().max().unwrap_or(0);
    let mut best: Vec<Vec<f64>> = vec![Vec::with_capacity(trials); budgets.len()];
    for trial in 0..trials {
        let g = crate::init::random_direction(seed, trial);
        let mut rng = rng::stream(seed, Stream::Evidence, trial as u64, 1);
        let evidence = gen_evidence(&g, n_matches, inlier_frac, noise_deg, &mut rng);
        let mut pool_rng = rng::stream(seed, Stream::CandidatePool, trial as u64, 1);
        let pool = build_candidate_pool(&evidence, g, max_b, crate::geometry::DEGENERATE_NORM, &mut pool_rng);
        let errors: Vec<f64> = pool[1..].iter().map(|c| unoriented_angle(c, &g)).collect();
        for (k, &b) in budgets.iter().enumerate() {
            best[k].push(errors.iter().take(b).copied().fold(90.0, f64::min));
        }
    }
    budgets
        .iter()
        .zip(best)
        .map(|(&budget, errs)| {
            let stats = summarize(&errs);
            RecallRow {
                budget,
                recall: errs.iter().filter(|&&e| e <= tol_deg).count() as f64 / errs.len().max(1) as f64,
                median_best_deg: stats.median,
                p90_best_deg: stats.p90,
                mean_best_deg: stats.mean,
            }
        })
        .collect()
}

/// Grid and instance parameters of a phase sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseSweepSpec {
    pub kind: GraphKind,
    pub n_grid: Vec<usize>,
    pub q_grid: Vec<f64>,
    pub seeds: usize,
    pub config: SweepConfig,
    /// Number of sweeps per instance; zero evaluates the initializer.
    pub sweeps: usize,
    pub tol_deg: f64,
    pub anchor_support: f64,
    pub weak_support: f64,
    pub weak_truth_fraction: f64,
    pub n_matches: usize,
    pub base_seed: u64,
}

impl PhaseSweepSpec {
    pub fn new(kind: GraphKind, n_grid: Vec<usize>, q_grid: Vec<f64>, seeds: usize) -> Self {
        PhaseSweepSpec {
            kind,
            n_grid,
            q_grid,
            seeds,
            config: SweepConfig::default(),
            sweeps: 1,
            tol_deg: 1e-6,
            anchor_support: 0.8,
            weak_support: 0.1,
            weak_truth_fraction: 0.6,
            n_matches: 100,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhasePoint {
    pub n: usize,
    pub kind: GraphKind,
    pub q: f64,
    pub seeds: usize,
    pub failures: usize,
    /// Recovery fraction of each successful seed, in seed order.
    pub recovery: Vec<f64>,
    pub recovery_mean: f64,
    pub recovery_std: f64,
    pub error_mean_deg: f64,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn phase_job(spec: &PhaseSweepSpec, n: usize, q: f64, seed: u64) -> Result<(f64, f64), SyntheticError> {
    let theory = TheorySpec {
        model: GraphModel { kind: spec.kind, n },
        q,
        pool_contains_truth: true,
        weak_truth_fraction: spec.weak_truth_fraction,
        anchor_support: spec.anchor_support,
        weak_support: spec.weak_support,
        n_matches: spec.n_matches,
        sigma_deg: spec.config.sigma_deg,
        seed,
    };
    let inst = gen_theory_instance(&theory)?;
    let tri = enumerate_triangles(&inst.graph);
    let config = SweepConfig { seed, ..spec.config.clone() };
    let (field, _) = run_sweeps(&inst.graph, &tri, &inst.init, &config, spec.sweeps);
    let frac = recovery_fraction(&field.directions, &inst.truth.directions, spec.tol_deg).expect("aligned edges");
    let err = direction_error_stats(&field.directions, &inst.truth.directions).expect("aligned edges").mean;
    Ok((frac, err))
}

/// Seed of job `(n index, q index, seed index)`.
pub fn phase_seed(base: u64, n_idx: usize, q_idx: usize, s: usize) -> u64 {
    use rand::Rng;
    rng::stream(base, Stream::TheoryInstance, ((n_idx as u64) << 32) | q_idx as u64, s as u64).random()
}

/// Recovery fraction over seeds for every `(n, q)` grid point, in grid order.
pub fn phase_sweep(spec: &PhaseSweepSpec) -> Vec<PhasePoint> {
    let jobs: Vec<(usize, usize, usize)> = (0..spec.n_grid.len())
        .flat_map(|a| (0..spec.q_grid.len()).flat_map(move |b| (0..spec.seeds).map(move |s| (a, b, s))))
        .collect();
    let results = crate::map_edges(jobs.len(), |j| {
        let (a, b, s) = jobs[j];
        phase_job(spec, spec.n_grid[a], spec.q_grid[b], phase_seed(spec.base_seed, a, b, s))
    });

    let mut points = Vec::with_capacity(spec.n_grid.len() * spec.q_grid.len());
    for (chunk, (a, b)) in results
        .chunks(spec.seeds.max(1))
        .zip((0..spec.n_grid.len()).flat_map(|a| (0..spec.q_grid.len()).map(move |b| (a, b))))
    {
        let ok: Vec<(f64, f64)> = chunk.iter().filter_map(|r| r.as_ref().ok().copied()).collect();
        let recovery: Vec<f64> = ok.iter().map(|r| r.0).collect();
        let (recovery_mean, recovery_std) = mean_std(&recovery);
        let errors: Vec<f64> = ok.iter().map(|r| r.1).collect();
        points.push(PhasePoint {
            n: spec.n_grid[a],
            kind: spec.kind,
            q: spec.q_grid[b],
            seeds: spec.seeds,
            failures: chunk.len() - ok.len(),
            recovery,
            recovery_mean,
            recovery_std,
            error_mean_deg: mean_std(&errors).0,
        });
    }
    points
}

/// First `q` at which the mean recovery drops below `level`, linearly
/// interpolated against the previous grid point. Points must share one `n`
/// and be sorted by `q`.
pub fn crossover_q(points: &[PhasePoint], level: f64) -> Option<f64> {
    let first = points.first()?;
    if first.recovery_mean < level {
        return Some(first.q);
    }
    points.windows(2).find(|w| w[1].recovery_mean < level).map(|w| {
        let (q0, r0, q1, r1) = (w[0].q, w[0].recovery_mean, w[1].q, w[1].recovery_mean);
        q0 + (r0 - level) / (r0 - r1) * (q1 - q0)
    })
}

/// Number of grid steps where the curve increases.
pub fn inversions(values: &[f64]) -> usize {
    values.windows(2).filter(|w| w[1] > w[0]).count()
}
