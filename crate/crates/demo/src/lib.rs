//! Browser demo: each export returns a JSON string for `www/index.html`.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use tride::eval::{edge_errors, phase_sweep, summarize, ErrorStats, PhaseSweepSpec};
use tride::init::{initialize, InitMethod};
use tride::synthetic::{background_support_constant, gen_instance, uniform_sphere_normals, GraphKind, InstanceSpec};
use tride::tride::{point_support, run, SweepConfig};
use tride::{enumerate_triangles, Direction};

#[derive(Debug, Serialize)]
pub struct StressResult {
    pub edges: usize,
    pub triangles: usize,
    pub corrupted: Vec<bool>,
    pub before_deg: Vec<f64>,
    pub after_deg: Vec<f64>,
    pub before: ErrorStats,
    pub after: ErrorStats,
    pub sweeps: usize,
}

/// Twelve-camera complete graph, corrupted, initialized by PCA and refined.
pub fn stress(edge_fraction: f64, match_fraction: f64, seed: u64) -> Result<StressResult, String> {
    let inst = gen_instance(&InstanceSpec::stress_test(edge_fraction, match_fraction, seed)).map_err(|e| e.to_string())?;
    let tri = enumerate_triangles(&inst.graph);
    let init = initialize(&inst.graph, InitMethod::Pca, 1.0, seed);
    let (field, report) = run(&inst.graph, &tri, &init, &SweepConfig { seed, ..SweepConfig::default() });
    let before_deg = edge_errors(&init.directions, &inst.truth.directions).map_err(|e| e.to_string())?;
    let after_deg = edge_errors(&field.directions, &inst.truth.directions).map_err(|e| e.to_string())?;
    Ok(StressResult {
        edges: inst.graph.n_edges(),
        triangles: tri.n_triangles(),
        corrupted: inst.corrupted,
        before: summarize(&before_deg),
        after: summarize(&after_deg),
        before_deg,
        after_deg,
        sweeps: report.sweeps(),
    })
}

#[derive(Debug, Serialize)]
pub struct CurvePoint {
    pub q: f64,
    pub init: f64,
    pub refined: f64,
}

/// Exact-recovery fraction against the weak-edge rate on a complete graph,
/// before and after one sweep.
pub fn curve(n: usize, seeds: usize, steps: usize, seed: u64) -> Result<Vec<CurvePoint>, String> {
    if n < 3 || seeds == 0 || steps == 0 {
        return Err("need n >= 3, seeds >= 1, steps >= 1".into());
    }
    let q_grid: Vec<f64> = (0..=steps).map(|k| k as f64 / steps as f64).collect();
    let mut spec = PhaseSweepSpec::new(GraphKind::Complete, vec![n], q_grid, seeds);
    spec.base_seed = seed;
    let refined = phase_sweep(&spec);
    spec.sweeps = 0;
    let init = phase_sweep(&spec);
    Ok(init.iter().zip(&refined).map(|(a, b)| CurvePoint { q: a.q, init: a.recovery_mean, refined: b.recovery_mean }).collect())
}

#[derive(Debug, Serialize)]
pub struct Background {
    pub sigma_deg: f64,
    pub quadrature: f64,
    pub monte_carlo: f64,
    /// Histogram of residual angles in degrees, 90 one-degree bins.
    pub histogram: Vec<usize>,
}

/// Support of uniformly random normals: quadrature against a sample mean.
pub fn background(sigma_deg: f64, samples: usize, seed: u64) -> Result<Background, String> {
    if !(sigma_deg > 0.0) || samples == 0 {
        return Err("sigma must be positive and samples non-zero".into());
    }
    let sigma = sigma_deg.to_radians();
    let normals = uniform_sphere_normals(samples, seed);
    let mut histogram = vec![0; 90];
    for x in &normals {
        let a = x.dot(&Direction::z()).abs().asin().to_degrees();
        histogram[(a as usize).min(89)] += 1;
    }
    Ok(Background {
        sigma_deg,
        quadrature: background_support_constant(sigma),
        monte_carlo: point_support(&Direction::z(), &normals, sigma),
        histogram,
    })
}

fn to_json<T: Serialize>(r: Result<T, String>) -> Result<String, JsValue> {
    r.and_then(|v| serde_json::to_string(&v).map_err(|e| e.to_string())).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn stress_test(edge_fraction: f64, match_fraction: f64, seed: u32) -> Result<String, JsValue> {
    to_json(stress(edge_fraction, match_fraction, seed as u64))
}

#[wasm_bindgen]
pub fn phase_curve(n: u32, seeds: u32, steps: u32, seed: u32) -> Result<String, JsValue> {
    to_json(curve(n as usize, seeds as usize, steps as usize, seed as u64))
}

#[wasm_bindgen]
pub fn background_support(sigma_deg: f64, samples: u32, seed: u32) -> Result<String, JsValue> {
    to_json(background(sigma_deg, samples as usize, seed as u64))
}
