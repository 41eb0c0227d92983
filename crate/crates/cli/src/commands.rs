use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use tride::clock::Stopwatch;
use tride::eval::{ablation_run, direction_error_stats, edge_errors, phase_sweep, ErrorStats, PhaseSweepSpec, Variant};
use tride::gnlm::{run_gn, run_lm, LmConfig, TangentState};
use tride::init::{initialize, InitMethod};
use tride::scene::{load_scene, scene_to_json, SceneFile};
use tride::synthetic::{gen_instance, CorruptionSpec, GraphKind, GraphModel, InstanceSpec};
use tride::tride::{run as run_tride, SweepConfig};
use tride::viewgraph::{enumerate_triangles, graph_stats, GraphStats};
use tride::Direction;

use crate::{AblateArgs, GenArgs, MethodArg, ModelArg, PhaseArgs, RunArgs};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

fn runtime(e: impl fmt::Display) -> CliError {
    CliError::Runtime(e.to_string())
}

fn emit(out: Option<&Path>, contents: &str) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, contents).map_err(|e| runtime(format!("{}: {e}", path.display()))),
        None => std::io::stdout().write_all(contents.as_bytes()).map_err(runtime),
    }
}

fn graph_kind(model: ModelArg, p: Option<f64>, r: Option<f64>) -> Result<GraphKind, CliError> {
    match (model, p, r) {
        (ModelArg::Complete, None, None) => Ok(GraphKind::Complete),
        (ModelArg::Er, Some(p), None) => Ok(GraphKind::ErdosRenyi { p }),
        (ModelArg::Rgg, None, Some(r)) => Ok(GraphKind::Rgg { r }),
        (ModelArg::Er, None, _) => Err(CliError::Usage("--model er requires --p".into())),
        (ModelArg::Rgg, _, None) => Err(CliError::Usage("--model rgg requires --r".into())),
        _ => Err(CliError::Usage("--p goes with --model er and --r with --model rgg".into())),
    }
}

fn validated(config: SweepConfig) -> Result<SweepConfig, CliError> {
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    Ok(config)
}

pub fn gen(args: &GenArgs) -> Result<(), CliError> {
    let spec = InstanceSpec {
        model: GraphModel { kind: graph_kind(args.model, args.p, args.r)?, n: args.n },
        n_matches: args.matches,
        inlier_frac: args.inlier_frac,
        corruption: CorruptionSpec {
            edge_fraction: args.corrupt_q,
            match_fraction: args.corrupt_frac,
            inlier_noise_deg: args.noise_deg,
        },
        seed: args.seed,
    };
    spec.model.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    spec.corruption.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    if !(0.0..=1.0).contains(&args.inlier_frac) {
        return Err(CliError::Usage(format!("--inlier-frac {} is outside [0, 1]", args.inlier_frac)));
    }
    let instance = gen_instance(&spec).map_err(runtime)?;
    log::info!("generated {} edges", instance.graph.n_edges());
    emit(args.out.as_deref(), &scene_to_json(&SceneFile::from_instance(&instance)))
}

#[derive(Serialize)]
struct ConfigEcho {
    #[serde(flatten)]
    sweep: SweepConfig,
    init: &'static str,
    method: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    iters: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
}

#[derive(Serialize)]
struct SweepTrace {
    delta_deg: Vec<f64>,
    changed: Vec<usize>,
    evaluations: Vec<u64>,
}

#[derive(Serialize, Default)]
struct Timing {
    load_ms: f64,
    init_ms: f64,
    refine_ms: f64,
    sweep_ms: Vec<f64>,
}

#[derive(Serialize)]
struct RunReport {
    config: ConfigEcho,
    graph: GraphStats,
    before: Option<ErrorStats>,
    after: Option<ErrorStats>,
    sweeps: Option<SweepTrace>,
    gn_residuals: Option<Vec<f64>>,
    gn_failure: Option<String>,
    lm_objectives: Option<Vec<f64>>,
    timing: Timing,
}

fn method_name(m: MethodArg) -> &'static str {
    match m {
        MethodArg::None => "none",
        MethodArg::Tride => "tride",
        MethodArg::Gn => "gn",
        MethodArg::Lm => "lm",
    }
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let config = validated(args.sweep.config())?;
    let mut timing = Timing::default();
    let clock = Stopwatch::start();
    let scene = load_scene(&args.scene).map_err(|e| runtime(format!("{}: {e}", args.scene.display())))?;
    timing.load_ms = clock.elapsed_ms();
    let tri = enumerate_triangles(&scene.graph);
    let method: InitMethod = args.init.into();

    let clock = Stopwatch::start();
    let init = initialize(&scene.graph, method, config.sigma_deg, config.seed);
    timing.init_ms = clock.elapsed_ms();

    let iters = match args.method {
        MethodArg::Gn => Some(args.iters.unwrap_or(5)),
        MethodArg::Lm => Some(args.iters.unwrap_or(10)),
        _ => None,
    };
    let rho = (args.method == MethodArg::Gn).then_some(args.rho);
    if rho.is_some_and(|r| !(r >= 0.0)) {
        return Err(CliError::Usage(format!("--rho must be non-negative, got {}", args.rho)));
    }

    let clock = Stopwatch::start();
    let mut report = RunReport {
        config: ConfigEcho { sweep: config.clone(), init: method.as_str(), method: method_name(args.method), iters, rho },
        graph: graph_stats(&scene.graph, &tri),
        before: None,
        after: None,
        sweeps: None,
        gn_residuals: None,
        gn_failure: None,
        lm_objectives: None,
        timing: Timing::default(),
    };
    let directions: Vec<Direction> = match args.method {
        MethodArg::None => init.directions.clone(),
        MethodArg::Tride => {
            let (field, sweeps) = run_tride(&scene.graph, &tri, &init, &config);
            report.sweeps = Some(SweepTrace { delta_deg: sweeps.delta_deg, changed: sweeps.changed, evaluations: sweeps.evaluations });
            timing.sweep_ms = sweeps.wall_ms;
            field.directions
        }
        MethodArg::Gn => {
            let gn = run_gn(TangentState::new(init.directions.clone()), &tri, iters.unwrap_or_default(), args.rho, config.a_min);
            report.gn_residuals = Some(gn.residual_trace);
            report.gn_failure = gn.failure.map(|e| e.to_string());
            gn.state.into_directions()
        }
        MethodArg::Lm => {
            let cfg = LmConfig { iters: iters.unwrap_or_default(), beta: config.beta, a_min: config.a_min, ..LmConfig::default() };
            let lm = run_lm(TangentState::new(init.directions.clone()), &scene.graph, &tri, &cfg);
            report.lm_objectives = Some(lm.accepted_objectives);
            lm.state.into_directions()
        }
    };
    timing.refine_ms = clock.elapsed_ms();

    if let Some(truth) = &scene.truth {
        report.before = Some(direction_error_stats(&init.directions, &truth.directions).map_err(runtime)?);
        report.after = Some(direction_error_stats(&directions, &truth.directions).map_err(runtime)?);
    }
    if let Some(path) = &args.edges_csv {
        write_edge_csv(path, &scene.graph, &init.directions, &directions, scene.truth.as_ref().map(|t| &t.directions[..]))?;
    }
    report.timing = timing;
    let json = serde_json::to_string_pretty(&report).map_err(runtime)?;
    emit(args.out.as_deref(), &(json + "\n"))
}

fn write_edge_csv(
    path: &Path,
    graph: &tride::ViewGraph,
    before: &[Direction],
    after: &[Direction],
    truth: Option<&[Direction]>,
) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(runtime)?;
    w.write_record(["edge", "i", "j", "gx", "gy", "gz", "error_before_deg", "error_after_deg"]).map_err(runtime)?;
    let errors = |d: &[Direction]| truth.map(|t| edge_errors(d, t)).transpose();
    let eb = errors(before).map_err(runtime)?;
    let ea = errors(after).map_err(runtime)?;
    let cell = |v: &Option<Vec<f64>>, e: usize| v.as_ref().map(|x| x[e].to_string()).unwrap_or_default();
    for (e, &(i, j)) in graph.edges().iter().enumerate() {
        let g = after[e].to_array();
        w.write_record([
            e.to_string(),
            i.to_string(),
            j.to_string(),
            g[0].to_string(),
            g[1].to_string(),
            g[2].to_string(),
            cell(&eb, e),
            cell(&ea, e),
        ])
        .map_err(runtime)?;
    }
    w.flush().map_err(runtime)
}

/// Parses `start:stop:step` (inclusive) or a comma-separated list.
pub fn parse_grid(s: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::Usage(format!("cannot parse grid `{s}`"));
    let parts: Vec<&str> = s.split(':').collect();
    let values = if parts.len() == 3 {
        let [a, b, step] = [parts[0], parts[1], parts[2]].map(|p| p.trim().parse::<f64>());
        let (a, b, step) = (a.map_err(|_| bad())?, b.map_err(|_| bad())?, step.map_err(|_| bad())?);
        if !(step > 0.0) || b < a || !a.is_finite() || !b.is_finite() {
            return Err(bad());
        }
        let count = ((b - a) / step + 1e-9).floor() as usize + 1;
        // rounding keeps 0.1-step grids at their decimal values
        (0..count).map(|k| ((a + k as f64 * step) * 1e12).round() / 1e12).collect()
    } else {
        s.split(',').filter(|t| !t.trim().is_empty()).map(|t| t.trim().parse::<f64>().map_err(|_| bad())).collect::<Result<Vec<_>, _>>()?
    };
    if values.is_empty() {
        return Err(CliError::Usage(format!("grid `{s}` is empty")));
    }
    Ok(values)
}

fn csv_string(w: csv::Writer<Vec<u8>>) -> Result<String, CliError> {
    String::from_utf8(w.into_inner().map_err(runtime)?).map_err(runtime)
}

pub fn phase(args: &PhaseArgs) -> Result<(), CliError> {
    let kind = graph_kind(args.model, args.p, args.r)?;
    let q_grid = parse_grid(&args.q_grid)?;
    if let Some(q) = q_grid.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(CliError::Usage(format!("q = {q} is outside [0, 1]")));
    }
    let n_grid = parse_grid(&args.n_grid)?
        .into_iter()
        .map(|v| if v >= 0.0 && v.fract() == 0.0 { Ok(v as usize) } else { Err(CliError::Usage(format!("bad camera count {v}"))) })
        .collect::<Result<Vec<_>, _>>()?;
    if args.seeds == 0 {
        return Err(CliError::Usage("--seeds must be positive".into()));
    }
    let mut spec = PhaseSweepSpec::new(kind, n_grid, q_grid, args.seeds);
    spec.config = validated(args.sweep.config())?;
    spec.sweeps = args.sweeps;
    spec.tol_deg = args.tol_deg;
    spec.n_matches = args.matches;
    spec.base_seed = args.sweep.seed;
    let points = phase_sweep(&spec);

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "n", "p", "r", "q", "seeds", "failures", "recovery_mean", "recovery_std", "error_mean_deg"])
        .map_err(runtime)?;
    let (model, p, r) = match kind {
        GraphKind::Complete => ("complete", String::new(), String::new()),
        GraphKind::ErdosRenyi { p } => ("er", p.to_string(), String::new()),
        GraphKind::Rgg { r } => ("rgg", String::new(), r.to_string()),
    };
    for pt in &points {
        w.write_record([
            model.to_string(),
            pt.n.to_string(),
            p.clone(),
            r.clone(),
            pt.q.to_string(),
            pt.seeds.to_string(),
            pt.failures.to_string(),
            pt.recovery_mean.to_string(),
            pt.recovery_std.to_string(),
            pt.error_mean_deg.to_string(),
        ])
        .map_err(runtime)?;
    }
    emit(args.out.as_deref(), &csv_string(w)?)
}

pub fn ablate(args: &AblateArgs) -> Result<(), CliError> {
    let variants = args
        .variants
        .split(',')
        .map(|v| v.trim().parse::<Variant>().map_err(CliError::Usage))
        .collect::<Result<Vec<_>, _>>()?;
    let config = validated(args.sweep.config())?;
    let scene = load_scene(&args.scene).map_err(|e| runtime(format!("{}: {e}", args.scene.display())))?;
    let truth = scene.truth.as_ref().ok_or_else(|| runtime("ablation needs a scene with a truth section"))?;
    let tri = enumerate_triangles(&scene.graph);
    let init = initialize(&scene.graph, args.init.into(), config.sigma_deg, config.seed);
    let rows = ablation_run(&scene.graph, &tri, &truth.directions, &init, &variants, &config).map_err(runtime)?;

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["variant", "mean_deg", "median_deg", "p90_deg"]).map_err(runtime)?;
    for row in &rows {
        w.write_record([row.variant.as_str().to_string(), row.stats.mean.to_string(), row.stats.median.to_string(), row.stats.p90.to_string()])
            .map_err(runtime)?;
    }
    emit(args.out.as_deref(), &csv_string(w)?)
}
