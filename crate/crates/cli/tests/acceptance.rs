//! Acceptance suite. Runs as a plain binary and prints one PASS/FAIL line per
//! criterion; exits non-zero if any criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Vector2};

use tride::eval::{candidate_recall, crossover_q, direction_error_stats, phase_sweep, PhaseSweepSpec};
use tride::geometry::{triple_product, unoriented_angle, unoriented_error, Direction};
use tride::gnlm::{build_det_system, gn_step, run_lm, stack_rows, LmConfig, TangentState};
use tride::init::{initialize, random_direction, InitMethod, InitResult};
use tride::rng::{self, Stream};
use tride::synthetic::{
    background_support_constant, candidate_separation, gen_instance, gen_scene, gen_theory_instance, theory_bound,
    witness_constants, GraphKind, GraphModel, InstanceSpec, TheorySpec,
};
use tride::tride::{badness, run, run_sweeps, sweep, DirectionField, SweepConfig};
use tride::viewgraph::{enumerate_triangles, TriangleIndex, ViewGraph};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn max_change(a: &[Direction], b: &[Direction]) -> f64 {
    a.iter().zip(b).map(|(x, y)| unoriented_angle(x, y)).fold(0.0, f64::max)
}

fn truth_start(graph: &ViewGraph, truth: &[Direction], sigma_deg: f64) -> InitResult {
    let badness = (0..graph.n_edges()).map(|e| badness(&truth[e], graph.evidence(e), sigma_deg.to_radians())).collect();
    InitResult { directions: truth.to_vec(), badness }
}

fn fixed_point() -> Outcome {
    let inst = gen_instance(&InstanceSpec::stress_test(0.0, 0.0, 11)).unwrap();
    let tri = enumerate_triangles(&inst.graph);
    let config = SweepConfig::default();
    let init = truth_start(&inst.graph, &inst.truth.directions, config.sigma_deg);
    let (field, _) = run_sweeps(&inst.graph, &tri, &init, &config, 1);
    let change = max_change(&field.directions, &inst.truth.directions);
    outcome(change <= 1e-9, format!("max change {change:.3e} deg over {} edges (limit 1e-9)", inst.graph.n_edges()))
}

fn stress_test() -> Outcome {
    let config = SweepConfig::default();
    let (mut before, mut after) = (Vec::new(), Vec::new());
    for seed in 1..=5u64 {
        let inst = gen_instance(&InstanceSpec::stress_test(0.3, 0.8, seed)).unwrap();
        let tri = enumerate_triangles(&inst.graph);
        let init = initialize(&inst.graph, InitMethod::Pca, config.sigma_deg, seed);
        let (field, _) = run(&inst.graph, &tri, &init, &SweepConfig { seed, ..config.clone() });
        for e in 0..inst.graph.n_edges() {
            before.push(unoriented_angle(&init.directions[e], &inst.truth.directions[e]));
            after.push(unoriented_angle(&field.directions[e], &inst.truth.directions[e]));
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let within = after.iter().filter(|&&e| e <= 5.0).count() as f64 / after.len() as f64;
    outcome(
        mean(&after) < 2.0 && within >= 0.95,
        format!(
            "PCA mean {:.2} deg -> TriDE mean {:.3} deg (limit 2), {:.1}% within 5 deg (limit 95%)",
            mean(&before),
            mean(&after),
            100.0 * within
        ),
    )
}

fn corruption_curve() -> Outcome {
    let config = SweepConfig::default();
    let mut inversions = 0;
    let mut rows = Vec::new();
    for (qi, q) in (0..8).map(|k| (k, k as f64 / 10.0)) {
        let (mut pca, mut tride) = ([0.0; 2], [0.0; 2]);
        for s in 0..5u64 {
            let seed = 100 * qi as u64 + s;
            let inst = gen_instance(&InstanceSpec::stress_test(q, 0.8, seed)).unwrap();
            let tri = enumerate_triangles(&inst.graph);
            let init = initialize(&inst.graph, InitMethod::Pca, config.sigma_deg, seed);
            let (field, _) = run(&inst.graph, &tri, &init, &SweepConfig { seed, ..config.clone() });
            let a = direction_error_stats(&init.directions, &inst.truth.directions).unwrap();
            let b = direction_error_stats(&field.directions, &inst.truth.directions).unwrap();
            pca[0] += a.mean / 5.0;
            pca[1] += a.p90 / 5.0;
            tride[0] += b.mean / 5.0;
            tride[1] += b.p90 / 5.0;
        }
        if tride[0] > pca[0] || tride[1] > pca[1] {
            inversions += 1;
        }
        rows.push(format!("q={q:.1}: {:.2}/{:.2} vs {:.2}/{:.2}", tride[0], tride[1], pca[0], pca[1]));
    }
    outcome(inversions <= 1, format!("{inversions} inversions (limit 1); TriDE vs PCA mean/p90 [{}]", rows.join(", ")))
}

fn background_constant() -> Outcome {
    let sigma = 1f64.to_radians();
    let b = background_support_constant(sigma);
    let approx = (std::f64::consts::PI / 2.0).sqrt() * sigma;
    let rel = (b - approx).abs() / approx;
    outcome(
        (0.0214..=0.0224).contains(&b) && rel <= 0.05,
        format!("b = {b:.6} (range [0.0214, 0.0224]), {:.2}% from sqrt(pi/2) sigma (limit 5%)", 100.0 * rel),
    )
}

fn deterministic_bound() -> Outcome {
    let base = SweepConfig { k_max: 1, ..SweepConfig::default() };
    let mut accepted = 0;
    let mut rejected = 0;
    let mut failures = Vec::new();
    let mut worst_ratio: f64 = 0.0;
    let mut seed = 0u64;
    while accepted < 50 {
        seed += 1;
        let inst = gen_theory_instance(&TheorySpec::new(GraphModel::complete(20), 0.25, seed)).unwrap();
        let tri = enumerate_triangles(&inst.graph);
        let config = SweepConfig { seed, ..base.clone() };
        let k = witness_constants(&inst.graph, &tri, &inst.truth, &inst.clean, &inst.init, config.a_min);
        let field = DirectionField::from_init(&inst.init);
        let eta = candidate_separation(&inst.graph, &field, &inst.truth, &config, 1e-12);
        let eta = match eta {
            Some(eta) if k.a > 0.0 && k.c_wd > 0.0 && k.delta > 0.0 => eta,
            _ => {
                rejected += 1;
                continue;
            }
        };
        accepted += 1;

        let bound = theory_bound(k.a, k.c_wd, config.beta, k.delta);
        let (out, _) = run_sweeps(&inst.graph, &tri, &inst.init, &config, 1);
        let err = (0..inst.graph.n_edges())
            .map(|e| unoriented_error(&out.directions[e], &inst.truth.directions[e]))
            .fold(0.0, f64::max);
        if err > bound * (1.0 + 1e-9) + 1e-12 {
            failures.push(format!("seed {seed}: error {err:.3e} > bound {bound:.3e}"));
        }
        worst_ratio = worst_ratio.max(err / bound.max(f64::MIN_POSITIVE));

        let threshold = ((1.0 - k.a) / (k.a * k.c_wd * eta)).ln() / k.delta;
        let beta = threshold.max(0.0) + 1.0;
        let (exact, _) = run_sweeps(&inst.graph, &tri, &inst.init, &SweepConfig { beta, ..config }, 1);
        let worst = max_change(&exact.directions, &inst.truth.directions);
        if worst > 1e-6 {
            failures.push(format!("seed {seed}: beta {beta:.2} leaves {worst:.3e} deg"));
        }
    }
    let detail = format!(
        "50 instances ({rejected} candidate seeds rejected for pool admissibility), worst error/bound {worst_ratio:.3e}{}",
        if failures.is_empty() { String::new() } else { format!("; {}", failures.join("; ")) }
    );
    outcome(failures.is_empty(), detail)
}

fn phase_direction() -> Outcome {
    let q_grid: Vec<f64> = (0..=20).map(|k| k as f64 / 20.0).collect();
    let mut spec = PhaseSweepSpec::new(GraphKind::Complete, vec![20, 40, 80], q_grid.clone(), 20);
    spec.base_seed = 6;
    let points = phase_sweep(&spec);
    let crossovers: Vec<Option<f64>> =
        points.chunks(q_grid.len()).map(|curve| crossover_q(curve, 0.5)).collect();
    let values: Vec<f64> = crossovers.iter().map(|c| c.unwrap_or(f64::INFINITY)).collect();
    let failures: usize = points.iter().map(|p| p.failures).sum();
    outcome(
        failures == 0 && values.windows(2).all(|w| w[0] <= w[1]),
        format!("q*(20, 40, 80) = {:?}, {failures} generation failures", crossovers.iter().map(|c| c.map(|v| (v * 1e4).round() / 1e4)).collect::<Vec<_>>()),
    )
}

fn recall_diagnostic() -> Outcome {
    let rows = candidate_recall(&[5, 10, 25, 50, 100], 1000, 100, 0.2, 0.5, 2.0, 7);
    let recalls: Vec<f64> = rows.iter().map(|r| r.recall).collect();
    outcome(recalls.windows(2).all(|w| w[0] <= w[1]), format!("recall at B = 5, 10, 25, 50, 100: {recalls:?}"))
}

fn perturbed_state(truth: &[Direction], seed: u64, deg: f64) -> TangentState {
    let base = TangentState::new(truth.to_vec());
    let mut rng = rng::stream(seed, Stream::TheoryInstance, 99, 0);
    let z = DVector::from_fn(2 * truth.len(), |_, _| {
        use rand_distr::Distribution;
        rand_distr::Normal::new(0.0, deg.to_radians()).unwrap().sample(&mut rng)
    });
    base.retracted(&z).unwrap()
}

fn kkt_step(state: &TangentState, tri: &TriangleIndex, rho: f64) -> Vec<Direction> {
    let rows = build_det_system(state, tri, 1e-3);
    let (c, d) = stack_rows(&rows, state.n_edges());
    let (r, n) = (c.nrows(), c.ncols());
    let mut k = DMatrix::zeros(n + r, n + r);
    k.view_mut((0, 0), (n, n)).fill_with_identity();
    k.view_mut((0, n), (n, r)).copy_from(&c.transpose());
    k.view_mut((n, 0), (r, n)).copy_from(&c);
    for i in 0..r {
        k[(n + i, n + i)] = -rho;
    }
    let mut rhs = DVector::zeros(n + r);
    rhs.rows_mut(n, r).copy_from(&(-&d));
    let sol = k.lu().solve(&rhs).expect("KKT system solvable");
    state.retracted(&sol.rows(0, n).into_owned()).unwrap().into_directions()
}

fn gn_lm_oracle() -> Outcome {
    let (skeleton, truth) = gen_scene(&GraphModel::complete(5), 3).unwrap();
    let tri = enumerate_triangles(&skeleton);
    let state = perturbed_state(&truth.directions, 3, 3.0);
    let (next, stats) = gn_step(&state, &tri, 0.0, 1e-3).unwrap();
    let oracle = kkt_step(&state, &tri, stats.rho);
    let gn_diff = next
        .directions()
        .iter()
        .zip(&oracle)
        .flat_map(|(a, b)| (0..3).map(move |i| (a.vector()[i] - b.vector()[i]).abs()))
        .fold(0.0, f64::max);

    let spec = InstanceSpec {
        model: GraphModel::complete(5),
        n_matches: 60,
        inlier_frac: 0.7,
        corruption: tride::synthetic::CorruptionSpec { edge_fraction: 0.0, match_fraction: 0.0, inlier_noise_deg: 0.5 },
        seed: 3,
    };
    let inst = gen_instance(&spec).unwrap();
    let lm = run_lm(perturbed_state(&inst.truth.directions, 4, 3.0), &inst.graph, &tri, &LmConfig::default());
    let monotone = lm.accepted_objectives.windows(2).all(|w| w[1] <= w[0]);
    outcome(
        gn_diff <= 1e-8 && monotone,
        format!(
            "GN vs KKT max component diff {gn_diff:.2e} (limit 1e-8, rho {}); LM {} accepted steps, objectives {:.4} -> {:.4}, non-increasing: {monotone}",
            stats.rho,
            lm.accepted,
            lm.accepted_objectives[0],
            lm.accepted_objectives.last().unwrap()
        ),
    )
}

fn jacobian_check() -> Outcome {
    let (skeleton, _) = gen_scene(&GraphModel::complete(5), 9).unwrap();
    let tri = enumerate_triangles(&skeleton);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    let mut blocks = 0;
    for s in 0..100u64 {
        let dirs: Vec<Direction> = (0..skeleton.n_edges()).map(|e| random_direction(1000 + s, e)).collect();
        let state = TangentState::new(dirs);
        for row in build_det_system(&state, &tri, 0.0) {
            let edges = tri.triangles()[row.triangle].edges;
            for (e, block) in &row.blocks {
                let mut fd = [0.0; 2];
                for (k, slot) in fd.iter_mut().enumerate() {
                    let eval = |sign: f64| {
                        let mut z = Vector2::zeros();
                        z[k] = sign * h;
                        let moved = tride::gnlm::retract(&state.directions()[*e], &state.bases()[*e], &z).unwrap();
                        let g = |x: usize| if x == *e { moved } else { state.directions()[x] };
                        triple_product(&g(edges[0]), &g(edges[1]), &g(edges[2]))
                    };
                    *slot = (eval(1.0) - eval(-1.0)) / (2.0 * h);
                }
                let diff = ((fd[0] - block[0]).powi(2) + (fd[1] - block[1]).powi(2)).sqrt();
                worst = worst.max(diff / block.norm());
                blocks += 1;
            }
        }
    }
    outcome(worst <= 1e-5, format!("{blocks} blocks over 100 states, worst relative error {worst:.2e} (limit 1e-5)"))
}

fn complexity_scaling() -> Outcome {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let config = SweepConfig::default();
    let mut measured = Vec::new();
    let mut bound_ok = true;
    for n in [60usize, 76] {
        let spec = InstanceSpec {
            model: GraphModel::complete(n),
            n_matches: 20,
            inlier_frac: 1.0,
            corruption: tride::synthetic::CorruptionSpec { edge_fraction: 0.3, match_fraction: 0.8, inlier_noise_deg: 0.0 },
            seed: 5,
        };
        let inst = gen_instance(&spec).unwrap();
        let tri = enumerate_triangles(&inst.graph);
        let init = initialize(&inst.graph, InitMethod::Pca, config.sigma_deg, 5);
        let field = DirectionField::from_init(&init);
        let mut best = Duration::MAX;
        let mut evaluations = 0;
        for _ in 0..5 {
            let t = Instant::now();
            let (_, stats) = pool.install(|| sweep(&inst.graph, &tri, &field, &init.badness, &config));
            best = best.min(t.elapsed());
            evaluations = stats.evaluations;
        }
        let cap = 3 * (config.n_cand as u64 + 1) * tri.n_triangles() as u64;
        bound_ok &= evaluations <= cap;
        measured.push((tri.n_triangles() as f64, best.as_secs_f64(), evaluations, cap));
    }
    let tri_ratio = measured[1].0 / measured[0].0;
    let time_ratio = measured[1].1 / measured[0].1;
    outcome(
        bound_ok && time_ratio <= 1.3 * tri_ratio,
        format!(
            "evaluations {} <= {} and {} <= {}; triangles x{tri_ratio:.2}, sweep time x{time_ratio:.2} (limit x{:.2})",
            measured[0].2,
            measured[0].3,
            measured[1].2,
            measured[1].3,
            1.3 * tri_ratio
        ),
    )
}

fn cli(args: &[&str]) -> std::process::Output {
    let out = Command::new(env!("CARGO_BIN_EXE_tride")).args(args).output().expect("binary runs");
    assert!(out.status.success(), "tride {args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn without_timing(json: &[u8]) -> serde_json::Value {
    let mut v: serde_json::Value = serde_json::from_slice(json).expect("report is JSON");
    v.as_object_mut().expect("report is an object").remove("timing");
    v
}

fn determinism(dir: &Path) -> Outcome {
    let scene = dir.join("scene.json");
    let scene_s = scene.to_str().unwrap();
    let gen = |threads: &str| {
        cli(&["gen", "--threads", threads, "--model", "er", "--n", "30", "--p", "0.4", "--corrupt-q", "0.3", "--seed", "4"]).stdout
    };
    let gen_same = gen("1") == gen("4");
    std::fs::write(&scene, gen("1")).unwrap();

    let mut same = vec![("gen", gen_same)];
    for method in ["tride", "gn", "lm"] {
        let run = |threads: &str| {
            let csv = dir.join(format!("edges-{method}-{threads}.csv"));
            let out = cli(&[
                "run", "--threads", threads, "--scene", scene_s, "--init", "fms", "--method", method, "--seed", "9", "--edges-csv",
                csv.to_str().unwrap(),
            ]);
            (without_timing(&out.stdout), std::fs::read(csv).unwrap())
        };
        same.push((method, run("1") == run("4")));
    }
    let phase = |threads: &str| {
        cli(&["phase", "--threads", threads, "--n-grid", "10,14", "--q-grid", "0:1:0.25", "--seeds", "3", "--seed", "2"]).stdout
    };
    same.push(("phase", phase("1") == phase("4")));
    let ablate = |threads: &str| cli(&["ablate", "--threads", threads, "--scene", scene_s, "--seed", "2"]).stdout;
    same.push(("ablate", ablate("1") == ablate("4")));
    let again = |threads: &str| cli(&["ablate", "--threads", threads, "--scene", scene_s, "--seed", "2"]).stdout;
    same.push(("repeat", again("3") == ablate("3")));

    let diverging: Vec<&str> = same.iter().filter(|(_, s)| !s).map(|(n, _)| *n).collect();
    outcome(
        diverging.is_empty(),
        format!(
            "gen/run(tride, gn, lm)/phase/ablate at 1 vs 4 threads{}",
            if diverging.is_empty() { " identical".to_string() } else { format!(" differ in {diverging:?}") }
        ),
    )
}

fn main() {
    let dir = std::env::temp_dir().join(format!("tride-acceptance-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();

    type Check<'a> = (&'a str, Duration, Box<dyn Fn() -> Outcome + 'a>);
    let checks: Vec<Check> = vec![
        ("fixed point", Duration::from_secs(1), Box::new(fixed_point)),
        ("corruption stress test", Duration::from_secs(30), Box::new(stress_test)),
        ("corruption curve ordering", Duration::from_secs(300), Box::new(corruption_curve)),
        ("background support constant", Duration::from_secs(1), Box::new(background_constant)),
        ("deterministic one-sweep bound", Duration::from_secs(60), Box::new(deterministic_bound)),
        ("phase-transition direction", Duration::from_secs(600), Box::new(phase_direction)),
        ("candidate recall", Duration::from_secs(60), Box::new(recall_diagnostic)),
        ("GN/LM oracle equivalence", Duration::from_secs(1), Box::new(gn_lm_oracle)),
        ("Jacobian check", Duration::from_secs(5), Box::new(jacobian_check)),
        ("complexity scaling", Duration::from_secs(120), Box::new(complexity_scaling)),
        ("determinism", Duration::from_secs(60), Box::new(|| determinism(&dir))),
    ];

    let mut failed = 0;
    for (i, (name, budget, check)) in checks.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= *budget;
        failed += usize::from(!pass);
        println!(
            "[{}] {:>2} {name}: {} ({:.2} s, budget {} s)",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            result.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    std::fs::remove_dir_all(&dir).ok();
    println!("{} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
