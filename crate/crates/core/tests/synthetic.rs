use nalgebra::Vector3;
use tride::gnlm::tangent_basis;
use tride::geometry::{triple_product, unit_normalize, Direction};
use tride::eval::candidate_recall;
use tride::synthetic::{
    background_support_constant, gen_instance, gen_scene, gen_theory_instance, theory_bound, well_distributedness,
    CorruptionSpec, GraphModel, InstanceSpec, TheorySpec,
};
use tride::tride::badness;
use tride::viewgraph::enumerate_triangles;

#[test]
fn truth_is_triangle_consistent() {
    for model in [GraphModel::complete(10), GraphModel::erdos_renyi(25, 0.4), GraphModel::rgg(25, 0.5)] {
        for seed in 0..3 {
            let (g, truth) = gen_scene(&model, seed).unwrap();
            let tri = enumerate_triangles(&g);
            for t in tri.triangles() {
                let [a, b, c] = t.edges.map(|e| truth.directions[e]);
                assert!(triple_product(&a, &b, &c).abs() <= 1e-10);
            }
            for (e, &(i, j)) in g.edges().iter().enumerate() {
                let d = Vector3::from(truth.locations[i]) - Vector3::from(truth.locations[j]);
                assert!(truth.directions[e].cross(&unit_normalize(d).unwrap()).norm() < 1e-12);
            }
        }
    }
}

#[test]
fn rgg_edges_respect_radius() {
    let (g, truth) = gen_scene(&GraphModel::rgg(30, 0.4), 4).unwrap();
    let mut expected = 0;
    for i in 0..30 {
        for j in i + 1..30 {
            let d = (Vector3::from(truth.locations[i]) - Vector3::from(truth.locations[j])).norm();
            if d <= 0.4 {
                expected += 1;
                assert!(g.edge_id(i, j).is_some());
            }
        }
    }
    assert_eq!(g.n_edges(), expected);
}

#[test]
fn evidence_counts_and_inliers() {
    let spec = InstanceSpec {
        model: GraphModel::complete(8),
        n_matches: 50,
        inlier_frac: 0.7,
        corruption: CorruptionSpec::none(),
        seed: 3,
    };
    let inst = gen_instance(&spec).unwrap();
    for e in 0..inst.graph.n_edges() {
        let ev = inst.graph.evidence(e);
        assert_eq!(ev.len(), 50);
        assert!(ev.iter().all(|x| (x.vector().norm() - 1.0).abs() < 1e-12 && x.is_canonical()));
        let on_circle = ev.iter().filter(|x| x.dot(&inst.truth.directions[e]).abs() <= 1e-12).count();
        assert_eq!(on_circle, 35);
        assert!(badness(&inst.truth.directions[e], ev, 1f64.to_radians()) < 0.3 + 0.05);
    }
    assert!(inst.corrupted.iter().all(|&c| !c));
}

#[test]
fn corruption_rate_and_replacement_count() {
    let n_cam = 40;
    let (q, frac, m) = (0.3, 0.8, 80);
    let spec = InstanceSpec { model: GraphModel::complete(n_cam), ..InstanceSpec::stress_test(q, frac, 9) };
    let clean = gen_instance(&InstanceSpec { model: GraphModel::complete(n_cam), ..InstanceSpec::stress_test(0.0, frac, 9) }).unwrap();
    let inst = gen_instance(&spec).unwrap();
    let edges = inst.graph.n_edges() as f64;
    let hits = inst.corrupted.iter().filter(|&&c| c).count() as f64;
    let sd = (edges * q * (1.0 - q)).sqrt();
    assert!((hits - edges * q).abs() <= 3.0 * sd, "{hits} of {edges}");

    let replaced = (frac * m as f64).round() as usize;
    for e in 0..inst.graph.n_edges() {
        let changed = inst.graph.evidence(e).iter().zip(clean.graph.evidence(e)).filter(|(a, b)| a != b).count();
        assert_eq!(changed, if inst.corrupted[e] { replaced } else { 0 });
    }
}

#[test]
fn generation_is_deterministic() {
    let spec = InstanceSpec::stress_test(0.4, 0.8, 77);
    let a = gen_instance(&spec).unwrap();
    let b = gen_instance(&spec).unwrap();
    assert_eq!(a.graph, b.graph);
    assert_eq!(a.truth, b.truth);
    assert_eq!(a.corrupted, b.corrupted);
}

#[test]
fn invalid_models_are_rejected() {
    assert!(gen_scene(&GraphModel::erdos_renyi(10, 1.5), 0).is_err());
    assert!(gen_scene(&GraphModel::rgg(10, 0.0), 0).is_err());
    assert!(gen_instance(&InstanceSpec::stress_test(1.2, 0.5, 0)).is_err());
    let (empty, _) = gen_scene(&GraphModel::erdos_renyi(10, 0.0), 0).unwrap();
    assert_eq!(empty.n_edges(), 0);
}

#[test]
fn background_constant_matches_quadrature() {
    for sigma_deg in [0.5, 1.0, 3.0, 10.0] {
        let s = f64::to_radians(sigma_deg);
        let steps = 400_000;
        let h = std::f64::consts::FRAC_PI_2 / steps as f64;
        let f = |a: f64| (-(a * a) / (2.0 * s * s)).exp() * a.cos();
        let trap = h * ((1..steps).map(|k| f(k as f64 * h)).sum::<f64>() + 0.5 * (f(0.0) + f(std::f64::consts::FRAC_PI_2)));
        assert!((background_support_constant(s) - trap).abs() < 1e-9, "σ = {sigma_deg}°");
    }
    assert!((background_support_constant(1f64.to_radians()) - 0.02187).abs() < 5e-5);
}

#[test]
fn bound_formula() {
    assert_eq!(theory_bound(1.0, 0.5, 15.0, 0.3), 0.0);
    let v = theory_bound(0.8, 0.5, 10.0, 0.2);
    assert!((v - 0.2 / 0.4 * (-2.0f64).exp()).abs() < 1e-15);
}

#[test]
fn well_distributedness_matches_grid_search() {
    let g = unit_normalize(Vector3::new(0.3, -0.5, 0.8)).unwrap();
    let u = tangent_basis(&g);
    let normals: Vec<Direction> = [0.1, 0.9, 2.0, 2.5]
        .iter()
        .map(|&p: &f64| unit_normalize(u.column(0) * p.cos() + u.column(1) * p.sin()).unwrap())
        .collect();
    let grid = (0..200_000)
        .map(|k| {
            let t = k as f64 / 200_000.0 * std::f64::consts::PI;
            let h = u.column(0) * t.cos() + u.column(1) * t.sin();
            normals.iter().map(|n| h.dot(n.vector()).abs()).sum::<f64>() / normals.len() as f64
        })
        .fold(f64::INFINITY, f64::min);
    let w = well_distributedness(&g, &normals);
    assert!(w <= grid + 1e-12 && grid - w < 1e-4, "{w} vs {grid}");

    let single = vec![normals[0]];
    assert!(well_distributedness(&g, &single).abs() < 1e-12);
}

#[test]
fn theory_instance_supports() {
    let spec = TheorySpec::new(GraphModel::complete(15), 0.4, 5);
    let inst = gen_theory_instance(&spec).unwrap();
    let n_edges = inst.graph.n_edges();
    let weak = inst.clean.iter().filter(|&&c| !c).count() as f64;
    assert!((weak / n_edges as f64 - 0.4).abs() < 0.15);
    for e in 0..n_edges {
        let s = 1.0 - inst.init.badness[e];
        if inst.clean[e] {
            assert_eq!(inst.init.directions[e], inst.truth.directions[e]);
            assert!((s - 0.8).abs() < 0.05, "anchor support {s}");
        } else {
            assert!(s < 0.8 - 0.2, "weak support {s}");
        }
    }
}

#[test]
fn recall_miss_rate_is_exponential_in_budget() {
    // with noise-free inliers a hypothesis is exact iff both normals are inliers
    let pi: f64 = 0.5;
    let budgets = [2, 5, 10];
    let rows = candidate_recall(&budgets, 4000, 100, pi, 0.0, 1e-6, 31);
    for row in rows {
        let miss = 1.0 - row.recall;
        assert!(miss > 0.0);
        let c = -miss.ln() / (row.budget as f64 * pi * pi);
        assert!((0.3..=1.5).contains(&c), "B = {}: miss {miss}, c = {c}", row.budget);
    }
}
