use ccs_placement::exec::Execution;
use ccs_placement::lp::{certify, certify_batch, solve_problem, Instance, LpStatus, StructureSource};
use ccs_placement::popularity::{make_custom, make_zipf};
use ccs_placement::solver::PlacementProblem;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_instances(count: usize, seed: u64) -> Vec<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.random_range(2..=6);
            let k = rng.random_range(1..=5);
            let weights: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let probs: Vec<f64> = weights.iter().map(|w| w / total).collect();
            // M in {0.5, 1, ..., N}
            let cache = rng.random_range(1..=2 * n) as f64 * 0.5;
            Instance { model: make_custom(&probs).unwrap(), k_users: k, cache }
        })
        .collect()
}

#[test]
fn random_small_instances_certify() {
    let instances = random_instances(200, 2024);
    let reports = certify_batch(&instances, Execution::default());
    for (inst, rep) in instances.iter().zip(reports) {
        let rep = rep.unwrap();
        assert!(
            rep.gap <= 1e-8,
            "N={} K={} M={} p={:?}: lp {} vs search {}",
            inst.model.n_files(),
            inst.k_users,
            inst.cache,
            inst.model.probs(),
            rep.lp_rate,
            rep.alg_rate
        );
        assert!(rep.lp_nonnegative);
        assert!(rep.lp_cache_equality);
        assert!(rep.structural.all_hold(), "{rep:?}");
        assert!(rep.structural.group_count <= 3);
    }
}

#[test]
fn batch_is_order_preserving() {
    let instances = random_instances(12, 7);
    let seq = certify_batch(&instances, Execution::Sequential);
    let par = certify_batch(&instances, Execution::Parallel);
    assert_eq!(seq, par);
}

#[test]
fn lp_recovers_m4_placement() {
    let z = make_zipf(9, 1.5).unwrap();
    let problem = PlacementProblem::new(&z, 7, 4.0).unwrap();
    let sol = solve_problem(&problem).unwrap();
    assert_eq!(sol.status, LpStatus::Optimal);
    assert!(sol.min_reduced_cost >= -1e-8);
    let best = problem.algorithm4();
    assert!((sol.objective_value - best.rate).abs() <= 1e-8);
    let a = sol.placement(9, 7).unwrap();
    for n in 1..=7 {
        assert!((a.get(n, 4) - 1.0 / 35.0).abs() <= 5e-4);
    }
    for n in 8..=9 {
        assert!((a.get(n, 0) - 1.0).abs() <= 5e-4);
    }
}

#[test]
fn uniform_lp_equals_one_group() {
    for (n, k, m) in [(4, 3, 1.5), (5, 4, 2.0), (6, 2, 4.5)] {
        let z = make_zipf(n, 0.0).unwrap();
        let problem = PlacementProblem::new(&z, k, m).unwrap();
        let lp = solve_problem(&problem).unwrap();
        assert!((lp.objective_value - problem.one_group().rate).abs() <= 1e-8);
    }
}

#[test]
fn degenerate_vertex_falls_back_to_search_structure() {
    // Uniform popularity has a whole face of optima; whatever vertex the
    // simplex lands on, the reported structure must satisfy every claim.
    let z = make_zipf(6, 0.0).unwrap();
    let rep = certify(&z, 4, 2.5).unwrap();
    assert!(rep.certified);
    assert!(rep.structural.all_hold());
    if rep.structural.source == StructureSource::Algorithm4 {
        assert_eq!(rep.structural.group_count, 1);
    }
}

#[test]
fn reference_configurations_certify() {
    let z = make_zipf(9, 1.5).unwrap();
    for m in [1.0, 2.5, 4.0, 5.5, 6.0, 7.0] {
        let rep = certify(&z, 7, m).unwrap();
        assert!(rep.certified, "M={m}: {rep:?}");
    }
}
