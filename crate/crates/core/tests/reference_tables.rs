mod common;

use ccs_placement::bounds::{bound_exhaustive_prior, bound_proposed, bound_proposed_optimal, bound_two_group_prior};
use ccs_placement::placement::{analyze_groups, subpacketization};
use ccs_placement::popularity::make_zipf;
use ccs_placement::solver::{CaseId, PlacementProblem};
use common::{reference_bounds, reference_placements, table_distance};

#[test]
fn optimal_placements_match_reference_placements() {
    let z = make_zipf(9, 1.5).unwrap();
    for (m, table) in reference_placements() {
        let best = PlacementProblem::new(&z, 7, m).unwrap().algorithm4();
        let d = table_distance(&best.placement, &table);
        assert!(d <= 5e-4, "M={m}: max deviation {d}\n{}", best.placement.to_csv());
    }
}

#[test]
fn group_structure_per_cache_size() {
    let z = make_zipf(9, 1.5).unwrap();
    let expected = [
        (1.0, CaseId::TwoGroupZeroTail, vec![3]),
        (2.5, CaseId::ThreeGroupCase2, vec![4, 6]),
        (4.0, CaseId::TwoGroupZeroTail, vec![7]),
        (5.5, CaseId::ThreeGroupCase1, vec![7, 8]),
        (6.0, CaseId::TwoGroupCase2i, vec![8]),
        (7.0, CaseId::OneGroup, vec![]),
    ];
    for (m, case, boundaries) in expected {
        let best = PlacementProblem::new(&z, 7, m).unwrap().algorithm4();
        assert_eq!(best.case_id, case, "M={m}");
        assert_eq!(analyze_groups(&best.placement).boundaries, boundaries, "M={m}");
    }
}

#[test]
fn algorithm1_examples() {
    let z = make_zipf(9, 1.5).unwrap();
    let a1 = PlacementProblem::new(&z, 7, 1.0).unwrap().algorithm1().unwrap();
    assert_eq!(a1.tuple.n_o, Some(3));
    let a1 = PlacementProblem::new(&z, 7, 4.0).unwrap().algorithm1().unwrap();
    assert_eq!(a1.tuple.n_o, Some(7));
    assert!((a1.placement.get(1, 4) - 1.0 / 35.0).abs() < 1e-12);
}

#[test]
fn subpacketization_at_m1() {
    let z = make_zipf(9, 1.5).unwrap();
    // M = 1: files 1..3 use levels 2 and 3, the rest a single server part
    let best = PlacementProblem::new(&z, 7, 1.0).unwrap().algorithm4();
    let s = subpacketization(&best.placement);
    assert_eq!(s.per_file, vec![56, 56, 56, 1, 1, 1, 1, 1, 1]);
    assert_eq!(s.max_level, 56);
}

#[test]
fn reference_lower_bounds() {
    for (n, two, ex, prop) in reference_bounds() {
        let z = make_zipf(n, 1.5).unwrap();
        let r = bound_two_group_prior(&z, 6, 1.0);
        assert_eq!((r.n_popular, r.n_merged), (two.0, two.1), "N={n} two-group");
        assert!((r.value - two.2).abs() <= 5e-4, "N={n} two-group {}", r.value);
        let r = bound_exhaustive_prior(&z, 6, 1.0).unwrap();
        assert_eq!((r.n_popular, r.n_merged), (ex.0, ex.1), "N={n} exhaustive");
        assert!((r.value - ex.2).abs() <= 5e-4, "N={n} exhaustive {}", r.value);
        let r = bound_proposed_optimal(&z, 6, 1.0).unwrap();
        assert_eq!((r.n_popular, r.n_merged), (prop.0, prop.1), "N={n} proposed");
        assert!((r.value - prop.2).abs() <= 5e-4, "N={n} proposed {}", r.value);
    }
}

#[test]
fn proposed_bound_dominates_prior_on_reference_instances() {
    for n in [5, 7, 9] {
        let z = make_zipf(n, 1.5).unwrap();
        let prop = bound_proposed(&z, 6, 1.0, 3).unwrap();
        let prior = ccs_placement::bounds::bound_prior(&z, 6, 1.0);
        assert!(prop.value >= prior.value);
    }
}
