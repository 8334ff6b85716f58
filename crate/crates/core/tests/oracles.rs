mod common;

use asp_core::cop::{
    exact_oracle, expected_gap, proxy_oracle, HeuristicSolver, InsertionMethod, InstanceDistribution, Oracle,
    OracleKind, DEFAULT_EXACT_LIMIT,
};
use common::brute_force_length;
use proptest::prelude::*;

#[test]
fn held_karp_matches_enumeration_on_mixed_gaussian_instances() {
    for n in 3..=8 {
        for inst in asp_core::cop::sample_mixed_gaussian(n, 15, 1.0, n as u64).unwrap() {
            let hk = exact_oracle(&inst, DEFAULT_EXACT_LIMIT).unwrap();
            assert!((hk.length - brute_force_length(&inst)).abs() < 1e-9, "n={n}");
        }
    }
}

#[test]
fn proxy_never_beats_the_exact_optimum() {
    for n in [6, 9, 11] {
        for (k, inst) in InstanceDistribution::uniform(n).sample(10, 40 + n as u64).unwrap().iter().enumerate() {
            let exact = exact_oracle(inst, DEFAULT_EXACT_LIMIT).unwrap().length;
            let proxy = proxy_oracle(inst, k as u64).unwrap().length;
            assert!(proxy >= exact - 1e-9, "n={n} #{k}: {proxy} < {exact}");
        }
    }
}

#[test]
fn oracle_switches_to_proxy_above_the_limit() {
    let oracle = Oracle::with_limit(7);
    assert_eq!(oracle.kind_for(7), OracleKind::Exact);
    assert_eq!(oracle.kind_for(8), OracleKind::Proxy);
    let inst = &InstanceDistribution::uniform(8).sample(1, 3).unwrap()[0];
    assert_eq!(oracle.solve(inst).unwrap().1, OracleKind::Proxy);
    assert!(exact_oracle(inst, 7).is_err());
}

#[test]
fn insertion_heuristics_rank_as_expected_on_uniform_instances() {
    let oracle = Oracle::default();
    for n in [8, 10] {
        let dist = InstanceDistribution::uniform(n);
        let gap = |m: InsertionMethod| expected_gap(&HeuristicSolver(m), &dist, 300, 17, &oracle).unwrap().mean;
        let (nearest, random, farthest) =
            (gap(InsertionMethod::NearestInsertion), gap(InsertionMethod::RandomInsertion), gap(InsertionMethod::FarthestInsertion));
        assert!(nearest >= random && random >= farthest, "n={n}: {nearest} {random} {farthest}");
        assert!(farthest >= 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn heuristic_tours_are_never_shorter_than_optimal(seed in 0u64..10_000, n in 4usize..9) {
        let inst = &InstanceDistribution::uniform(n).sample(1, seed).unwrap()[0];
        let best = brute_force_length(inst);
        for m in InsertionMethod::ALL {
            let t = asp_core::cop::heuristic_solve(inst, m, seed).unwrap();
            prop_assert!(t.length >= best - 1e-9);
        }
    }
}
