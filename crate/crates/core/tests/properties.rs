mod common;

use common::{any_graph, assert_close, connected_graph, regularized, relative_gap};
use grf_active::graph::{build_laplacian, largest_connected_component, validate_conditions, LaplacianMode};
use grf_active::grf::{condition, marginalize, GrfModel, LabeledSet, TestSet};
use grf_active::selection::{
    evaluate_risk, fast_marginal_gains, greedy_select, rank_one_downdate, Budget, Covariance, Criterion, CriterionKind,
    SelectionState,
};
use grf_active::verify::{self, SubmodularCase};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn kind_strategy() -> impl Strategy<Value = CriterionKind> {
    prop_oneof![Just(CriterionKind::Classification), Just(CriterionKind::Survey)]
}

fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lcc_is_connected_and_idempotent(g in any_graph(14)) {
        let (lcc, map) = largest_connected_component(&g).unwrap();
        prop_assert!(lcc.is_connected());
        let largest = g.components().iter().map(Vec::len).max().unwrap();
        prop_assert_eq!(lcc.node_count(), largest);
        let (again, map2) = largest_connected_component(&lcc).unwrap();
        prop_assert_eq!(again.edges(), lcc.edges());
        prop_assert!((0..map2.len()).all(|k| map2.to_old(k) == k));
        for &(i, j, w) in lcc.edges() {
            prop_assert_eq!(g.weight(map.to_old(i), map.to_old(j)), w);
        }
    }

    #[test]
    fn row_sums_match_regularization(g in connected_graph(2, 12, 0.3), sigma in 1.0..100.0f64) {
        let l0 = build_laplacian(&g, &LaplacianMode::Unregularized).unwrap();
        let ls = regularized(&g, sigma);
        for r in 0..g.node_count() {
            prop_assert!(l0.matrix().row(r).sum().abs() < 1e-12);
            prop_assert!((ls.matrix().row(r).sum() - sigma.powi(-2)).abs() < 1e-12);
        }
        prop_assert!(validate_conditions(&ls, 1e-8).all_ok());
        let report = validate_conditions(&l0, 1e-8);
        prop_assert!(report.structure_ok() && !report.nonsingular_ok);
    }

    #[test]
    fn inverse_is_nonnegative(g in connected_graph(2, 10, 0.4), sigma in 1.0..100.0f64) {
        let v = verify::inverse_nonnegative_violation(&regularized(&g, sigma)).unwrap();
        prop_assert!(v <= verify::SLACK);
    }

    #[test]
    fn block_difference_is_nonnegative_psd(g in connected_graph(3, 9, 0.4), sigma in 1.0..100.0f64, seed: u64) {
        let n = g.node_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut block = shuffled(n, seed);
        block.truncate(rng.random_range(1..n));
        block.sort_unstable();
        let v = verify::block_difference_violation(&regularized(&g, sigma), &block).unwrap();
        prop_assert!(v <= verify::SLACK);
    }

    #[test]
    fn harmonic_means_stay_in_label_range(g in connected_graph(2, 12, 0.3), seed: u64) {
        let n = g.node_count();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut labeled = shuffled(n, seed);
        labeled.truncate(rng.random_range(1..=n));
        let tags: Vec<f64> = labeled.iter().map(|_| rng.random_range(0.0..=1.0)).collect();
        let (lo, hi) = tags.iter().fold((1.0f64, 0.0f64), |(lo, hi), &t| (lo.min(t), hi.max(t)));
        let l0 = build_laplacian(&g, &LaplacianMode::Unregularized).unwrap();
        let p = condition(&GrfModel::unit(l0), &LabeledSet::new(labeled, tags).unwrap()).unwrap();
        for &f in p.mean.iter() {
            prop_assert!(f >= lo - 1e-9 && f <= hi + 1e-9, "{} outside [{}, {}]", f, lo, hi);
        }
    }

    #[test]
    fn beta_scales_covariance_only(g in connected_graph(2, 10, 0.3), beta in 0.1..10.0f64, seed: u64) {
        let n = g.node_count();
        let l = regularized(&g, 10.0);
        let mut labeled = shuffled(n, seed);
        labeled.truncate(n / 2);
        let tags: Vec<f64> = labeled.iter().map(|&v| (v % 2) as f64).collect();
        let set = LabeledSet::new(labeled, tags).unwrap();
        let unit = condition(&GrfModel::unit(l.clone()), &set).unwrap();
        let scaled = condition(&GrfModel::new(l, beta).unwrap(), &set).unwrap();
        prop_assert!((&unit.mean - &scaled.mean).amax() < 1e-12);
        prop_assert!((unit.covariance * beta - scaled.covariance).amax() < 1e-9);
    }

    #[test]
    fn marginalize_selects_rows_and_columns(g in connected_graph(3, 10, 0.3), seed: u64) {
        let n = g.node_count();
        let l = regularized(&g, 5.0);
        let order = shuffled(n, seed);
        let labeled = vec![order[0]];
        let mut test: Vec<usize> = order[1..].iter().copied().filter(|v| v % 2 == 0).collect();
        test.sort_unstable();
        let full = condition(&GrfModel::unit(l), &LabeledSet::new(labeled, vec![1.0]).unwrap()).unwrap();
        let m = marginalize(&full, &TestSet::Nodes(test.clone())).unwrap();
        prop_assert_eq!(&m.unlabeled_nodes, &test);
        for (a, &u) in test.iter().enumerate() {
            let i = full.unlabeled_nodes.iter().position(|&x| x == u).unwrap();
            prop_assert_eq!(m.mean[a], full.mean[i]);
            for (b, &w) in test.iter().enumerate() {
                let j = full.unlabeled_nodes.iter().position(|&x| x == w).unwrap();
                prop_assert_eq!(m.covariance[(a, b)], full.covariance[(i, j)]);
            }
        }
    }

    #[test]
    fn risk_is_monotone_submodular(
        g in connected_graph(3, 9, 0.4),
        sigma in 1.0..100.0f64,
        kind in kind_strategy(),
        seed: u64,
    ) {
        let n = g.node_count();
        let l = regularized(&g, sigma);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let order = shuffled(n, seed);
        let v = order[0];
        let big = rng.random_range(0..n);
        let small = rng.random_range(0..=big);
        let l1 = order[1..1 + small].to_vec();
        let l2 = order[1 + small..=big].to_vec();
        let case = SubmodularCase { l1, l2, v, test: TestSet::AllUnlabeled };
        prop_assert!(verify::submodular_violation(&l, kind, &case).unwrap() <= verify::SLACK);
    }

    #[test]
    fn fast_gains_match_direct_risk(g in connected_graph(2, 50, 0.1), kind in kind_strategy(), steps in 0usize..4) {
        let n = g.node_count();
        let l = regularized(&g, 10.0);
        let criterion = Criterion::new(kind, TestSet::AllUnlabeled);
        let mut state = SelectionState::new(&l, criterion.clone()).unwrap();
        for v in 0..steps.min(n - 1) {
            state.commit(v, 1.0).unwrap();
        }
        let pool: Vec<usize> = (0..n).filter(|v| !state.labeled().contains(v)).collect();
        for c in fast_marginal_gains(&state, &pool).unwrap() {
            let mut with = state.labeled().to_vec();
            with.push(c.node);
            let direct = evaluate_risk(&l, &with, &criterion).unwrap();
            let fast = c.risk.unwrap();
            prop_assert!(relative_gap(fast, direct) <= 1e-8 || (fast - direct).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_is_invariant_to_laplacian_scale(g in connected_graph(3, 15, 0.3), gamma in 0.1..10.0f64, kind in kind_strategy()) {
        let l = regularized(&g, 10.0);
        let criterion = Criterion::new(kind, TestSet::AllUnlabeled);
        let budget = Budget::unit(g.node_count(), 3.0).unwrap();
        let pool: Vec<usize> = (0..g.node_count()).collect();
        let a = greedy_select(&l, &criterion, &budget, &pool).unwrap();
        let b = greedy_select(&l.scaled(gamma), &criterion, &budget, &pool).unwrap();
        prop_assert_eq!(a.nodes(), b.nodes());
        for (x, y) in a.steps.iter().zip(&b.steps) {
            prop_assert!(relative_gap(x.risk_after, y.risk_after * gamma) < 1e-8);
        }
    }

    #[test]
    fn uniform_cost_scaling_keeps_selection(g in connected_graph(3, 15, 0.3), scale in 0.5..5.0f64, kind in kind_strategy()) {
        let n = g.node_count();
        let l = regularized(&g, 10.0);
        let criterion = Criterion::new(kind, TestSet::AllUnlabeled);
        let costs: Vec<f64> = (0..n).map(|v| 1.0 + (v % 3) as f64).collect();
        let scaled: Vec<f64> = costs.iter().map(|c| c * scale).collect();
        let pool: Vec<usize> = (0..n).collect();
        let a = greedy_select(&l, &criterion, &Budget::new(costs, 5.0).unwrap(), &pool).unwrap();
        let b = greedy_select(&l, &criterion, &Budget::new(scaled, 5.0 * scale).unwrap(), &pool).unwrap();
        prop_assert_eq!(a.nodes(), b.nodes());
    }
}

#[test]
fn downdate_chain_tracks_direct_inverse() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let g = verify::random_connected_graph(&mut rng, 30, 0.2);
    let l = regularized(&g, 10.0);
    let mut cov = Covariance::new((0..30).collect(), verify::inverse(&l).unwrap()).unwrap();
    let order = shuffled(30, 5);
    for step in 1..=20 {
        cov = rank_one_downdate(&cov, order[step - 1]).unwrap();
        let labeled = &order[..step];
        let rest: Vec<usize> = (0..30).filter(|v| !labeled.contains(v)).collect();
        assert_eq!(cov.nodes(), rest.as_slice());
        let direct = condition(
            &GrfModel::unit(l.clone()),
            &LabeledSet::new(labeled.to_vec(), vec![0.0; step]).unwrap(),
        )
        .unwrap()
        .covariance;
        let scale = direct.amax();
        assert!((cov.matrix() - &direct).amax() <= 1e-7 * scale, "step {step}");
    }
}

#[test]
fn greedy_step_gains_match_recorded_risks() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = verify::random_connected_graph(&mut rng, 25, 0.2);
    let l = regularized(&g, 10.0);
    for kind in [CriterionKind::Classification, CriterionKind::Survey] {
        let criterion = Criterion::new(kind, TestSet::AllUnlabeled);
        let trace = greedy_select(
            &l,
            &criterion,
            &Budget::unit(25, 6.0).unwrap(),
            &(0..25).collect::<Vec<_>>(),
        )
        .unwrap();
        let mut before = trace.initial_risk;
        for (k, s) in trace.steps.iter().enumerate() {
            let direct = evaluate_risk(&l, &trace.nodes()[..=k], &criterion).unwrap();
            assert_close(s.risk_after, direct, 1e-9);
            assert_close(s.marginal_gain, before - s.risk_after, 1e-9);
            assert!(s.risk_after <= before + 1e-12);
            before = s.risk_after;
        }
    }
}
