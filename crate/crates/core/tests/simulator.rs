use std::sync::Arc;

use gw_extinct::sim::*;
use gw_extinct::solver::{extinction_sequence, truncated_extinction, SolverConfig};
use gw_extinct::truncation::{ReplacementDistribution, TruncationMode};
use gw_extinct::zoo::{Example1, Example2, Example3};
use gw_extinct::{ProgenyModel, SparseOffspring, TableModel, TailRule, TypeLaw};
use proptest::prelude::*;

fn node(ty: u32, children: Vec<TreeSpec>) -> TreeSpec {
    TreeSpec::node(ty, children)
}

fn leaf(ty: u32) -> TreeSpec {
    TreeSpec::leaf(ty)
}

fn off(pairs: &[(u32, u32)]) -> SparseOffspring {
    SparseOffspring::new(pairs.iter().copied()).unwrap()
}

fn five_type_model() -> TableModel {
    let law = TypeLaw::new([(0.5, off(&[])), (0.5, off(&[(1, 1), (2, 1)]))]).unwrap();
    TableModel::new(1, vec![law; 5], TailRule::Extinct).unwrap()
}

// Root 1 with children 2 and 3; 2 -> 4; 3 -> {1 -> 4, 4 -> {2, 3}}.
fn coupling_tree() -> TreeSpec {
    node(
        1,
        vec![
            node(2, vec![leaf(4)]),
            node(
                3,
                vec![node(1, vec![leaf(4)]), node(4, vec![leaf(2), leaf(3)])],
            ),
        ],
    )
}

#[test]
fn coupling_figure_replay() {
    let mut src = ReplaySource::from_tree(&coupling_tree());
    // The two sterile individuals are replaced by type 1 in the augmented
    // process; the replacement at the root has no children, the one under
    // <12> has a type-1 and a type-2 child, both childless.
    src.set_replacement(vec![], 2, 1, 1);
    src.set_replacement(vec![(1, 2)], 2, 1, 1);
    src.set_offspring(vec![(1, 1)], off(&[]));
    src.set_offspring(vec![(1, 2), (1, 1)], off(&[(1, 1), (2, 1)]));
    src.set_offspring(vec![(1, 2), (1, 1), (1, 1)], off(&[]));
    src.set_offspring(vec![(1, 2), (1, 1), (1, 2)], off(&[]));

    let model = five_type_model();
    let cfg = SimConfig {
        levels: vec![2],
        track_global: true,
        record_generations: true,
        ..Default::default()
    };
    let path = derive_labelled_path(&mut src, &model, 1, &cfg).unwrap();
    let l = path.level(2).unwrap();
    assert_eq!(l.sterile, Fate::Extinct);
    assert_eq!(l.seeds, SeedCount::Known(2));
    assert_eq!(l.immortal, Fate::Immortal);
    assert_eq!(l.augmented, Fate::Extinct);
    assert_eq!(l.tau, Some(1));
    assert_eq!(path.global, Some(Fate::Extinct));
    assert_eq!(
        path.generations.clone().unwrap(),
        vec![
            vec![(1, 1)],
            vec![(2, 1), (3, 1)],
            vec![(1, 1), (4, 2)],
            vec![(2, 1), (3, 1), (4, 1)],
            vec![]
        ]
    );
    assert!(check_path_invariants(&path).is_empty());
}

#[test]
fn coupling_figure_needs_the_replacement_draws() {
    let mut src = ReplaySource::from_tree(&coupling_tree());
    let cfg = SimConfig {
        levels: vec![2],
        ..Default::default()
    };
    let err = derive_labelled_path(&mut src, &five_type_model(), 1, &cfg).unwrap_err();
    assert!(matches!(err, gw_extinct::SimError::MissingReplay(_)));
}

// The two realisations drawn in the seed-evolution figure; both produce
// the same seed totals.
fn seed_trees() -> [TreeSpec; 2] {
    let left = node(
        1,
        vec![
            node(1, vec![node(2, vec![leaf(3), leaf(4)])]),
            node(
                3,
                vec![node(1, vec![leaf(4)]), node(4, vec![leaf(2), leaf(5)])],
            ),
            leaf(5),
        ],
    );
    let right = node(
        1,
        vec![
            node(2, vec![leaf(3), node(4, vec![leaf(4)])]),
            node(3, vec![node(3, vec![leaf(4), node(4, vec![leaf(5)])])]),
            node(5, vec![node(5, vec![node(5, vec![leaf(5)])])]),
        ],
    );
    [left, right]
}

#[test]
fn seed_evolution_figure_replay() {
    let levels: Vec<u32> = (0..=5).collect();
    for tree in seed_trees() {
        let mut src = ReplaySource::from_tree(&tree);
        let seeds = seed_counts_for_tree(&mut src, 1, &levels, 100, 1_000).unwrap();
        let want: Vec<SeedCount> = [1, 3, 4, 4, 2, 0]
            .into_iter()
            .map(SeedCount::Known)
            .collect();
        assert_eq!(seeds, want);
    }
}

#[test]
fn seed_count_is_zero_when_sterile_truncation_survives() {
    // Type 1 always has two type-1 children: the window at level 1 explodes.
    let law = TypeLaw::new([(1.0, off(&[(1, 2), (2, 1)]))]).unwrap();
    let model: Arc<dyn ProgenyModel> =
        Arc::new(TableModel::new(1, vec![law], TailRule::Extinct).unwrap());
    let cfg = SimConfig {
        paths: 3,
        levels: vec![1, 2],
        max_population: 1_000,
        ..Default::default()
    };
    for p in simulate_paths(model, 1, &cfg).unwrap() {
        assert_eq!(p.seed_count(1).unwrap(), SeedCount::Known(0));
        assert_eq!(p.level(1).unwrap().sterile, Fate::Exploded);
        assert!(p.seed_count(3).is_err());
    }
}

#[test]
fn horizon_leaves_seeds_unknown() {
    // A critical single-type line that never dies.
    let law = TypeLaw::new([(1.0, off(&[(1, 1)]))]).unwrap();
    let model: Arc<dyn ProgenyModel> =
        Arc::new(TableModel::new(1, vec![law], TailRule::Extinct).unwrap());
    let cfg = SimConfig {
        paths: 2,
        levels: vec![1],
        max_generations: 20,
        ..Default::default()
    };
    let paths = simulate_paths(model, 1, &cfg).unwrap();
    assert_eq!(paths[0].seed_count(1).unwrap(), SeedCount::Unknown);
    assert!(paths[0].censored());
    let rows = seed_statistics(&paths, 3).unwrap();
    assert_eq!(rows[0].excluded, 2);
    assert_eq!(rows[0].resolved, 0);
}

#[test]
fn example1_single_seed_lines_exist() {
    let model: Arc<dyn ProgenyModel> = Arc::new(Example1::new(0.5, 0.5).unwrap());
    let cfg = SimConfig {
        paths: 4_000,
        levels: vec![1, 2, 5, 10, 20],
        ..Default::default()
    };
    let paths = simulate_paths(model, 1, &cfg).unwrap();
    let floor = 0.5 * (-1.0f64).exp();
    for row in seed_statistics(&paths, 10).unwrap() {
        assert!(
            row.p_one >= floor - 3.0 * row.p_one_stderr,
            "k={} p_one={}",
            row.k,
            row.p_one
        );
    }
}

#[test]
fn quadratic_single_type_extinction() {
    let law = TypeLaw::new([(0.25, off(&[])), (0.75, off(&[(1, 2)]))]).unwrap();
    let model: Arc<dyn ProgenyModel> =
        Arc::new(TableModel::new(1, vec![law], TailRule::Extinct).unwrap());
    let cfg = SimConfig {
        paths: 20_000,
        max_population: 10_000,
        ..Default::default()
    };
    let est = mc_extinction(model, 1, McTarget::Global, &cfg).unwrap();
    assert!(est.agrees_with(1.0 / 3.0, 3.0), "{est:?}");
    assert!(est.unresolved_fraction < 0.01);
}

#[test]
fn sterile_estimate_matches_solver() {
    let model = Arc::new(Example2::new(1.0 / 3.0, 13.0 / 16.0, 2.0).unwrap());
    let cfg = SimConfig {
        paths: 20_000,
        max_population: 10_000,
        ..Default::default()
    };
    let est = mc_extinction(model.clone(), 1, McTarget::Sterile(20), &cfg).unwrap();
    let q = truncated_extinction(
        model.as_ref(),
        20,
        &TruncationMode::Sterile,
        &SolverConfig::default(),
    )
    .unwrap();
    assert!(est.agrees_with(q.x[0], 3.0), "{est:?} vs {}", q.x[0]);
}

#[test]
fn empty_seed_probability_matches_solver() {
    let model = Arc::new(Example2::new(1.0 / 6.0, 7.0 / 8.0, 2.0).unwrap());
    let cfg = SimConfig {
        paths: 20_000,
        levels: vec![10],
        ..Default::default()
    };
    let paths = simulate_paths(model.clone(), 1, &cfg).unwrap();
    let mut rows = seed_statistics(&paths, 5).unwrap();
    attach_solver_column(&mut rows, model.as_ref(), 1, &SolverConfig::default()).unwrap();
    let r = &rows[0];
    let want = r.solver_p_zero.unwrap();
    assert!((r.p_zero - want).abs() <= 3.0 * r.p_zero_stderr, "{r:?}");
}

#[test]
fn immortal_limit_matches_global_estimate() {
    let model = Arc::new(Example2::new(1.0 / 3.0, 13.0 / 16.0, 2.0).unwrap());
    let seq = extinction_sequence(
        model.as_ref(),
        1,
        &TruncationMode::Immortal,
        &SolverConfig::default(),
    )
    .unwrap();
    assert!(seq.converged);
    let cfg = SimConfig {
        paths: 10_000,
        max_population: 10_000,
        ..Default::default()
    };
    let est = mc_extinction(model, 1, McTarget::Global, &cfg).unwrap();
    assert!(
        est.agrees_with(seq.final_value, 3.0),
        "{est:?} vs {}",
        seq.final_value
    );
    assert!(est.unresolved_fraction < 0.01, "{est:?}");
}

#[test]
fn doubling_model_augmented_estimate_matches_solver() {
    let model = Arc::new(Example3::new(7.0 / 9.0, 0.5).unwrap());
    let cfg = SimConfig {
        paths: 10_000,
        max_population: 100_000,
        levels: vec![8, 16],
        alpha: ReplacementDistribution::Uniform,
        ..Default::default()
    };
    let paths = simulate_paths(model.clone(), 2, &cfg).unwrap();
    for k in [8, 16] {
        for (target, mode) in [
            (McTarget::Augmented(k), TruncationMode::Augmented(ReplacementDistribution::Uniform)),
            (McTarget::Immortal(k), TruncationMode::Immortal),
            (McTarget::Sterile(k), TruncationMode::Sterile),
        ] {
            let est = estimate_extinction(&paths, target).unwrap();
            let q = truncated_extinction(model.as_ref(), k, &mode, &SolverConfig::default()).unwrap().x[0];
            assert!(est.agrees_with(q, 3.0), "{target:?}: {est:?} vs {q}");
            assert!(est.unresolved_fraction < 0.01, "{target:?}: {est:?}");
        }
    }
}

#[test]
fn engines_agree_in_distribution() {
    let model: Arc<dyn ProgenyModel> = Arc::new(Example1::new(0.7, 0.5).unwrap());
    let cfg = SimConfig {
        paths: 3_000,
        levels: vec![2, 4],
        alpha: ReplacementDistribution::Uniform,
        max_population: 300,
        max_generations: 60,
        ..Default::default()
    };
    let cohort = simulate_paths(model.clone(), 1, &cfg).unwrap();
    let labelled: Vec<CoupledPath> = (0..cfg.paths)
        .map(|p| {
            let mut src =
                RandomLabelSource::new(model.clone(), p, ReplacementDistribution::Uniform);
            derive_labelled_path(&mut src, model.as_ref(), 1, &cfg).unwrap()
        })
        .collect();
    for target in [
        McTarget::Sterile(2),
        McTarget::Immortal(4),
        McTarget::Augmented(2),
        McTarget::Augmented(4),
    ] {
        let a = estimate_extinction(&cohort, target).unwrap();
        let b = estimate_extinction(&labelled, target).unwrap();
        let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
        assert!(
            (a.estimate - b.estimate).abs() <= 4.0 * se + 0.01,
            "{target:?}: {a:?} vs {b:?}"
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn pathwise_invariants_hold(seed in 0u64..1_000, a in 0.05f64..0.95, b in 0.05f64..0.9) {
        let model: Arc<dyn ProgenyModel> = Arc::new(Example1::new(a, b).unwrap());
        let cfg = SimConfig {
            paths: 40,
            seed,
            levels: vec![1, 2, 3, 5, 8],
            track_global: true,
            max_population: 5_000,
            max_generations: 200,
            ..Default::default()
        };
        let paths = simulate_paths(model, 1, &cfg).unwrap();
        for p in &paths {
            let bad = check_path_invariants(p);
            prop_assert!(bad.is_empty(), "{:?}", bad);
        }
    }

    #[test]
    fn reruns_are_identical(seed in 0u64..1_000) {
        let model: Arc<dyn ProgenyModel> = Arc::new(Example2::new(1.0 / 6.0, 7.0 / 8.0, 2.0).unwrap());
        let cfg = SimConfig { paths: 20, seed, levels: vec![3, 6], ..Default::default() };
        prop_assert_eq!(simulate_paths(model.clone(), 1, &cfg).unwrap(), simulate_paths(model, 1, &cfg).unwrap());
    }
}
