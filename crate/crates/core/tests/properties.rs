use gw_extinct::model_io::{load_model_doc, parse_model_json, ModelDoc};
use gw_extinct::progeny::{mean_row, pgf_eval};
use gw_extinct::solver::{truncated_extinction, Method, SolverConfig};
use gw_extinct::spectral::{build_mean_matrices, spectral_radius};
use gw_extinct::truncation::{build_truncated, ReplacementDistribution, TruncationMode};
use gw_extinct::{ProgenyModel, SparseOffspring, TableModel, TailRule, TypeLaw};
use proptest::prelude::*;

const SLACK: f64 = 1e-8;

type EventSpec = (f64, Vec<(u32, u32)>);

fn event() -> impl Strategy<Value = EventSpec> {
    (
        0.05f64..1.0,
        prop::collection::vec((0u32..8, 1u32..3), 0..3),
    )
}

fn table() -> impl Strategy<Value = TableModel> {
    (
        1u32..3,
        prop::collection::vec(prop::collection::vec(event(), 1..4), 2..6),
        prop_oneof![
            Just(TailRule::Extinct),
            Just(TailRule::RepeatLast),
            Just(TailRule::ShiftLast)
        ],
    )
        .prop_map(|(first, laws, tail)| {
            let laws = laws
                .into_iter()
                .map(|events| {
                    let total: f64 = events.iter().map(|e| e.0).sum();
                    TypeLaw::new(events.into_iter().map(|(w, kids)| {
                        let kids = kids.into_iter().map(|(t, n)| (first + t, n));
                        (w / total, SparseOffspring::new(kids).unwrap())
                    }))
                    .unwrap()
                })
                .collect();
            TableModel::new(first, laws, tail).unwrap()
        })
}

fn alpha() -> impl Strategy<Value = ReplacementDistribution> {
    prop_oneof![
        Just(ReplacementDistribution::FirstType),
        Just(ReplacementDistribution::LastType),
        Just(ReplacementDistribution::Uniform),
        (
            prop::collection::vec(0.0f64..1.0, 1..3),
            prop::collection::vec(0.1f64..1.0, 1..3)
        )
            .prop_map(|(h, t)| ReplacementDistribution::custom(h, t).unwrap()),
    ]
}

fn solve(model: &dyn ProgenyModel, k: u32, mode: TruncationMode) -> Vec<f64> {
    truncated_extinction(model, k, &mode, &SolverConfig::default())
        .unwrap()
        .x
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn truncations_are_sandwiched(model in table(), dk in 0u32..8, alpha in alpha()) {
        let k = model.first_type() + dk;
        let q = solve(&model, k, TruncationMode::Immortal);
        let qt = solve(&model, k, TruncationMode::Sterile);
        let qb = solve(&model, k, TruncationMode::Augmented(alpha));
        for j in 0..q.len() {
            prop_assert!(q[j] <= qb[j] + SLACK && qb[j] <= qt[j] + SLACK, "type#{j}: {} {} {}", q[j], qb[j], qt[j]);
        }
    }

    #[test]
    fn immortal_rises_and_sterile_falls(model in table(), dk in 0u32..8) {
        let k = model.first_type() + dk;
        let (q0, q1) = (solve(&model, k, TruncationMode::Immortal), solve(&model, k + 1, TruncationMode::Immortal));
        let (t0, t1) = (solve(&model, k, TruncationMode::Sterile), solve(&model, k + 1, TruncationMode::Sterile));
        for j in 0..q0.len() {
            prop_assert!(q0[j] <= q1[j] + SLACK);
            prop_assert!(t1[j] <= t0[j] + SLACK);
        }
    }

    #[test]
    fn solutions_are_fixed_points_in_the_unit_cube(model in table(), dk in 0u32..8, alpha in alpha()) {
        let k = model.first_type() + dk;
        for mode in [TruncationMode::Immortal, TruncationMode::Sterile, TruncationMode::Augmented(alpha.clone())] {
            let sys = build_truncated(&model, k, mode).unwrap();
            let x = solve(&model, k, sys.mode().clone());
            let g = sys.system_eval(&x).unwrap();
            for (xi, gi) in x.iter().zip(&g) {
                prop_assert!((0.0..=1.0).contains(xi));
                prop_assert!((xi - gi).abs() < 1e-9, "{xi} vs {gi}");
            }
        }
    }

    #[test]
    fn newton_matches_functional_iteration_off_criticality(model in table(), dk in 0u32..8) {
        let k = model.first_type() + dk;
        let mode = TruncationMode::Immortal;
        let sys = build_truncated(&model, k, mode.clone()).unwrap();
        let x = solve(&model, k, mode.clone());
        let rho = spectral_radius(&sys.jacobian(&x), 1e-12).unwrap();
        // Functional iteration crawls near a critical fixed point.
        prop_assume!(rho < 0.99);
        let fi = SolverConfig { method: Method::FunctionalIteration, inner_tol: 1e-14, ..SolverConfig::default() };
        let y = truncated_extinction(&model, k, &mode, &fi).unwrap().x;
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn mean_row_is_the_gradient_at_one(model in table(), di in 0u32..10) {
        let i = model.first_type() + di;
        let row = mean_row(&model, i).unwrap();
        let width = (i - model.first_type()) as usize + 20;
        let h = 1e-6;
        let mut s = vec![1.0; width];
        for j in 0..width {
            let t = model.first_type() + j as u32;
            s[j] = 1.0 + h;
            let up = pgf_eval(&model, i, &s, 1.0).unwrap();
            s[j] = 1.0 - h;
            let down = pgf_eval(&model, i, &s, 1.0).unwrap();
            s[j] = 1.0;
            let exact = row.iter().find(|(u, _)| *u == t).map_or(0.0, |(_, m)| *m);
            prop_assert!(((up - down) / (2.0 * h) - exact).abs() < 1e-6);
        }
    }

    #[test]
    fn sterile_perron_root_grows_with_the_window(model in table(), dk in 0u32..8) {
        let k = model.first_type() + dk;
        let r0 = spectral_radius(&build_mean_matrices(&model, k, None).unwrap().tilde, 1e-12).unwrap();
        let r1 = spectral_radius(&build_mean_matrices(&model, k + 1, None).unwrap().tilde, 1e-12).unwrap();
        prop_assert!(r0 <= r1 + 1e-9, "{r0} > {r1}");
    }

    #[test]
    fn zoo_documents_round_trip(a in 0.01f64..0.99, c in 0.01f64..0.99, d in 1.01f64..4.0) {
        let doc = ModelDoc::zoo("example2", &[("a", a), ("c", c), ("d", d)]);
        let json = serde_json::to_string(&doc).unwrap();
        prop_assert_eq!(&parse_model_json(&json).unwrap(), &doc);
        let uri = format!("zoo:example2?a={a}&c={c}&d={d}");
        prop_assert_eq!(&load_model_doc(&uri).unwrap(), &doc);
    }
}
