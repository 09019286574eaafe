use std::collections::BTreeMap;

use goalc::cgm::{parse_model, Decomposition, GoalModel};
use goalc::compiler::{compile_model, compose_node_form};
use goalc::gen::{random_binding, random_model, GenConfig};
use goalc::symexpr::SymExpr;
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const VARS: [&str; 4] = ["r_a", "f_a", "w_b", "C_C1"];

fn expr() -> impl Strategy<Value = SymExpr> {
    let leaf = prop_oneof![
        (-3i64..4).prop_map(SymExpr::constant),
        (0usize..VARS.len()).prop_map(|i| SymExpr::param(VARS[i])),
    ];
    leaf.prop_recursive(3, 16, 2, |inner| {
        prop_oneof![
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.add(&b)),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| a.mul(&b)),
            (inner.clone(), inner).prop_map(|(a, b)| a.sub(&b)),
        ]
    })
}

fn binding() -> impl Strategy<Value = BTreeMap<String, f64>> {
    (0.0f64..1.0, 0.0f64..1.0, 0.0f64..5.0, any::<bool>()).prop_map(|(r, f, w, c)| {
        BTreeMap::from([
            ("r_a".to_string(), r),
            ("f_a".to_string(), f),
            ("w_b".to_string(), w),
            ("C_C1".to_string(), f64::from(u8::from(c))),
        ])
    })
}

fn model(seed: u64) -> GoalModel {
    random_model(&mut ChaCha8Rng::seed_from_u64(seed), &GenConfig::default())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn ring_laws(a in expr(), b in expr(), c in expr()) {
        prop_assert_eq!(a.add(&b), b.add(&a));
        prop_assert_eq!(a.mul(&b), b.mul(&a));
        prop_assert_eq!(a.add(&b).add(&c), a.add(&b.add(&c)));
        prop_assert_eq!(a.mul(&b).mul(&c), a.mul(&b.mul(&c)));
        prop_assert_eq!(a.mul(&b.add(&c)), a.mul(&b).add(&a.mul(&c)));
        prop_assert!(a.sub(&a).is_zero());
        prop_assert_eq!(a.mul(&SymExpr::one()), a.clone());
    }

    #[test]
    fn evaluation_is_a_homomorphism(a in expr(), b in expr(), env in binding()) {
        let (x, y) = (a.evaluate(&env).unwrap(), b.evaluate(&env).unwrap());
        let tol = 1e-9 * (1.0 + x.abs() + y.abs()).powi(2);
        prop_assert!((a.add(&b).evaluate(&env).unwrap() - (x + y)).abs() <= tol);
        prop_assert!((a.mul(&b).evaluate(&env).unwrap() - x * y).abs() <= tol);
    }

    #[test]
    fn render_parse_round_trip(a in expr()) {
        prop_assert_eq!(SymExpr::parse(&a.render()).unwrap(), a);
    }

    #[test]
    fn compiled_matches_tree_evaluation(a in expr(), env in binding()) {
        let c = a.compile();
        let vals: Vec<f64> = c.vars().map(|v| env[v]).collect();
        let x = a.evaluate(&env).unwrap();
        prop_assert!((c.eval(&vals) - x).abs() <= 1e-9 * (1.0 + x.abs()));
    }

    #[test]
    fn model_json_round_trip(seed in any::<u64>()) {
        let m = model(seed);
        prop_assert_eq!(parse_model(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn and_is_order_independent(seed in any::<u64>()) {
        let cfg = GenConfig { and_only: true, ..GenConfig::default() };
        let m = random_model(&mut ChaCha8Rng::seed_from_u64(seed), &cfg);
        let mut shuffled = m.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(!seed);
        for n in shuffled.nodes.values_mut() {
            n.children.shuffle(&mut rng);
        }
        let a = compose_node_form(&m, &m.root_id).unwrap();
        let b = compose_node_form(&shuffled, &m.root_id).unwrap();
        prop_assert_eq!(a.p, b.p);
        prop_assert_eq!(a.w, b.w);
        prop_assert_eq!(a.cost, b.cost);
    }

    #[test]
    fn or_reliability_is_order_independent(seed in any::<u64>()) {
        let m = model(seed);
        let mut shuffled = m.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        for n in shuffled.nodes.values_mut() {
            n.children.shuffle(&mut rng);
            if let Some(dm) = n.dm_annotation.as_mut() {
                dm.shuffle(&mut rng);
            }
        }
        let a = compose_node_form(&m, &m.root_id).unwrap();
        let b = compose_node_form(&shuffled, &m.root_id).unwrap();
        prop_assert_eq!(a.p, b.p);
        prop_assert_eq!(a.w, b.w);
    }

    #[test]
    fn dm_folds_like_or_over_its_operands(seed in any::<u64>()) {
        let m = model(seed);
        let mut plain = m.clone();
        for n in plain.nodes.values_mut() {
            if let Some(dm) = n.dm_annotation.take() {
                n.children = dm;
                n.decomposition = Decomposition::Or;
            }
        }
        let a = compile_model(&m).unwrap();
        let b = compile_model(&plain).unwrap();
        for (id, f) in &a {
            let n = m.node(id).unwrap();
            if n.dm_annotation.as_ref().is_some_and(|d| d.len() >= 2) {
                prop_assert_eq!(&f.p, &b[id].p);
                prop_assert_eq!(&f.cost, &b[id].cost);
            }
        }
    }

    #[test]
    fn substitution_then_evaluation_agrees(seed in any::<u64>()) {
        let m = model(seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_binding(&mut rng, &m, false);
        let f = compose_node_form(&m, &m.root_id).unwrap();
        let half: BTreeMap<String, f64> =
            b.values.iter().filter(|(k, _)| k.starts_with("C_") || k.starts_with("r_")).map(|(k, v)| (k.clone(), *v)).collect();
        let direct = f.p.evaluate(&b).unwrap();
        let staged = f.p.substitute(&half).evaluate(&b).unwrap();
        prop_assert!((direct - staged).abs() <= 1e-12);
    }
}
