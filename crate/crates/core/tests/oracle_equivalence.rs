use goalc::cgm::{validate, GoalModel};
use goalc::compiler::compose_node_form;
use goalc::gen::{random_binding, random_model, GenConfig};
use goalc::oracle::{check_formula, cost_reach, exact_outcome_sums, prob_reach, CostMode, CostStatus};
use num_traits::One;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn model(seed: u64, cfg: &GenConfig) -> GoalModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    random_model(&mut rng, cfg)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn reliability_matches_oracle(seed in any::<u64>(), unit in any::<bool>()) {
        let m = model(seed, &GenConfig::default());
        prop_assert!(validate(&m).is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        for _ in 0..5 {
            let b = random_binding(&mut rng, &m, unit);
            let rep = check_formula(&m, &m.root_id, &b, 1e-9).unwrap();
            prop_assert!(rep.reliability_ok, "{:?}", rep);
            prop_assert!(rep.cost_ok(), "{:?}", rep);
        }
    }

    #[test]
    fn and_only_cost_matches_oracle(seed in any::<u64>()) {
        let cfg = GenConfig { and_only: true, ..GenConfig::default() };
        let m = model(seed, &cfg);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_binding(&mut rng, &m, false);
        let rep = check_formula(&m, &m.root_id, &b, 1e-9).unwrap();
        prop_assert_eq!(rep.cost, CostStatus::Ok, "{:?}", rep);
    }

    #[test]
    fn reliability_in_unit_interval(seed in any::<u64>()) {
        let m = model(seed, &GenConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(!seed);
        let b = random_binding(&mut rng, &m, false);
        let p = compose_node_form(&m, &m.root_id).unwrap().p.evaluate(&b).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&p), "{}", p);
    }

    #[test]
    fn monotone_in_reliability_and_frequency(seed in any::<u64>(), bump in 0.0f64..1.0) {
        let m = model(seed, &GenConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed.rotate_left(7));
        let b = random_binding(&mut rng, &m, false);
        let p = compose_node_form(&m, &m.root_id).unwrap().p;
        let base = p.evaluate(&b).unwrap();
        let oracle_base = prob_reach(&m, &m.root_id, &b).unwrap();
        let names: Vec<String> = b.values.keys()
            .filter(|k| k.starts_with("r_") || k.starts_with("f_")).cloned().collect();
        for name in names {
            let mut hi = b.clone();
            let v = hi.values[&name];
            hi.set(&name, v + (1.0 - v) * bump);
            prop_assert!(p.evaluate(&hi).unwrap() >= base - 1e-12);
            prop_assert!(prob_reach(&m, &m.root_id, &hi).unwrap() >= oracle_base - 1e-12);
        }
    }

    #[test]
    fn leaf_outcomes_sum_to_one_exactly(seed in any::<u64>()) {
        let m = model(seed, &GenConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let b = random_binding(&mut rng, &m, false);
        for s in exact_outcome_sums(&m, &m.root_id, &b).unwrap() {
            prop_assert!(s.is_one());
        }
    }
}

#[test]
fn all_frequencies_zero_matches_formula() {
    for seed in 0..200 {
        let m = model(seed, &GenConfig::default());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut b = random_binding(&mut rng, &m, false);
        let fs: Vec<String> = b.values.keys().filter(|k| k.starts_with("f_")).cloned().collect();
        for f in fs {
            b.set(&f, 0.0);
        }
        let p = compose_node_form(&m, &m.root_id).unwrap().p.evaluate(&b).unwrap();
        assert_eq!(p, prob_reach(&m, &m.root_id, &b).unwrap());
        assert_eq!(cost_reach(&m, &m.root_id, &b, CostMode::Default).unwrap(), 0.0);
    }
}
