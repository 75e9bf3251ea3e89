mod common;

use common::*;
use gridltl::buchi::{degeneralize, translate, translate_generalized, Nba, DEFAULT_STATE_CAP};
use gridltl::ltl::{evaluate_lasso, parse_ltl};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn evaluator_agrees_with_direct_semantics(seed in any::<u64>()) {
        let mut r = rng(seed);
        let aps = small_universe();
        let f = random_formula(&mut r, &aps, 4);
        for _ in 0..10 {
            let w = random_lasso(&mut r, &aps);
            prop_assert_eq!(evaluate_lasso(&f, &w), oracle_holds(&f, &w), "{} on {:?}", f, w);
        }
    }

    #[test]
    fn automaton_accepts_exactly_the_models(seed in any::<u64>()) {
        let mut r = rng(seed);
        let aps = small_universe();
        let f = random_formula(&mut r, &aps, 3);
        let nba = translate(&f).unwrap();
        for _ in 0..10 {
            let w = random_lasso(&mut r, &aps);
            prop_assert_eq!(nba.accepts_lasso(&w), oracle_holds(&f, &w), "{} on {:?}", f, w);
        }
    }

    #[test]
    fn degeneralizing_keeps_the_language(seed in any::<u64>()) {
        let mut r = rng(seed);
        let aps = small_universe();
        let f = random_formula(&mut r, &aps, 3);
        let g = translate_generalized(&f, DEFAULT_STATE_CAP).unwrap();
        let nba = degeneralize(&g, DEFAULT_STATE_CAP).unwrap();
        for _ in 0..10 {
            let w = random_lasso(&mut r, &aps);
            prop_assert_eq!(g.accepts_lasso(&w), nba.accepts_lasso(&w));
        }
    }

    #[test]
    fn trimming_to_live_states_keeps_the_language(seed in any::<u64>()) {
        let mut r = rng(seed);
        let aps = small_universe();
        let f = random_formula(&mut r, &aps, 3);
        let nba = translate(&f).unwrap();
        let live = nba.live_states();
        let trimmed = nba.filter_transitions(|_, d, _| live.contains(&d));
        for _ in 0..10 {
            let w = random_lasso(&mut r, &aps);
            prop_assert_eq!(trimmed.accepts_lasso(&w), oracle_holds(&f, &w), "{} on {:?}", f, w);
        }
    }

    #[test]
    fn text_export_round_trips(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = random_formula(&mut r, &small_universe(), 3);
        let nba = translate(&f).unwrap();
        let back = Nba::import_text(&nba.export_text()).unwrap();
        prop_assert_eq!(back.export_text(), nba.export_text());
    }

    #[test]
    fn display_parses_back(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = random_formula(&mut r, &small_universe(), 4);
        prop_assert_eq!(parse_ltl(&f.to_string()).unwrap(), f);
    }
}

#[test]
fn negation_splits_every_lasso() {
    let mut r = rng(7);
    let aps = small_universe();
    for _ in 0..30 {
        let f = random_formula(&mut r, &aps, 3);
        let pos = translate(&f).unwrap();
        let neg = translate(&gridltl::ltl::Formula::not(f.clone())).unwrap();
        for _ in 0..10 {
            let w = random_lasso(&mut r, &aps);
            assert_ne!(pos.accepts_lasso(&w), neg.accepts_lasso(&w), "{f} on {w:?}");
        }
    }
}
