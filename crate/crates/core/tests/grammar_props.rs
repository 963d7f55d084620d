//! Derivation round trips, mask soundness and sampling closure.

mod common;

use asymreg_core::grammar::{
    mask_for, parse_text, sample_expression, Derivation, DerivationState, Expr, RuleId, Sample, RULE_COUNT,
};
use asymreg_core::policy::RandomPolicy;
use asymreg_core::rational::Condition;
use common::arb_expr;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn text_and_rules_round_trip(e in arb_expr(8, 60)) {
        prop_assert_eq!(parse_text(&e.to_string()).unwrap(), e.clone());
        let rules = e.to_rules();
        prop_assert_eq!(rules.len(), e.rule_len());
        prop_assert_eq!(Expr::from_complete_rules(&rules).unwrap(), e);
    }

    #[test]
    fn every_prefix_is_partial_and_next_rule_is_masked(e in arb_expr(6, 40)) {
        let rules = e.to_rules();
        let mut state = DerivationState::new(rules.len());
        for (i, &r) in rules.iter().enumerate() {
            let mask = state.valid_next_mask().unwrap();
            prop_assert!(mask[r.index()]);
            prop_assert_eq!(mask, mask_for(state.pending().unwrap()));
            prop_assert!(matches!(Expr::from_rules(&rules[..i + 1]).unwrap(),
                Derivation::Partial(_) | Derivation::Complete(_)));
            state.apply(r).unwrap();
        }
        prop_assert!(state.is_complete());
    }

    #[test]
    fn masked_out_rules_are_rejected(e in arb_expr(5, 30), cut in 0usize..30) {
        let rules = e.to_rules();
        let cut = cut % rules.len();
        let state = DerivationState::from_prefix(&rules[..cut], 200).unwrap();
        let mask = state.valid_next_mask().unwrap();
        for r in RuleId::ALL {
            let mut s = state.clone();
            prop_assert_eq!(s.apply(r).is_ok(), mask[r.index()]);
        }
    }
}

#[test]
fn masks_partition_the_rules() {
    let state = DerivationState::from_prefix(&[RuleId::START], 10).unwrap();
    let s = state.valid_next_mask().unwrap();
    let t = mask_for(asymreg_core::grammar::Symbol::T);
    let o = DerivationState::new(10).valid_next_mask().unwrap();
    for i in 0..RULE_COUNT {
        assert_eq!(u8::from(o[i]) + u8::from(s[i]) + u8::from(t[i]), 1, "rule {i}");
    }
}

#[test]
fn ten_thousand_samples_are_grammatical() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut complete, mut incomplete) = (0, 0);
    for _ in 0..10_000 {
        match sample_expression(&RandomPolicy, Condition::new(0, 0), 100, &mut rng).unwrap() {
            Sample::Complete { expr, rules } => {
                complete += 1;
                assert_eq!(expr.to_rules(), rules);
                assert_eq!(parse_text(&expr.to_string()).unwrap(), expr);
            }
            Sample::Incomplete { rules } => {
                incomplete += 1;
                assert_eq!(rules.len(), 100);
                let state = DerivationState::from_prefix(&rules, 100).unwrap();
                assert!(!state.is_complete());
            }
        }
    }
    assert_eq!(complete + incomplete, 10_000);
    assert!(complete > 0 && incomplete > 0);
}
