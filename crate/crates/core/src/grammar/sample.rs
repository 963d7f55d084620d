use rand::Rng;

use super::{DerivationState, Expr, RuleId};
use crate::policy::{Policy, PolicyError};
use crate::rational::Condition;

/// Outcome of sequential rule sampling.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Sample {
    Complete {
        expr: Expr,
        rules: Vec<RuleId>,
    },
    /// The length cap was hit or the policy had no continuation.
    Incomplete {
        rules: Vec<RuleId>,
    },
}

impl Sample {
    pub fn rules(&self) -> &[RuleId] {
        match self {
            Sample::Complete { rules, .. } | Sample::Incomplete { rules } => rules,
        }
    }

    pub fn expr(&self) -> Option<&Expr> {
        match self {
            Sample::Complete { expr, .. } => Some(expr),
            Sample::Incomplete { .. } => None,
        }
    }

    pub fn is_complete(&self) -> bool {
        matches!(self, Sample::Complete { .. })
    }
}

/// Extends `state` one masked draw at a time until the derivation completes
/// or the length limit is reached.
pub fn sample_from_state<P, R>(
    policy: &P,
    mut state: DerivationState,
    condition: Condition,
    rng: &mut R,
) -> Result<Sample, PolicyError>
where
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    while !state.is_complete() {
        if state.at_limit() {
            return Ok(Sample::Incomplete {
                rules: state.rules().to_vec(),
            });
        }
        let dist = match policy.next_distribution(&state, condition) {
            Ok(d) => d,
            Err(PolicyError::NoSupport) => {
                return Ok(Sample::Incomplete {
                    rules: state.rules().to_vec(),
                })
            }
            Err(e) => return Err(e),
        };
        let rule = dist.sample(rng);
        state
            .apply(rule)
            .expect("masked distribution only proposes valid rules");
    }
    let rules = state.rules().to_vec();
    let expr = Expr::from_complete_rules(&rules).expect("complete state replays");
    Ok(Sample::Complete { expr, rules })
}

/// Samples a derivation from the start symbol.
pub fn sample_expression<P, R>(
    policy: &P,
    condition: Condition,
    length_limit: usize,
    rng: &mut R,
) -> Result<Sample, PolicyError>
where
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    sample_from_state(policy, DerivationState::new(length_limit), condition, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::{parse_text, Symbol, RULE_COUNT};
    use crate::policy::RandomPolicy;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Always prefers `( S )` for T and `S -> T` for S.
    struct Nesting;

    impl Policy for Nesting {
        fn raw_distribution(&self, state: &DerivationState, _c: Condition) -> Result<[f64; RULE_COUNT], PolicyError> {
            let mut raw = [0.0; RULE_COUNT];
            match state.pending() {
                Some(Symbol::O) => raw[0] = 1.0,
                Some(Symbol::S) => raw[5] = 1.0,
                _ => raw[6] = 1.0,
            }
            Ok(raw)
        }
    }

    #[test]
    fn uniform_sample_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut complete = 0;
        for _ in 0..1000 {
            let s = sample_expression(&RandomPolicy, Condition::new(0, 0), 100, &mut rng).unwrap();
            assert!(s.rules().len() <= 100);
            if let Sample::Complete { expr, rules } = s {
                complete += 1;
                assert_eq!(expr.to_rules(), rules);
                assert_eq!(parse_text(&expr.to_string()).unwrap(), expr);
            } else {
                assert_eq!(s.rules().len(), 100);
            }
        }
        assert!(complete > 0);
    }

    #[test]
    fn forced_nesting_hits_the_cap() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_expression(&Nesting, Condition::new(0, 0), 100, &mut rng).unwrap();
        match s {
            Sample::Incomplete { rules } => {
                assert_eq!(rules.len(), 100);
                assert_eq!(rules[..4], [RuleId::START, RuleId::TERM, RuleId::PAREN, RuleId::TERM]);
            }
            Sample::Complete { .. } => panic!("nesting never terminates"),
        }
    }

    #[test]
    fn same_seed_same_sample() {
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            sample_expression(&RandomPolicy, Condition::new(1, 1), 40, &mut rng).unwrap()
        };
        assert_eq!(draw(3), draw(3));
    }
}
