//! Next-rule distributions `p(r_{t+1} | r_1..r_t, c0, cinf)`.
//!
//! Every policy produces a raw score vector over the nine rules; the grammar
//! mask is applied on this side and the result renormalized.

mod empirical;
mod neural;

use std::collections::HashMap;
use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::grammar::{sample_from_state, DerivationState, GrammarError, RuleId, RuleMask, Sample, RULE_COUNT};
use crate::rational::Condition;

pub use empirical::{EmpiricalPolicy, EmpiricalVariant, Fallback, VariantParseError};
pub use neural::{Endpoint, NeuralPolicyClient, ENDPOINT_ENV};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    /// The policy declines to continue from this state.
    #[error("policy has no support for this state")]
    NoSupport,
    #[error("policy service unavailable: {0}")]
    ServiceUnavailable(String),
    #[error("policy protocol error: {0}")]
    Protocol(String),
    #[error(transparent)]
    Grammar(#[from] GrammarError),
}

/// Raw and masked next-rule probabilities.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PolicyDistribution {
    pub raw: [f64; RULE_COUNT],
    pub masked: [f64; RULE_COUNT],
    /// The masked product had no mass (or the policy had no data) and the
    /// uniform-over-valid fallback was used.
    pub fallback: bool,
}

impl PolicyDistribution {
    /// `normalize(raw * mask)`, or uniform over the mask when that is all
    /// zero. Negative and non-finite raw entries count as zero.
    pub fn from_raw(raw: [f64; RULE_COUNT], mask: RuleMask) -> Self {
        let mut masked = [0.0; RULE_COUNT];
        for i in 0..RULE_COUNT {
            if mask[i] && raw[i].is_finite() && raw[i] > 0.0 {
                masked[i] = raw[i];
            }
        }
        let total: f64 = masked.iter().sum();
        let fallback = !(total > 0.0 && total.is_finite());
        if fallback {
            masked = uniform_over(mask);
        } else {
            for p in &mut masked {
                *p /= total;
            }
        }
        PolicyDistribution { raw, masked, fallback }
    }

    pub fn uniform(mask: RuleMask) -> Self {
        PolicyDistribution {
            raw: [1.0; RULE_COUNT],
            masked: uniform_over(mask),
            fallback: false,
        }
    }

    pub fn prob(&self, rule: RuleId) -> f64 {
        self.masked[rule.index()]
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> RuleId {
        let index = WeightedIndex::new(self.masked).expect("masked distribution has mass");
        RuleId::ALL[index.sample(rng)]
    }
}

fn uniform_over(mask: RuleMask) -> [f64; RULE_COUNT] {
    let n = mask.iter().filter(|&&b| b).count() as f64;
    let mut out = [0.0; RULE_COUNT];
    for i in 0..RULE_COUNT {
        if mask[i] {
            out[i] = 1.0 / n;
        }
    }
    out
}

pub trait Policy {
    /// Unmasked scores for the next rule.
    fn raw_distribution(&self, state: &DerivationState, condition: Condition)
        -> Result<[f64; RULE_COUNT], PolicyError>;

    fn next_distribution(
        &self,
        state: &DerivationState,
        condition: Condition,
    ) -> Result<PolicyDistribution, PolicyError> {
        let mask = state.valid_next_mask()?;
        let raw = self.raw_distribution(state, condition)?;
        Ok(PolicyDistribution::from_raw(raw, mask))
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn raw_distribution(&self, s: &DerivationState, c: Condition) -> Result<[f64; RULE_COUNT], PolicyError> {
        (**self).raw_distribution(s, c)
    }

    fn next_distribution(&self, s: &DerivationState, c: Condition) -> Result<PolicyDistribution, PolicyError> {
        (**self).next_distribution(s, c)
    }
}

impl<P: Policy + ?Sized> Policy for Box<P> {
    fn raw_distribution(&self, s: &DerivationState, c: Condition) -> Result<[f64; RULE_COUNT], PolicyError> {
        (**self).raw_distribution(s, c)
    }

    fn next_distribution(&self, s: &DerivationState, c: Condition) -> Result<PolicyDistribution, PolicyError> {
        (**self).next_distribution(s, c)
    }
}

impl<P: Policy + ?Sized> Policy for Arc<P> {
    fn raw_distribution(&self, s: &DerivationState, c: Condition) -> Result<[f64; RULE_COUNT], PolicyError> {
        (**self).raw_distribution(s, c)
    }

    fn next_distribution(&self, s: &DerivationState, c: Condition) -> Result<PolicyDistribution, PolicyError> {
        (**self).next_distribution(s, c)
    }
}

/// Uniform over the valid next rules.
#[derive(Clone, Copy, Debug, Default)]
pub struct RandomPolicy;

impl Policy for RandomPolicy {
    fn raw_distribution(&self, _: &DerivationState, _: Condition) -> Result<[f64; RULE_COUNT], PolicyError> {
        Ok([1.0; RULE_COUNT])
    }
}

/// All mass on the target's own next rule while the prefix follows the
/// target derivation; uniform once it has left it.
#[derive(Clone, Debug)]
pub struct TeacherPolicy {
    target: Vec<RuleId>,
}

impl TeacherPolicy {
    pub fn new(target: Vec<RuleId>) -> Self {
        TeacherPolicy { target }
    }
}

impl Policy for TeacherPolicy {
    fn raw_distribution(&self, state: &DerivationState, _: Condition) -> Result<[f64; RULE_COUNT], PolicyError> {
        let rules = state.rules();
        let mut raw = [1.0; RULE_COUNT];
        if rules.len() < self.target.len() && self.target.starts_with(rules) {
            raw = [0.0; RULE_COUNT];
            raw[self.target[rules.len()].index()] = 1.0;
        }
        Ok(raw)
    }
}

/// Always fails; used to exercise error paths.
#[derive(Clone, Debug)]
pub struct FailingPolicy(pub PolicyError);

impl Policy for FailingPolicy {
    fn raw_distribution(&self, _: &DerivationState, _: Condition) -> Result<[f64; RULE_COUNT], PolicyError> {
        Err(self.0.clone())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Completion {
    pub expr: String,
    pub count: usize,
    pub frequency: f64,
}

/// Completions of a prefix aggregated by text. Frequencies are over all `n`
/// draws, so they sum to `1 - incomplete / n`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CompletionSummary {
    pub n: usize,
    pub incomplete: usize,
    pub completions: Vec<Completion>,
}

/// Draws `n` completions of `prefix`, sorted by descending frequency (ties
/// by text).
pub fn sample_from_prefix<P, R>(
    policy: &P,
    prefix: &[RuleId],
    condition: Condition,
    n: usize,
    length_limit: usize,
    rng: &mut R,
) -> Result<CompletionSummary, PolicyError>
where
    P: Policy + ?Sized,
    R: Rng + ?Sized,
{
    let start = DerivationState::from_prefix(prefix, length_limit)?;
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut incomplete = 0;
    for _ in 0..n {
        match sample_from_state(policy, start.clone(), condition, rng)? {
            Sample::Complete { expr, .. } => *counts.entry(expr.to_string()).or_default() += 1,
            Sample::Incomplete { .. } => incomplete += 1,
        }
    }
    let mut completions: Vec<Completion> = counts
        .into_iter()
        .map(|(expr, count)| Completion {
            expr,
            count,
            frequency: count as f64 / n as f64,
        })
        .collect();
    completions.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.expr.cmp(&b.expr)));
    Ok(CompletionSummary {
        n,
        incomplete,
        completions,
    })
}
