use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::{Policy, PolicyDistribution, PolicyError};
use crate::grammar::{DerivationState, RuleId, RULE_COUNT};
use crate::rational::Condition;

/// Which context the empirical counts are keyed on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EmpiricalVariant {
    /// Full prefix and condition.
    Fh,
    /// Full prefix only.
    Fhnc,
    /// Last `l` rules and condition.
    Lh(usize),
    /// Last `l` rules only.
    Lhnc(usize),
}

impl EmpiricalVariant {
    pub fn conditioned(self) -> bool {
        matches!(self, EmpiricalVariant::Fh | EmpiricalVariant::Lh(_))
    }

    pub fn window(self) -> Option<usize> {
        match self {
            EmpiricalVariant::Lh(l) | EmpiricalVariant::Lhnc(l) => Some(l),
            _ => None,
        }
    }

    fn context(self, rules: &[RuleId]) -> &[RuleId] {
        match self.window() {
            Some(l) if l < rules.len() => &rules[rules.len() - l..],
            _ => rules,
        }
    }
}

impl fmt::Display for EmpiricalVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EmpiricalVariant::Fh => f.write_str("fh"),
            EmpiricalVariant::Fhnc => f.write_str("fhnc"),
            EmpiricalVariant::Lh(l) => write!(f, "lh:{l}"),
            EmpiricalVariant::Lhnc(l) => write!(f, "lhnc:{l}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown empirical policy {0:?}, expected fh, fhnc, lh:L or lhnc:L")]
pub struct VariantParseError(String);

impl FromStr for EmpiricalVariant {
    type Err = VariantParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || VariantParseError(s.to_string());
        let window = |l: &str| l.parse::<usize>().ok().filter(|&l| l > 0).ok_or_else(err);
        match s.split_once(':') {
            None if s == "fh" => Ok(EmpiricalVariant::Fh),
            None if s == "fhnc" => Ok(EmpiricalVariant::Fhnc),
            Some(("lh", l)) => Ok(EmpiricalVariant::Lh(window(l)?)),
            Some(("lhnc", l)) => Ok(EmpiricalVariant::Lhnc(window(l)?)),
            _ => Err(err()),
        }
    }
}

/// What to do for a context that never occurs in the training data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum Fallback {
    /// Uniform over the valid rules.
    #[default]
    Uniform,
    /// Refuse with [`PolicyError::NoSupport`]; sampling then ends incomplete.
    Halt,
}

impl FromStr for Fallback {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Fallback::Uniform),
            "halt" => Ok(Fallback::Halt),
            _ => Err(format!("unknown fallback {s:?}, expected uniform or halt")),
        }
    }
}

/// Counts of next rules per context, built once from training sequences.
#[derive(Clone, Debug)]
pub struct EmpiricalPolicy {
    variant: EmpiricalVariant,
    fallback: Fallback,
    counts: HashMap<Option<Condition>, HashMap<Vec<RuleId>, [u32; RULE_COUNT]>>,
}

impl EmpiricalPolicy {
    pub fn build<'a, I>(sequences: I, variant: EmpiricalVariant) -> Self
    where
        I: IntoIterator<Item = (&'a [RuleId], Condition)>,
    {
        let mut counts: HashMap<Option<Condition>, HashMap<Vec<RuleId>, [u32; RULE_COUNT]>> = HashMap::new();
        for (rules, condition) in sequences {
            let key = variant.conditioned().then_some(condition);
            let table = counts.entry(key).or_default();
            for t in 0..rules.len() {
                let ctx = variant.context(&rules[..t]);
                let row = match table.get_mut(ctx) {
                    Some(row) => row,
                    None => table.entry(ctx.to_vec()).or_insert([0; RULE_COUNT]),
                };
                row[rules[t].index()] += 1;
            }
        }
        EmpiricalPolicy {
            variant,
            fallback: Fallback::Uniform,
            counts,
        }
    }

    pub fn with_fallback(mut self, fallback: Fallback) -> Self {
        self.fallback = fallback;
        self
    }

    pub fn variant(&self) -> EmpiricalVariant {
        self.variant
    }

    pub fn fallback(&self) -> Fallback {
        self.fallback
    }

    /// Raw counts for the state's context, if it was ever observed.
    pub fn counts(&self, rules: &[RuleId], condition: Condition) -> Option<&[u32; RULE_COUNT]> {
        let key = self.variant.conditioned().then_some(condition);
        self.counts.get(&key)?.get(self.variant.context(rules))
    }
}

impl Policy for EmpiricalPolicy {
    fn raw_distribution(
        &self,
        state: &DerivationState,
        condition: Condition,
    ) -> Result<[f64; RULE_COUNT], PolicyError> {
        match self.counts(state.rules(), condition) {
            Some(row) => Ok(row.map(f64::from)),
            None => match self.fallback {
                Fallback::Uniform => Ok([1.0; RULE_COUNT]),
                Fallback::Halt => Err(PolicyError::NoSupport),
            },
        }
    }

    fn next_distribution(
        &self,
        state: &DerivationState,
        condition: Condition,
    ) -> Result<PolicyDistribution, PolicyError> {
        let mask = state.valid_next_mask()?;
        let seen = self.counts(state.rules(), condition).is_some();
        let mut dist = PolicyDistribution::from_raw(self.raw_distribution(state, condition)?, mask);
        // a short window can match a context whose observed rules are all masked here
        if dist.fallback && self.fallback == Fallback::Halt {
            return Err(PolicyError::NoSupport);
        }
        dist.fallback |= !seen;
        Ok(dist)
    }
}
