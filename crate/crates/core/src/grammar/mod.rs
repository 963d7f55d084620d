//! The expression grammar, its derivation state machine and expression trees.
//!
//! ```text
//! O -> S
//! S -> S '+' T | S '-' T | S '*' T | S '/' T | T
//! T -> '(' S ')' | 'x' | '1'
//! ```
//!
//! A derivation is the preorder (leftmost-first) sequence of applied rules.
//! Rule ids are fixed and shared with the policy wire protocol.

mod parse;
mod sample;
mod tree;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use parse::{parse_template, parse_text, tokenize, ParseError, Token};
pub use sample::{sample_expression, sample_from_state, Sample};
pub use tree::{BinOp, Derivation, Expr, Term};

/// Number of production rules.
pub const RULE_COUNT: usize = 9;

/// Non-terminal symbols of the grammar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Symbol {
    O,
    S,
    T,
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Symbol::O => "O",
            Symbol::S => "S",
            Symbol::T => "T",
        };
        f.write_str(s)
    }
}

/// Identifier of a production rule, `0..=8`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct RuleId(u8);

impl RuleId {
    /// `O -> S`
    pub const START: RuleId = RuleId(0);
    /// `S -> S '+' T`
    pub const ADD: RuleId = RuleId(1);
    /// `S -> S '-' T`
    pub const SUB: RuleId = RuleId(2);
    /// `S -> S '*' T`
    pub const MUL: RuleId = RuleId(3);
    /// `S -> S '/' T`
    pub const DIV: RuleId = RuleId(4);
    /// `S -> T`
    pub const TERM: RuleId = RuleId(5);
    /// `T -> '(' S ')'`
    pub const PAREN: RuleId = RuleId(6);
    /// `T -> 'x'`
    pub const VAR_X: RuleId = RuleId(7);
    /// `T -> '1'`
    pub const ONE: RuleId = RuleId(8);

    pub const ALL: [RuleId; RULE_COUNT] = [
        RuleId(0),
        RuleId(1),
        RuleId(2),
        RuleId(3),
        RuleId(4),
        RuleId(5),
        RuleId(6),
        RuleId(7),
        RuleId(8),
    ];

    pub fn new(id: u8) -> Option<RuleId> {
        (usize::from(id) < RULE_COUNT).then_some(RuleId(id))
    }

    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    /// Left-hand-side symbol.
    pub fn lhs(self) -> Symbol {
        match self.0 {
            0 => Symbol::O,
            1..=5 => Symbol::S,
            _ => Symbol::T,
        }
    }

    /// Non-terminals on the right-hand side, left to right.
    pub fn rhs_nonterminals(self) -> &'static [Symbol] {
        match self.0 {
            0 => &[Symbol::S],
            1..=4 => &[Symbol::S, Symbol::T],
            5 => &[Symbol::T],
            6 => &[Symbol::S],
            _ => &[],
        }
    }
}

impl TryFrom<u8> for RuleId {
    type Error = GrammarError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        RuleId::new(value).ok_or(GrammarError::UnknownRule(value))
    }
}

impl From<RuleId> for u8 {
    fn from(r: RuleId) -> u8 {
        r.0
    }
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = match self.0 {
            0 => "O -> S",
            1 => "S -> S '+' T",
            2 => "S -> S '-' T",
            3 => "S -> S '*' T",
            4 => "S -> S '/' T",
            5 => "S -> T",
            6 => "T -> '(' S ')'",
            7 => "T -> 'x'",
            _ => "T -> '1'",
        };
        f.write_str(text)
    }
}

/// Boolean mask over the rule ids.
pub type RuleMask = [bool; RULE_COUNT];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GrammarError {
    #[error("rule sequence is empty")]
    Empty,
    #[error("rule {rule} at position {position} cannot expand pending symbol {expected}")]
    InvalidRule {
        position: usize,
        rule: RuleId,
        expected: Symbol,
    },
    #[error("rule {rule} at position {position} follows a complete derivation")]
    TrailingRule { position: usize, rule: RuleId },
    #[error("derivation is already complete")]
    Complete,
    #[error("derivation reached its length limit of {0} rules")]
    LengthLimit(usize),
    #[error("unknown rule id {0}")]
    UnknownRule(u8),
}

/// A partial leftmost derivation: the rules applied so far and the stack of
/// pending non-terminals (top = next to expand).
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DerivationState {
    rules: Vec<RuleId>,
    stack: Vec<Symbol>,
    length_limit: usize,
}

impl DerivationState {
    pub fn new(length_limit: usize) -> Self {
        DerivationState {
            rules: Vec::new(),
            stack: vec![Symbol::O],
            length_limit,
        }
    }

    /// Replays `rules` from the start symbol.
    pub fn from_prefix(rules: &[RuleId], length_limit: usize) -> Result<Self, GrammarError> {
        let mut state = DerivationState::new(length_limit);
        for &rule in rules {
            state.apply(rule)?;
        }
        Ok(state)
    }

    pub fn rules(&self) -> &[RuleId] {
        &self.rules
    }

    pub fn stack(&self) -> &[Symbol] {
        &self.stack
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }

    pub fn length_limit(&self) -> usize {
        self.length_limit
    }

    pub fn is_complete(&self) -> bool {
        self.stack.is_empty()
    }

    /// True when no further rule may be appended because of the length cap.
    pub fn at_limit(&self) -> bool {
        self.rules.len() >= self.length_limit
    }

    /// Symbol that the next rule must expand.
    pub fn pending(&self) -> Option<Symbol> {
        self.stack.last().copied()
    }

    pub fn apply(&mut self, rule: RuleId) -> Result<(), GrammarError> {
        let position = self.rules.len();
        let top = match self.stack.last() {
            Some(&top) => top,
            None if position == 0 => return Err(GrammarError::Complete),
            None => return Err(GrammarError::TrailingRule { position, rule }),
        };
        if rule.lhs() != top {
            return Err(GrammarError::InvalidRule {
                position,
                rule,
                expected: top,
            });
        }
        if self.at_limit() {
            return Err(GrammarError::LengthLimit(self.length_limit));
        }
        self.stack.pop();
        // leftmost symbol must end up on top
        self.stack.extend(rule.rhs_nonterminals().iter().rev());
        self.rules.push(rule);
        Ok(())
    }

    /// Rules whose left-hand side equals the pending symbol.
    pub fn valid_next_mask(&self) -> Result<RuleMask, GrammarError> {
        let top = self.pending().ok_or(GrammarError::Complete)?;
        Ok(mask_for(top))
    }
}

/// Mask of the rules expanding `symbol`.
pub fn mask_for(symbol: Symbol) -> RuleMask {
    let mut mask = [false; RULE_COUNT];
    for rule in RuleId::ALL {
        mask[rule.index()] = rule.lhs() == symbol;
    }
    mask
}
