use std::fmt;

use super::{parse::Token, DerivationState, GrammarError, RuleId, Symbol};
use crate::arith::Arith;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    pub const ALL: [BinOp; 4] = [BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div];

    pub fn rule(self) -> RuleId {
        match self {
            BinOp::Add => RuleId::ADD,
            BinOp::Sub => RuleId::SUB,
            BinOp::Mul => RuleId::MUL,
            BinOp::Div => RuleId::DIV,
        }
    }

    pub fn from_rule(rule: RuleId) -> Option<BinOp> {
        match rule {
            RuleId::ADD => Some(BinOp::Add),
            RuleId::SUB => Some(BinOp::Sub),
            RuleId::MUL => Some(BinOp::Mul),
            RuleId::DIV => Some(BinOp::Div),
            _ => None,
        }
    }

    pub fn token(self) -> Token {
        match self {
            BinOp::Add => Token::Plus,
            BinOp::Sub => Token::Minus,
            BinOp::Mul => Token::Star,
            BinOp::Div => Token::Slash,
        }
    }

    /// Conventional arithmetic precedence (`*` and `/` bind tighter).
    pub fn precedence(self) -> u8 {
        match self {
            BinOp::Add | BinOp::Sub => 1,
            BinOp::Mul | BinOp::Div => 2,
        }
    }
}

/// Parse tree of an `S` symbol: a left-nested chain of binary rules over
/// `T` operands.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Expr {
    Binary(BinOp, Box<Expr>, Term),
    Term(Term),
}

/// Parse tree of a `T` symbol.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Term {
    Paren(Box<Expr>),
    X,
    One,
}

/// Result of replaying a rule sequence.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Derivation {
    Complete(Expr),
    Partial(DerivationState),
}

impl Expr {
    pub fn x() -> Expr {
        Expr::Term(Term::X)
    }

    pub fn one() -> Expr {
        Expr::Term(Term::One)
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Term) -> Expr {
        Expr::Binary(op, Box::new(lhs), rhs)
    }

    /// Replays a preorder rule sequence starting with `O -> S`.
    pub fn from_rules(rules: &[RuleId]) -> Result<Derivation, GrammarError> {
        if rules.is_empty() {
            return Err(GrammarError::Empty);
        }
        let state = DerivationState::from_prefix(rules, rules.len())?;
        if !state.is_complete() {
            return Ok(Derivation::Partial(state));
        }
        let mut cursor = rules[1..].iter().copied();
        let expr = build_s(&mut cursor);
        debug_assert!(cursor.next().is_none());
        Ok(Derivation::Complete(expr))
    }

    /// Like [`Expr::from_rules`] but requires a complete derivation.
    pub fn from_complete_rules(rules: &[RuleId]) -> Result<Expr, GrammarError> {
        match Expr::from_rules(rules)? {
            Derivation::Complete(e) => Ok(e),
            Derivation::Partial(s) => Err(GrammarError::InvalidRule {
                position: rules.len(),
                rule: *rules.last().unwrap_or(&RuleId::START),
                expected: s.pending().unwrap_or(Symbol::S),
            }),
        }
    }

    /// Preorder rule sequence, including the leading `O -> S`.
    pub fn to_rules(&self) -> Vec<RuleId> {
        let mut out = vec![RuleId::START];
        self.push_rules(&mut out);
        out
    }

    fn push_rules(&self, out: &mut Vec<RuleId>) {
        match self {
            Expr::Binary(op, lhs, rhs) => {
                out.push(op.rule());
                lhs.push_rules(out);
                rhs.push_rules(out);
            }
            Expr::Term(t) => {
                out.push(RuleId::TERM);
                t.push_rules(out);
            }
        }
    }

    /// Number of rules in the derivation (including `O -> S`).
    pub fn rule_len(&self) -> usize {
        1 + self.s_rule_len()
    }

    fn s_rule_len(&self) -> usize {
        match self {
            Expr::Binary(_, lhs, rhs) => 1 + lhs.s_rule_len() + rhs.t_rule_len(),
            Expr::Term(t) => 1 + t.t_rule_len(),
        }
    }

    pub fn tokens(&self) -> Vec<Token> {
        let mut out = Vec::new();
        self.push_tokens(&mut out);
        out
    }

    fn push_tokens(&self, out: &mut Vec<Token>) {
        match self {
            Expr::Binary(op, lhs, rhs) => {
                lhs.push_tokens(out);
                out.push(op.token());
                rhs.push_tokens(out);
            }
            Expr::Term(t) => t.push_tokens(out),
        }
    }

    /// Arithmetic meaning of the token string under conventional precedence:
    /// the flat operator chain of an `S` is regrouped so that `*` and `/`
    /// bind tighter than `+` and `-`, all left-associative.
    pub fn to_arith(&self) -> Arith {
        let mut chain = Vec::new();
        let mut node = self;
        while let Expr::Binary(op, lhs, rhs) = node {
            chain.push((*op, rhs));
            node = lhs;
        }
        let first = match node {
            Expr::Term(t) => t,
            Expr::Binary(..) => unreachable!(),
        };
        chain.reverse();

        let mut sum: Option<Arith> = None;
        let mut pending_sign = BinOp::Add;
        let mut product = first.to_arith();
        for (op, term) in chain {
            let operand = term.to_arith();
            match op {
                BinOp::Mul | BinOp::Div => product = Arith::binary(op, product, operand),
                BinOp::Add | BinOp::Sub => {
                    sum = Some(match sum {
                        None => product,
                        Some(acc) => Arith::binary(pending_sign, acc, product),
                    });
                    pending_sign = op;
                    product = operand;
                }
            }
        }
        match sum {
            None => product,
            Some(acc) => Arith::binary(pending_sign, acc, product),
        }
    }

    /// Number of `x` and `1` leaves.
    pub fn leaf_count(&self) -> usize {
        self.tokens()
            .iter()
            .filter(|t| matches!(t, Token::X | Token::One))
            .count()
    }
}

impl Term {
    fn push_rules(&self, out: &mut Vec<RuleId>) {
        match self {
            Term::Paren(inner) => {
                out.push(RuleId::PAREN);
                inner.push_rules(out);
            }
            Term::X => out.push(RuleId::VAR_X),
            Term::One => out.push(RuleId::ONE),
        }
    }

    fn t_rule_len(&self) -> usize {
        match self {
            Term::Paren(inner) => 1 + inner.s_rule_len(),
            Term::X | Term::One => 1,
        }
    }

    fn push_tokens(&self, out: &mut Vec<Token>) {
        match self {
            Term::Paren(inner) => {
                out.push(Token::LParen);
                inner.push_tokens(out);
                out.push(Token::RParen);
            }
            Term::X => out.push(Token::X),
            Term::One => out.push(Token::One),
        }
    }

    pub fn to_arith(&self) -> Arith {
        match self {
            Term::Paren(inner) => inner.to_arith(),
            Term::X => Arith::X,
            Term::One => Arith::One,
        }
    }
}

fn build_s(rules: &mut impl Iterator<Item = RuleId>) -> Expr {
    let rule = rules.next().expect("validated derivation");
    match BinOp::from_rule(rule) {
        Some(op) => {
            let lhs = build_s(rules);
            let rhs = build_t(rules);
            Expr::binary(op, lhs, rhs)
        }
        None => Expr::Term(build_t(rules)),
    }
}

fn build_t(rules: &mut impl Iterator<Item = RuleId>) -> Term {
    match rules.next().expect("validated derivation") {
        RuleId::PAREN => Term::Paren(Box::new(build_s(rules))),
        RuleId::VAR_X => Term::X,
        _ => Term::One,
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, tok) in self.tokens().iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{tok}")?;
        }
        Ok(())
    }
}
