use std::fmt;

use thiserror::Error;

use super::{BinOp, Expr, RuleId, Term};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Token {
    Plus,
    Minus,
    Star,
    Slash,
    LParen,
    RParen,
    X,
    One,
}

impl fmt::Display for Token {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Token::Plus => "+",
            Token::Minus => "-",
            Token::Star => "*",
            Token::Slash => "/",
            Token::LParen => "(",
            Token::RParen => ")",
            Token::X => "x",
            Token::One => "1",
        };
        f.write_str(s)
    }
}

impl Token {
    fn op(self) -> Option<BinOp> {
        match self {
            Token::Plus => Some(BinOp::Add),
            Token::Minus => Some(BinOp::Sub),
            Token::Star => Some(BinOp::Mul),
            Token::Slash => Some(BinOp::Div),
            _ => None,
        }
    }
}

/// Failure to read an expression; `position` is a character offset.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("parse error at position {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

impl ParseError {
    fn new(position: usize, message: impl Into<String>) -> Self {
        ParseError {
            position,
            message: message.into(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Lexeme {
    Tok(Token),
    Hole,
}

fn lex(input: &str, allow_holes: bool) -> Result<Vec<(Lexeme, usize)>, ParseError> {
    let mut out = Vec::new();
    for (pos, ch) in input.chars().enumerate() {
        let lexeme = match ch {
            c if c.is_whitespace() => continue,
            '+' => Lexeme::Tok(Token::Plus),
            '-' | '\u{2212}' => Lexeme::Tok(Token::Minus),
            '*' | '\u{00d7}' => Lexeme::Tok(Token::Star),
            '/' => Lexeme::Tok(Token::Slash),
            '(' => Lexeme::Tok(Token::LParen),
            ')' => Lexeme::Tok(Token::RParen),
            'x' => Lexeme::Tok(Token::X),
            '1' => Lexeme::Tok(Token::One),
            '\u{25a1}' | '?' | '_' if allow_holes => Lexeme::Hole,
            other => return Err(ParseError::new(pos, format!("unexpected character {other:?}"))),
        };
        out.push((lexeme, pos));
    }
    Ok(out)
}

/// Splits an expression string into tokens; whitespace is ignored.
pub fn tokenize(input: &str) -> Result<Vec<Token>, ParseError> {
    lex(input, false)?
        .into_iter()
        .map(|(l, pos)| match l {
            Lexeme::Tok(t) => Ok(t),
            Lexeme::Hole => Err(ParseError::new(pos, "unexpected hole")),
        })
        .collect()
}

// Parse tree allowing holes in term position.
enum PTerm {
    Paren(Box<PExpr>),
    X,
    One,
    Hole,
}

struct PExpr {
    first: PTerm,
    rest: Vec<(BinOp, PTerm)>,
}

struct Parser {
    lexemes: Vec<(Lexeme, usize)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<(Lexeme, usize)> {
        self.lexemes.get(self.pos).copied()
    }

    fn parse_s(&mut self, after: Option<usize>) -> Result<PExpr, ParseError> {
        let first = self.parse_t(after)?;
        let mut rest = Vec::new();
        while let Some((Lexeme::Tok(tok), at)) = self.peek() {
            let Some(op) = tok.op() else { break };
            self.pos += 1;
            rest.push((op, self.parse_t(Some(at))?));
        }
        Ok(PExpr { first, rest })
    }

    /// `after` is the position of the token that demanded this operand.
    fn parse_t(&mut self, after: Option<usize>) -> Result<PTerm, ParseError> {
        match self.peek() {
            None => Err(match after {
                Some(at) => ParseError::new(at, "operator or '(' is missing its operand"),
                None => ParseError::new(self.end, "expected an operand"),
            }),
            Some((Lexeme::Hole, _)) => {
                self.pos += 1;
                Ok(PTerm::Hole)
            }
            Some((Lexeme::Tok(tok), at)) => {
                self.pos += 1;
                match tok {
                    Token::X => Ok(PTerm::X),
                    Token::One => Ok(PTerm::One),
                    Token::LParen => {
                        let inner = self.parse_s(Some(at))?;
                        match self.peek() {
                            Some((Lexeme::Tok(Token::RParen), _)) => {
                                self.pos += 1;
                                Ok(PTerm::Paren(Box::new(inner)))
                            }
                            Some((_, p)) => Err(ParseError::new(p, "expected ')'")),
                            None => Err(ParseError::new(at, "unclosed '('")),
                        }
                    }
                    other => Err(ParseError::new(at, format!("expected operand, found '{other}'"))),
                }
            }
        }
    }

    fn parse_all(mut self) -> Result<PExpr, ParseError> {
        if self.lexemes.is_empty() {
            return Err(ParseError::new(0, "empty expression"));
        }
        let expr = self.parse_s(None)?;
        if let Some((lexeme, at)) = self.peek() {
            let what = match lexeme {
                Lexeme::Tok(t) => format!("'{t}'"),
                Lexeme::Hole => "hole".to_string(),
            };
            return Err(ParseError::new(at, format!("unexpected {what}")));
        }
        Ok(expr)
    }
}

fn parse_lexemes(input: &str, allow_holes: bool) -> Result<PExpr, ParseError> {
    let lexemes = lex(input, allow_holes)?;
    Parser {
        lexemes,
        pos: 0,
        end: input.chars().count(),
    }
    .parse_all()
}

impl PExpr {
    fn into_expr(self) -> Expr {
        let mut expr = Expr::Term(self.first.into_term());
        for (op, t) in self.rest {
            expr = Expr::binary(op, expr, t.into_term());
        }
        expr
    }

    fn push_rules(&self, out: &mut Vec<Option<RuleId>>) {
        for (op, _) in self.rest.iter().rev() {
            out.push(Some(op.rule()));
        }
        out.push(Some(RuleId::TERM));
        self.first.push_rules(out);
        for (_, t) in &self.rest {
            t.push_rules(out);
        }
    }
}

impl PTerm {
    fn into_term(self) -> Term {
        match self {
            PTerm::Paren(inner) => Term::Paren(Box::new(inner.into_expr())),
            PTerm::X => Term::X,
            PTerm::One => Term::One,
            PTerm::Hole => unreachable!("holes are rejected by the lexer"),
        }
    }

    fn push_rules(&self, out: &mut Vec<Option<RuleId>>) {
        match self {
            PTerm::Paren(inner) => {
                out.push(Some(RuleId::PAREN));
                inner.push_rules(out);
            }
            PTerm::X => out.push(Some(RuleId::VAR_X)),
            PTerm::One => out.push(Some(RuleId::ONE)),
            PTerm::Hole => out.push(None),
        }
    }
}

/// Parses an expression; whitespace between tokens is free.
pub fn parse_text(input: &str) -> Result<Expr, ParseError> {
    Ok(parse_lexemes(input, false)?.into_expr())
}

/// Parses a template such as `1 / □ - □` into the rule prefix that derives
/// everything before the holes. Holes (`□`, `?` or `_`) stand for `T`
/// operands and must be the last items of the preorder.
pub fn parse_template(input: &str) -> Result<Vec<RuleId>, ParseError> {
    let pexpr = parse_lexemes(input, true)?;
    let mut rules = vec![Some(RuleId::START)];
    pexpr.push_rules(&mut rules);
    let first_hole = rules.iter().position(Option::is_none).unwrap_or(rules.len());
    if rules[first_hole..].iter().any(Option::is_some) {
        return Err(ParseError::new(
            0,
            "holes must come after every concrete token in derivation order",
        ));
    }
    Ok(rules[..first_hole].iter().map(|r| r.unwrap()).collect())
}
