//! Arithmetic expression trees with conventional operator precedence.
//!
//! This is the semantic view of a grammar expression and also the genome of
//! the evolutionary baseline.

use std::fmt;

use crate::grammar::{parse_text, BinOp, Expr};

/// Denominators smaller than this in magnitude are treated as poles.
pub const POLE_EPSILON: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum Arith {
    X,
    One,
    Bin(BinOp, Box<Arith>, Box<Arith>),
}

impl Arith {
    pub fn binary(op: BinOp, lhs: Arith, rhs: Arith) -> Arith {
        Arith::Bin(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn add(lhs: Arith, rhs: Arith) -> Arith {
        Arith::binary(BinOp::Add, lhs, rhs)
    }

    pub fn sub(lhs: Arith, rhs: Arith) -> Arith {
        Arith::binary(BinOp::Sub, lhs, rhs)
    }

    pub fn mul(lhs: Arith, rhs: Arith) -> Arith {
        Arith::binary(BinOp::Mul, lhs, rhs)
    }

    pub fn div(lhs: Arith, rhs: Arith) -> Arith {
        Arith::binary(BinOp::Div, lhs, rhs)
    }

    /// Evaluates in double precision. `None` on a pole or a non-finite
    /// intermediate value.
    pub fn eval(&self, x: f64) -> Option<f64> {
        let v = match self {
            Arith::X => x,
            Arith::One => 1.0,
            Arith::Bin(op, l, r) => {
                let a = l.eval(x)?;
                let b = r.eval(x)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b.abs() < POLE_EPSILON {
                            return None;
                        }
                        a / b
                    }
                }
            }
        };
        v.is_finite().then_some(v)
    }

    /// Height counted in nodes; a leaf has height 1.
    pub fn height(&self) -> usize {
        match self {
            Arith::X | Arith::One => 1,
            Arith::Bin(_, l, r) => 1 + l.height().max(r.height()),
        }
    }

    /// Node count.
    pub fn size(&self) -> usize {
        match self {
            Arith::X | Arith::One => 1,
            Arith::Bin(_, l, r) => 1 + l.size() + r.size(),
        }
    }

    /// Subtree at preorder position `index`.
    pub fn subtree(&self, index: usize) -> Option<&Arith> {
        if index == 0 {
            return Some(self);
        }
        match self {
            Arith::Bin(_, l, r) => {
                let ls = l.size();
                if index <= ls {
                    l.subtree(index - 1)
                } else {
                    r.subtree(index - 1 - ls)
                }
            }
            _ => None,
        }
    }

    /// Replaces the subtree at preorder position `index`, returning the old one.
    pub fn replace_subtree(&mut self, index: usize, new: Arith) -> Option<Arith> {
        if index == 0 {
            return Some(std::mem::replace(self, new));
        }
        match self {
            Arith::Bin(_, l, r) => {
                let ls = l.size();
                if index <= ls {
                    l.replace_subtree(index - 1, new)
                } else {
                    r.replace_subtree(index - 1 - ls, new)
                }
            }
            _ => None,
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Arith::Bin(op, ..) => op.precedence(),
            _ => u8::MAX,
        }
    }

    /// Grammar expression with parentheses only where precedence needs them,
    /// so that `to_expr().to_arith()` reproduces this tree exactly.
    pub fn to_expr(&self) -> Expr {
        parse_text(&self.to_string()).expect("minimal-parenthesis rendering is derivable")
    }
}

impl fmt::Display for Arith {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Arith::X => f.write_str("x"),
            Arith::One => f.write_str("1"),
            Arith::Bin(op, l, r) => {
                let p = op.precedence();
                if l.precedence() < p {
                    write!(f, "( {l} )")?;
                } else {
                    write!(f, "{l}")?;
                }
                write!(f, " {} ", op.token())?;
                if r.precedence() <= p {
                    write!(f, "( {r} )")
                } else {
                    write!(f, "{r}")
                }
            }
        }
    }
}

impl From<&Expr> for Arith {
    fn from(e: &Expr) -> Arith {
        e.to_arith()
    }
}
