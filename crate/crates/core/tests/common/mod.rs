#![allow(dead_code)]

use asymreg_core::grammar::{parse_text, BinOp, Expr, Symbol, Term};
use proptest::prelude::*;

pub fn arb_op() -> impl Strategy<Value = BinOp> {
    prop::sample::select(BinOp::ALL.to_vec())
}

/// Grammar parse trees with up to roughly `size` nodes.
pub fn arb_expr(depth: u32, size: u32) -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![Just(Expr::x()), Just(Expr::one())];
    leaf.prop_recursive(depth, size, 2, |inner| {
        let term = prop_oneof![
            2 => Just(Term::X),
            2 => Just(Term::One),
            1 => inner.clone().prop_map(|e| Term::Paren(Box::new(e))),
        ];
        prop_oneof![
            (arb_op(), inner.clone(), term).prop_map(|(op, l, r)| Expr::binary(op, l, r)),
            inner.prop_map(|e| Expr::Term(Term::Paren(Box::new(e)))),
        ]
    })
}

use asymreg_core::arith::Arith;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

/// Exact value of `a` at `x`; `None` on division by zero.
pub fn eval_exact(a: &Arith, x: &BigRational) -> Option<BigRational> {
    Some(match a {
        Arith::X => x.clone(),
        Arith::One => BigRational::one(),
        Arith::Bin(op, l, r) => {
            let (l, r) = (eval_exact(l, x)?, eval_exact(r, x)?);
            match op {
                BinOp::Add => l + r,
                BinOp::Sub => l - r,
                BinOp::Mul => l * r,
                BinOp::Div => {
                    if r.is_zero() {
                        return None;
                    }
                    l / r
                }
            }
        }
    })
}

fn ratio(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

/// The seven probe points, extended to `n` distinct points.
pub fn probe_points(n: usize) -> Vec<BigRational> {
    let mut pts: Vec<BigRational> = [(3, 2), (5, 3), (7, 4), (9, 5), (11, 7), (13, 8), (17, 9)]
        .iter()
        .map(|&(a, b)| ratio(a, b))
        .collect();
    let mut k = 0;
    while pts.len() < n {
        let p = ratio(k + 19, k + 6);
        if !pts.contains(&p) {
            pts.push(p);
        }
        k += 1;
    }
    pts.truncate(n);
    pts
}

/// Equal as rational functions, judged at the probe points: both undefined
/// everywhere, or defined somewhere and equal wherever both are defined.
pub fn agree_at(a: &Arith, b: &Arith, points: &[BigRational]) -> bool {
    let va: Vec<_> = points.iter().map(|x| eval_exact(a, x)).collect();
    let vb: Vec<_> = points.iter().map(|x| eval_exact(b, x)).collect();
    let none_a = va.iter().all(Option::is_none);
    let none_b = vb.iter().all(Option::is_none);
    if none_a || none_b {
        return none_a && none_b;
    }
    let mut common = 0;
    for (p, q) in va.iter().zip(&vb) {
        if let (Some(p), Some(q)) = (p, q) {
            if p != q {
                return false;
            }
            common += 1;
        }
    }
    common > 0
}

/// Point count the canonical oracle uses for a pair of trees.
pub fn oracle_points(rules_a: usize, rules_b: usize) -> usize {
    if rules_a.max(rules_b) > 25 {
        31
    } else {
        7
    }
}

fn log10(n: &BigInt) -> f64 {
    let digits = n.magnitude().to_string();
    let head: f64 = digits[..digits.len().min(17)].parse().unwrap();
    head.log10() + (digits.len() - digits.len().min(17)) as f64
}

/// Leading power estimated from `f(10 x) / f(x)` at `x = 10^-20` (zero) or
/// `x = 10^20` (infinity); `None` if `f` vanishes or has a pole there.
pub fn numeric_power(a: &Arith, at_infinity: bool) -> Option<i64> {
    let big = BigRational::from_integer(BigInt::from(10).pow(20));
    let x = if at_infinity { big } else { big.recip() };
    let x10 = &x * BigRational::from_integer(BigInt::from(10));
    let (f1, f2) = (eval_exact(a, &x)?, eval_exact(a, &x10)?);
    if f1.is_zero() || f2.is_zero() {
        return None;
    }
    let r = (f2 / f1).abs();
    let log = log10(r.numer()) - log10(r.denom());
    let p = log.round();
    ((log - p).abs() < 0.01).then_some(p as i64)
}

pub fn paren(e: Expr) -> Term {
    Term::Paren(Box::new(e))
}

pub fn combine(op: BinOp, f: &Expr, g: &Expr) -> Expr {
    Expr::binary(op, Expr::Term(paren(f.clone())), paren(g.clone()))
}

/// Rewrites that keep the rational function.
pub fn rewrite(e: &Expr, which: u8) -> Expr {
    let t = |e: &Expr| Expr::Term(paren(e.clone()));
    match which % 5 {
        0 => t(e),
        1 => Expr::binary(BinOp::Sub, Expr::binary(BinOp::Add, t(e), Term::One), Term::One),
        2 => Expr::binary(BinOp::Mul, t(e), paren(parse_text("x / x").unwrap())),
        3 => Expr::binary(BinOp::Div, t(e), Term::One),
        _ => Expr::binary(BinOp::Add, Expr::binary(BinOp::Sub, t(e), Term::X), Term::X),
    }
}

/// Counts partial parse trees where every non-terminal carries a rule
/// budget: budget 0 leaves it unexpanded, a positive budget must be spent by
/// one rule whose children share the remaining budget.
pub fn brute_force_partial_trees(max_rules: usize) -> u64 {
    fn go(pending: &mut Vec<(Symbol, usize)>) -> u64 {
        let Some((sym, budget)) = pending.pop() else {
            return 1;
        };
        let total = if budget == 0 {
            go(pending)
        } else {
            let mut n = 0;
            match sym {
                Symbol::O => {
                    pending.push((Symbol::S, budget - 1));
                    n += go(pending);
                    pending.pop();
                }
                Symbol::S => {
                    for _op in 0..4 {
                        for left in 0..budget {
                            pending.push((Symbol::T, budget - 1 - left));
                            pending.push((Symbol::S, left));
                            n += go(pending);
                            pending.pop();
                            pending.pop();
                        }
                    }
                    pending.push((Symbol::T, budget - 1));
                    n += go(pending);
                    pending.pop();
                }
                Symbol::T => {
                    pending.push((Symbol::S, budget - 1));
                    n += go(pending);
                    pending.pop();
                    // 'x' and '1'
                    n += 2 * go(pending);
                }
            }
            n
        };
        pending.push((sym, budget));
        total
    }
    go(&mut vec![(Symbol::O, max_rules)])
}
