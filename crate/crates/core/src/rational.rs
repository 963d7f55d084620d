//! Exact rational-function view of expressions: leading powers at 0 and
//! infinity, and a canonical form that decides semantic equality.

use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arith::Arith;
use crate::grammar::{BinOp, Expr};
use crate::poly::Poly;

/// Degree above which intermediate fractions are reduced by their gcd.
pub const REDUCE_ABOVE_DEGREE: usize = 128;

/// An expression divided by the identically-zero function somewhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("expression divides by the zero function")]
pub struct UndefinedFunction;

/// `num / den` with `den` never the zero polynomial. Not necessarily reduced.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalForm {
    num: Poly,
    den: Poly,
}

impl RationalForm {
    pub fn new(num: Poly, den: Poly) -> Result<Self, UndefinedFunction> {
        if den.is_zero() {
            return Err(UndefinedFunction);
        }
        Ok(RationalForm { num, den })
    }

    pub fn num(&self) -> &Poly {
        &self.num
    }

    pub fn den(&self) -> &Poly {
        &self.den
    }

    fn constant(c: i64) -> Self {
        RationalForm {
            num: Poly::constant(c),
            den: Poly::one(),
        }
    }

    fn x() -> Self {
        RationalForm {
            num: Poly::x(),
            den: Poly::one(),
        }
    }

    fn combine(&self, op: BinOp, rhs: &RationalForm) -> Result<RationalForm, UndefinedFunction> {
        let (num, den) = match op {
            BinOp::Add => (&(&self.num * &rhs.den) + &(&rhs.num * &self.den), &self.den * &rhs.den),
            BinOp::Sub => (&(&self.num * &rhs.den) - &(&rhs.num * &self.den), &self.den * &rhs.den),
            BinOp::Mul => (&self.num * &rhs.num, &self.den * &rhs.den),
            BinOp::Div => {
                if rhs.num.is_zero() {
                    return Err(UndefinedFunction);
                }
                (&self.num * &rhs.den, &self.den * &rhs.num)
            }
        };
        let form = RationalForm { num, den };
        let big = |p: &Poly| p.degree().is_some_and(|d| d > REDUCE_ABOVE_DEGREE);
        if big(&form.num) || big(&form.den) {
            Ok(form.reduced())
        } else {
            Ok(form)
        }
    }

    /// Divides out the polynomial gcd and the joint integer content, and
    /// makes the denominator's leading coefficient positive.
    pub fn reduced(&self) -> RationalForm {
        if self.num.is_zero() {
            return RationalForm {
                num: Poly::zero(),
                den: Poly::one(),
            };
        }
        let g = Poly::gcd(&self.num, &self.den);
        let mut num = self.num.div_exact(&g).expect("gcd divides numerator");
        let mut den = self.den.div_exact(&g).expect("gcd divides denominator");
        let mut c = num.content().gcd_with(&den.content());
        if den.leading().is_some_and(Signed::is_negative) {
            c = -c;
        }
        num = num.div_scalar_exact(&c);
        den = den.div_scalar_exact(&c);
        RationalForm { num, den }
    }

    pub fn leading_powers(&self) -> LeadingPowers {
        if self.num.is_zero() {
            return LeadingPowers::ZeroFunction;
        }
        let ord = |p: &Poly| p.ord0().expect("nonzero") as i64;
        let deg = |p: &Poly| p.degree().expect("nonzero") as i64;
        LeadingPowers::Defined {
            p0: ord(&self.num) - ord(&self.den),
            pinf: deg(&self.num) - deg(&self.den),
        }
    }

    pub fn canonical_key(&self) -> CanonicalKey {
        if self.num.is_zero() {
            return CanonicalKey::Zero;
        }
        let r = self.reduced();
        CanonicalKey::Rational {
            num: r.num.coeffs().to_vec(),
            den: r.den.coeffs().to_vec(),
        }
    }
}

trait GcdWith {
    fn gcd_with(&self, other: &Self) -> Self;
}

impl GcdWith for BigInt {
    fn gcd_with(&self, other: &BigInt) -> BigInt {
        num_integer::Integer::gcd(self, other)
    }
}

/// Bottom-up exact evaluation of the arithmetic tree.
pub fn arith_to_rational(expr: &Arith) -> Result<RationalForm, UndefinedFunction> {
    match expr {
        Arith::X => Ok(RationalForm::x()),
        Arith::One => Ok(RationalForm::constant(1)),
        Arith::Bin(op, l, r) => {
            let a = arith_to_rational(l)?;
            let b = arith_to_rational(r)?;
            a.combine(*op, &b)
        }
    }
}

pub fn to_rational(expr: &Expr) -> Result<RationalForm, UndefinedFunction> {
    arith_to_rational(&expr.to_arith())
}

/// Leading powers of a rational function at `x -> 0` and `x -> inf`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LeadingPowers {
    Defined { p0: i64, pinf: i64 },
    ZeroFunction,
    UndefinedFunction,
}

impl LeadingPowers {
    pub fn condition(self) -> Option<Condition> {
        match self {
            LeadingPowers::Defined { p0, pinf } => Some(Condition {
                c0: p0 as i32,
                cinf: pinf as i32,
            }),
            _ => None,
        }
    }
}

impl fmt::Display for LeadingPowers {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeadingPowers::Defined { p0, pinf } => write!(f, "p0={p0} pinf={pinf}"),
            LeadingPowers::ZeroFunction => f.write_str("zero-function"),
            LeadingPowers::UndefinedFunction => f.write_str("undefined-function"),
        }
    }
}

pub fn arith_leading_powers(expr: &Arith) -> LeadingPowers {
    match arith_to_rational(expr) {
        Ok(r) => r.leading_powers(),
        Err(UndefinedFunction) => LeadingPowers::UndefinedFunction,
    }
}

pub fn leading_powers(expr: &Expr) -> LeadingPowers {
    arith_leading_powers(&expr.to_arith())
}

/// Desired leading powers `(c0, cinf)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Condition {
    pub c0: i32,
    pub cinf: i32,
}

impl Condition {
    pub fn new(c0: i32, cinf: i32) -> Self {
        Condition { c0, cinf }
    }

    /// Complexity `|c0| + |cinf|`.
    pub fn m(self) -> u32 {
        self.c0.unsigned_abs() + self.cinf.unsigned_abs()
    }

    pub fn l1(self, other: Condition) -> u32 {
        self.c0.abs_diff(other.c0) + self.cinf.abs_diff(other.cinf)
    }

    /// All conditions with complexity exactly `m`.
    pub fn with_complexity(m: u32) -> Vec<Condition> {
        let m = m as i32;
        let mut out = Vec::new();
        for c0 in -m..=m {
            let rest = m - c0.abs();
            if rest == 0 {
                out.push(Condition::new(c0, 0));
            } else {
                out.push(Condition::new(c0, -rest));
                out.push(Condition::new(c0, rest));
            }
        }
        out
    }

    /// All conditions with complexity at most `m`, sorted.
    pub fn up_to_complexity(m: u32) -> Vec<Condition> {
        let mut out: Vec<_> = (0..=m).flat_map(Condition::with_complexity).collect();
        out.sort();
        out
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.c0, self.cinf)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid condition {0:?}, expected C0,CINF")]
pub struct ConditionParseError(String);

impl FromStr for Condition {
    type Err = ConditionParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ConditionParseError(s.to_string());
        let (a, b) = s.split_once(',').ok_or_else(err)?;
        Ok(Condition::new(
            a.trim().parse().map_err(|_| err())?,
            b.trim().parse().map_err(|_| err())?,
        ))
    }
}

pub fn condition_of(expr: &Expr) -> Result<Condition, LeadingPowers> {
    let lp = leading_powers(expr);
    lp.condition().ok_or(lp)
}

/// Semantic identity of an expression: reduced coefficient vectors, or one
/// of the two reserved keys.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CanonicalKey {
    Rational { num: Vec<BigInt>, den: Vec<BigInt> },
    Zero,
    Undefined,
}

impl CanonicalKey {
    pub fn is_rational(&self) -> bool {
        matches!(self, CanonicalKey::Rational { .. })
    }
}

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[BigInt]| v.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(",");
        match self {
            CanonicalKey::Rational { num, den } => write!(f, "{}|{}", join(num), join(den)),
            CanonicalKey::Zero => f.write_str("zero"),
            CanonicalKey::Undefined => f.write_str("undefined"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid canonical key {0:?}")]
pub struct KeyParseError(String);

impl FromStr for CanonicalKey {
    type Err = KeyParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => return Ok(CanonicalKey::Zero),
            "undefined" => return Ok(CanonicalKey::Undefined),
            _ => {}
        }
        let err = || KeyParseError(s.to_string());
        let (n, d) = s.split_once('|').ok_or_else(err)?;
        let parse = |part: &str| -> Result<Vec<BigInt>, KeyParseError> {
            part.split(',').map(|c| c.parse().map_err(|_| err())).collect()
        };
        let (num, den) = (parse(n)?, parse(d)?);
        if num.last().is_none_or(Zero::is_zero) || den.last().is_none_or(Zero::is_zero) {
            return Err(err());
        }
        Ok(CanonicalKey::Rational { num, den })
    }
}

impl Serialize for CanonicalKey {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for CanonicalKey {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

pub fn arith_canonical_key(expr: &Arith) -> CanonicalKey {
    match arith_to_rational(expr) {
        Ok(r) => r.canonical_key(),
        Err(UndefinedFunction) => CanonicalKey::Undefined,
    }
}

pub fn canonicalize(expr: &Expr) -> CanonicalKey {
    arith_canonical_key(&expr.to_arith())
}

/// Canonical key and leading powers from a single exact evaluation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Analysis {
    pub key: CanonicalKey,
    pub powers: LeadingPowers,
}

pub fn analyze(expr: &Expr) -> Analysis {
    match to_rational(expr) {
        Ok(r) => Analysis {
            key: r.canonical_key(),
            powers: r.leading_powers(),
        },
        Err(UndefinedFunction) => Analysis {
            key: CanonicalKey::Undefined,
            powers: LeadingPowers::UndefinedFunction,
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grammar::parse_text;

    fn e(s: &str) -> Expr {
        parse_text(s).unwrap()
    }

    fn defined(p0: i64, pinf: i64) -> LeadingPowers {
        LeadingPowers::Defined { p0, pinf }
    }

    #[test]
    fn unreduced_forms() {
        let r = to_rational(&e("x + 1")).unwrap();
        assert_eq!(r.num(), &Poly::from_i64s(&[1, 1]));
        assert_eq!(r.den(), &Poly::from_i64s(&[1]));
        let r = to_rational(&e("1 / ( x + 1 )")).unwrap();
        assert_eq!(r.num(), &Poly::from_i64s(&[1]));
        assert_eq!(r.den(), &Poly::from_i64s(&[1, 1]));
        assert_eq!(to_rational(&e("1 / ( x - x )")), Err(UndefinedFunction));
    }

    #[test]
    fn leading_power_examples() {
        assert_eq!(leading_powers(&e("x * x + x + x + x + x + x + x * x")), defined(1, 2));
        // 1/x^2 + 1/x
        assert_eq!(leading_powers(&e("1 / x / x + 1 / x")), defined(-2, -1));
        assert_eq!(leading_powers(&e("1 / ( x + 1 )")), defined(0, -1));
        assert_eq!(leading_powers(&e("x - x")), LeadingPowers::ZeroFunction);
        assert_eq!(leading_powers(&e("1 / x + x + ( x - 1 ) * ( x - 1 )")), defined(-1, 2));
        assert_eq!(leading_powers(&e("1 / ( x - x )")), LeadingPowers::UndefinedFunction);
    }

    #[test]
    fn condition_examples() {
        let u = e("1 / x + x + ( x - 1 ) * ( x - 1 )");
        assert_eq!(condition_of(&u), Ok(Condition::new(-1, 2)));
        assert_eq!(condition_of(&u).unwrap().m(), 3);
        assert_eq!(condition_of(&e("1")).map(Condition::m), Ok(0));
        let c = condition_of(&e("1 / ( x * x ) - x * x")).unwrap();
        assert_eq!((c, c.m()), (Condition::new(-2, 2), 4));
        assert_eq!(condition_of(&e("x - x")), Err(LeadingPowers::ZeroFunction));
    }

    #[test]
    fn canonical_examples() {
        assert_eq!(canonicalize(&e("x + 1")), canonicalize(&e("( 1 ) + x")));
        assert_eq!(
            canonicalize(&e("( x + x ) / ( x + x )")),
            CanonicalKey::Rational {
                num: vec![1.into()],
                den: vec![1.into()]
            }
        );
        assert_eq!(canonicalize(&e("x * ( x + 1 ) / x")), canonicalize(&e("x + 1")));
        assert_ne!(canonicalize(&e("x + x")), canonicalize(&e("x")));
        assert_eq!(canonicalize(&e("1 - x")).to_string(), "1,-1|1");
        assert_eq!(canonicalize(&e("1 / ( 1 - x )")).to_string(), "-1|-1,1");
        assert_eq!(canonicalize(&e("x - x")), CanonicalKey::Zero);
        assert_eq!(canonicalize(&e("x / ( 1 - 1 )")), CanonicalKey::Undefined);
    }

    #[test]
    fn key_string_round_trip() {
        for s in ["x / ( x * x + 1 ) - 1", "x - x", "1 / ( 1 - 1 )", "( 1 + 1 ) / x"] {
            let k = canonicalize(&e(s));
            assert_eq!(k.to_string().parse::<CanonicalKey>().unwrap(), k);
        }
        assert!("1,0|1".parse::<CanonicalKey>().is_err());
        assert!("1|".parse::<CanonicalKey>().is_err());
    }

    #[test]
    fn deep_nesting_triggers_lazy_reduction() {
        // (x / x) nested 200 times: degrees would otherwise grow past the guard
        let mut a = Arith::X;
        for _ in 0..200 {
            a = Arith::mul(Arith::div(a, Arith::X), Arith::X);
        }
        let r = arith_to_rational(&a).unwrap();
        assert!(r.num().degree().unwrap() <= 2 * REDUCE_ABOVE_DEGREE + 2);
        assert_eq!(r.leading_powers(), defined(1, 1));
    }

    #[test]
    fn complexity_lattice() {
        assert_eq!(Condition::up_to_complexity(4).len(), 41);
        assert_eq!(Condition::with_complexity(5).len(), 20);
        assert_eq!(Condition::with_complexity(6).len(), 24);
        assert_eq!(Condition::with_complexity(0), vec![Condition::new(0, 0)]);
        assert_eq!("-1, 2".parse::<Condition>().unwrap(), Condition::new(-1, 2));
    }
}
