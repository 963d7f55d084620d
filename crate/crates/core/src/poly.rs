//! Dense univariate polynomials over arbitrary-precision integers.

use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

/// `coeffs[i]` is the coefficient of `x^i`; never has trailing zeros, and the
/// zero polynomial is empty.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct Poly {
    coeffs: Vec<BigInt>,
}

impl Poly {
    pub fn zero() -> Poly {
        Poly { coeffs: Vec::new() }
    }

    pub fn one() -> Poly {
        Poly::constant(1)
    }

    pub fn x() -> Poly {
        Poly::from_coeffs(vec![BigInt::zero(), BigInt::one()])
    }

    pub fn constant(c: i64) -> Poly {
        Poly::from_coeffs(vec![BigInt::from(c)])
    }

    pub fn from_coeffs(mut coeffs: Vec<BigInt>) -> Poly {
        while coeffs.last().is_some_and(Zero::is_zero) {
            coeffs.pop();
        }
        Poly { coeffs }
    }

    pub fn from_i64s(coeffs: &[i64]) -> Poly {
        Poly::from_coeffs(coeffs.iter().map(|&c| BigInt::from(c)).collect())
    }

    pub fn coeffs(&self) -> &[BigInt] {
        &self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    /// Index of the lowest nonzero coefficient (order of vanishing at 0).
    pub fn ord0(&self) -> Option<usize> {
        self.coeffs.iter().position(|c| !c.is_zero())
    }

    pub fn leading(&self) -> Option<&BigInt> {
        self.coeffs.last()
    }

    /// Nonnegative gcd of the coefficients; zero for the zero polynomial.
    pub fn content(&self) -> BigInt {
        self.coeffs.iter().fold(BigInt::zero(), |acc, c| acc.gcd(c))
    }

    pub fn scale(&self, k: &BigInt) -> Poly {
        if k.is_zero() {
            return Poly::zero();
        }
        Poly {
            coeffs: self.coeffs.iter().map(|c| c * k).collect(),
        }
    }

    /// Divides every coefficient by `k`, which must divide them all.
    pub fn div_scalar_exact(&self, k: &BigInt) -> Poly {
        Poly {
            coeffs: self.coeffs.iter().map(|c| c / k).collect(),
        }
    }

    /// Content removed, leading coefficient made positive.
    pub fn primitive_part(&self) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let mut c = self.content();
        if self.leading().is_some_and(Signed::is_negative) {
            c = -c;
        }
        self.div_scalar_exact(&c)
    }

    fn shifted(&self, by: usize) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let mut coeffs = vec![BigInt::zero(); by];
        coeffs.extend(self.coeffs.iter().cloned());
        Poly { coeffs }
    }

    /// A scalar multiple of the remainder of `self` by `divisor`, computed
    /// without fractions.
    pub fn pseudo_rem(&self, divisor: &Poly) -> Poly {
        let db = divisor.degree().expect("division by the zero polynomial");
        let lb = divisor.leading().unwrap().clone();
        let mut r = self.clone();
        while let Some(dr) = r.degree() {
            if dr < db {
                break;
            }
            let lr = r.leading().unwrap().clone();
            let g = lr.gcd(&lb);
            let r_scale = &lb / &g;
            let d_scale = &lr / &g;
            r = &r.scale(&r_scale) - &divisor.scale(&d_scale).shifted(dr - db);
        }
        r
    }

    /// Exact quotient in Z[x], or `None` if `divisor` does not divide `self`.
    pub fn div_exact(&self, divisor: &Poly) -> Option<Poly> {
        let db = divisor.degree()?;
        let lb = divisor.leading().unwrap();
        let mut r = self.clone();
        let Some(dr0) = r.degree() else {
            return Some(Poly::zero());
        };
        if dr0 < db {
            return None;
        }
        let mut q = vec![BigInt::zero(); dr0 - db + 1];
        while let Some(dr) = r.degree() {
            if dr < db {
                return None;
            }
            let (c, rem) = r.leading().unwrap().div_rem(lb);
            if !rem.is_zero() {
                return None;
            }
            let term = divisor.scale(&c).shifted(dr - db);
            q[dr - db] = c;
            r = &r - &term;
        }
        Some(Poly::from_coeffs(q))
    }

    /// Primitive gcd with positive leading coefficient. `gcd(0, 0) = 0`.
    pub fn gcd(a: &Poly, b: &Poly) -> Poly {
        let mut a = a.primitive_part();
        let mut b = b.primitive_part();
        if a.degree() < b.degree() {
            std::mem::swap(&mut a, &mut b);
        }
        while !b.is_zero() {
            let r = a.pseudo_rem(&b);
            a = b;
            b = r.primitive_part();
        }
        a
    }
}

impl Add for &Poly {
    type Output = Poly;

    fn add(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let zero = BigInt::zero();
        let coeffs = (0..n)
            .map(|i| self.coeffs.get(i).unwrap_or(&zero) + rhs.coeffs.get(i).unwrap_or(&zero))
            .collect();
        Poly::from_coeffs(coeffs)
    }
}

impl Sub for &Poly {
    type Output = Poly;

    fn sub(self, rhs: &Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let zero = BigInt::zero();
        let coeffs = (0..n)
            .map(|i| self.coeffs.get(i).unwrap_or(&zero) - rhs.coeffs.get(i).unwrap_or(&zero))
            .collect();
        Poly::from_coeffs(coeffs)
    }
}

impl Mul for &Poly {
    type Output = Poly;

    fn mul(self, rhs: &Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let mut coeffs = vec![BigInt::zero(); self.coeffs.len() + rhs.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in rhs.coeffs.iter().enumerate() {
                coeffs[i + j] += a * b;
            }
        }
        Poly::from_coeffs(coeffs)
    }
}

impl Neg for &Poly {
    type Output = Poly;

    fn neg(self) -> Poly {
        Poly {
            coeffs: self.coeffs.iter().map(|c| -c).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p(c: &[i64]) -> Poly {
        Poly::from_i64s(c)
    }

    #[test]
    fn trims_trailing_zeros() {
        assert_eq!(p(&[1, 0, 0]).degree(), Some(0));
        assert!(p(&[0, 0]).is_zero());
        assert_eq!(p(&[0, 0, 3]).ord0(), Some(2));
    }

    #[test]
    fn gcd_of_shared_factor() {
        // (x + 1)(x - 2) and (x + 1)(2x + 3)
        let a = &p(&[1, 1]) * &p(&[-2, 1]);
        let b = &p(&[1, 1]) * &p(&[3, 2]);
        assert_eq!(Poly::gcd(&a, &b), p(&[1, 1]));
        assert_eq!(Poly::gcd(&p(&[2, 4]), &p(&[6])), p(&[1]));
        assert_eq!(Poly::gcd(&Poly::zero(), &p(&[-2, -4])), p(&[1, 2]));
    }

    #[test]
    fn exact_division() {
        let a = &p(&[1, 1]) * &p(&[-2, 3]);
        assert_eq!(a.div_exact(&p(&[1, 1])), Some(p(&[-2, 3])));
        assert_eq!(p(&[1, 0, 1]).div_exact(&p(&[1, 1])), None);
        assert_eq!(Poly::zero().div_exact(&p(&[1, 1])), Some(Poly::zero()));
    }

    fn small_poly() -> impl Strategy<Value = Poly> {
        prop::collection::vec(-5i64..=5, 0..5).prop_map(|c| Poly::from_i64s(&c))
    }

    proptest! {
        #[test]
        fn gcd_divides_both(a in small_poly(), b in small_poly(), c in small_poly()) {
            prop_assume!(!c.is_zero());
            let ac = &a * &c;
            let bc = &b * &c;
            let g = Poly::gcd(&ac, &bc);
            if !(ac.is_zero() && bc.is_zero()) {
                prop_assert!(ac.div_exact(&g).is_some());
                prop_assert!(bc.div_exact(&g).is_some());
                // the common factor survives
                prop_assert!(g.div_exact(&c.primitive_part()).is_some());
            }
        }

        #[test]
        fn ring_identities(a in small_poly(), b in small_poly()) {
            prop_assert_eq!(&(&a + &b) - &b, a.clone());
            prop_assert_eq!(&a * &b, &b * &a);
            if !b.is_zero() {
                prop_assert_eq!((&a * &b).div_exact(&b), Some(a.clone()));
            }
        }
    }
}
