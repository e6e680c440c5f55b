//! Arithmetic in the prime field GF(p) and evaluation of polynomials over it.
//!
//! Elements carry their modulus so that mixing two fields is caught at run
//! time rather than producing silently wrong residues. Products are formed in
//! 128-bit integers, so any 64-bit prime modulus is safe.

use crate::error::{Error, Result};
use crate::primes::is_prime;

/// A validated prime modulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PrimeField {
    p: u64,
}

impl PrimeField {
    /// Rejects composites and values below 2.
    pub fn new(p: u64) -> Result<Self> {
        if !is_prime(p) {
            return Err(Error::invalid(format!("{p} is not prime")));
        }
        Ok(PrimeField { p })
    }

    pub fn modulus(&self) -> u64 {
        self.p
    }

    /// Reduces `value` into the field.
    pub fn element(&self, value: u64) -> FieldElement {
        FieldElement {
            value: value % self.p,
            modulus: self.p,
        }
    }

    pub fn zero(&self) -> FieldElement {
        self.element(0)
    }

    pub fn one(&self) -> FieldElement {
        self.element(1)
    }

    /// Horner evaluation of `coeffs` (lowest degree first, already reduced)
    /// at `x`. Raw-integer path shared by [`FieldPolynomial::eval`] and the
    /// simplex encoder.
    #[inline]
    pub(crate) fn horner(&self, coeffs: &[u64], x: u64) -> u64 {
        let p = self.p as u128;
        let x = x as u128;
        coeffs
            .iter()
            .rev()
            .fold(0u128, |acc, &c| (acc * x + c as u128) % p) as u64
    }
}

/// An element of GF(p).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FieldElement {
    value: u64,
    modulus: u64,
}

impl FieldElement {
    pub fn value(&self) -> u64 {
        self.value
    }

    pub fn modulus(&self) -> u64 {
        self.modulus
    }

    fn check(&self, other: &FieldElement) -> Result<()> {
        if self.modulus != other.modulus {
            return Err(Error::invalid(format!(
                "modulus mismatch: GF({}) vs GF({})",
                self.modulus, other.modulus
            )));
        }
        Ok(())
    }

    fn with_value(&self, value: u64) -> FieldElement {
        FieldElement {
            value,
            modulus: self.modulus,
        }
    }

    pub fn try_add(&self, other: &FieldElement) -> Result<FieldElement> {
        self.check(other)?;
        let sum = (self.value as u128 + other.value as u128) % self.modulus as u128;
        Ok(self.with_value(sum as u64))
    }

    pub fn try_sub(&self, other: &FieldElement) -> Result<FieldElement> {
        self.check(other)?;
        self.try_add(&other.neg())
    }

    pub fn try_mul(&self, other: &FieldElement) -> Result<FieldElement> {
        self.check(other)?;
        let prod = (self.value as u128 * other.value as u128) % self.modulus as u128;
        Ok(self.with_value(prod as u64))
    }

    pub fn neg(&self) -> FieldElement {
        if self.value == 0 {
            *self
        } else {
            self.with_value(self.modulus - self.value)
        }
    }

    pub fn pow(&self, mut exp: u64) -> FieldElement {
        let m = self.modulus as u128;
        let mut base = self.value as u128;
        let mut acc = 1u128 % m;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base % m;
            }
            base = base * base % m;
            exp >>= 1;
        }
        self.with_value(acc as u64)
    }

    /// Multiplicative inverse via the extended Euclidean algorithm.
    pub fn inv(&self) -> Result<FieldElement> {
        if self.value == 0 {
            return Err(Error::DivisionByZero(self.modulus));
        }
        let (mut old_r, mut r) = (self.value as i128, self.modulus as i128);
        let (mut old_s, mut s) = (1i128, 0i128);
        while r != 0 {
            let q = old_r / r;
            (old_r, r) = (r, old_r - q * r);
            (old_s, s) = (s, old_s - q * s);
        }
        debug_assert_eq!(old_r, 1);
        Ok(self.with_value(old_s.rem_euclid(self.modulus as i128) as u64))
    }
}

/// A polynomial over GF(p), coefficients stored lowest degree first.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldPolynomial {
    field: PrimeField,
    coeffs: Vec<u64>,
}

impl FieldPolynomial {
    pub fn new(coefficients: &[FieldElement]) -> Result<Self> {
        let Some(first) = coefficients.first() else {
            return Err(Error::invalid("polynomial needs at least one coefficient"));
        };
        let modulus = first.modulus();
        if coefficients.iter().any(|c| c.modulus() != modulus) {
            return Err(Error::invalid("coefficients from different fields"));
        }
        Ok(FieldPolynomial {
            field: PrimeField { p: modulus },
            coeffs: coefficients.iter().map(|c| c.value()).collect(),
        })
    }

    /// Builds from raw integers, reducing each into the field.
    pub fn from_values(field: PrimeField, values: &[u64]) -> Self {
        FieldPolynomial {
            field,
            coeffs: values.iter().map(|&v| v % field.p).collect(),
        }
    }

    pub fn modulus(&self) -> u64 {
        self.field.p
    }

    /// Number of stored coefficients (degree bound).
    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coefficients(&self) -> Vec<FieldElement> {
        self.coeffs.iter().map(|&c| self.field.element(c)).collect()
    }

    pub fn eval(&self, x: &FieldElement) -> Result<FieldElement> {
        if x.modulus() != self.field.p {
            return Err(Error::invalid(format!(
                "modulus mismatch: polynomial over GF({}) evaluated at element of GF({})",
                self.field.p,
                x.modulus()
            )));
        }
        Ok(self.field.element(self.field.horner(&self.coeffs, x.value())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn el(p: u64, v: u64) -> FieldElement {
        PrimeField::new(p).unwrap().element(v)
    }

    #[test]
    fn add_examples() {
        assert_eq!(el(7, 3).try_add(&el(7, 5)).unwrap().value(), 1);
        assert_eq!(el(7, 0).try_add(&el(7, 4)).unwrap().value(), 4);
        assert_eq!(el(11, 10).try_add(&el(11, 10)).unwrap().value(), 9);
    }

    #[test]
    fn mul_examples() {
        assert_eq!(el(7, 3).try_mul(&el(7, 5)).unwrap().value(), 1);
        assert_eq!(el(7, 1).try_mul(&el(7, 6)).unwrap().value(), 6);
        assert_eq!(el(11, 4).try_mul(&el(11, 3)).unwrap().value(), 1);
    }

    #[test]
    fn inv_examples() {
        assert_eq!(el(7, 3).inv().unwrap().value(), 5);
        assert_eq!(el(7, 1).inv().unwrap().value(), 1);
        assert_eq!(el(11, 10).inv().unwrap().value(), 10);
        assert!(matches!(el(7, 0).inv(), Err(Error::DivisionByZero(7))));
    }

    #[test]
    fn mismatched_moduli_are_rejected() {
        assert!(el(7, 3).try_add(&el(11, 3)).is_err());
        assert!(el(7, 3).try_mul(&el(11, 3)).is_err());
        let f = FieldPolynomial::from_values(PrimeField::new(11).unwrap(), &[4, 3]);
        assert!(f.eval(&el(7, 2)).is_err());
        assert!(FieldPolynomial::new(&[el(7, 1), el(11, 1)]).is_err());
    }

    #[test]
    fn composite_modulus_rejected() {
        assert!(PrimeField::new(9).is_err());
        assert!(PrimeField::new(1).is_err());
        assert!(PrimeField::new(0).is_err());
    }

    #[test]
    fn poly_eval_examples() {
        let gf11 = PrimeField::new(11).unwrap();
        let f = FieldPolynomial::from_values(gf11, &[4, 3]);
        assert_eq!(f.eval(&gf11.element(2)).unwrap().value(), 10);
        assert_eq!(f.eval(&gf11.element(0)).unwrap().value(), 4);
        let gf5 = PrimeField::new(5).unwrap();
        let g = FieldPolynomial::from_values(gf5, &[1, 2, 3]);
        assert_eq!(g.eval(&gf5.element(4)).unwrap().value(), 2);
    }

    #[test]
    fn field_axioms_exhaustive_small_primes() {
        for p in [2u64, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31] {
            let f = PrimeField::new(p).unwrap();
            for a in 0..p {
                let ea = f.element(a);
                if a != 0 {
                    let inv = ea.inv().unwrap();
                    assert_eq!(ea.try_mul(&inv).unwrap(), f.one());
                }
                for b in 0..p {
                    let eb = f.element(b);
                    assert_eq!(ea.try_add(&eb).unwrap(), eb.try_add(&ea).unwrap());
                    assert_eq!(ea.try_mul(&eb).unwrap(), eb.try_mul(&ea).unwrap());
                    assert_eq!(ea.try_sub(&eb).unwrap().try_add(&eb).unwrap(), ea);
                    for c in 0..p {
                        let ec = f.element(c);
                        let l = ea.try_add(&eb).unwrap().try_add(&ec).unwrap();
                        let r = ea.try_add(&eb.try_add(&ec).unwrap()).unwrap();
                        assert_eq!(l, r);
                        let l = ea.try_mul(&eb).unwrap().try_mul(&ec).unwrap();
                        let r = ea.try_mul(&eb.try_mul(&ec).unwrap()).unwrap();
                        assert_eq!(l, r);
                    }
                }
            }
        }
    }

    #[test]
    fn large_modulus_does_not_overflow() {
        // largest prime below 2^64
        let p = 18_446_744_073_709_551_557u64;
        let f = PrimeField::new(p).unwrap();
        let a = f.element(p - 1);
        assert_eq!(a.try_mul(&a).unwrap().value(), 1);
        assert_eq!(a.try_add(&a).unwrap().value(), p - 2);
        assert_eq!(a.inv().unwrap(), a);
    }

    #[test]
    fn fermat_inverse_agrees() {
        let f = PrimeField::new(1_000_003).unwrap();
        for v in [1u64, 2, 12345, 999_999, 1_000_002] {
            let e = f.element(v);
            assert_eq!(e.inv().unwrap(), e.pow(1_000_001));
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        const SMALL_PRIMES: [u64; 11] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31];

        proptest! {
            #[test]
            fn horner_matches_power_sum(
                pi in 0usize..SMALL_PRIMES.len(),
                coeffs in prop::collection::vec(0u64..1000, 1..8),
                x in 0u64..1000,
            ) {
                let p = SMALL_PRIMES[pi];
                let f = PrimeField::new(p).unwrap();
                let poly = FieldPolynomial::from_values(f, &coeffs);
                let xe = f.element(x);
                let naive = coeffs.iter().enumerate().fold(0u64, |acc, (j, &c)| {
                    (acc + (c % p) * xe.pow(j as u64).value()) % p
                });
                prop_assert_eq!(poly.eval(&xe).unwrap().value(), naive);
            }
        }
    }
}
