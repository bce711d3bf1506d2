//! Arithmetic in the prime field `Z_p` for odd primes `p`.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest prime accepted by [`FieldPrime::new`]. Dense simulation is hopeless
/// far below this bound, but the group and field layers stay exact up to it.
pub const MAX_PRIME: u32 = 65_521;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FieldError {
    #[error("{0} is not prime")]
    NotPrime(u32),
    #[error("the field must have odd characteristic, got 2")]
    EvenPrime,
    #[error("prime {0} exceeds the supported maximum {MAX_PRIME}")]
    TooLarge(u32),
    #[error("zero has no multiplicative inverse")]
    ZeroInverse,
    #[error("residues belong to different fields (p = {0} and p = {1})")]
    PrimeMismatch(u32, u32),
}

/// An odd prime `p`, validated at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct FieldPrime(u32);

impl FieldPrime {
    pub fn new(p: u32) -> Result<Self, FieldError> {
        if p == 2 {
            return Err(FieldError::EvenPrime);
        }
        if p > MAX_PRIME {
            return Err(FieldError::TooLarge(p));
        }
        if !is_prime(p) {
            return Err(FieldError::NotPrime(p));
        }
        Ok(Self(p))
    }

    #[inline]
    pub fn get(self) -> u32 {
        self.0
    }

    #[inline]
    pub fn as_usize(self) -> usize {
        self.0 as usize
    }

    /// Reduces an arbitrary integer into the field.
    #[inline]
    pub fn residue(self, value: i64) -> Residue {
        Residue {
            value: value.rem_euclid(self.0 as i64) as u32,
            prime: self,
        }
    }

    #[inline]
    pub fn zero(self) -> Residue {
        self.residue(0)
    }

    #[inline]
    pub fn one(self) -> Residue {
        self.residue(1)
    }

    /// The multiplicative inverse of two, used throughout for `2⁻¹`.
    #[inline]
    pub fn half(self) -> Residue {
        Residue {
            value: self.0.div_ceil(2),
            prime: self,
        }
    }

    /// All residues in increasing order.
    pub fn residues(self) -> impl Iterator<Item = Residue> {
        (0..self.0).map(move |v| Residue { value: v, prime: self })
    }

    /// Non-zero residues in increasing order.
    pub fn units(self) -> impl Iterator<Item = Residue> {
        (1..self.0).map(move |v| Residue { value: v, prime: self })
    }
}

impl TryFrom<u32> for FieldPrime {
    type Error = FieldError;
    fn try_from(p: u32) -> Result<Self, Self::Error> {
        Self::new(p)
    }
}

impl From<FieldPrime> for u32 {
    fn from(p: FieldPrime) -> u32 {
        p.0
    }
}

impl fmt::Display for FieldPrime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

fn is_prime(n: u32) -> bool {
    if n < 2 {
        return false;
    }
    let mut d = 2u32;
    while d * d <= n {
        if n % d == 0 {
            return false;
        }
        d += 1;
    }
    true
}

/// An element of `Z_p`, always stored reduced into `[0, p)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Residue {
    value: u32,
    prime: FieldPrime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum QuadraticClass {
    Zero,
    Square,
    NonSquare,
}

impl Residue {
    #[inline]
    pub fn value(self) -> u32 {
        self.value
    }

    #[inline]
    pub fn as_usize(self) -> usize {
        self.value as usize
    }

    #[inline]
    pub fn prime(self) -> FieldPrime {
        self.prime
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.value == 0
    }

    /// Fallible addition that reports mixing residues of different fields.
    pub fn checked_add(self, rhs: Residue) -> Result<Residue, FieldError> {
        self.same_field(rhs)?;
        Ok(self + rhs)
    }

    /// Fallible multiplication that reports mixing residues of different fields.
    pub fn checked_mul(self, rhs: Residue) -> Result<Residue, FieldError> {
        self.same_field(rhs)?;
        Ok(self * rhs)
    }

    fn same_field(self, rhs: Residue) -> Result<(), FieldError> {
        if self.prime == rhs.prime {
            Ok(())
        } else {
            Err(FieldError::PrimeMismatch(self.prime.0, rhs.prime.0))
        }
    }

    pub fn pow(self, mut exp: u64) -> Residue {
        let p = self.prime.0 as u64;
        let mut base = self.value as u64;
        let mut acc = 1u64 % p;
        while exp > 0 {
            if exp & 1 == 1 {
                acc = acc * base % p;
            }
            base = base * base % p;
            exp >>= 1;
        }
        Residue {
            value: acc as u32,
            prime: self.prime,
        }
    }

    /// Multiplicative inverse via Fermat's little theorem.
    pub fn inv(self) -> Result<Residue, FieldError> {
        if self.value == 0 {
            return Err(FieldError::ZeroInverse);
        }
        Ok(self.pow(self.prime.0 as u64 - 2))
    }

    /// Division `self / rhs`.
    pub fn div(self, rhs: Residue) -> Result<Residue, FieldError> {
        Ok(self * rhs.inv()?)
    }

    pub fn quadratic_class(self) -> QuadraticClass {
        if self.value == 0 {
            QuadraticClass::Zero
        } else if self.pow((self.prime.0 as u64 - 1) / 2).value == 1 {
            QuadraticClass::Square
        } else {
            QuadraticClass::NonSquare
        }
    }

    /// Both square roots as `(canonical, other)`, where the canonical root is the
    /// one lying in `[1, (p-1)/2]`. Zero yields `(0, 0)`; non-squares yield `None`.
    pub fn sqrt_roots(self) -> Option<(Residue, Residue)> {
        if self.value == 0 {
            return Some((self, self));
        }
        let half = (self.prime.0 - 1) / 2;
        (1..=half)
            .map(|r| self.prime.residue(r as i64))
            .find(|&r| r * r == self)
            .map(|r| (r, -r))
    }
}

/// Free-function form of [`Residue::inv`].
pub fn inv(x: Residue) -> Result<Residue, FieldError> {
    x.inv()
}

/// Free-function form of [`Residue::quadratic_class`].
pub fn quadratic_residue_class(x: Residue) -> QuadraticClass {
    x.quadratic_class()
}

/// Free-function form of [`Residue::sqrt_roots`].
pub fn sqrt_roots(t: Residue) -> Option<(Residue, Residue)> {
    t.sqrt_roots()
}

impl fmt::Display for Residue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value)
    }
}

#[inline]
fn check(a: Residue, b: Residue) {
    assert_eq!(
        a.prime, b.prime,
        "arithmetic between residues of different fields"
    );
}

impl Add for Residue {
    type Output = Residue;
    #[inline]
    fn add(self, rhs: Residue) -> Residue {
        check(self, rhs);
        let p = self.prime.0;
        let s = self.value + rhs.value;
        Residue {
            value: if s >= p { s - p } else { s },
            prime: self.prime,
        }
    }
}

impl Sub for Residue {
    type Output = Residue;
    #[inline]
    fn sub(self, rhs: Residue) -> Residue {
        self + (-rhs)
    }
}

impl Neg for Residue {
    type Output = Residue;
    #[inline]
    fn neg(self) -> Residue {
        let p = self.prime.0;
        Residue {
            value: if self.value == 0 { 0 } else { p - self.value },
            prime: self.prime,
        }
    }
}

impl Mul for Residue {
    type Output = Residue;
    #[inline]
    fn mul(self, rhs: Residue) -> Residue {
        check(self, rhs);
        let p = self.prime.0 as u64;
        Residue {
            value: (self.value as u64 * rhs.value as u64 % p) as u32,
            prime: self.prime,
        }
    }
}

impl AddAssign for Residue {
    fn add_assign(&mut self, rhs: Residue) {
        *self = *self + rhs;
    }
}

impl SubAssign for Residue {
    fn sub_assign(&mut self, rhs: Residue) {
        *self = *self - rhs;
    }
}

impl MulAssign for Residue {
    fn mul_assign(&mut self, rhs: Residue) {
        *self = *self * rhs;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fp(p: u32) -> FieldPrime {
        FieldPrime::new(p).unwrap()
    }

    #[test]
    fn rejects_bad_moduli() {
        assert_eq!(FieldPrime::new(2), Err(FieldError::EvenPrime));
        assert_eq!(FieldPrime::new(9), Err(FieldError::NotPrime(9)));
        assert_eq!(FieldPrime::new(1), Err(FieldError::NotPrime(1)));
        assert_eq!(FieldPrime::new(0), Err(FieldError::NotPrime(0)));
        for p in [3, 5, 7, 11, 13, 17, 19, 23, 29, 31] {
            assert!(FieldPrime::new(p).is_ok());
        }
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(fp(5).residue(2).inv().unwrap().value(), 3);
        assert_eq!(fp(7).residue(1).inv().unwrap().value(), 1);
        assert_eq!(fp(3).residue(2).inv().unwrap().value(), 2);
        assert_eq!(fp(3).zero().inv(), Err(FieldError::ZeroInverse));
    }

    #[test]
    fn inverse_matches_brute_force() {
        for p in [3u32, 5, 7, 11, 31] {
            let f = fp(p);
            for x in f.units() {
                let brute = (1..p).find(|y| x.value() * y % p == 1).unwrap();
                assert_eq!(x.inv().unwrap().value(), brute);
            }
        }
    }

    #[test]
    fn half_is_inverse_of_two() {
        for p in [3u32, 5, 7, 31] {
            let f = fp(p);
            assert_eq!(f.half(), f.residue(2).inv().unwrap());
        }
    }

    #[test]
    fn quadratic_classes() {
        let f = fp(5);
        assert_eq!(f.residue(4).quadratic_class(), QuadraticClass::Square);
        assert_eq!(f.residue(2).quadratic_class(), QuadraticClass::NonSquare);
        assert_eq!(f.zero().quadratic_class(), QuadraticClass::Zero);
        for p in [3u32, 5, 7, 11, 13] {
            let f = fp(p);
            let squares = f
                .residues()
                .filter(|r| r.quadratic_class() == QuadraticClass::Square)
                .count();
            assert_eq!(squares as u32, (p - 1) / 2);
        }
    }

    #[test]
    fn square_root_examples() {
        let (a, b) = fp(7).residue(2).sqrt_roots().unwrap();
        assert_eq!((a.value(), b.value()), (3, 4));
        let (a, b) = fp(5).zero().sqrt_roots().unwrap();
        assert_eq!((a.value(), b.value()), (0, 0));
        assert!(fp(5).residue(3).sqrt_roots().is_none());
    }

    #[test]
    fn mixed_field_arithmetic_is_reported() {
        let a = fp(3).one();
        let b = fp(5).one();
        assert_eq!(a.checked_add(b), Err(FieldError::PrimeMismatch(3, 5)));
        assert_eq!(a.checked_mul(b), Err(FieldError::PrimeMismatch(3, 5)));
    }

    #[test]
    #[should_panic]
    fn mixed_field_operator_panics() {
        let _ = fp(3).one() + fp(5).one();
    }
}
