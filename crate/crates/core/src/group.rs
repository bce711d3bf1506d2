//! The Heisenberg group `H_p` of upper unitriangular 3×3 matrices over `Z_p`,
//! written as triples `(x, y, z)` with product
//! `(x,y,z)(x',y',z') = (x+x', y+y'+x z', z+z')`.

use std::fmt;
use std::ops::Mul;

use thiserror::Error;

use crate::field::{FieldError, FieldPrime, Residue};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GroupError {
    #[error("group elements belong to different primes (p = {0} and p = {1})")]
    PrimeMismatch(u32, u32),
    #[error("cannot parse {0:?} as a group element; expected \"(x,y,z)\"")]
    BadElement(String),
    #[error("cannot parse {0:?} as a subgroup; expected Full, T, C, N:i, N:inf, A:i,j or A:inf,j")]
    BadSubgroup(String),
    #[error(transparent)]
    Field(#[from] FieldError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupElement {
    pub x: Residue,
    pub y: Residue,
    pub z: Residue,
}

impl GroupElement {
    pub fn new(prime: FieldPrime, x: i64, y: i64, z: i64) -> Self {
        Self {
            x: prime.residue(x),
            y: prime.residue(y),
            z: prime.residue(z),
        }
    }

    pub fn identity(prime: FieldPrime) -> Self {
        Self::new(prime, 0, 0, 0)
    }

    pub fn prime(&self) -> FieldPrime {
        self.x.prime()
    }

    /// Position in the lexicographic `(x, y, z)` basis, `x p² + y p + z`.
    pub fn index(&self) -> usize {
        let p = self.prime().as_usize();
        (self.x.as_usize() * p + self.y.as_usize()) * p + self.z.as_usize()
    }

    /// Inverse of [`GroupElement::index`].
    pub fn from_index(prime: FieldPrime, index: usize) -> Self {
        let p = prime.as_usize();
        assert!(index < p * p * p, "group index {index} out of range");
        Self::new(
            prime,
            (index / (p * p)) as i64,
            ((index / p) % p) as i64,
            (index % p) as i64,
        )
    }

    pub fn is_identity(&self) -> bool {
        self.x.is_zero() && self.y.is_zero() && self.z.is_zero()
    }

    pub fn multiply(&self, other: &GroupElement) -> Result<GroupElement, GroupError> {
        let (p, q) = (self.prime(), other.prime());
        if p != q {
            return Err(GroupError::PrimeMismatch(p.get(), q.get()));
        }
        Ok(GroupElement {
            x: self.x + other.x,
            y: self.y + other.y + self.x * other.z,
            z: self.z + other.z,
        })
    }

    pub fn inverse(&self) -> GroupElement {
        GroupElement {
            x: -self.x,
            y: -self.y + self.x * self.z,
            z: -self.z,
        }
    }

    /// `self · h · self⁻¹`.
    pub fn conjugate(&self, h: &GroupElement) -> Result<GroupElement, GroupError> {
        self.multiply(h)?.multiply(&self.inverse())
    }

    /// `self` raised to an integer power.
    pub fn pow(&self, n: u64) -> GroupElement {
        let mut acc = GroupElement::identity(self.prime());
        for _ in 0..n {
            acc = acc * *self;
        }
        acc
    }
}

impl Mul for GroupElement {
    type Output = GroupElement;
    /// Panics when the operands live over different primes; use
    /// [`GroupElement::multiply`] for a fallible product.
    fn mul(self, rhs: GroupElement) -> GroupElement {
        self.multiply(&rhs).expect("product of elements over different primes")
    }
}

impl fmt::Display for GroupElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{})", self.x, self.y, self.z)
    }
}

impl GroupElement {
    /// Parses the textual form `"(x,y,z)"`; integers are reduced mod `p`.
    pub fn parse(text: &str, prime: FieldPrime) -> Result<Self, GroupError> {
        let bad = || GroupError::BadElement(text.to_string());
        let inner = text
            .trim()
            .strip_prefix('(')
            .and_then(|t| t.strip_suffix(')'))
            .ok_or_else(bad)?;
        let parts: Vec<i64> = inner
            .split(',')
            .map(|s| s.trim().parse::<i64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        match parts.as_slice() {
            [x, y, z] => Ok(Self::new(prime, *x, *y, *z)),
            _ => Err(bad()),
        }
    }
}

/// Free-function form of [`GroupElement::multiply`].
pub fn multiply(g1: &GroupElement, g2: &GroupElement) -> Result<GroupElement, GroupError> {
    g1.multiply(g2)
}

/// Free-function form of [`GroupElement::inverse`].
pub fn inverse(g: &GroupElement) -> GroupElement {
    g.inverse()
}

/// Free-function form of [`GroupElement::conjugate`]: `g h g⁻¹`.
pub fn conjugate(g: &GroupElement, h: &GroupElement) -> Result<GroupElement, GroupError> {
    g.conjugate(h)
}

/// All `p³` elements in lexicographic order, so `elements(p)[g.index()] == g`.
pub fn elements(prime: FieldPrime) -> Vec<GroupElement> {
    let n = prime.as_usize().pow(3);
    (0..n).map(|i| GroupElement::from_index(prime, i)).collect()
}

/// The subgroups of `H_p` up to the catalogue used by the algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SubgroupId {
    Full,
    Trivial,
    /// `N_i = {(l, y, l i)}`, order `p²`.
    N(Residue),
    /// `N_∞ = {(0, y, z)}`, order `p²`.
    NInfinity,
    /// `A_{i,j} = {(l, 2⁻¹l(l-1)i + l j, l i)}`, order `p`.
    A(Residue, Residue),
    /// `A_{∞,j} = {(0, l j, l)}`, order `p`.
    AInfinity(Residue),
    /// The center `{(0, y, 0)}`, order `p`.
    Center,
}

impl SubgroupId {
    pub fn order(&self, prime: FieldPrime) -> usize {
        let p = prime.as_usize();
        match self {
            SubgroupId::Full => p * p * p,
            SubgroupId::Trivial => 1,
            SubgroupId::N(_) | SubgroupId::NInfinity => p * p,
            SubgroupId::A(..) | SubgroupId::AInfinity(_) | SubgroupId::Center => p,
        }
    }

    /// Every catalogue entry for the given prime.
    pub fn catalogue(prime: FieldPrime) -> Vec<SubgroupId> {
        let mut out = vec![SubgroupId::Full, SubgroupId::Trivial];
        out.extend(prime.residues().map(SubgroupId::N));
        out.push(SubgroupId::NInfinity);
        for i in prime.residues() {
            out.extend(prime.residues().map(|j| SubgroupId::A(i, j)));
        }
        out.extend(prime.residues().map(SubgroupId::AInfinity));
        out.push(SubgroupId::Center);
        out
    }

    fn labels_match(&self, prime: FieldPrime) -> bool {
        match self {
            SubgroupId::N(i) | SubgroupId::AInfinity(i) => i.prime() == prime,
            SubgroupId::A(i, j) => i.prime() == prime && j.prime() == prime,
            _ => true,
        }
    }

    /// Elements in lexicographic order.
    pub fn elements(&self, prime: FieldPrime) -> Vec<GroupElement> {
        assert!(
            self.labels_match(prime),
            "subgroup labels belong to a different prime than {prime}"
        );
        let mut out: Vec<GroupElement> = match *self {
            SubgroupId::Full => elements(prime),
            SubgroupId::Trivial => vec![GroupElement::identity(prime)],
            SubgroupId::N(i) => prime
                .residues()
                .flat_map(|l| {
                    prime
                        .residues()
                        .map(move |y| GroupElement { x: l, y, z: l * i })
                })
                .collect(),
            SubgroupId::NInfinity => prime
                .residues()
                .flat_map(|y| {
                    prime.residues().map(move |z| GroupElement {
                        x: prime.zero(),
                        y,
                        z,
                    })
                })
                .collect(),
            SubgroupId::A(i, j) => {
                let half = prime.half();
                prime
                    .residues()
                    .map(|l| GroupElement {
                        x: l,
                        y: half * l * (l - prime.one()) * i + l * j,
                        z: l * i,
                    })
                    .collect()
            }
            SubgroupId::AInfinity(j) => prime
                .residues()
                .map(|l| GroupElement {
                    x: prime.zero(),
                    y: l * j,
                    z: l,
                })
                .collect(),
            SubgroupId::Center => prime
                .residues()
                .map(|y| GroupElement {
                    x: prime.zero(),
                    y,
                    z: prime.zero(),
                })
                .collect(),
        };
        out.sort();
        out
    }

    /// A generating set read off from the catalogue.
    pub fn generators(&self, prime: FieldPrime) -> Vec<GroupElement> {
        let e = |x: Residue, y: Residue, z: Residue| GroupElement { x, y, z };
        let (zero, one) = (prime.zero(), prime.one());
        match *self {
            SubgroupId::Full => vec![e(one, zero, zero), e(zero, zero, one)],
            SubgroupId::Trivial => vec![],
            SubgroupId::N(i) => vec![e(one, zero, i), e(zero, one, zero)],
            SubgroupId::NInfinity => vec![e(zero, zero, one), e(zero, one, zero)],
            SubgroupId::A(i, j) => vec![e(one, j, i)],
            SubgroupId::AInfinity(j) => vec![e(zero, j, one)],
            SubgroupId::Center => vec![e(zero, one, zero)],
        }
    }

    pub fn contains(&self, g: &GroupElement) -> bool {
        let prime = g.prime();
        if !self.labels_match(prime) {
            return false;
        }
        let (x, y, z) = (g.x, g.y, g.z);
        match *self {
            SubgroupId::Full => true,
            SubgroupId::Trivial => g.is_identity(),
            SubgroupId::N(i) => z == x * i,
            SubgroupId::NInfinity => x.is_zero(),
            SubgroupId::A(i, j) => {
                z == x * i && y == prime.half() * x * (x - prime.one()) * i + x * j
            }
            SubgroupId::AInfinity(j) => x.is_zero() && y == z * j,
            SubgroupId::Center => x.is_zero() && z.is_zero(),
        }
    }

    /// Left cosets `gH`, each with its lexicographically least member as
    /// representative; cosets are listed in increasing representative order.
    pub fn left_cosets(&self, prime: FieldPrime) -> Vec<(GroupElement, Vec<GroupElement>)> {
        let members = self.elements(prime);
        let n = prime.as_usize().pow(3);
        let mut seen = vec![false; n];
        let mut out = Vec::with_capacity(n / members.len());
        for g in elements(prime) {
            if seen[g.index()] {
                continue;
            }
            let mut coset: Vec<GroupElement> = members.iter().map(|h| g * *h).collect();
            coset.sort();
            for c in &coset {
                seen[c.index()] = true;
            }
            out.push((coset[0], coset));
        }
        out
    }

    pub fn parse(text: &str, prime: FieldPrime) -> Result<Self, GroupError> {
        let bad = || GroupError::BadSubgroup(text.to_string());
        let t = text.trim();
        let num = |s: &str| -> Result<Residue, GroupError> {
            s.trim()
                .parse::<i64>()
                .map(|v| prime.residue(v))
                .map_err(|_| bad())
        };
        let is_inf = |s: &str| matches!(s.trim(), "inf" | "∞");
        match t {
            "Full" | "G" => return Ok(SubgroupId::Full),
            "T" | "Trivial" => return Ok(SubgroupId::Trivial),
            "C" | "Center" => return Ok(SubgroupId::Center),
            _ => {}
        }
        if let Some(rest) = t.strip_prefix("N:") {
            return if is_inf(rest) {
                Ok(SubgroupId::NInfinity)
            } else {
                Ok(SubgroupId::N(num(rest)?))
            };
        }
        if let Some(rest) = t.strip_prefix("A:") {
            let (a, b) = rest.split_once(',').ok_or_else(bad)?;
            let j = num(b)?;
            return if is_inf(a) {
                Ok(SubgroupId::AInfinity(j))
            } else {
                Ok(SubgroupId::A(num(a)?, j))
            };
        }
        Err(bad())
    }
}

impl fmt::Display for SubgroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SubgroupId::Full => write!(f, "Full"),
            SubgroupId::Trivial => write!(f, "T"),
            SubgroupId::N(i) => write!(f, "N:{i}"),
            SubgroupId::NInfinity => write!(f, "N:inf"),
            SubgroupId::A(i, j) => write!(f, "A:{i},{j}"),
            SubgroupId::AInfinity(j) => write!(f, "A:inf,{j}"),
            SubgroupId::Center => write!(f, "C"),
        }
    }
}

/// Free-function form of [`SubgroupId::elements`].
pub fn subgroup_elements(s: &SubgroupId, prime: FieldPrime) -> Vec<GroupElement> {
    s.elements(prime)
}

/// Free-function form of [`SubgroupId::left_cosets`].
pub fn left_cosets(s: &SubgroupId, prime: FieldPrime) -> Vec<(GroupElement, Vec<GroupElement>)> {
    s.left_cosets(prime)
}

/// Free-function form of [`SubgroupId::contains`].
pub fn is_member(g: &GroupElement, s: &SubgroupId) -> bool {
    s.contains(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn fp(p: u32) -> FieldPrime {
        FieldPrime::new(p).unwrap()
    }

    fn el(p: u32, x: i64, y: i64, z: i64) -> GroupElement {
        GroupElement::new(fp(p), x, y, z)
    }

    #[test]
    fn multiplication_examples() {
        assert_eq!(el(5, 1, 0, 0) * el(5, 0, 0, 1), el(5, 1, 1, 1));
        assert_eq!(el(5, 0, 0, 0) * el(5, 2, 3, 4), el(5, 2, 3, 4));
        assert_eq!(el(3, 1, 0, 1) * el(3, 1, 0, 1), el(3, 2, 1, 2));
        assert_eq!(
            el(3, 1, 0, 0).multiply(&el(5, 1, 0, 0)),
            Err(GroupError::PrimeMismatch(3, 5))
        );
    }

    #[test]
    fn inverse_examples() {
        assert_eq!(el(5, 1, 2, 3).inverse(), el(5, 4, 1, 2));
        assert_eq!(el(7, 0, 0, 0).inverse(), el(7, 0, 0, 0));
        assert_eq!(el(3, 1, 0, 1).inverse(), el(3, 2, 1, 2));
    }

    #[test]
    fn conjugation_examples() {
        assert_eq!(el(5, 2, 0, 1).conjugate(&el(5, 1, 3, 4)).unwrap(), el(5, 1, 0, 4));
        assert_eq!(el(3, 0, 0, 1).conjugate(&el(3, 1, 0, 1)).unwrap(), el(3, 1, 2, 1));
        let h = el(7, 3, 5, 6);
        assert_eq!(el(7, 0, 0, 0).conjugate(&h).unwrap(), h);
    }

    #[test]
    fn index_round_trip() {
        let p = fp(5);
        for (k, g) in elements(p).iter().enumerate() {
            assert_eq!(g.index(), k);
            assert_eq!(GroupElement::from_index(p, k), *g);
        }
    }

    #[test]
    fn subgroup_examples() {
        let p = fp(3);
        let a = SubgroupId::A(p.one(), p.zero()).elements(p);
        assert_eq!(a, vec![el(3, 0, 0, 0), el(3, 1, 0, 1), el(3, 2, 1, 2)]);
        assert_eq!(SubgroupId::Trivial.elements(p), vec![el(3, 0, 0, 0)]);
        assert_eq!(
            SubgroupId::Center.elements(p),
            vec![el(3, 0, 0, 0), el(3, 0, 1, 0), el(3, 0, 2, 0)]
        );
    }

    #[test]
    fn coset_examples() {
        let p = fp(3);
        assert_eq!(SubgroupId::Full.left_cosets(p).len(), 1);
        assert_eq!(SubgroupId::Full.left_cosets(p)[0].1.len(), 27);
        assert!(SubgroupId::Trivial.left_cosets(p).iter().all(|c| c.1.len() == 1));
        let cosets = SubgroupId::A(p.one(), p.zero()).left_cosets(p);
        assert_eq!(cosets.len(), 9);
        let all: BTreeSet<_> = cosets.iter().flat_map(|c| c.1.iter().copied()).collect();
        assert_eq!(all.len(), 27);
        for (rep, coset) in &cosets {
            assert_eq!(rep, coset.iter().min().unwrap());
        }
    }

    #[test]
    fn membership_examples() {
        let p = fp(3);
        assert!(SubgroupId::A(p.one(), p.zero()).contains(&el(3, 1, 0, 1)));
        assert!(!SubgroupId::Center.contains(&el(3, 1, 0, 0)));
        for s in SubgroupId::catalogue(p) {
            assert!(s.contains(&GroupElement::identity(p)));
        }
    }

    #[test]
    fn parse_and_display_round_trip() {
        let p = fp(5);
        for s in SubgroupId::catalogue(p) {
            assert_eq!(SubgroupId::parse(&s.to_string(), p).unwrap(), s);
        }
        assert_eq!(
            SubgroupId::parse("A:2,3", p).unwrap(),
            SubgroupId::A(p.residue(2), p.residue(3))
        );
        assert!(SubgroupId::parse("B:1", p).is_err());
        assert!(SubgroupId::parse("A:1", p).is_err());
        assert_eq!(GroupElement::parse("(1, 2,8)", p).unwrap(), el(5, 1, 2, 3));
        assert!(GroupElement::parse("(1,2)", p).is_err());
        assert_eq!(el(5, 1, 2, 3).to_string(), "(1,2,3)");
    }
}
