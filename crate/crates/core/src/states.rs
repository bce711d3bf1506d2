//! Hidden subgroup states, weak Fourier sampling and conjugacy-class states.

use serde::Serialize;
use thiserror::Error;

use crate::field::FieldPrime;
use crate::group::{elements, GroupElement, GroupError, SubgroupId};
use crate::linalg::{
    CMatrix, CVector, DensityMatrix, LinalgError, QuantumState, RegisterLayout, StateVector, C64,
};
use crate::reps::{regular_rep, IrrepLabel, Irreps, Side};

/// Largest dimension [`two_copy_hscp_state`] builds without an override.
pub const TWO_COPY_DEFAULT_LIMIT: usize = 729;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateError {
    #[error("state of dimension {dim} exceeds the limit {limit}")]
    DimensionTooLarge { dim: usize, limit: usize },
    #[error(transparent)]
    Group(#[from] GroupError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// A hidden subgroup together with its oracle `f`, realized as the map from
/// each element to the representative of its left coset.
#[derive(Debug, Clone)]
pub struct HiddenSubgroupInstance {
    prime: FieldPrime,
    subgroup: SubgroupId,
    representative: Vec<GroupElement>,
}

impl HiddenSubgroupInstance {
    pub fn new(prime: FieldPrime, subgroup: SubgroupId) -> Self {
        let n = prime.as_usize().pow(3);
        let mut representative = vec![GroupElement::identity(prime); n];
        for (rep, coset) in subgroup.left_cosets(prime) {
            for g in coset {
                representative[g.index()] = rep;
            }
        }
        Self {
            prime,
            subgroup,
            representative,
        }
    }

    pub fn prime(&self) -> FieldPrime {
        self.prime
    }

    pub fn subgroup(&self) -> SubgroupId {
        self.subgroup
    }

    /// One oracle query: `f(g)`, the least element of `gH`.
    pub fn query(&self, g: &GroupElement) -> GroupElement {
        self.representative[g.index()]
    }

    /// Two-query test of whether `f` is constant along `g ↦ g c`, which holds
    /// exactly when `c` lies in the hidden subgroup.
    pub fn constant_along(&self, g: &GroupElement, c: &GroupElement) -> bool {
        self.query(g) == self.query(&(*g * *c))
    }
}

/// `|gH⟩ = |H|^{-1/2} Σ_{h∈H} |g h⟩` in the lexicographic element basis.
pub fn coset_state(representative: &GroupElement, s: &SubgroupId) -> StateVector {
    let prime = representative.prime();
    let n = prime.as_usize().pow(3);
    let members = s.elements(prime);
    let amp = C64::new(1.0 / (members.len() as f64).sqrt(), 0.0);
    let mut v = CVector::zeros(n);
    for h in &members {
        v[(*representative * *h).index()] = amp;
    }
    StateVector::new(v, RegisterLayout::single(n)).expect("coset state is normalized")
}

/// Uniform mixture of the left coset states of `s`.
pub fn hidden_subgroup_state(prime: FieldPrime, s: &SubgroupId) -> DensityMatrix {
    let cosets = s.left_cosets(prime);
    let w = 1.0 / cosets.len() as f64;
    let members: Vec<(f64, StateVector)> = cosets
        .iter()
        .map(|(rep, _)| (w, coset_state(rep, s)))
        .collect();
    DensityMatrix::from_ensemble(&members).expect("coset weights sum to one")
}

/// `(1/|G|) Σ_{h∈H} R_R(h)`, which equals [`hidden_subgroup_state`].
pub fn hidden_subgroup_state_from_regular(prime: FieldPrime, s: &SubgroupId) -> DensityMatrix {
    let n = prime.as_usize().pow(3);
    let mut m = CMatrix::zeros(n, n);
    for h in s.elements(prime) {
        m += regular_rep(Side::Right, &h).matrix();
    }
    DensityMatrix::from_parts(m.unscale(n as f64), RegisterLayout::single(n))
}

/// One irrep outcome of weak Fourier sampling.
#[derive(Debug, Clone, Serialize)]
pub struct SampledIrrepOutcome {
    pub label: IrrepLabel,
    pub probability: f64,
    /// State of the row register after discarding the column register;
    /// `None` when the outcome has probability zero.
    #[serde(skip)]
    pub conditional_state: Option<DensityMatrix>,
}

/// Weak Fourier sampling by direct simulation: transform `ρ_H`, measure the
/// irrep label exactly and trace out the column register.
pub fn weak_fourier_sample(irreps: &Irreps, s: &SubgroupId) -> Vec<SampledIrrepOutcome> {
    let rho = hidden_subgroup_state(irreps.prime(), s);
    let transformed = irreps
        .qft_matrix()
        .apply(&rho)
        .expect("Fourier transform acts on the group register");
    irreps
        .segments()
        .iter()
        .map(|seg| {
            let layout = RegisterLayout::new(vec![seg.dim, seg.dim]).expect("positive dims");
            let (probability, block) = transformed
                .project_block(seg.range(), layout)
                .expect("segment lies inside the Fourier basis");
            let conditional_state =
                block.map(|b| b.partial_trace(&[0]).expect("row register exists"));
            SampledIrrepOutcome {
                label: seg.label,
                probability,
                conditional_state,
            }
        })
        .collect()
}

/// `p_μ[H] = (d_μ/|G|) Σ_{h∈H} χ_μ(h)`.
pub fn irrep_probability(irreps: &Irreps, label: IrrepLabel, s: &SubgroupId) -> f64 {
    let n = irreps.group_order() as f64;
    let sum: C64 = s
        .elements(irreps.prime())
        .iter()
        .map(|h| irreps.character(label, h).expect("label matches prime"))
        .sum();
    label.dim() as f64 * sum.re / n
}

/// `ρ_μ[H] = Σ_{h∈H} σ_μ(h) / Σ_{h∈H} χ_μ(h)` in the display form, or `None`
/// when the label is never observed.
pub fn conditional_state(irreps: &Irreps, label: IrrepLabel, s: &SubgroupId) -> Option<DensityMatrix> {
    let prime = irreps.prime();
    let d = label.dim();
    let mut m = CMatrix::zeros(d, d);
    let mut norm = C64::new(0.0, 0.0);
    for h in s.elements(prime) {
        m += irreps.display_matrix(label, &h).expect("label matches prime").matrix();
        norm += irreps.character(label, &h).expect("label matches prime");
    }
    if norm.norm() <= 1e-12 {
        return None;
    }
    Some(DensityMatrix::from_parts(m / norm, RegisterLayout::single(d)))
}

/// Weak Fourier sampling from character sums, without building `p³`-sized
/// matrices. Agrees with [`weak_fourier_sample`].
pub fn irrep_distribution(irreps: &Irreps, s: &SubgroupId) -> Vec<SampledIrrepOutcome> {
    irreps
        .labels()
        .iter()
        .map(|&label| {
            let probability = irrep_probability(irreps, label, s);
            let conditional_state = if probability > 1e-14 {
                conditional_state(irreps, label, s)
            } else {
                None
            };
            SampledIrrepOutcome {
                label,
                probability,
                conditional_state,
            }
        })
        .collect()
}

/// `{g h g⁻¹ : h ∈ H}` as element-index multiplicities summed over all `g`.
fn conjugate_weights(prime: FieldPrime, s: &SubgroupId) -> Vec<(Vec<GroupElement>, f64)> {
    let members = s.elements(prime);
    let n = prime.as_usize().pow(3);
    elements(prime)
        .into_iter()
        .map(|g| {
            let conj = members
                .iter()
                .map(|h| g.conjugate(h).expect("same prime"))
                .collect();
            (conj, 1.0 / n as f64)
        })
        .collect()
}

/// `ρ_K` for an explicit list of subgroup elements.
fn state_of_elements(prime: FieldPrime, members: &[GroupElement]) -> CMatrix {
    let n = prime.as_usize().pow(3);
    let mut m = CMatrix::zeros(n, n);
    let w = C64::new(1.0 / n as f64, 0.0);
    for k in members {
        let kinv = k.inverse();
        for h in elements(prime) {
            m[((h * kinv).index(), h.index())] += w;
        }
    }
    m
}

/// `ρ_[H] = (1/|G|) Σ_g ρ_{gHg⁻¹}`.
pub fn hscp_state(prime: FieldPrime, s: &SubgroupId) -> DensityMatrix {
    let n = prime.as_usize().pow(3);
    let mut m = CMatrix::zeros(n, n);
    for (members, w) in conjugate_weights(prime, s) {
        m += state_of_elements(prime, &members).scale(w);
    }
    DensityMatrix::from_parts(m, RegisterLayout::single(n))
}

/// `c_μ(H) = (1/(|G| d_μ)) Σ_{h∈H} χ_μ(h)*`, the weight of each Fourier
/// coordinate of block `μ` in [`hscp_state`].
pub fn hscp_coefficient(irreps: &Irreps, label: IrrepLabel, s: &SubgroupId) -> f64 {
    let sum: C64 = s
        .elements(irreps.prime())
        .iter()
        .map(|h| irreps.character(label, h).expect("label matches prime").conj())
        .sum();
    sum.re / (irreps.group_order() as f64 * label.dim() as f64)
}

/// `ρ_{[H],2} = (1/|G|) Σ_g ρ_{gHg⁻¹} ⊗ ρ_{gHg⁻¹}`, refused above `limit`
/// total dimension.
pub fn two_copy_hscp_state(
    prime: FieldPrime,
    s: &SubgroupId,
    limit: usize,
) -> Result<DensityMatrix, StateError> {
    let n = prime.as_usize().pow(3);
    if n * n > limit {
        return Err(StateError::DimensionTooLarge { dim: n * n, limit });
    }
    let layout = RegisterLayout::new(vec![n, n])?;
    let mut m = CMatrix::zeros(n * n, n * n);
    for (members, w) in conjugate_weights(prime, s) {
        let r = state_of_elements(prime, &members);
        m += r.kronecker(&r).scale(w);
    }
    Ok(DensityMatrix::from_parts(m, layout))
}

/// `ρ_[H] ⊗ ρ_[H]`, the naive two-copy state, for comparison.
pub fn hscp_state_squared(prime: FieldPrime, s: &SubgroupId) -> DensityMatrix {
    let r = hscp_state(prime, s);
    r.tensor(&r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs_diff;

    fn fp(p: u32) -> FieldPrime {
        FieldPrime::new(p).unwrap()
    }

    #[test]
    fn coset_state_examples() {
        let p = fp(3);
        let rep = GroupElement::new(p, 1, 2, 0);
        let s = coset_state(&rep, &SubgroupId::Trivial);
        assert_eq!(s, StateVector::basis(RegisterLayout::single(27), rep.index()));

        let a = SubgroupId::A(p.one(), p.zero());
        let e = GroupElement::identity(p);
        let s = coset_state(&e, &a);
        let amp = 1.0 / 3f64.sqrt();
        for g in a.elements(p) {
            assert!((s.amplitudes()[g.index()].re - amp).abs() < 1e-15);
        }
        assert!((s.norm() - 1.0).abs() < 1e-14);
        let other = coset_state(&GroupElement::new(p, 0, 0, 1), &a);
        assert!(s.inner(&other).unwrap().norm() < 1e-15);
    }

    #[test]
    fn hidden_state_examples() {
        let p = fp(3);
        let t = hidden_subgroup_state(p, &SubgroupId::Trivial);
        let mixed = DensityMatrix::maximally_mixed(RegisterLayout::single(27));
        assert!(max_abs_diff(t.entries(), mixed.entries()) < 1e-15);

        let full = hidden_subgroup_state(p, &SubgroupId::Full);
        let uni = StateVector::uniform(RegisterLayout::single(27)).to_density();
        assert!(max_abs_diff(full.entries(), uni.entries()) < 1e-14);
        let full_r = hidden_subgroup_state_from_regular(p, &SubgroupId::Full);
        assert!(max_abs_diff(full.entries(), full_r.entries()) < 1e-14);

        let a = SubgroupId::A(p.one(), p.zero());
        let r = hidden_subgroup_state(p, &a);
        let sq = r.entries() * r.entries();
        assert!(max_abs_diff(&sq, &r.entries().scale(1.0 / 9.0)) < 1e-14);
    }

    #[test]
    fn oracle_is_constant_exactly_on_cosets() {
        let p = fp(3);
        let a = SubgroupId::A(p.one(), p.residue(2));
        let inst = HiddenSubgroupInstance::new(p, a);
        for g in elements(p) {
            for h in elements(p) {
                let same = a.contains(&(g.inverse() * h));
                assert_eq!(inst.query(&g) == inst.query(&h), same);
            }
        }
    }

    #[test]
    fn weak_sampling_examples() {
        let ir = Irreps::new(fp(5));
        let p = ir.prime();
        let a = SubgroupId::A(p.residue(2), p.residue(3));
        let dist = irrep_distribution(&ir, &a);
        for o in &dist {
            let expected = match o.label {
                IrrepLabel::OneDim(x, y) => {
                    if x + y * p.residue(2) == p.zero() {
                        1.0 / 25.0
                    } else {
                        0.0
                    }
                }
                IrrepLabel::PDim(_) => 0.2,
            };
            assert!((o.probability - expected).abs() < 1e-12, "{}", o.label);
        }
        let dist = irrep_distribution(&ir, &SubgroupId::Trivial);
        for o in &dist {
            let d = o.label.dim() as f64;
            assert!((o.probability - d * d / 125.0).abs() < 1e-12);
        }
        let total: f64 = dist.iter().map(|o| o.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn two_copy_state_refuses_large_primes() {
        let p = fp(5);
        assert_eq!(
            two_copy_hscp_state(p, &SubgroupId::Trivial, TWO_COPY_DEFAULT_LIMIT).unwrap_err(),
            StateError::DimensionTooLarge {
                dim: 15625,
                limit: TWO_COPY_DEFAULT_LIMIT
            }
        );
    }

    #[test]
    fn trivial_hscp_states() {
        let p = fp(3);
        let mixed = DensityMatrix::maximally_mixed(RegisterLayout::single(27));
        let one = hscp_state(p, &SubgroupId::Trivial);
        assert!(max_abs_diff(one.entries(), mixed.entries()) < 1e-15);
        let two = two_copy_hscp_state(p, &SubgroupId::Trivial, TWO_COPY_DEFAULT_LIMIT).unwrap();
        assert!(max_abs_diff(two.entries(), mixed.tensor(&mixed).entries()) < 1e-15);
    }
}
