//! States of the pretty-good-measurement algorithm for the Heisenberg group,
//! reduced far enough to compare with the Clebsch-Gordan pipeline.

use rand::Rng;

use crate::field::{FieldPrime, Residue};
use crate::group::SubgroupId;
use crate::linalg::{
    sample_index, CVector, QuantumState, RegisterLayout, StateVector, UnitaryOp,
};
use crate::pipeline::{expected_label, partner_distribution, quadratic_phase_state, PipelineError};
use crate::reps::{IrrepLabel, Irreps, RootOfUnity};
use crate::states::conditional_state;

/// One measurement branch of the two-copy reduction.
#[derive(Debug, Clone)]
pub struct PgmBranch {
    pub m: Residue,
    pub probability: f64,
    pub state: StateVector,
}

fn phase_state(prime: FieldPrime, exponent: impl Fn(Residue) -> Residue) -> StateVector {
    let omega = RootOfUnity::new(prime);
    let amp = 1.0 / (prime.get() as f64).sqrt();
    let v = CVector::from_iterator(
        prime.as_usize(),
        prime.residues().map(|b| omega.pow(exponent(b)) * amp),
    );
    StateVector::new(v, RegisterLayout::single(prime.as_usize())).expect("unit norm")
}

/// `|i,j,y,z⟩ = (1/√p) Σ_b ω^{bjy + 2⁻¹b(b−1)iy + biz} |b⟩`.
///
/// The `z` term carries `i`. That is what the coset states produce and what
/// makes the two-copy exponent equal `uj + vi`.
pub fn pgm_state(i: Residue, j: Residue, y: Residue, z: Residue) -> StateVector {
    let prime = i.prime();
    let half = prime.half();
    phase_state(prime, |b| b * j * y + half * b * (b - prime.one()) * i * y + b * i * z)
}

/// `|i,j,y⟩`, the state with the `z` dependence dropped.
pub fn pgm_state_y_only(i: Residue, j: Residue, y: Residue) -> StateVector {
    pgm_state(i, j, y, i.prime().zero())
}

/// The two-copy state written through `u = b1 y1 + b2 y2` and
/// `v = 2⁻¹b1(b1−1)y1 + 2⁻¹b2(b2−1)y2 + b1 z1 + b2 z2` as `(1/p) Σ ω^{uj + vi}`.
pub fn pgm_two_copy_via_quad(
    i: Residue,
    j: Residue,
    (y1, z1): (Residue, Residue),
    (y2, z2): (Residue, Residue),
) -> StateVector {
    let prime = i.prime();
    let p = prime.as_usize();
    let omega = RootOfUnity::new(prime);
    let half = prime.half();
    let one = prime.one();
    let mut v = CVector::zeros(p * p);
    for b1 in prime.residues() {
        for b2 in prime.residues() {
            let u = b1 * y1 + b2 * y2;
            let w = half * b1 * (b1 - one) * y1 + half * b2 * (b2 - one) * y2 + b1 * z1 + b2 * z2;
            v[b1.as_usize() * p + b2.as_usize()] = omega.pow(u * j + w * i) / p as f64;
        }
    }
    StateVector::new(v, RegisterLayout::new(vec![p, p]).expect("valid")).expect("unit norm")
}

/// `|s, t⟩ ↦ |s − t, (s y1 + t y2)(y1 + y2)⁻¹⟩`.
pub fn pgm_basis_change(y1: Residue, y2: Residue) -> Result<UnitaryOp, PipelineError> {
    let prime = y1.prime();
    let sum_inv = (y1 + y2)
        .inv()
        .map_err(|_| PipelineError::InvalidLabels(y1.value(), y2.value()))?;
    let p = prime.as_usize();
    let mut map = vec![0; p * p];
    for s in prime.residues() {
        for t in prime.residues() {
            let m = (s * y1 + t * y2) * sum_inv;
            map[s.as_usize() * p + t.as_usize()] = (s - t).as_usize() * p + m.as_usize();
        }
    }
    Ok(UnitaryOp::from_permutation(
        map,
        RegisterLayout::new(vec![p, p]).expect("valid"),
    )?)
}

/// Applies the basis change to an arbitrary product of two pure states and
/// measures the second register, keeping the first.
pub fn reduce_pure_pair(
    first: &StateVector,
    second: &StateVector,
    y1: Residue,
    y2: Residue,
) -> Result<Vec<PgmBranch>, PipelineError> {
    if y1.is_zero() || y2.is_zero() {
        return Err(PipelineError::InvalidLabels(y1.value(), y2.value()));
    }
    let u = pgm_basis_change(y1, y2)?;
    let joint = u.apply(&first.tensor(second))?;
    let prime = y1.prime();
    Ok(joint
        .measure_and_discard(1)?
        .into_iter()
        .filter_map(|b| {
            b.state.map(|state| PgmBranch {
                m: prime.residue(b.outcome as i64),
                probability: b.probability,
                state,
            })
        })
        .collect())
}

/// Two-copy reduction: the `z`-free states `|i,j,y1⟩|i,j,y2⟩`, the basis
/// change, and a measurement of the second register. Every branch is returned
/// with its probability. The `z` values are accepted but do not enter, since
/// the reduction works with the `z`-free states.
pub fn pgm_reduce_two_copies(
    i: Residue,
    j: Residue,
    (y1, _z1): (Residue, Residue),
    (y2, _z2): (Residue, Residue),
) -> Result<Vec<PgmBranch>, PipelineError> {
    reduce_pure_pair(&pgm_state_y_only(i, j, y1), &pgm_state_y_only(i, j, y2), y1, y2)
}

/// Sampled form of [`pgm_reduce_two_copies`].
pub fn pgm_reduce_sampled<R: Rng + ?Sized>(
    i: Residue,
    j: Residue,
    first: (Residue, Residue),
    second: (Residue, Residue),
    rng: &mut R,
) -> Result<(Residue, StateVector), PipelineError> {
    let branches = pgm_reduce_two_copies(i, j, first, second)?;
    let probs: Vec<f64> = branches.iter().map(|b| b.probability).collect();
    let b = &branches[sample_index(&probs, rng)];
    Ok((b.m, b.state.clone()))
}

/// `(1/√p) Σ_r ω^{(y1 y2 / (2(y1 + y2))) i r²} |r⟩`.
pub fn pgm_reduced_target(i: Residue, y1: Residue, y2: Residue) -> Result<StateVector, PipelineError> {
    let prime = i.prime();
    let denom = (prime.residue(2) * (y1 + y2))
        .inv()
        .map_err(|_| PipelineError::InvalidLabels(y1.value(), y2.value()))?;
    Ok(quadratic_phase_state(&Irreps::shared(prime), y1 * y2 * denom * i))
}

/// Fidelity between the reduced two-copy states with `y1 = k1`, `y2 = k2` and
/// the states left after the Clebsch-Gordan transform and partner measurement
/// for hidden subgroup `A_{i,0}`. The minimum over all pairs of outcomes is
/// returned.
pub fn compare_to_cg(
    prime: FieldPrime,
    i: Residue,
    k1: Residue,
    k2: Residue,
) -> Result<f64, PipelineError> {
    expected_label(i, k1, k2)?;
    let irreps = Irreps::shared(prime);
    let s = SubgroupId::A(i, prime.zero());
    let rho = |k| {
        conditional_state(&irreps, IrrepLabel::PDim(k), &s)
            .expect("p-dimensional labels occur with probability 1/p")
    };
    let joint = rho(k1).tensor(&rho(k2));
    let cg = partner_distribution(&irreps, k1, k2, &joint)?;
    let pgm = pgm_reduce_two_copies(i, prime.zero(), (k1, prime.zero()), (k2, prime.zero()))?;
    let mut worst = f64::INFINITY;
    for (_, state) in cg.iter() {
        let Some(state) = state else { continue };
        for b in &pgm {
            worst = worst.min(state.expectation(&b.state)?);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::fidelity_pure;
    use crate::reps::RootOfUnity;

    fn fp(p: u32) -> FieldPrime {
        FieldPrime::new(p).unwrap()
    }

    #[test]
    fn trivial_exponent_is_uniform() {
        let p = fp(5);
        let uni = StateVector::uniform(RegisterLayout::single(5));
        for y in p.residues() {
            for z in p.residues() {
                let s = pgm_state(p.zero(), p.zero(), y, z);
                assert!((fidelity_pure(&s, &uni).unwrap() - 1.0).abs() < 1e-12);
                assert!((s.norm() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn p3_example() {
        let p = fp(3);
        let s = pgm_state(p.one(), p.zero(), p.one(), p.zero());
        let w = RootOfUnity::new(p);
        let amp = 1.0 / 3f64.sqrt();
        // exponents 2b(b−1) mod 3 = 0, 0, 1
        let expect = [w.pow_int(0), w.pow_int(0), w.pow_int(1)];
        for (a, e) in s.amplitudes().iter().zip(expect) {
            assert!((a - e * amp).norm() < 1e-12);
        }
    }

    #[test]
    fn quad_variables_reproduce_the_product() {
        let p = fp(5);
        let r = |v| p.residue(v);
        for (i, j, y1, z1, y2, z2) in [(1, 2, 3, 4, 1, 0), (2, 0, 1, 1, 4, 3), (4, 3, 2, 2, 2, 1)] {
            let prod = pgm_state(r(i), r(j), r(y1), r(z1)).tensor(&pgm_state(r(i), r(j), r(y2), r(z2)));
            let quad = pgm_two_copy_via_quad(r(i), r(j), (r(y1), r(z1)), (r(y2), r(z2)));
            assert!((prod.amplitudes() - quad.amplitudes()).norm() < 1e-12);
        }
    }

    #[test]
    fn reduction_example_p3() {
        let p = fp(3);
        let w = RootOfUnity::new(p).pow_int(1);
        let amp = 1.0 / 3f64.sqrt();
        let target = StateVector::new(
            CVector::from_vec(vec![crate::linalg::C64::new(amp, 0.0), w * amp, w * amp]),
            RegisterLayout::single(3),
        )
        .unwrap();
        let branches =
            pgm_reduce_two_copies(p.one(), p.zero(), (p.one(), p.zero()), (p.one(), p.zero())).unwrap();
        assert_eq!(branches.len(), 3);
        for b in branches {
            assert!((b.probability - 1.0 / 3.0).abs() < 1e-12);
            assert!((fidelity_pure(&b.state, &target).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn retaining_z_adds_a_linear_phase() {
        // with z kept, b1 z1 + b2 z2 = m(z1 + z2) + r (y2 z1 − y1 z2)/(y1 + y2)
        let p = fp(5);
        let r = |v| p.residue(v);
        let (i, y1, y2, z1, z2) = (r(1), r(1), r(2), r(1), r(0));
        let first = pgm_state(i, r(0), y1, z1);
        let second = pgm_state(i, r(0), y2, z2);
        let target = pgm_reduced_target(i, y1, y2).unwrap();
        let lin = (y2 * z1 - y1 * z2) * (y1 + y2).inv().unwrap() * i;
        let omega = RootOfUnity::new(p);
        for b in reduce_pure_pair(&first, &second, y1, y2).unwrap() {
            assert!(fidelity_pure(&b.state, &target).unwrap() < 0.99);
            let shifted = CVector::from_iterator(
                5,
                p.residues().map(|s| target.amplitudes()[s.as_usize()] * omega.pow(lin * s)),
            );
            let shifted = StateVector::new(shifted, RegisterLayout::single(5)).unwrap();
            assert!((fidelity_pure(&b.state, &shifted).unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn compare_small_cases() {
        let p = fp(3);
        assert!((compare_to_cg(p, p.one(), p.one(), p.one()).unwrap() - 1.0).abs() < 1e-10);
        assert!((compare_to_cg(p, p.zero(), p.one(), p.one()).unwrap() - 1.0).abs() < 1e-10);
        assert!(matches!(
            compare_to_cg(p, p.one(), p.one(), p.residue(2)),
            Err(PipelineError::InvalidLabels(..))
        ));
    }
}
