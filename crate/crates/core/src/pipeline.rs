//! The two-copy conjugacy algorithm and the full hidden subgroup solver.
//!
//! One repetition runs weak Fourier sampling on two copies, keeps the branch
//! where both labels are `σ_{k1}`, `σ_{k2}` with `k1 + k2 ≠ 0`, applies the
//! Clebsch-Gordan unitary `W`, measures the irrep register, maps the remaining
//! quadratic-phase state through `U₂`, applies the inverse Fourier transform
//! over `Z_p` and reads off `i`. The Abelian hidden subgroup problem on `N_i`
//! then yields `j`, and two oracle queries verify the candidate `A_{i,j}`.

use std::sync::{Arc, OnceLock};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cg::cg_unitary;
use crate::field::{FieldPrime, QuadraticClass, Residue};
use crate::group::{GroupElement, SubgroupId};
use crate::linalg::{
    sample_index, CMatrix, CVector, DensityMatrix, LinalgError, QuantumState, RegisterLayout,
    StateVector, C64, DEFAULT_TOLERANCE,
};
use crate::reps::{IrrepLabel, Irreps};
use crate::states::{irrep_distribution, HiddenSubgroupInstance, SampledIrrepOutcome};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("input to U2 is not symmetric under s -> -s (deviation {0})")]
    AsymmetricInput(f64),
    #[error("sampled characters admit no consistent value of j")]
    InconsistentSamples,
    #[error("no repetitions were allowed")]
    RepetitionBudgetExhausted,
    #[error("the solver handles A(i,j) and the trivial subgroup, not {0}")]
    UnsupportedSubgroup(String),
    #[error("labels k1 = {0}, k2 = {1} need k1, k2 and k1 + k2 all non-zero")]
    InvalidLabels(u32, u32),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// How the `U₂` step is realized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum U2Mode {
    /// Deterministic isometry on the symmetric subspace.
    Isometry,
    /// The same isometry behind a success flag that fires with probability 1/2.
    Probabilistic,
}

impl U2Mode {
    /// Probability that the success flag fires, independent of the state.
    pub fn gate_probability(self) -> f64 {
        match self {
            U2Mode::Isometry => 1.0,
            U2Mode::Probabilistic => 0.5,
        }
    }
}

/// Record of one repetition. Stages that were not reached hold zero and
/// `false`; a label `k` of zero means the copy produced a one-dimensional irrep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub k1: u32,
    pub k2: u32,
    #[serde(rename = "m")]
    pub m_outcome: u32,
    #[serde(rename = "u2_success")]
    pub u2_succeeded: bool,
    #[serde(rename = "x")]
    pub measured_x: u32,
    #[serde(rename = "i")]
    pub recovered_i: Option<u32>,
    #[serde(rename = "j")]
    pub recovered_j: Option<u32>,
    pub verified: bool,
}

impl PipelineTrace {
    fn rejected(first: IrrepLabel, second: IrrepLabel) -> Self {
        let k = |l: IrrepLabel| match l {
            IrrepLabel::PDim(k) => k.value(),
            IrrepLabel::OneDim(..) => 0,
        };
        Self {
            k1: k(first),
            k2: k(second),
            m_outcome: 0,
            u2_succeeded: false,
            measured_x: 0,
            recovered_i: None,
            recovered_j: None,
            verified: false,
        }
    }

    /// Whether both copies landed on the good branch.
    pub fn good_branch(&self, prime: FieldPrime) -> bool {
        self.k1 != 0 && self.k2 != 0 && (self.k1 + self.k2) % prime.get() != 0
    }
}

/// Both copies on `σ_{k1}`, `σ_{k2}` with `k1 + k2 ≠ 0`.
#[derive(Debug, Clone)]
pub struct GoodBranch {
    pub k1: Residue,
    pub k2: Residue,
    /// `ρ_{k1}[H] ⊗ ρ_{k2}[H]`.
    pub joint: DensityMatrix,
}

#[derive(Debug, Clone)]
pub enum BranchOutcome {
    Good(GoodBranch),
    Rejected(IrrepLabel, IrrepLabel),
}

/// `(p − 1)(p − 2)/p²`.
pub fn good_branch_closed_form(prime: FieldPrime) -> f64 {
    let p = prime.get() as f64;
    (p - 1.0) * (p - 2.0) / (p * p)
}

/// `[1/√2 + (1 − 1/√2)/p]²`.
pub fn label_probability_closed_form(prime: FieldPrime) -> f64 {
    let p = prime.get() as f64;
    let s = std::f64::consts::FRAC_1_SQRT_2;
    (s + (1.0 - s) / p).powi(2)
}

/// `a = i k1 k2 / (2 (k1 + k2))`, the outcome the inverse transform peaks on.
pub fn expected_label(i: Residue, k1: Residue, k2: Residue) -> Result<Residue, PipelineError> {
    check_labels(k1, k2)?;
    let two = i.prime().residue(2);
    Ok(i * k1 * k2 * (two * (k1 + k2)).inv().expect("checked non-zero"))
}

/// `i = x · 2(k1 + k2) / (k1 k2)`.
pub fn invert_label(x: Residue, k1: Residue, k2: Residue) -> Result<Residue, PipelineError> {
    check_labels(k1, k2)?;
    let two = x.prime().residue(2);
    Ok(x * two * (k1 + k2) * (k1 * k2).inv().expect("checked non-zero"))
}

fn check_labels(k1: Residue, k2: Residue) -> Result<(), PipelineError> {
    if k1.is_zero() || k2.is_zero() || (k1 + k2).is_zero() {
        Err(PipelineError::InvalidLabels(k1.value(), k2.value()))
    } else {
        Ok(())
    }
}

/// Number of character samples used by [`Pipeline::recover_j`].
pub fn character_sample_count(prime: FieldPrime) -> usize {
    let bits = (prime.get() as f64).log2().ceil() as usize;
    3 * bits + 5
}

/// Applies `W` and measures the irrep register of a good-branch joint state.
/// Every outcome `m` comes with its probability and the state left on the
/// multiplicity register.
pub fn partner_distribution(
    irreps: &Irreps,
    k1: Residue,
    k2: Residue,
    joint: &DensityMatrix,
) -> Result<Vec<(f64, Option<DensityMatrix>)>, PipelineError> {
    check_labels(k1, k2)?;
    let dec = cg_unitary(irreps, IrrepLabel::PDim(k1), IrrepLabel::PDim(k2));
    let out = dec.apply(joint)?;
    Ok(out
        .measure_and_discard(1)?
        .into_iter()
        .map(|b| (b.probability, b.state))
        .collect())
}

/// Sampled form of [`partner_distribution`].
pub fn cg_and_measure_partner<R: Rng + ?Sized>(
    irreps: &Irreps,
    k1: Residue,
    k2: Residue,
    joint: &DensityMatrix,
    rng: &mut R,
) -> Result<(Residue, DensityMatrix), PipelineError> {
    check_labels(k1, k2)?;
    let dec = cg_unitary(irreps, IrrepLabel::PDim(k1), IrrepLabel::PDim(k2));
    let out = dec.apply(joint)?;
    let branch = out.measure_register_sampled(1, true, rng)?;
    let m = irreps.prime().residue(branch.outcome as i64);
    Ok((m, branch.state.expect("sampled outcome has positive probability")))
}

/// `(1/√p) Σ_s ω^{c s²} |s⟩` with `c = i 2⁻¹ k1 k2 / (k1 + k2)`.
pub fn quadratic_phase_state(irreps: &Irreps, c: Residue) -> StateVector {
    let p = irreps.prime();
    let amp = 1.0 / (p.get() as f64).sqrt();
    let v = CVector::from_iterator(
        p.as_usize(),
        p.residues().map(|s| irreps.omega().pow(c * s * s) * amp),
    );
    StateVector::new(v, RegisterLayout::single(p.as_usize())).expect("normalized")
}

/// The `U₂` Kraus operator `Σ_{t square} |t⟩(⟨r_t| + ⟨−r_t|)/√2 + |0⟩⟨0|`.
pub fn u2_kraus(prime: FieldPrime) -> CMatrix {
    let p = prime.as_usize();
    let mut k = CMatrix::zeros(p, p);
    k[(0, 0)] = C64::new(1.0, 0.0);
    let h = C64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    for t in prime.units() {
        if t.quadratic_class() == QuadraticClass::Square {
            let (r, s) = t.sqrt_roots().expect("t is a square");
            k[(t.as_usize(), r.as_usize())] = h;
            k[(t.as_usize(), s.as_usize())] = h;
        }
    }
    k
}

/// Largest `|ψ(r) − ψ(−r)|`.
fn asymmetry(state: &StateVector) -> f64 {
    let a = state.amplitudes();
    let p = a.len();
    (0..p)
        .map(|r| (a[r] - a[(p - r) % p]).norm())
        .fold(0.0, f64::max)
}

/// Applies `U₂` to a pure state on the symmetric subspace. In probabilistic
/// mode a failed flag returns the input unchanged.
pub fn u2_transform<R: Rng + ?Sized>(
    state: &StateVector,
    mode: U2Mode,
    rng: &mut R,
) -> Result<(bool, StateVector), PipelineError> {
    let dev = asymmetry(state);
    if dev > DEFAULT_TOLERANCE {
        return Err(PipelineError::AsymmetricInput(dev));
    }
    if mode == U2Mode::Probabilistic && !rng.random_bool(0.5) {
        return Ok((false, state.clone()));
    }
    let p = state.dim();
    let prime = FieldPrime::new(p as u32).expect("register dimension is the prime");
    let out = u2_kraus(prime) * state.amplitudes();
    Ok((true, StateVector::normalized(out, state.layout().clone())?))
}

/// `U₂` as an instrument on a mixed state: the probability of the success
/// outcome and the renormalized output. On the symmetric subspace the success
/// probability equals [`U2Mode::gate_probability`].
pub fn u2_instrument(
    state: &DensityMatrix,
    mode: U2Mode,
) -> (f64, Option<DensityMatrix>) {
    let prime = FieldPrime::new(state.dim() as u32).expect("register dimension is the prime");
    let k = u2_kraus(prime);
    let out = &k * state.entries() * k.adjoint();
    let kept = out.trace().re;
    let prob = kept * mode.gate_probability();
    if kept <= 1e-14 {
        return (0.0, None);
    }
    (
        prob,
        Some(DensityMatrix::from_parts(
            out.unscale(kept),
            state.layout().clone(),
        )),
    )
}

/// Outcome distribution of measuring after the inverse Fourier transform over
/// `Z_p`, `(F†)_{x,v} = ω^{−vx}/√p`.
pub fn label_distribution(irreps: &Irreps, state: &DensityMatrix) -> Vec<f64> {
    let p = irreps.prime();
    let n = p.as_usize();
    let scale = 1.0 / (n as f64).sqrt();
    let f = CMatrix::from_fn(n, n, |x, v| {
        irreps.omega().pow(-(p.residue(x as i64) * p.residue(v as i64))) * scale
    });
    let out = &f * state.entries() * f.adjoint();
    (0..n).map(|x| out[(x, x)].re.max(0.0)).collect()
}

/// Samples `x` and returns it with the candidate `i = x · 2(k1 + k2)/(k1 k2)`.
pub fn extract_label<R: Rng + ?Sized>(
    irreps: &Irreps,
    state: &DensityMatrix,
    k1: Residue,
    k2: Residue,
    rng: &mut R,
) -> Result<(Residue, Residue), PipelineError> {
    let dist = label_distribution(irreps, state);
    let x = irreps.prime().residue(sample_index(&dist, rng) as i64);
    Ok((x, invert_label(x, k1, k2)?))
}

/// Exact distribution of the measured `x` for hidden subgroup `A_{i,0}` on
/// the good branch `(k1, k2)`, conditioned on `U₂` succeeding.
pub fn exact_success_distribution(
    prime: FieldPrime,
    i: Residue,
    k1: Residue,
    k2: Residue,
) -> Result<Vec<f64>, PipelineError> {
    check_labels(k1, k2)?;
    let irreps = Irreps::shared(prime);
    let s = SubgroupId::A(i, prime.zero());
    let rho = |k| {
        crate::states::conditional_state(&irreps, IrrepLabel::PDim(k), &s)
            .expect("p-dimensional labels occur with probability 1/p")
    };
    let joint = rho(k1).tensor(&rho(k2));
    let mut dist = vec![0.0; prime.as_usize()];
    let mut norm = 0.0;
    for (pm, state) in partner_distribution(&irreps, k1, k2, &joint)? {
        let Some(state) = state else { continue };
        let (pu, post) = u2_instrument(&state, U2Mode::Isometry);
        let Some(post) = post else { continue };
        for (slot, q) in dist.iter_mut().zip(label_distribution(&irreps, &post)) {
            *slot += pm * pu * q;
        }
        norm += pm * pu;
    }
    Ok(dist.into_iter().map(|q| q / norm).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SolveConfig {
    pub u2_mode: U2Mode,
    pub max_repetitions: usize,
}

#[derive(Debug, Clone)]
pub struct HspSolution {
    pub subgroup: SubgroupId,
    pub traces: Vec<PipelineTrace>,
}

/// Exact per-branch outcome tables for one `(k1, k2)` pair.
#[derive(Debug, Clone)]
struct PairTable {
    m_probs: Vec<f64>,
    /// Success probability of the isometry on each post-measurement state.
    kept: Vec<f64>,
    x_dists: Vec<Vec<f64>>,
}

/// The algorithm bound to one hidden subgroup instance, with exact outcome
/// tables cached for repeated sampling.
#[derive(Debug)]
pub struct Pipeline {
    instance: HiddenSubgroupInstance,
    irreps: Arc<Irreps>,
    weak: Vec<SampledIrrepOutcome>,
    weak_sampler: WeightedIndex<f64>,
    pairs: Vec<OnceLock<PairTable>>,
    characters: Vec<OnceLock<Vec<f64>>>,
}

impl Pipeline {
    pub fn new(instance: HiddenSubgroupInstance) -> Result<Self, PipelineError> {
        match instance.subgroup() {
            SubgroupId::A(..) | SubgroupId::Trivial => {}
            other => return Err(PipelineError::UnsupportedSubgroup(other.to_string())),
        }
        let prime = instance.prime();
        let irreps = Irreps::shared(prime);
        let weak = irrep_distribution(&irreps, &instance.subgroup());
        let weak_sampler = WeightedIndex::new(weak.iter().map(|o| o.probability.max(0.0)))
            .expect("weak sampling distribution is non-degenerate");
        let p = prime.as_usize();
        Ok(Self {
            instance,
            irreps,
            weak,
            weak_sampler,
            pairs: (0..(p - 1) * (p - 1)).map(|_| OnceLock::new()).collect(),
            characters: (0..p).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn instance(&self) -> &HiddenSubgroupInstance {
        &self.instance
    }

    pub fn prime(&self) -> FieldPrime {
        self.instance.prime()
    }

    pub fn irreps(&self) -> &Irreps {
        &self.irreps
    }

    /// Weak Fourier sampling outcomes for one copy.
    pub fn weak_distribution(&self) -> &[SampledIrrepOutcome] {
        &self.weak
    }

    fn pdim_probability(&self, k: Residue) -> f64 {
        self.weak[IrrepLabel::PDim(k).position()].probability
    }

    fn pdim_state(&self, k: Residue) -> &DensityMatrix {
        self.weak[IrrepLabel::PDim(k).position()]
            .conditional_state
            .as_ref()
            .expect("p-dimensional labels occur with positive probability")
    }

    /// Good-branch pairs with their joint probabilities.
    pub fn good_branch_distribution(&self) -> Vec<(Residue, Residue, f64)> {
        let prime = self.prime();
        let mut out = Vec::new();
        for k1 in prime.units() {
            for k2 in prime.units() {
                if !(k1 + k2).is_zero() {
                    out.push((k1, k2, self.pdim_probability(k1) * self.pdim_probability(k2)));
                }
            }
        }
        out
    }

    pub fn good_branch_probability(&self) -> f64 {
        self.good_branch_distribution().iter().map(|t| t.2).sum()
    }

    /// Weak Fourier sampling on two copies.
    pub fn sample_good_branch<R: Rng + ?Sized>(&self, rng: &mut R) -> BranchOutcome {
        let (first, second) = self.sample_labels(rng);
        match (first, second) {
            (IrrepLabel::PDim(k1), IrrepLabel::PDim(k2)) if !(k1 + k2).is_zero() => {
                BranchOutcome::Good(GoodBranch {
                    k1,
                    k2,
                    joint: self.pdim_state(k1).tensor(self.pdim_state(k2)),
                })
            }
            _ => BranchOutcome::Rejected(first, second),
        }
    }

    fn sample_labels<R: Rng + ?Sized>(&self, rng: &mut R) -> (IrrepLabel, IrrepLabel) {
        let first = self.weak[self.weak_sampler.sample(rng)].label;
        let second = self.weak[self.weak_sampler.sample(rng)].label;
        (first, second)
    }

    fn pair_table(&self, k1: Residue, k2: Residue) -> &PairTable {
        let p = self.prime().as_usize();
        let slot = (k1.as_usize() - 1) * (p - 1) + (k2.as_usize() - 1);
        self.pairs[slot].get_or_init(|| {
            let joint = self.pdim_state(k1).tensor(self.pdim_state(k2));
            let branches = partner_distribution(&self.irreps, k1, k2, &joint)
                .expect("good-branch labels are valid");
            let mut table = PairTable {
                m_probs: Vec::with_capacity(p),
                kept: Vec::with_capacity(p),
                x_dists: Vec::with_capacity(p),
            };
            for (pm, state) in branches {
                table.m_probs.push(pm);
                match state.map(|s| u2_instrument(&s, U2Mode::Isometry)) {
                    Some((kept, Some(post))) => {
                        table.kept.push(kept);
                        table.x_dists.push(label_distribution(&self.irreps, &post));
                    }
                    _ => {
                        table.kept.push(0.0);
                        table.x_dists.push(vec![1.0 / p as f64; p]);
                    }
                }
            }
            table
        })
    }

    /// Distribution over the `p²` characters `(α, β)` of `N_i ≅ Z_p²`, indexed
    /// `α p + β`, from Fourier sampling the oracle restricted to `N_i`.
    ///
    /// `N_i` is coordinatized by `(l, w)` with `w = y − 2⁻¹ l(l−1) i`, which
    /// turns the group law into addition.
    pub fn character_distribution(&self, i: Residue) -> &[f64] {
        self.characters[i.as_usize()].get_or_init(|| {
            let prime = self.prime();
            let p = prime.as_usize();
            let half = prime.half();
            let omega = self.irreps.omega();
            // group N_i's elements by oracle value
            let mut classes: std::collections::BTreeMap<GroupElement, Vec<(Residue, Residue)>> =
                Default::default();
            for l in prime.residues() {
                for w in prime.residues() {
                    let y = w + half * l * (l - prime.one()) * i;
                    let g = GroupElement { x: l, y, z: l * i };
                    classes.entry(self.instance.query(&g)).or_default().push((l, w));
                }
            }
            let total = (p * p) as f64;
            let mut dist = vec![0.0; p * p];
            for members in classes.values() {
                let weight = members.len() as f64 / total;
                let scale = 1.0 / (p as f64 * (members.len() as f64).sqrt());
                for alpha in prime.residues() {
                    for beta in prime.residues() {
                        let amp: C64 = members
                            .iter()
                            .map(|&(l, w)| omega.pow(alpha * l + beta * w))
                            .sum::<C64>()
                            * scale;
                        dist[alpha.as_usize() * p + beta.as_usize()] += weight * amp.norm_sqr();
                    }
                }
            }
            dist
        })
    }

    /// Recovers `j` from character samples `(α, β)` satisfying `α + β j = 0`.
    pub fn recover_j<R: Rng + ?Sized>(&self, i: Residue, rng: &mut R) -> Result<Residue, PipelineError> {
        let prime = self.prime();
        let p = prime.as_usize();
        let dist = self.character_distribution(i);
        let samples: Vec<(Residue, Residue)> = (0..character_sample_count(prime))
            .map(|_| {
                let idx = sample_index(dist, rng);
                (prime.residue((idx / p) as i64), prime.residue((idx % p) as i64))
            })
            .collect();
        solve_character_relation(&samples)
    }

    /// Exact probability that [`Pipeline::recover_j`] returns `j`.
    pub fn recover_j_probability(&self, i: Residue, j: Residue) -> f64 {
        let prime = self.prime();
        let p = prime.as_usize();
        let dist = self.character_distribution(i);
        let n = character_sample_count(prime) as i32;
        let mut line = 0.0;
        for beta in prime.residues() {
            let alpha = -(beta * j);
            line += dist[alpha.as_usize() * p + beta.as_usize()];
        }
        (line.powi(n) - dist[0].powi(n)).max(0.0)
    }

    /// Two oracle queries checking that `f` is constant along the generator of
    /// `A_{i,j}`.
    pub fn verify<R: Rng + ?Sized>(&self, i: Residue, j: Residue, rng: &mut R) -> bool {
        let prime = self.prime();
        let n = prime.as_usize().pow(3);
        let g = GroupElement::from_index(prime, rng.random_range(0..n));
        let generator = GroupElement {
            x: prime.one(),
            y: j,
            z: i,
        };
        self.instance.constant_along(&g, &generator)
    }

    /// One repetition of the whole algorithm.
    pub fn run_trial<R: Rng + ?Sized>(&self, mode: U2Mode, rng: &mut R) -> PipelineTrace {
        let prime = self.prime();
        let (first, second) = self.sample_labels(rng);
        let (k1, k2) = match (first, second) {
            (IrrepLabel::PDim(k1), IrrepLabel::PDim(k2)) if !(k1 + k2).is_zero() => (k1, k2),
            _ => return PipelineTrace::rejected(first, second),
        };
        let table = self.pair_table(k1, k2);
        let m = sample_index(&table.m_probs, rng);
        let mut trace = PipelineTrace {
            k1: k1.value(),
            k2: k2.value(),
            m_outcome: m as u32,
            u2_succeeded: false,
            measured_x: 0,
            recovered_i: None,
            recovered_j: None,
            verified: false,
        };
        let success = table.kept[m] * mode.gate_probability();
        if !rng.random_bool(success.clamp(0.0, 1.0)) {
            return trace;
        }
        trace.u2_succeeded = true;
        let x = prime.residue(sample_index(&table.x_dists[m], rng) as i64);
        trace.measured_x = x.value();
        let i = invert_label(x, k1, k2).expect("good-branch labels are valid");
        trace.recovered_i = Some(i.value());
        if let Ok(j) = self.recover_j(i, rng) {
            trace.recovered_j = Some(j.value());
            trace.verified = self.verify(i, j, rng);
        }
        trace
    }

    /// Repeats [`Pipeline::run_trial`] until a candidate verifies, returning
    /// the trivial subgroup when the budget runs out.
    pub fn solve_hsp<R: Rng + ?Sized>(
        &self,
        config: &SolveConfig,
        rng: &mut R,
    ) -> Result<HspSolution, PipelineError> {
        if config.max_repetitions == 0 {
            return Err(PipelineError::RepetitionBudgetExhausted);
        }
        let prime = self.prime();
        let mut traces = Vec::new();
        for _ in 0..config.max_repetitions {
            let trace = self.run_trial(config.u2_mode, rng);
            traces.push(trace);
            if trace.verified {
                let i = prime.residue(trace.recovered_i.expect("verified implies i") as i64);
                let j = prime.residue(trace.recovered_j.expect("verified implies j") as i64);
                return Ok(HspSolution {
                    subgroup: SubgroupId::A(i, j),
                    traces,
                });
            }
        }
        Ok(HspSolution {
            subgroup: SubgroupId::Trivial,
            traces,
        })
    }

    /// Exact probability that one repetition verifies the hidden `A_{i,j}`.
    pub fn one_shot_success_probability(&self, mode: U2Mode) -> f64 {
        let SubgroupId::A(i, j) = self.instance.subgroup() else {
            return 0.0;
        };
        let recover = self.recover_j_probability(i, j);
        let mut total = 0.0;
        for (k1, k2, pb) in self.good_branch_distribution() {
            let table = self.pair_table(k1, k2);
            let x_true = expected_label(i, k1, k2).expect("valid labels").as_usize();
            for (m, pm) in table.m_probs.iter().enumerate() {
                let pu = table.kept[m] * mode.gate_probability();
                total += pb * pm * pu * table.x_dists[m][x_true];
            }
        }
        total * recover
    }

    /// Exact probability that `U₂` succeeds given the good branch.
    pub fn u2_success_probability(&self, mode: U2Mode) -> f64 {
        let dist = self.good_branch_distribution();
        let total: f64 = dist.iter().map(|t| t.2).sum();
        dist.iter()
            .map(|&(k1, k2, pb)| {
                let t = self.pair_table(k1, k2);
                let s: f64 = t.m_probs.iter().zip(&t.kept).map(|(a, b)| a * b).sum();
                pb * s * mode.gate_probability()
            })
            .sum::<f64>()
            / total
    }

    /// Exact probability of measuring the correct `x` given `U₂` succeeded,
    /// averaged over good branches.
    pub fn label_success_probability(&self) -> Option<f64> {
        let SubgroupId::A(i, _) = self.instance.subgroup() else {
            return None;
        };
        let mut num = 0.0;
        let mut den = 0.0;
        for (k1, k2, pb) in self.good_branch_distribution() {
            let t = self.pair_table(k1, k2);
            let x_true = expected_label(i, k1, k2).expect("valid labels").as_usize();
            for (m, pm) in t.m_probs.iter().enumerate() {
                num += pb * pm * t.kept[m] * t.x_dists[m][x_true];
                den += pb * pm * t.kept[m];
            }
        }
        Some(num / den)
    }
}

/// Solves `α + β j = 0` from character samples. Fails when no sample has
/// `β ≠ 0` or when two samples disagree.
pub fn solve_character_relation(samples: &[(Residue, Residue)]) -> Result<Residue, PipelineError> {
    let &(alpha, beta) = samples
        .iter()
        .find(|(_, b)| !b.is_zero())
        .ok_or(PipelineError::InconsistentSamples)?;
    let j = -(alpha * beta.inv().expect("beta is non-zero"));
    if samples.iter().all(|&(a, b)| (a + b * j).is_zero()) {
        Ok(j)
    } else {
        Err(PipelineError::InconsistentSamples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::fidelity_pure;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fp(p: u32) -> FieldPrime {
        FieldPrime::new(p).unwrap()
    }

    #[test]
    fn closed_forms() {
        assert!((good_branch_closed_form(fp(5)) - 0.48).abs() < 1e-15);
        assert!((good_branch_closed_form(fp(3)) - 2.0 / 9.0).abs() < 1e-15);
        assert!((good_branch_closed_form(fp(7)) - 30.0 / 49.0).abs() < 1e-15);
        assert!((label_probability_closed_form(fp(5)) - 0.586_274_2).abs() < 1e-7);
        assert!((label_probability_closed_form(fp(7)) - 0.560_924_1).abs() < 1e-7);
    }

    #[test]
    fn label_round_trip() {
        let p = fp(5);
        let (i, k1, k2) = (p.residue(3), p.one(), p.residue(2));
        let a = expected_label(i, k1, k2).unwrap();
        assert_eq!(a.value(), 1);
        assert_eq!(invert_label(a, k1, k2).unwrap(), i);
        assert!(matches!(
            expected_label(i, p.one(), p.residue(4)),
            Err(PipelineError::InvalidLabels(1, 4))
        ));
    }

    #[test]
    fn u2_examples() {
        let p = fp(5);
        let l = RegisterLayout::single(5);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let mut v = CVector::zeros(5);
        v[1] = C64::new(s, 0.0);
        v[4] = C64::new(s, 0.0);
        let input = StateVector::new(v, l.clone()).unwrap();
        let (ok, out) = u2_transform(&input, U2Mode::Isometry, &mut rng).unwrap();
        assert!(ok);
        assert!((fidelity_pure(&out, &StateVector::basis(l.clone(), 1)).unwrap() - 1.0).abs() < 1e-12);

        let zero = StateVector::basis(l.clone(), 0);
        let (_, out) = u2_transform(&zero, U2Mode::Isometry, &mut rng).unwrap();
        assert_eq!(out, zero);

        let uni = StateVector::uniform(l.clone());
        let (_, out) = u2_transform(&uni, U2Mode::Isometry, &mut rng).unwrap();
        let a = out.amplitudes();
        assert!((a[0].re - 1.0 / 5f64.sqrt()).abs() < 1e-12);
        for t in [1, 4] {
            assert!((a[t].re - (2.0 / 5f64).sqrt()).abs() < 1e-12);
        }
        assert!(a[2].norm() < 1e-15 && a[3].norm() < 1e-15);

        let asym = StateVector::basis(l, 1);
        assert!(matches!(
            u2_transform(&asym, U2Mode::Isometry, &mut rng),
            Err(PipelineError::AsymmetricInput(_))
        ));
        let _ = p;
    }

    #[test]
    fn post_partner_state_example() {
        // p = 3, k1 = k2 = 1, i = 1 gives (|0⟩ + ω|1⟩ + ω|2⟩)/√3
        let p = fp(3);
        let ir = Irreps::new(p);
        let s = SubgroupId::A(p.one(), p.zero());
        let rho = crate::states::conditional_state(&ir, IrrepLabel::PDim(p.one()), &s).unwrap();
        let joint = rho.tensor(&rho);
        let w = ir.omega().pow_int(1);
        let amp = 1.0 / 3f64.sqrt();
        let target = StateVector::new(
            CVector::from_vec(vec![C64::new(amp, 0.0), w * amp, w * amp]),
            RegisterLayout::single(3),
        )
        .unwrap();
        for (pm, state) in partner_distribution(&ir, p.one(), p.one(), &joint).unwrap() {
            assert!((pm - 1.0 / 3.0).abs() < 1e-12);
            assert!((state.unwrap().expectation(&target).unwrap() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn character_relation_solver() {
        let p = fp(5);
        let r = |v| p.residue(v);
        // j = 3: α = −3β
        assert_eq!(
            solve_character_relation(&[(r(0), r(0)), (r(2), r(1)), (r(4), r(2))]).unwrap(),
            r(3)
        );
        assert_eq!(
            solve_character_relation(&[(r(0), r(0))]),
            Err(PipelineError::InconsistentSamples)
        );
        assert_eq!(
            solve_character_relation(&[(r(2), r(1)), (r(1), r(1))]),
            Err(PipelineError::InconsistentSamples)
        );
    }

    #[test]
    fn unsupported_subgroups_are_rejected() {
        let p = fp(3);
        let inst = HiddenSubgroupInstance::new(p, SubgroupId::Center);
        assert!(matches!(
            Pipeline::new(inst),
            Err(PipelineError::UnsupportedSubgroup(_))
        ));
    }

    #[test]
    fn zero_budget_is_an_error() {
        let p = fp(3);
        let pipe = Pipeline::new(HiddenSubgroupInstance::new(p, SubgroupId::Trivial)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = SolveConfig {
            u2_mode: U2Mode::Isometry,
            max_repetitions: 0,
        };
        assert_eq!(
            pipe.solve_hsp(&cfg, &mut rng).unwrap_err(),
            PipelineError::RepetitionBudgetExhausted
        );
    }

    #[test]
    fn exact_label_probability_matches_closed_form() {
        for q in [3u32, 5, 7] {
            let p = fp(q);
            let expect = label_probability_closed_form(p);
            for i in p.residues() {
                for (k1, k2) in [(1, 1), (1, 2), (2, q as i64 - 1)] {
                    let (k1, k2) = (p.residue(k1), p.residue(k2));
                    if (k1 + k2).is_zero() {
                        continue;
                    }
                    let dist = exact_success_distribution(p, i, k1, k2).unwrap();
                    let a = expected_label(i, k1, k2).unwrap().as_usize();
                    assert!((dist[a] - expect).abs() < 1e-9, "p={q} i={}", i.value());
                    assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn branch_and_u2_rates() {
        let p = fp(5);
        for s in [SubgroupId::A(p.residue(2), p.residue(3)), SubgroupId::Trivial] {
            let pipe = Pipeline::new(HiddenSubgroupInstance::new(p, s.clone())).unwrap();
            assert!((pipe.good_branch_probability() - 0.48).abs() < 1e-12);
            let iso = pipe.u2_success_probability(U2Mode::Isometry);
            let prob = pipe.u2_success_probability(U2Mode::Probabilistic);
            let expect = if s == SubgroupId::Trivial { 0.6 } else { 1.0 };
            assert!((iso - expect).abs() < 1e-12, "{s}: {iso}");
            assert!((prob - expect / 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn partner_outcome_is_uniform() {
        let p = fp(7);
        let pipe =
            Pipeline::new(HiddenSubgroupInstance::new(p, SubgroupId::A(p.residue(3), p.residue(5))))
                .unwrap();
        let t = pipe.pair_table(p.residue(2), p.residue(3));
        for pm in &t.m_probs {
            assert!((pm - 1.0 / 7.0).abs() < 1e-12);
        }
    }

    #[test]
    fn recover_j_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p3 = fp(3);
        let pipe = Pipeline::new(HiddenSubgroupInstance::new(p3, SubgroupId::A(p3.one(), p3.zero()))).unwrap();
        assert_eq!(pipe.recover_j(p3.one(), &mut rng).unwrap(), p3.zero());
        let n = character_sample_count(p3) as i32;
        let exact = pipe.recover_j_probability(p3.one(), p3.zero());
        assert!((exact - (1.0 - 3f64.powi(-n))).abs() < 1e-12);

        let p5 = fp(5);
        let (i, j) = (p5.residue(2), p5.residue(3));
        let pipe = Pipeline::new(HiddenSubgroupInstance::new(p5, SubgroupId::A(i, j))).unwrap();
        for _ in 0..20 {
            assert_eq!(pipe.recover_j(i, &mut rng).unwrap(), j);
        }
        // wrong i: the oracle is injective on N_{i'}, so every character is
        // equally likely and verification rejects whatever comes back
        let wrong = p5.residue(4);
        let dist = pipe.character_distribution(wrong);
        assert!(dist.iter().all(|q| (q - 1.0 / 25.0).abs() < 1e-12));
        for _ in 0..20 {
            if let Ok(jj) = pipe.recover_j(wrong, &mut rng) {
                assert!(!pipe.verify(wrong, jj, &mut rng));
            }
        }
        assert!(pipe.verify(i, j, &mut rng));
    }

    #[test]
    fn solve_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let cfg = SolveConfig {
            u2_mode: U2Mode::Isometry,
            max_repetitions: 200,
        };
        for (q, i, j) in [(3u32, 1, 0), (5, 2, 3), (7, 0, 4)] {
            let p = fp(q);
            let s = SubgroupId::A(p.residue(i), p.residue(j));
            let pipe = Pipeline::new(HiddenSubgroupInstance::new(p, s.clone())).unwrap();
            let sol = pipe.solve_hsp(&cfg, &mut rng).unwrap();
            assert_eq!(sol.subgroup, s);
            assert!(sol.traces.last().unwrap().verified);
        }
        let p = fp(5);
        let pipe = Pipeline::new(HiddenSubgroupInstance::new(p, SubgroupId::Trivial)).unwrap();
        let sol = pipe.solve_hsp(&SolveConfig { max_repetitions: 30, ..cfg }, &mut rng).unwrap();
        assert_eq!(sol.subgroup, SubgroupId::Trivial);
        assert_eq!(sol.traces.len(), 30);
    }

    #[test]
    fn one_shot_rate_factorizes() {
        let p = fp(5);
        let (i, j) = (p.residue(1), p.residue(2));
        let pipe = Pipeline::new(HiddenSubgroupInstance::new(p, SubgroupId::A(i, j))).unwrap();
        let expect = good_branch_closed_form(p)
            * label_probability_closed_form(p)
            * pipe.recover_j_probability(i, j);
        let iso = pipe.one_shot_success_probability(U2Mode::Isometry);
        assert!((iso - expect).abs() < 1e-12);
        let prob = pipe.one_shot_success_probability(U2Mode::Probabilistic);
        assert!((prob - expect / 2.0).abs() < 1e-12);
    }
}
