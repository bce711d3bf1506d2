//! Dense complex linear algebra for exact simulation: states, density
//! matrices, unitaries, tensor products, register measurement and partial trace.
//!
//! Registers are laid out row-major: the leftmost register is the most
//! significant digit of a basis index.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use thiserror::Error;

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Default absolute tolerance for operator comparisons.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
/// Tolerance for state normalization, trace and hermiticity checks.
pub const STATE_TOLERANCE: f64 = 1e-10;
/// Most negative eigenvalue still accepted as positive semidefinite.
pub const PSD_TOLERANCE: f64 = 1e-9;
/// Branches with smaller probability are reported without a collapsed state.
pub const ZERO_PROBABILITY: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("register layout mismatch: expected {expected:?}, found {found:?}")]
    LayoutMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid register layout {0:?}: every register needs a positive dimension")]
    InvalidLayout(Vec<usize>),
    #[error("register {index} out of range for a layout with {count} registers")]
    RegisterOutOfRange { index: usize, count: usize },
    #[error("state norm {0} differs from 1")]
    NotNormalized(f64),
    #[error("matrix is not Hermitian (max deviation {0})")]
    NotHermitian(f64),
    #[error("density matrix trace {0} differs from 1")]
    BadTrace(f64),
    #[error("density matrix has negative eigenvalue {0}")]
    NotPositive(f64),
    #[error("operator is not unitary (Frobenius deviation {0})")]
    NotUnitary(f64),
    #[error("map is not a permutation of 0..{0}")]
    NotPermutation(usize),
    #[error("cannot collapse onto outcome {outcome} with probability {probability}")]
    ZeroProbabilityCollapse { outcome: usize, probability: f64 },
    #[error("partial trace must keep at least one register")]
    EmptyKeep,
}

pub type Result<T> = std::result::Result<T, LinalgError>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RegisterLayout {
    dims: Vec<usize>,
}

impl RegisterLayout {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() || dims.contains(&0) {
            return Err(LinalgError::InvalidLayout(dims));
        }
        Ok(Self { dims })
    }

    pub fn single(dim: usize) -> Self {
        Self::new(vec![dim]).expect("register dimension must be positive")
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn total(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn concat(&self, other: &RegisterLayout) -> RegisterLayout {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        RegisterLayout { dims }
    }

    /// Splits a basis index into per-register digits.
    pub fn digits(&self, mut index: usize) -> Vec<usize> {
        let mut out = vec![0; self.dims.len()];
        for (slot, d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = index % d;
            index /= d;
        }
        out
    }

    pub fn index(&self, digits: &[usize]) -> usize {
        debug_assert_eq!(digits.len(), self.dims.len());
        digits
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (digit, d)| acc * d + digit)
    }

    fn check_register(&self, which: usize) -> Result<()> {
        if which >= self.dims.len() {
            Err(LinalgError::RegisterOutOfRange {
                index: which,
                count: self.dims.len(),
            })
        } else {
            Ok(())
        }
    }

    /// Layout with register `which` removed (a single register of size 1 when
    /// nothing would remain).
    fn without(&self, which: usize) -> RegisterLayout {
        let mut dims = self.dims.clone();
        dims.remove(which);
        if dims.is_empty() {
            dims.push(1);
        }
        RegisterLayout { dims }
    }

    /// `(stride, dim)` of register `which`.
    fn stride(&self, which: usize) -> (usize, usize) {
        (self.dims[which + 1..].iter().product(), self.dims[which])
    }

    fn ensure_same(&self, other: &RegisterLayout) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(LinalgError::LayoutMismatch {
                expected: self.dims.clone(),
                found: other.dims.clone(),
            })
        }
    }
}

/// One outcome of a projective measurement.
#[derive(Debug, Clone)]
pub struct Branch<S> {
    pub outcome: usize,
    pub probability: f64,
    /// Renormalized post-measurement state; `None` for zero-probability outcomes.
    pub state: Option<S>,
}

/// Behaviour shared by pure and mixed states.
pub trait QuantumState: Sized + Clone {
    fn layout(&self) -> &RegisterLayout;

    /// Unitary evolution `U ψ` or `U ρ U†`.
    fn evolve(&self, u: &UnitaryOp) -> Result<Self>;

    /// Kronecker product with the layouts concatenated.
    fn tensor(&self, other: &Self) -> Self;

    /// Computational-basis outcome probabilities of one register.
    fn register_probabilities(&self, which: usize) -> Result<Vec<f64>>;

    /// Post-measurement state for `outcome`, keeping the measured register.
    fn collapse(&self, which: usize, outcome: usize) -> Result<Self>;

    /// Post-measurement state for `outcome` with the measured register removed.
    fn collapse_and_discard(&self, which: usize, outcome: usize) -> Result<Self>;

    /// The full exact outcome table for measuring register `which`.
    fn measure_register(&self, which: usize) -> Result<Vec<Branch<Self>>> {
        self.branches(which, false)
    }

    /// Like [`QuantumState::measure_register`] but drops the measured register.
    fn measure_and_discard(&self, which: usize) -> Result<Vec<Branch<Self>>> {
        self.branches(which, true)
    }

    /// Draws one outcome with the supplied randomness source.
    fn measure_register_sampled<R: Rng + ?Sized>(
        &self,
        which: usize,
        discard: bool,
        rng: &mut R,
    ) -> Result<Branch<Self>> {
        let probs = self.register_probabilities(which)?;
        let outcome = sample_index(&probs, rng);
        let state = if discard {
            self.collapse_and_discard(which, outcome)?
        } else {
            self.collapse(which, outcome)?
        };
        Ok(Branch {
            outcome,
            probability: probs[outcome],
            state: Some(state),
        })
    }

    #[doc(hidden)]
    fn branches(&self, which: usize, discard: bool) -> Result<Vec<Branch<Self>>> {
        let probs = self.register_probabilities(which)?;
        probs
            .iter()
            .enumerate()
            .map(|(outcome, &probability)| {
                let state = if probability > ZERO_PROBABILITY {
                    Some(if discard {
                        self.collapse_and_discard(which, outcome)?
                    } else {
                        self.collapse(which, outcome)?
                    })
                } else {
                    None
                };
                Ok(Branch {
                    outcome,
                    probability,
                    state,
                })
            })
            .collect()
    }
}

/// Draws an index from a discrete distribution. Negative round-off entries are
/// treated as zero.
pub fn sample_index<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let weights: Vec<f64> = probs.iter().map(|p| p.max(0.0)).collect();
    WeightedIndex::new(&weights)
        .expect("distribution must have positive total weight")
        .sample(rng)
}

/// `(base index, stride)` enumeration of a register's fibres: for every
/// assignment of the other registers, the index with the measured digit zero.
fn fibre_bases(layout: &RegisterLayout, which: usize) -> Vec<usize> {
    let (stride, d) = layout.stride(which);
    let total = layout.total();
    let block = stride * d;
    (0..total / block)
        .flat_map(|hi| (0..stride).map(move |lo| hi * block + lo))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: CVector,
    layout: RegisterLayout,
}

impl StateVector {
    pub fn new(amplitudes: CVector, layout: RegisterLayout) -> Result<Self> {
        if amplitudes.len() != layout.total() {
            return Err(LinalgError::DimensionMismatch {
                expected: layout.total(),
                found: amplitudes.len(),
            });
        }
        let norm = amplitudes.norm();
        if (norm - 1.0).abs() > STATE_TOLERANCE {
            return Err(LinalgError::NotNormalized(norm));
        }
        Ok(Self { amplitudes, layout })
    }

    /// Rescales arbitrary non-zero amplitudes to unit norm.
    pub fn normalized(amplitudes: CVector, layout: RegisterLayout) -> Result<Self> {
        let norm = amplitudes.norm();
        if norm <= ZERO_PROBABILITY {
            return Err(LinalgError::NotNormalized(norm));
        }
        Self::new(amplitudes.unscale(norm), layout)
    }

    pub fn basis(layout: RegisterLayout, index: usize) -> Self {
        let mut v = CVector::zeros(layout.total());
        v[index] = C64::new(1.0, 0.0);
        Self {
            amplitudes: v,
            layout,
        }
    }

    pub fn uniform(layout: RegisterLayout) -> Self {
        let n = layout.total();
        Self {
            amplitudes: CVector::from_element(n, C64::new(1.0 / (n as f64).sqrt(), 0.0)),
            layout,
        }
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn norm(&self) -> f64 {
        self.amplitudes.norm()
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> Result<C64> {
        if self.dim() != other.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(self.amplitudes.dotc(&other.amplitudes))
    }

    pub fn to_density(&self) -> DensityMatrix {
        DensityMatrix {
            entries: &self.amplitudes * self.amplitudes.adjoint(),
            layout: self.layout.clone(),
        }
    }

    pub fn with_layout(self, layout: RegisterLayout) -> Result<Self> {
        if layout.total() != self.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                found: layout.total(),
            });
        }
        Ok(Self {
            amplitudes: self.amplitudes,
            layout,
        })
    }
}

impl QuantumState for StateVector {
    fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    fn evolve(&self, u: &UnitaryOp) -> Result<Self> {
        u.layout.ensure_same(&self.layout)?;
        let amplitudes = match &u.repr {
            Repr::Dense(m) => m * &self.amplitudes,
            Repr::Monomial { map, phases } => {
                let mut out = CVector::zeros(self.dim());
                for (i, &target) in map.iter().enumerate() {
                    out[target] = phases[i] * self.amplitudes[i];
                }
                out
            }
        };
        Ok(Self {
            amplitudes,
            layout: self.layout.clone(),
        })
    }

    fn tensor(&self, other: &Self) -> Self {
        Self {
            amplitudes: self.amplitudes.kronecker(&other.amplitudes),
            layout: self.layout.concat(&other.layout),
        }
    }

    fn register_probabilities(&self, which: usize) -> Result<Vec<f64>> {
        self.layout.check_register(which)?;
        let (stride, d) = self.layout.stride(which);
        let mut probs = vec![0.0; d];
        for base in fibre_bases(&self.layout, which) {
            for (k, prob) in probs.iter_mut().enumerate() {
                *prob += self.amplitudes[base + k * stride].norm_sqr();
            }
        }
        Ok(probs)
    }

    fn collapse(&self, which: usize, outcome: usize) -> Result<Self> {
        self.layout.check_register(which)?;
        let (stride, d) = self.layout.stride(which);
        let mut out = CVector::zeros(self.dim());
        for i in 0..self.dim() {
            if (i / stride) % d == outcome {
                out[i] = self.amplitudes[i];
            }
        }
        let prob = out.norm_squared();
        if prob <= ZERO_PROBABILITY {
            return Err(LinalgError::ZeroProbabilityCollapse {
                outcome,
                probability: prob,
            });
        }
        Ok(Self {
            amplitudes: out.unscale(prob.sqrt()),
            layout: self.layout.clone(),
        })
    }

    fn collapse_and_discard(&self, which: usize, outcome: usize) -> Result<Self> {
        self.layout.check_register(which)?;
        let (stride, _) = self.layout.stride(which);
        let bases = fibre_bases(&self.layout, which);
        let out = CVector::from_iterator(
            bases.len(),
            bases.iter().map(|b| self.amplitudes[b + outcome * stride]),
        );
        let prob = out.norm_squared();
        if prob <= ZERO_PROBABILITY {
            return Err(LinalgError::ZeroProbabilityCollapse {
                outcome,
                probability: prob,
            });
        }
        Ok(Self {
            amplitudes: out.unscale(prob.sqrt()),
            layout: self.layout.without(which),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    entries: CMatrix,
    layout: RegisterLayout,
}

impl DensityMatrix {
    /// Validates hermiticity, unit trace and positivity.
    pub fn new(entries: CMatrix, layout: RegisterLayout) -> Result<Self> {
        let n = layout.total();
        if entries.nrows() != n || entries.ncols() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: entries.nrows(),
            });
        }
        let herm = max_abs_diff(&entries, &entries.adjoint());
        if herm > STATE_TOLERANCE {
            return Err(LinalgError::NotHermitian(herm));
        }
        let tr = entries.trace();
        if (tr.re - 1.0).abs() > STATE_TOLERANCE || tr.im.abs() > STATE_TOLERANCE {
            return Err(LinalgError::BadTrace(tr.re));
        }
        let min = min_eigenvalue(&entries);
        if min < -PSD_TOLERANCE {
            return Err(LinalgError::NotPositive(min));
        }
        Ok(Self { entries, layout })
    }

    /// Skips validation; for matrices that are density matrices by construction.
    pub(crate) fn from_parts(entries: CMatrix, layout: RegisterLayout) -> Self {
        debug_assert_eq!(entries.nrows(), layout.total());
        Self { entries, layout }
    }

    pub fn from_pure(state: &StateVector) -> Self {
        state.to_density()
    }

    pub fn maximally_mixed(layout: RegisterLayout) -> Self {
        let n = layout.total();
        Self {
            entries: CMatrix::identity(n, n).unscale(n as f64),
            layout,
        }
    }

    /// `Σ p_k |ψ_k⟩⟨ψ_k|` for a probability vector `p`.
    pub fn from_ensemble(members: &[(f64, StateVector)]) -> Result<Self> {
        let first = members
            .first()
            .ok_or(LinalgError::DimensionMismatch {
                expected: 1,
                found: 0,
            })?;
        let layout = first.1.layout.clone();
        let n = layout.total();
        let mut entries = CMatrix::zeros(n, n);
        let mut total = 0.0;
        for (w, s) in members {
            layout.ensure_same(&s.layout)?;
            entries += (&s.amplitudes * s.amplitudes.adjoint()).scale(*w);
            total += w;
        }
        if (total - 1.0).abs() > STATE_TOLERANCE {
            return Err(LinalgError::BadTrace(total));
        }
        Ok(Self { entries, layout })
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    pub fn into_entries(self) -> CMatrix {
        self.entries
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn trace(&self) -> C64 {
        self.entries.trace()
    }

    pub fn purity(&self) -> f64 {
        self.entries.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.entries)
    }

    /// `⟨ψ|ρ|ψ⟩`, the fidelity with a pure state.
    pub fn expectation(&self, state: &StateVector) -> Result<f64> {
        if state.dim() != self.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                found: state.dim(),
            });
        }
        let a = &state.amplitudes;
        Ok((a.adjoint() * &self.entries * a)[(0, 0)].re)
    }

    /// The dominant eigenvector when the state is pure within `tol` of purity 1.
    pub fn as_pure(&self, tol: f64) -> Option<StateVector> {
        if (self.purity() - 1.0).abs() > tol {
            return None;
        }
        let eig = self.entries.clone().symmetric_eigen();
        let (k, _) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))?;
        let v = eig.eigenvectors.column(k).into_owned();
        StateVector::normalized(v, self.layout.clone()).ok()
    }

    pub fn with_layout(self, layout: RegisterLayout) -> Result<Self> {
        if layout.total() != self.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.dim(),
                found: layout.total(),
            });
        }
        Ok(Self {
            entries: self.entries,
            layout,
        })
    }

    /// Reduced state on the registers listed in `keep`, in their original order.
    pub fn partial_trace(&self, keep: &[usize]) -> Result<DensityMatrix> {
        if keep.is_empty() {
            return Err(LinalgError::EmptyKeep);
        }
        let dims = self.layout.dims();
        for &k in keep {
            self.layout.check_register(k)?;
        }
        let mut keep_sorted = keep.to_vec();
        keep_sorted.sort_unstable();
        keep_sorted.dedup();
        let traced: Vec<usize> = (0..dims.len()).filter(|r| !keep_sorted.contains(r)).collect();
        let keep_layout =
            RegisterLayout::new(keep_sorted.iter().map(|&r| dims[r]).collect())?;
        let traced_dims: Vec<usize> = traced.iter().map(|&r| dims[r]).collect();
        let traced_total: usize = traced_dims.iter().product();
        let traced_layout = RegisterLayout {
            dims: if traced_dims.is_empty() {
                vec![1]
            } else {
                traced_dims
            },
        };
        let nk = keep_layout.total();
        // full[k][t] = index of the basis state with kept digits k and traced digits t
        let mut full = vec![0usize; nk * traced_total];
        let mut digits = vec![0usize; dims.len()];
        for k in 0..nk {
            let kd = keep_layout.digits(k);
            for (slot, &r) in keep_sorted.iter().enumerate() {
                digits[r] = kd[slot];
            }
            for t in 0..traced_total {
                let td = traced_layout.digits(t);
                for (slot, &r) in traced.iter().enumerate() {
                    digits[r] = td[slot];
                }
                full[k * traced_total + t] = self.layout.index(&digits);
            }
        }
        let mut out = CMatrix::zeros(nk, nk);
        for a in 0..nk {
            for b in 0..nk {
                let mut acc = C64::new(0.0, 0.0);
                for t in 0..traced_total {
                    acc += self.entries[(full[a * traced_total + t], full[b * traced_total + t])];
                }
                out[(a, b)] = acc;
            }
        }
        Ok(DensityMatrix {
            entries: out,
            layout: keep_layout,
        })
    }

    /// Restricts to a contiguous range of basis indices, the projective
    /// outcome "index lies in `range`". Returns the probability and the
    /// renormalized block carrying `layout`.
    pub fn project_block(
        &self,
        range: Range<usize>,
        layout: RegisterLayout,
    ) -> Result<(f64, Option<DensityMatrix>)> {
        if layout.total() != range.len() || range.end > self.dim() {
            return Err(LinalgError::DimensionMismatch {
                expected: range.len(),
                found: layout.total(),
            });
        }
        let block = self
            .entries
            .view((range.start, range.start), (range.len(), range.len()))
            .into_owned();
        let prob = block.trace().re;
        if prob <= ZERO_PROBABILITY {
            return Ok((prob.max(0.0), None));
        }
        Ok((
            prob,
            Some(DensityMatrix {
                entries: block.unscale(prob),
                layout,
            }),
        ))
    }
}

impl QuantumState for DensityMatrix {
    fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    fn evolve(&self, u: &UnitaryOp) -> Result<Self> {
        u.layout.ensure_same(&self.layout)?;
        let entries = match &u.repr {
            Repr::Dense(m) => m * &self.entries * m.adjoint(),
            Repr::Monomial { map, phases } => {
                let n = self.dim();
                let mut out = CMatrix::zeros(n, n);
                for j in 0..n {
                    let pj = phases[j].conj();
                    for i in 0..n {
                        out[(map[i], map[j])] = phases[i] * self.entries[(i, j)] * pj;
                    }
                }
                out
            }
        };
        Ok(Self {
            entries,
            layout: self.layout.clone(),
        })
    }

    fn tensor(&self, other: &Self) -> Self {
        Self {
            entries: self.entries.kronecker(&other.entries),
            layout: self.layout.concat(&other.layout),
        }
    }

    fn register_probabilities(&self, which: usize) -> Result<Vec<f64>> {
        self.layout.check_register(which)?;
        let (stride, d) = self.layout.stride(which);
        let mut probs = vec![0.0; d];
        for i in 0..self.dim() {
            probs[(i / stride) % d] += self.entries[(i, i)].re;
        }
        Ok(probs)
    }

    fn collapse(&self, which: usize, outcome: usize) -> Result<Self> {
        self.layout.check_register(which)?;
        let (stride, d) = self.layout.stride(which);
        let n = self.dim();
        let inside: Vec<bool> = (0..n).map(|i| (i / stride) % d == outcome).collect();
        let mut out = CMatrix::zeros(n, n);
        for j in (0..n).filter(|&j| inside[j]) {
            for i in (0..n).filter(|&i| inside[i]) {
                out[(i, j)] = self.entries[(i, j)];
            }
        }
        let prob = out.trace().re;
        if prob <= ZERO_PROBABILITY {
            return Err(LinalgError::ZeroProbabilityCollapse {
                outcome,
                probability: prob,
            });
        }
        Ok(Self {
            entries: out.unscale(prob),
            layout: self.layout.clone(),
        })
    }

    fn collapse_and_discard(&self, which: usize, outcome: usize) -> Result<Self> {
        self.layout.check_register(which)?;
        let (stride, _) = self.layout.stride(which);
        let idx: Vec<usize> = fibre_bases(&self.layout, which)
            .into_iter()
            .map(|b| b + outcome * stride)
            .collect();
        let m = idx.len();
        let out = CMatrix::from_fn(m, m, |a, b| self.entries[(idx[a], idx[b])]);
        let prob = out.trace().re;
        if prob <= ZERO_PROBABILITY {
            return Err(LinalgError::ZeroProbabilityCollapse {
                outcome,
                probability: prob,
            });
        }
        Ok(Self {
            entries: out.unscale(prob),
            layout: self.layout.without(which),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Repr {
    Dense(CMatrix),
    /// `U|i⟩ = phases[i] |map[i]⟩`.
    Monomial { map: Vec<usize>, phases: Vec<C64> },
}

/// A unitary operator, stored densely or as a phased permutation.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitaryOp {
    repr: Repr,
    layout: RegisterLayout,
}

impl UnitaryOp {
    /// Validates `U†U = I` within [`DEFAULT_TOLERANCE`] in Frobenius norm.
    pub fn new(matrix: CMatrix, layout: RegisterLayout) -> Result<Self> {
        let n = layout.total();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: matrix.nrows(),
            });
        }
        let dev = unitarity_defect(&matrix);
        if dev > DEFAULT_TOLERANCE {
            return Err(LinalgError::NotUnitary(dev));
        }
        Ok(Self {
            repr: Repr::Dense(matrix),
            layout,
        })
    }

    pub(crate) fn from_dense_unchecked(matrix: CMatrix, layout: RegisterLayout) -> Self {
        Self {
            repr: Repr::Dense(matrix),
            layout,
        }
    }

    /// `U|i⟩ = phases[i] |map[i]⟩`; every phase must have modulus one.
    pub fn from_monomial(map: Vec<usize>, phases: Vec<C64>, layout: RegisterLayout) -> Result<Self> {
        let n = layout.total();
        if map.len() != n || phases.len() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: map.len(),
            });
        }
        let mut hit = vec![false; n];
        for &t in &map {
            if t >= n || hit[t] {
                return Err(LinalgError::NotPermutation(n));
            }
            hit[t] = true;
        }
        let dev = phases
            .iter()
            .map(|z| (z.norm() - 1.0).abs())
            .fold(0.0, f64::max);
        if dev > DEFAULT_TOLERANCE {
            return Err(LinalgError::NotUnitary(dev));
        }
        Ok(Self {
            repr: Repr::Monomial { map, phases },
            layout,
        })
    }

    /// `U|i⟩ = |map[i]⟩`.
    pub fn from_permutation(map: Vec<usize>, layout: RegisterLayout) -> Result<Self> {
        let phases = vec![C64::new(1.0, 0.0); map.len()];
        Self::from_monomial(map, phases, layout)
    }

    pub fn identity(layout: RegisterLayout) -> Self {
        let n = layout.total();
        Self::from_permutation((0..n).collect(), layout).expect("identity is a permutation")
    }

    pub fn layout(&self) -> &RegisterLayout {
        &self.layout
    }

    pub fn dim(&self) -> usize {
        self.layout.total()
    }

    /// The permutation map when the operator is a phased permutation.
    pub fn permutation(&self) -> Option<(&[usize], &[C64])> {
        match &self.repr {
            Repr::Monomial { map, phases } => Some((map, phases)),
            Repr::Dense(_) => None,
        }
    }

    /// Whether the operator is an unphased permutation matrix.
    pub fn is_permutation(&self, tol: f64) -> bool {
        let m = self.matrix();
        let n = self.dim();
        (0..n).all(|r| {
            let row = m.row(r);
            let ones = row.iter().filter(|z| (*z - C64::new(1.0, 0.0)).norm() <= tol).count();
            let zeros = row.iter().filter(|z| z.norm() <= tol).count();
            ones == 1 && zeros == n - 1
        }) && (0..n).all(|c| {
            m.column(c)
                .iter()
                .filter(|z| (*z - C64::new(1.0, 0.0)).norm() <= tol)
                .count()
                == 1
        })
    }

    /// Materializes the dense matrix.
    pub fn matrix(&self) -> CMatrix {
        match &self.repr {
            Repr::Dense(m) => m.clone(),
            Repr::Monomial { map, phases } => {
                let n = map.len();
                let mut m = CMatrix::zeros(n, n);
                for (i, &t) in map.iter().enumerate() {
                    m[(t, i)] = phases[i];
                }
                m
            }
        }
    }

    pub fn dagger(&self) -> UnitaryOp {
        let repr = match &self.repr {
            Repr::Dense(m) => Repr::Dense(m.adjoint()),
            Repr::Monomial { map, phases } => {
                let n = map.len();
                let mut inv = vec![0; n];
                let mut ph = vec![C64::new(0.0, 0.0); n];
                for (i, &t) in map.iter().enumerate() {
                    inv[t] = i;
                    ph[t] = phases[i].conj();
                }
                Repr::Monomial {
                    map: inv,
                    phases: ph,
                }
            }
        };
        UnitaryOp {
            repr,
            layout: self.layout.clone(),
        }
    }

    /// `self · other` (apply `other` first).
    pub fn compose(&self, other: &UnitaryOp) -> Result<UnitaryOp> {
        self.layout.ensure_same(&other.layout)?;
        let repr = match (&self.repr, &other.repr) {
            (
                Repr::Monomial { map: m1, phases: p1 },
                Repr::Monomial { map: m2, phases: p2 },
            ) => Repr::Monomial {
                map: m2.iter().map(|&t| m1[t]).collect(),
                phases: m2.iter().zip(p2).map(|(&t, &ph)| p1[t] * ph).collect(),
            },
            _ => Repr::Dense(self.matrix() * other.matrix()),
        };
        Ok(UnitaryOp {
            repr,
            layout: self.layout.clone(),
        })
    }

    pub fn tensor(&self, other: &UnitaryOp) -> UnitaryOp {
        let layout = self.layout.concat(&other.layout);
        let repr = match (&self.repr, &other.repr) {
            (
                Repr::Monomial { map: m1, phases: p1 },
                Repr::Monomial { map: m2, phases: p2 },
            ) => {
                let n2 = m2.len();
                let mut map = Vec::with_capacity(m1.len() * n2);
                let mut phases = Vec::with_capacity(m1.len() * n2);
                for (a, &ta) in m1.iter().enumerate() {
                    for (b, &tb) in m2.iter().enumerate() {
                        map.push(ta * n2 + tb);
                        phases.push(p1[a] * p2[b]);
                    }
                }
                Repr::Monomial { map, phases }
            }
            _ => Repr::Dense(self.matrix().kronecker(&other.matrix())),
        };
        UnitaryOp { repr, layout }
    }

    /// Applies the operator to a state of either kind.
    pub fn apply<S: QuantumState>(&self, state: &S) -> Result<S> {
        state.evolve(self)
    }

    /// `U M U†` for an arbitrary square matrix on the same space.
    pub fn conjugate_matrix(&self, m: &CMatrix) -> Result<CMatrix> {
        let n = self.dim();
        if m.nrows() != n || m.ncols() != n {
            return Err(LinalgError::DimensionMismatch {
                expected: n,
                found: m.nrows(),
            });
        }
        Ok(match &self.repr {
            Repr::Dense(u) => u * m * u.adjoint(),
            Repr::Monomial { map, phases } => {
                let mut out = CMatrix::zeros(n, n);
                for j in 0..n {
                    let pj = phases[j].conj();
                    for i in 0..n {
                        out[(map[i], map[j])] = phases[i] * m[(i, j)] * pj;
                    }
                }
                out
            }
        })
    }

    pub fn unitarity_defect(&self) -> f64 {
        match &self.repr {
            Repr::Dense(m) => unitarity_defect(m),
            Repr::Monomial { .. } => 0.0,
        }
    }
}

/// Free-function form of [`UnitaryOp::apply`].
pub fn apply<S: QuantumState>(u: &UnitaryOp, state: &S) -> Result<S> {
    u.apply(state)
}

/// Free-function form of [`QuantumState::tensor`].
pub fn tensor<S: QuantumState>(a: &S, b: &S) -> S {
    a.tensor(b)
}

/// Free-function form of [`DensityMatrix::partial_trace`].
pub fn partial_trace(rho: &DensityMatrix, keep: &[usize]) -> Result<DensityMatrix> {
    rho.partial_trace(keep)
}

/// `|⟨a|b⟩|²`.
pub fn fidelity_pure(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(a.inner(b)?.norm_sqr())
}

/// `‖U†U − I‖_F`.
pub fn unitarity_defect(m: &CMatrix) -> f64 {
    let n = m.nrows();
    (m.adjoint() * m - CMatrix::identity(n, n)).norm()
}

/// Largest entrywise modulus of `a − b`; `∞` when the shapes differ.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    if a.shape() != b.shape() {
        return f64::INFINITY;
    }
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Smallest eigenvalue of a Hermitian matrix.
pub fn min_eigenvalue(m: &CMatrix) -> f64 {
    m.clone()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Block-diagonal matrix from square blocks.
pub fn direct_sum(blocks: &[CMatrix]) -> CMatrix {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = CMatrix::zeros(n, n);
    let mut at = 0;
    for b in blocks {
        let d = b.nrows();
        out.view_mut((at, at), (d, d)).copy_from(b);
        at += d;
    }
    out
}
