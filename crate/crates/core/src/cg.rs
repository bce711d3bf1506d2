//! Clebsch-Gordan decomposition of tensor products of `H_p` irreps.
//!
//! The unitaries are stated for the display form `σ` of the irreps (see
//! [`crate::reps`]). For every group element `g`,
//! `U (σ_{μ1}(g) ⊗ σ_{μ2}(g)) U† = ⊕ I_{n_μ} ⊗ σ_μ(g)`. Because `σ(g⁻¹)` is
//! the action of the right regular representation on the row register of a
//! Fourier block, the same identity decomposes two registers produced by weak
//! Fourier sampling.

use crate::field::Residue;
use crate::group::GroupElement;
use crate::linalg::{
    direct_sum, CMatrix, LinalgError, QuantumState, RegisterLayout, UnitaryOp, C64,
};
use crate::reps::{IrrepLabel, Irreps};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchingEntry {
    pub output: IrrepLabel,
    pub multiplicity: usize,
}

/// Irreps occurring in `μ1 ⊗ μ2` with their multiplicities.
pub fn branch(mu1: IrrepLabel, mu2: IrrepLabel) -> Vec<BranchingEntry> {
    use IrrepLabel::*;
    let prime = mu1.prime();
    assert_eq!(prime, mu2.prime(), "irreps over different primes");
    let single = |output| {
        vec![BranchingEntry {
            output,
            multiplicity: 1,
        }]
    };
    match (mu1, mu2) {
        (OneDim(a1, b1), OneDim(a2, b2)) => single(OneDim(a1 + a2, b1 + b2)),
        (OneDim(..), PDim(k)) | (PDim(k), OneDim(..)) => single(PDim(k)),
        (PDim(k1), PDim(k2)) if !(k1 + k2).is_zero() => vec![BranchingEntry {
            output: PDim(k1 + k2),
            multiplicity: prime.as_usize(),
        }],
        (PDim(_), PDim(_)) => IrrepLabel::all(prime)
            .into_iter()
            .filter(|l| !l.is_pdim())
            .map(|output| BranchingEntry {
                output,
                multiplicity: 1,
            })
            .collect(),
    }
}

/// A block of the decomposed space: coordinates `offset + w·d + v` for
/// multiplicity index `w < multiplicity` and irrep coordinate `v < d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CgSegment {
    pub output: IrrepLabel,
    pub multiplicity: usize,
    pub offset: usize,
}

impl CgSegment {
    pub fn len(&self) -> usize {
        self.multiplicity * self.output.dim()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone)]
pub struct CgDecomposition {
    pub input: (IrrepLabel, IrrepLabel),
    pub unitary: UnitaryOp,
    pub segments: Vec<CgSegment>,
}

impl CgDecomposition {
    /// The block-diagonal matrix the unitary should produce at `g`.
    pub fn declared_blocks(&self, irreps: &Irreps, g: &GroupElement) -> CMatrix {
        let blocks: Vec<CMatrix> = self
            .segments
            .iter()
            .map(|seg| {
                let m = seg.multiplicity;
                let s = irreps
                    .display_matrix(seg.output, g)
                    .expect("labels match prime")
                    .matrix();
                CMatrix::identity(m, m).kronecker(&s)
            })
            .collect();
        direct_sum(&blocks)
    }

    /// `U (σ_{μ1}(g) ⊗ σ_{μ2}(g)) U†`.
    pub fn conjugated_product(&self, irreps: &Irreps, g: &GroupElement) -> CMatrix {
        let (mu1, mu2) = self.input;
        let a = irreps.display_matrix(mu1, g).expect("labels match prime");
        let b = irreps.display_matrix(mu2, g).expect("labels match prime");
        let prod = a.tensor(&b).matrix();
        self.unitary
            .conjugate_matrix(&prod)
            .expect("unitary acts on the product space")
    }

    /// Applies the basis change to a state on the `d_{μ1} d_{μ2}` space.
    pub fn apply<S: QuantumState>(&self, state: &S) -> Result<S, LinalgError> {
        self.unitary.apply(state)
    }

    /// The segment containing basis index `index` with its `(w, v)` coordinates.
    pub fn locate(&self, index: usize) -> Option<(CgSegment, usize, usize)> {
        self.segments.iter().find_map(|seg| {
            let d = seg.output.dim();
            (index >= seg.offset && index < seg.offset + seg.len()).then(|| {
                let local = index - seg.offset;
                (*seg, local / d, local % d)
            })
        })
    }
}

fn input_layout(mu1: IrrepLabel, mu2: IrrepLabel) -> RegisterLayout {
    RegisterLayout::new(vec![mu1.dim(), mu2.dim()]).expect("irrep dimensions are positive")
}

/// `V = T P` with `P = Σ_s ω^{−a s}|s⟩⟨s|` and `T|t⟩ = |t + k⁻¹ b⟩`, which
/// absorbs the character `χ_{a,b}` into `σ_k`.
fn v_unitary(irreps: &Irreps, a: Residue, b: Residue, k: Residue, layout: RegisterLayout) -> UnitaryOp {
    let shift = b * k.inv().expect("k is non-zero");
    let (map, phases) = irreps
        .prime()
        .residues()
        .map(|s| ((s + shift).as_usize(), irreps.omega().pow(-(a * s))))
        .unzip();
    UnitaryOp::from_monomial(map, phases, layout).expect("V is a phased permutation")
}

/// `W|a,b⟩ = |a − b⟩ ⊗ |(k1 a + k2 b)(k1 + k2)⁻¹⟩`.
fn w_unitary(k1: Residue, k2: Residue, layout: RegisterLayout) -> UnitaryOp {
    let prime = k1.prime();
    let p = prime.as_usize();
    let kinv = (k1 + k2).inv().expect("k1 + k2 is non-zero");
    let mut map = vec![0; p * p];
    for a in prime.residues() {
        for b in prime.residues() {
            let v = (k1 * a + k2 * b) * kinv;
            map[a.as_usize() * p + b.as_usize()] = (a - b).as_usize() * p + v.as_usize();
        }
    }
    UnitaryOp::from_permutation(map, layout).expect("W is a permutation")
}

/// `X = p^{-1/2} Σ_{a,b,c} ω^{(a+b)c} |a − b⟩⟨a| ⊗ |c⟩⟨b|`.
fn x_unitary(irreps: &Irreps, layout: RegisterLayout) -> UnitaryOp {
    let prime = irreps.prime();
    let p = prime.as_usize();
    let scale = 1.0 / (p as f64).sqrt();
    let mut m = CMatrix::zeros(p * p, p * p);
    for a in prime.residues() {
        for b in prime.residues() {
            for c in prime.residues() {
                let row = (a - b).as_usize() * p + c.as_usize();
                let col = a.as_usize() * p + b.as_usize();
                m[(row, col)] = irreps.omega().pow((a + b) * c) * scale;
            }
        }
    }
    UnitaryOp::from_dense_unchecked(m, layout)
}

/// The basis change decomposing `μ1 ⊗ μ2` into irreps.
///
/// When `k1 + k2 ≠ 0` the output is `|w⟩ ⊗ |v⟩` with the multiplicity register
/// first and `σ_{k1+k2}` acting on `v`. When `k1 + k2 = 0` the output
/// coordinate `(u, c)` carries the character `χ_{2c, k1 u}`.
pub fn cg_unitary(irreps: &Irreps, mu1: IrrepLabel, mu2: IrrepLabel) -> CgDecomposition {
    use IrrepLabel::*;
    let layout = input_layout(mu1, mu2);
    let prime = irreps.prime();
    assert!(
        mu1.prime() == prime && mu2.prime() == prime,
        "irreps over a different prime"
    );
    let p = prime.as_usize();
    let whole = |output, multiplicity| {
        vec![CgSegment {
            output,
            multiplicity,
            offset: 0,
        }]
    };
    let (unitary, segments) = match (mu1, mu2) {
        (OneDim(a1, b1), OneDim(a2, b2)) => {
            (UnitaryOp::identity(layout), whole(OneDim(a1 + a2, b1 + b2), 1))
        }
        (OneDim(a, b), PDim(k)) | (PDim(k), OneDim(a, b)) => {
            (v_unitary(irreps, a, b, k, layout), whole(PDim(k), 1))
        }
        (PDim(k1), PDim(k2)) if !(k1 + k2).is_zero() => {
            (w_unitary(k1, k2, layout), whole(PDim(k1 + k2), p))
        }
        (PDim(k1), PDim(_)) => {
            let segments = prime
                .residues()
                .flat_map(|u| {
                    prime.residues().map(move |c| CgSegment {
                        output: OneDim(prime.residue(2) * c, k1 * u),
                        multiplicity: 1,
                        offset: u.as_usize() * p + c.as_usize(),
                    })
                })
                .collect();
            (x_unitary(irreps, layout), segments)
        }
    };
    CgDecomposition {
        input: (mu1, mu2),
        unitary,
        segments,
    }
}

/// Free-function form of [`CgDecomposition::apply`].
pub fn apply_cg<S: QuantumState>(dec: &CgDecomposition, state: &S) -> Result<S, LinalgError> {
    dec.apply(state)
}

/// `χ_{μ1}(g) χ_{μ2}(g) − Σ n_μ χ_μ(g)`, zero when the branching rule is right.
pub fn character_defect(irreps: &Irreps, mu1: IrrepLabel, mu2: IrrepLabel, g: &GroupElement) -> f64 {
    let lhs = irreps.character(mu1, g).expect("labels match prime")
        * irreps.character(mu2, g).expect("labels match prime");
    let rhs: C64 = branch(mu1, mu2)
        .iter()
        .map(|e| irreps.character(e.output, g).expect("labels match prime") * e.multiplicity as f64)
        .sum();
    (lhs - rhs).norm()
}
