//! Irreducible representations of `H_p`, characters, the regular
//! representations, the group Fourier transform and character projectors.
//!
//! Two matrix forms are provided for each irrep. The *display form*
//! `σ_k(x,y,z) = ω^{ky} Σ_r ω^{kzr} |r+x⟩⟨r|` is the familiar one and is what
//! the Fourier transform coefficients, the conditional states and the
//! Clebsch-Gordan unitaries are written in. Under the product law of `H_p` it
//! reverses products, `σ(g)σ(h) = σ(hg)`, so [`Irreps::irrep_matrix`] returns
//! its transpose `D_k = σ_kᵀ`, which is a genuine homomorphism with the same
//! character.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::{Arc, Mutex, OnceLock};

use serde::{Serialize, Serializer};

use crate::field::{FieldPrime, Residue};
use crate::group::{elements, GroupElement, GroupError};
use crate::linalg::{direct_sum, CMatrix, RegisterLayout, UnitaryOp, C64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum IrrepLabel {
    /// The character `χ_{a,b}(x,y,z) = ω^{ax + bz}`.
    OneDim(Residue, Residue),
    /// The `p`-dimensional irrep with central character `ω^{ky}`, `k ≠ 0`.
    PDim(Residue),
}

impl IrrepLabel {
    pub fn prime(&self) -> FieldPrime {
        match self {
            IrrepLabel::OneDim(a, _) => a.prime(),
            IrrepLabel::PDim(k) => k.prime(),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            IrrepLabel::OneDim(..) => 1,
            IrrepLabel::PDim(k) => k.prime().as_usize(),
        }
    }

    pub fn is_pdim(&self) -> bool {
        matches!(self, IrrepLabel::PDim(_))
    }

    /// Label of the complex-conjugate representation.
    pub fn conjugate(&self) -> IrrepLabel {
        match *self {
            IrrepLabel::OneDim(a, b) => IrrepLabel::OneDim(-a, -b),
            IrrepLabel::PDim(k) => IrrepLabel::PDim(-k),
        }
    }

    /// All `p² + p − 1` labels: one-dimensional `(a, b)` in lexicographic
    /// order, then `PDim(1..p)`.
    pub fn all(prime: FieldPrime) -> Vec<IrrepLabel> {
        let mut out: Vec<IrrepLabel> = prime
            .residues()
            .flat_map(|a| prime.residues().map(move |b| IrrepLabel::OneDim(a, b)))
            .collect();
        out.extend(prime.units().map(IrrepLabel::PDim));
        out
    }

    /// Position of this label in [`IrrepLabel::all`].
    pub fn position(&self) -> usize {
        let p = self.prime().as_usize();
        match self {
            IrrepLabel::OneDim(a, b) => a.as_usize() * p + b.as_usize(),
            IrrepLabel::PDim(k) => p * p + k.as_usize() - 1,
        }
    }
}

impl fmt::Display for IrrepLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IrrepLabel::OneDim(a, b) => write!(f, "chi({a},{b})"),
            IrrepLabel::PDim(k) => write!(f, "sigma({k})"),
        }
    }
}

impl Serialize for IrrepLabel {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// Powers of `ω = exp(2πi/p)`.
#[derive(Debug, Clone)]
pub struct RootOfUnity {
    prime: FieldPrime,
    powers: Vec<C64>,
}

impl RootOfUnity {
    pub fn new(prime: FieldPrime) -> Self {
        let p = prime.get();
        let powers = (0..p)
            .map(|k| C64::from_polar(1.0, 2.0 * PI * k as f64 / p as f64))
            .collect();
        Self { prime, powers }
    }

    pub fn prime(&self) -> FieldPrime {
        self.prime
    }

    /// `ω^e`.
    #[inline]
    pub fn pow(&self, e: Residue) -> C64 {
        self.powers[e.as_usize()]
    }

    /// `ω^e` for an arbitrary integer exponent.
    pub fn pow_int(&self, e: i64) -> C64 {
        self.pow(self.prime.residue(e))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// `R_L(g)|h⟩ = |g h⟩`.
    Left,
    /// `R_R(g)|h⟩ = |h g⁻¹⟩`.
    Right,
}

/// One irrep block of the Fourier basis: coordinates `|μ, i, j⟩` occupy
/// `offset .. offset + dim²`, row index `i` major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QftSegment {
    pub label: IrrepLabel,
    pub dim: usize,
    pub offset: usize,
}

impl QftSegment {
    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.dim * self.dim
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        self.offset + row * self.dim + col
    }
}

/// Representation data for one prime, with the Fourier transform built on
/// first use.
#[derive(Debug)]
pub struct Irreps {
    prime: FieldPrime,
    omega: RootOfUnity,
    labels: Vec<IrrepLabel>,
    segments: Vec<QftSegment>,
    qft: OnceLock<UnitaryOp>,
}

impl Irreps {
    pub fn new(prime: FieldPrime) -> Self {
        let labels = IrrepLabel::all(prime);
        let mut offset = 0;
        let segments = labels
            .iter()
            .map(|&label| {
                let dim = label.dim();
                let seg = QftSegment { label, dim, offset };
                offset += dim * dim;
                seg
            })
            .collect();
        Self {
            prime,
            omega: RootOfUnity::new(prime),
            labels,
            segments,
            qft: OnceLock::new(),
        }
    }

    /// A process-wide shared instance per prime.
    pub fn shared(prime: FieldPrime) -> Arc<Irreps> {
        static CACHE: OnceLock<Mutex<HashMap<u32, Arc<Irreps>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
        let mut map = cache.lock().expect("irrep cache poisoned");
        map.entry(prime.get())
            .or_insert_with(|| Arc::new(Irreps::new(prime)))
            .clone()
    }

    pub fn prime(&self) -> FieldPrime {
        self.prime
    }

    pub fn omega(&self) -> &RootOfUnity {
        &self.omega
    }

    pub fn labels(&self) -> &[IrrepLabel] {
        &self.labels
    }

    pub fn group_order(&self) -> usize {
        self.prime.as_usize().pow(3)
    }

    /// Fourier-basis segments in label order.
    pub fn segments(&self) -> &[QftSegment] {
        &self.segments
    }

    pub fn segment(&self, label: IrrepLabel) -> &QftSegment {
        &self.segments[label.position()]
    }

    fn check(&self, label: IrrepLabel, g: &GroupElement) -> Result<(), GroupError> {
        for q in [label.prime(), g.prime()] {
            if q != self.prime {
                return Err(GroupError::PrimeMismatch(self.prime.get(), q.get()));
            }
        }
        if let IrrepLabel::PDim(k) = label {
            assert!(!k.is_zero(), "PDim label requires k != 0");
        }
        Ok(())
    }

    /// `(map, phases)` of the display form: `σ|r⟩ = phases[r] |map[r]⟩`.
    fn display_monomial(&self, label: IrrepLabel, g: &GroupElement) -> (Vec<usize>, Vec<C64>) {
        match label {
            IrrepLabel::OneDim(a, b) => (vec![0], vec![self.omega.pow(a * g.x + b * g.z)]),
            IrrepLabel::PDim(k) => self
                .prime
                .residues()
                .map(|r| ((r + g.x).as_usize(), self.omega.pow(k * g.y + k * g.z * r)))
                .unzip(),
        }
    }

    /// The display form `σ_μ(g)`. It satisfies `σ(g)σ(h) = σ(hg)`.
    pub fn display_matrix(&self, label: IrrepLabel, g: &GroupElement) -> Result<UnitaryOp, GroupError> {
        self.check(label, g)?;
        let (map, phases) = self.display_monomial(label, g);
        Ok(UnitaryOp::from_monomial(map, phases, RegisterLayout::single(label.dim()))
            .expect("display form is a phased permutation"))
    }

    /// The irrep as a homomorphism, `D_μ(g) = σ_μ(g)ᵀ`:
    /// `D_k(x,y,z) = ω^{ky} Σ_r ω^{kzr} |r⟩⟨r+x|`.
    pub fn irrep_matrix(&self, label: IrrepLabel, g: &GroupElement) -> Result<UnitaryOp, GroupError> {
        self.check(label, g)?;
        let (map, phases) = self.display_monomial(label, g);
        // transpose of |map[r]⟩⟨r| is |r⟩⟨map[r]|
        let n = map.len();
        let mut inv = vec![0; n];
        let mut ph = vec![C64::new(0.0, 0.0); n];
        for (r, &t) in map.iter().enumerate() {
            inv[t] = r;
            ph[t] = phases[r];
        }
        Ok(UnitaryOp::from_monomial(inv, ph, RegisterLayout::single(n))
            .expect("irrep is a phased permutation"))
    }

    /// How `R_R(g)` acts on the row index of a Fourier block:
    /// `σ_μ(g⁻¹) = D_μ(g)*`, again a homomorphism.
    pub fn right_action(&self, label: IrrepLabel, g: &GroupElement) -> Result<UnitaryOp, GroupError> {
        self.display_matrix(label, &g.inverse())
    }

    /// Closed-form character: `ω^{ax+bz}` or `δ_{x0} δ_{z0} p ω^{ky}`.
    pub fn character(&self, label: IrrepLabel, g: &GroupElement) -> Result<C64, GroupError> {
        self.check(label, g)?;
        Ok(match label {
            IrrepLabel::OneDim(a, b) => self.omega.pow(a * g.x + b * g.z),
            IrrepLabel::PDim(k) => {
                if g.x.is_zero() && g.z.is_zero() {
                    self.omega.pow(k * g.y) * self.prime.get() as f64
                } else {
                    C64::new(0.0, 0.0)
                }
            }
        })
    }

    /// Permutation matrix of the left or right regular representation in the
    /// lexicographic element basis.
    pub fn regular_rep(&self, side: Side, g: &GroupElement) -> UnitaryOp {
        regular_rep(side, g)
    }

    /// The Fourier transform `Σ_g Σ_μ Σ_{ij} √(d_μ/|G|) [σ_μ(g)]_{ij} |μ,i,j⟩⟨g|`
    /// with rows ordered by [`Irreps::segments`].
    pub fn qft_matrix(&self) -> &UnitaryOp {
        self.qft.get_or_init(|| {
            let n = self.group_order();
            let mut m = CMatrix::zeros(n, n);
            for g in elements(self.prime) {
                let col = g.index();
                for seg in &self.segments {
                    let scale = (seg.dim as f64 / n as f64).sqrt();
                    let (map, phases) = self.display_monomial(seg.label, &g);
                    for (r, &row) in map.iter().enumerate() {
                        m[(seg.index(row, r), col)] = phases[r] * scale;
                    }
                }
            }
            UnitaryOp::new(m, RegisterLayout::single(n)).expect("group Fourier transform is unitary")
        })
    }

    /// What the Fourier transform turns a regular representation into:
    /// `⊕_μ I ⊗ D_μ(g)` for the left one and `⊕_μ D_μ(g)* ⊗ I` for the right.
    pub fn fourier_block_form(&self, side: Side, g: &GroupElement) -> CMatrix {
        let blocks: Vec<CMatrix> = self
            .segments
            .iter()
            .map(|seg| {
                let d = self.irrep_matrix(seg.label, g).expect("label matches prime").matrix();
                let id = CMatrix::identity(seg.dim, seg.dim);
                match side {
                    Side::Left => id.kronecker(&d),
                    Side::Right => d.conjugate().kronecker(&id),
                }
            })
            .collect();
        direct_sum(&blocks)
    }

    /// `C_μ = (d_μ/|G|) Σ_g χ_μ(g)* R_R(g)`.
    pub fn character_projector(&self, label: IrrepLabel) -> CMatrix {
        let n = self.group_order();
        let scale = label.dim() as f64 / n as f64;
        let mut c = CMatrix::zeros(n, n);
        for g in elements(self.prime) {
            let w = self.character(label, &g).expect("label matches prime").conj() * scale;
            if w.norm() == 0.0 {
                continue;
            }
            let ginv = g.inverse();
            for h in elements(self.prime) {
                c[((h * ginv).index(), h.index())] += w;
            }
        }
        c
    }
}

/// Permutation matrix of a regular representation.
pub fn regular_rep(side: Side, g: &GroupElement) -> UnitaryOp {
    let prime = g.prime();
    let ginv = g.inverse();
    let map = elements(prime)
        .into_iter()
        .map(|h| match side {
            Side::Left => (*g * h).index(),
            Side::Right => (h * ginv).index(),
        })
        .collect();
    UnitaryOp::from_permutation(map, RegisterLayout::single(prime.as_usize().pow(3)))
        .expect("regular representation is a permutation")
}
