//! Parity-graded operator algebra.
//!
//! Fermionic degrees of freedom force a grading on operators: a diagonal
//! parity operator θ splits each Hilbert-space factor into even and odd
//! subspaces, operators classify as even (θXθ = X), odd (θXθ = −X), or
//! mixed, and ampliation across fermionic factors uses the antisymmetric
//! tensor product so that odd operators on distinct factors anticommute.

use crate::error::{Error, Result};
use crate::linalg::{C64, CMatrix};

/// Relative tolerance for the even/odd classification.
pub const PARITY_TOL: f64 = 1e-12;

/// Default cap on the total dimension of a composite space. Dense
/// storage is quadratic in this; desk-scale models stay far below it.
pub const MAX_COMPOSITE_DIM: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpaceKind {
    /// Carries a nontrivial grading; odd operators exist.
    Fermionic,
    /// Trivial grading (θ = I); every operator is even.
    BosonicOrTrivial,
}

/// A finite-dimensional Hilbert-space factor with a diagonal parity
/// signature: `parity_signs[i]` is the θ eigenvalue of basis vector `i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GradedSpace {
    dim: usize,
    parity_signs: Vec<i8>,
    kind: SpaceKind,
}

impl GradedSpace {
    /// A fermionic factor with the given ±1 signature.
    pub fn fermionic(parity_signs: Vec<i8>) -> Result<Self> {
        if parity_signs.is_empty() {
            return Err(Error::InvalidInput("empty parity signature".into()));
        }
        if parity_signs.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidInput(
                "parity signature entries must be +1 or -1".into(),
            ));
        }
        Ok(Self {
            dim: parity_signs.len(),
            parity_signs,
            kind: SpaceKind::Fermionic,
        })
    }

    /// A bosonic-or-trivial factor: θ = I.
    pub fn trivial(dim: usize) -> Self {
        assert!(dim > 0, "zero-dimensional space");
        Self {
            dim,
            parity_signs: vec![1; dim],
            kind: SpaceKind::BosonicOrTrivial,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> SpaceKind {
        self.kind
    }

    pub fn parity_signs(&self) -> &[i8] {
        &self.parity_signs
    }
}

/// An ordered list of graded factors; operators live on composites.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CompositeSpace {
    factors: Vec<GradedSpace>,
}

impl CompositeSpace {
    /// Builds a composite; panics beyond [`MAX_COMPOSITE_DIM`] (use
    /// [`CompositeSpace::with_dim_cap`] to lift the cap explicitly).
    pub fn new(factors: Vec<GradedSpace>) -> Self {
        Self::with_dim_cap(factors, MAX_COMPOSITE_DIM).expect("composite dimension cap")
    }

    pub fn with_dim_cap(factors: Vec<GradedSpace>, cap: usize) -> crate::error::Result<Self> {
        if factors.is_empty() {
            return Err(Error::InvalidInput(
                "composite needs at least one factor".into(),
            ));
        }
        let dim: usize = factors.iter().map(|f| f.dim()).product();
        if dim > cap {
            return Err(Error::InvalidInput(format!(
                "composite dimension {dim} exceeds the cap {cap}"
            )));
        }
        Ok(Self { factors })
    }

    pub fn single(factor: GradedSpace) -> Self {
        Self {
            factors: vec![factor],
        }
    }

    pub fn factors(&self) -> &[GradedSpace] {
        &self.factors
    }

    pub fn dim(&self) -> usize {
        self.factors.iter().map(|f| f.dim()).product()
    }

    /// Composite θ eigenvalues: products of factor signs.
    pub fn parity_signs(&self) -> Vec<i8> {
        let mut signs = vec![1i8];
        for f in &self.factors {
            let mut next = Vec::with_capacity(signs.len() * f.dim());
            for &s in &signs {
                for &t in f.parity_signs() {
                    next.push(s * t);
                }
            }
            signs = next;
        }
        signs
    }

    /// The parity operator θ as a diagonal matrix.
    pub fn parity_operator(&self) -> CMatrix {
        let signs: Vec<f64> = self.parity_signs().iter().map(|&s| s as f64).collect();
        CMatrix::diag_real(&signs)
    }

    /// True when every factor has trivial grading.
    pub fn is_all_trivial(&self) -> bool {
        self.factors
            .iter()
            .all(|f| f.kind() == SpaceKind::BosonicOrTrivial)
    }

    /// Concatenation of two composites.
    pub fn join(&self, other: &CompositeSpace) -> CompositeSpace {
        let mut factors = self.factors.clone();
        factors.extend(other.factors.iter().cloned());
        CompositeSpace { factors }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
    Mixed,
}

/// A dense operator attached to a composite graded space, with its parity
/// classified on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct GradedOperator {
    matrix: CMatrix,
    space: CompositeSpace,
    parity: Parity,
}

fn classify_parity(matrix: &CMatrix, signs: &[i8]) -> Parity {
    let mut even_mass = 0.0_f64;
    let mut odd_mass = 0.0_f64;
    let n = matrix.rows();
    for i in 0..n {
        for j in 0..n {
            let w = matrix[(i, j)].norm_sqr();
            if signs[i] == signs[j] {
                even_mass += w;
            } else {
                odd_mass += w;
            }
        }
    }
    let total = even_mass + odd_mass;
    if total == 0.0 {
        // The zero operator satisfies both conditions; call it even.
        return Parity::Even;
    }
    let tol_sq = PARITY_TOL * PARITY_TOL * total;
    if odd_mass <= tol_sq {
        Parity::Even
    } else if even_mass <= tol_sq {
        Parity::Odd
    } else {
        Parity::Mixed
    }
}

impl GradedOperator {
    pub fn new(matrix: CMatrix, space: CompositeSpace) -> Result<Self> {
        if !matrix.is_square() || matrix.rows() != space.dim() {
            return Err(Error::DimensionMismatch {
                context: "operator matrix vs composite space",
                left: matrix.rows(),
                right: space.dim(),
            });
        }
        let parity = classify_parity(&matrix, &space.parity_signs());
        Ok(Self {
            matrix,
            space,
            parity,
        })
    }

    pub fn zero(space: CompositeSpace) -> Self {
        let dim = space.dim();
        Self {
            matrix: CMatrix::zeros(dim, dim),
            space,
            parity: Parity::Even,
        }
    }

    pub fn identity(space: CompositeSpace) -> Self {
        let dim = space.dim();
        Self {
            matrix: CMatrix::identity(dim),
            space,
            parity: Parity::Even,
        }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn space(&self) -> &CompositeSpace {
        &self.space
    }

    pub fn parity(&self) -> Parity {
        self.parity
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn is_zero(&self) -> bool {
        self.matrix.is_zero()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.matrix.hermiticity_defect() <= tol * self.matrix.norm().max(1.0)
    }

    /// Adjoint on the same space; parity is preserved.
    pub fn adjoint(&self) -> Self {
        Self {
            matrix: self.matrix.adjoint(),
            space: self.space.clone(),
            parity: self.parity,
        }
    }

    pub fn scale(&self, z: C64) -> Self {
        Self {
            matrix: self.matrix.scale(z),
            space: self.space.clone(),
            parity: self.parity,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_space(other, "operator addition")?;
        Self::new(self.matrix.add(&other.matrix), self.space.clone())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_space(other, "operator subtraction")?;
        Self::new(self.matrix.sub(&other.matrix), self.space.clone())
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_space(other, "operator product")?;
        let matrix = self.matrix.mul(&other.matrix);
        // δ is additive mod 2 under products of definite-parity operators.
        let parity = match (self.parity, other.parity) {
            (Parity::Even, Parity::Even) | (Parity::Odd, Parity::Odd) => Parity::Even,
            (Parity::Even, Parity::Odd) | (Parity::Odd, Parity::Even) => Parity::Odd,
            _ => classify_parity(&matrix, &self.space.parity_signs()),
        };
        Ok(Self {
            matrix,
            space: self.space.clone(),
            parity,
        })
    }

    fn check_space(&self, other: &Self, context: &'static str) -> Result<()> {
        if self.space != other.space {
            return Err(Error::DimensionMismatch {
                context,
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(())
    }
}

/// Parity conjugation θXθ. An involutive *-automorphism: fixes even
/// operators and negates odd ones.
pub fn tau(x: &GradedOperator) -> GradedOperator {
    let signs = x.space().parity_signs();
    let n = x.dim();
    let matrix = CMatrix::from_fn(n, n, |i, j| {
        let s = (signs[i] * signs[j]) as f64;
        x.matrix()[(i, j)] * C64::new(s, 0.0)
    });
    GradedOperator {
        matrix,
        space: x.space().clone(),
        parity: x.parity(),
    }
}

/// Splits X into its even part P₊XP₊ + P₋XP₋ and odd part
/// P₊XP₋ + P₋XP₊; the two reconstruct X exactly.
pub fn parity_decompose(x: &GradedOperator) -> (GradedOperator, GradedOperator) {
    let signs = x.space().parity_signs();
    let n = x.dim();
    let mut even = CMatrix::zeros(n, n);
    let mut odd = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let z = x.matrix()[(i, j)];
            if signs[i] == signs[j] {
                even[(i, j)] = z;
            } else {
                odd[(i, j)] = z;
            }
        }
    }
    let space = x.space().clone();
    (
        GradedOperator {
            parity: classify_parity(&even, &space.parity_signs()),
            matrix: even,
            space: space.clone(),
        },
        GradedOperator {
            parity: classify_parity(&odd, &space.parity_signs()),
            matrix: odd,
            space,
        },
    )
}

/// Generalized antisymmetric tensor product
/// `X₁ ⊗̂ X₂ = X₁ ⊗ X₂₊ + X₁θ₁ ⊗ X₂₋`.
///
/// Reduces to the ordinary tensor product when either factor space is
/// entirely trivial. Mixed-parity operands are rejected whenever a
/// fermionic factor is involved; decompose first.
pub fn graded_tensor(x1: &GradedOperator, x2: &GradedOperator) -> Result<GradedOperator> {
    if x1.dim().saturating_mul(x2.dim()) > MAX_COMPOSITE_DIM {
        return Err(Error::InvalidInput(format!(
            "tensor product dimension {} exceeds the cap {MAX_COMPOSITE_DIM}",
            x1.dim().saturating_mul(x2.dim())
        )));
    }
    let space = x1.space().join(x2.space());
    if x1.space().is_all_trivial() && x2.space().is_all_trivial() {
        return GradedOperator::new(x1.matrix().kron(x2.matrix()), space);
    }
    if x1.parity() == Parity::Mixed || x2.parity() == Parity::Mixed {
        return Err(Error::MixedParityOnFermionicSpace);
    }
    let matrix = match x2.parity() {
        Parity::Even => x1.matrix().kron(x2.matrix()),
        Parity::Odd => {
            let theta1 = x1.space().parity_operator();
            x1.matrix().mul(&theta1).kron(x2.matrix())
        }
        Parity::Mixed => unreachable!(),
    };
    GradedOperator::new(matrix, space)
}

/// Embeds an operator living on `composite[target_index]` into the full
/// composite, dressing with θ factors so that odd operators on distinct
/// fermionic factors anticommute after embedding.
pub fn ampliate(
    x: &GradedOperator,
    target_index: usize,
    composite: &CompositeSpace,
) -> Result<GradedOperator> {
    let factors = composite.factors();
    if target_index >= factors.len() {
        return Err(Error::IndexOutOfRange {
            index: target_index,
            len: factors.len(),
        });
    }
    let target = CompositeSpace::single(factors[target_index].clone());
    if *x.space() != target {
        return Err(Error::DimensionMismatch {
            context: "ampliation target factor",
            left: x.dim(),
            right: factors[target_index].dim(),
        });
    }
    let mut acc = if target_index == 0 {
        x.clone()
    } else {
        let left = CompositeSpace::new(factors[..target_index].to_vec());
        graded_tensor(&GradedOperator::identity(left), x)?
    };
    if target_index + 1 < factors.len() {
        let right = CompositeSpace::new(factors[target_index + 1..].to_vec());
        acc = graded_tensor(&acc, &GradedOperator::identity(right))?;
    }
    Ok(acc)
}

/// `AB − BA`.
pub fn commutator(a: &GradedOperator, b: &GradedOperator) -> Result<GradedOperator> {
    let ab = a.mul(b)?;
    let ba = b.mul(a)?;
    ab.sub(&ba)
}

/// `AB + BA`.
pub fn anticommutator(a: &GradedOperator, b: &GradedOperator) -> Result<GradedOperator> {
    let ab = a.mul(b)?;
    let ba = b.mul(a)?;
    ab.add(&ba)
}

/// Annihilation, creation, and number operators of a single fermion mode.
///
/// Basis order (unoccupied, occupied); θ = diag(+1, −1).
#[derive(Debug, Clone)]
pub struct FermionMode {
    pub space: GradedSpace,
    pub c: GradedOperator,
    pub c_dag: GradedOperator,
    pub n: GradedOperator,
}

/// Builds the single fermion mode: c² = 0, {c, c†} = I, n = c†c.
pub fn fermion_mode() -> FermionMode {
    let space = GradedSpace::fermionic(vec![1, -1]).expect("static signature");
    let comp = CompositeSpace::single(space.clone());
    let c = GradedOperator::new(
        CMatrix::from_real(2, 2, &[0.0, 1.0, 0.0, 0.0]),
        comp.clone(),
    )
    .expect("static matrix");
    let c_dag = c.adjoint();
    let n = c_dag.mul(&c).expect("same space");
    FermionMode { space, c, c_dag, n }
}

/// Lowering/raising/Pauli/number operators of a two-level system on a
/// trivial-parity space, basis order (ground, excited).
#[derive(Debug, Clone)]
pub struct TwoLevel {
    pub space: GradedSpace,
    pub sigma_m: GradedOperator,
    pub sigma_p: GradedOperator,
    pub sigma_x: GradedOperator,
    pub sigma_y: GradedOperator,
    pub sigma_z: GradedOperator,
    pub n: GradedOperator,
}

/// Builds the two-level system. With the (ground, excited) ordering the
/// Pauli triple here satisfies [σx, σy] = 2iσz and cyclic permutations,
/// σ± = (σx ± iσy)/2, and n = σ₊σ₋ counts the excitation.
pub fn two_level() -> TwoLevel {
    let space = GradedSpace::trivial(2);
    let comp = CompositeSpace::single(space.clone());
    let op = |entries: &[C64]| {
        GradedOperator::new(CMatrix::from_rows(2, 2, entries), comp.clone()).expect("static")
    };
    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let sigma_x = op(&[zero, one, one, zero]);
    let sigma_y = op(&[zero, i, -i, zero]);
    let sigma_z = op(&[-one, zero, zero, one]);
    let sigma_m = op(&[zero, one, zero, zero]);
    let sigma_p = sigma_m.adjoint();
    let n = sigma_p.mul(&sigma_m).expect("same space");
    TwoLevel {
        space,
        sigma_m,
        sigma_p,
        sigma_x,
        sigma_y,
        sigma_z,
        n,
    }
}

/// The nine transition operators σ_jk = |j⟩⟨k| of a three-level system,
/// graded according to a caller-supplied parity assignment.
#[derive(Debug, Clone)]
pub struct ThreeLevel {
    pub space: GradedSpace,
    sigma: Vec<GradedOperator>,
}

impl ThreeLevel {
    /// σ_jk with 1-based level labels.
    pub fn sigma(&self, j: usize, k: usize) -> &GradedOperator {
        assert!((1..=3).contains(&j) && (1..=3).contains(&k), "levels are 1..=3");
        &self.sigma[(j - 1) * 3 + (k - 1)]
    }
}

/// Builds a three-level system whose σ_jk parities are given explicitly:
/// `odd_pairs` lists every (j, k) with σ_jk odd, all others even.
///
/// The assignment must be multiplicatively consistent, i.e. realizable by
/// grading the three basis levels; otherwise δ(XY) = δ(X) ⊕ δ(Y) would
/// fail somewhere and the assignment is rejected.
pub fn three_level(odd_pairs: &[(usize, usize)]) -> Result<ThreeLevel> {
    let mut odd = [[false; 3]; 3];
    for &(j, k) in odd_pairs {
        if !(1..=3).contains(&j) || !(1..=3).contains(&k) {
            return Err(Error::InvalidParityAssignment(format!(
                "levels must be 1..=3, got ({j}, {k})"
            )));
        }
        odd[j - 1][k - 1] = true;
    }
    // Fix the grading of level 1 to even; the rest follows from row 1.
    let grade = [false, odd[0][1], odd[0][2]];
    for j in 0..3 {
        for k in 0..3 {
            if odd[j][k] != (grade[j] ^ grade[k]) {
                return Err(Error::InvalidParityAssignment(format!(
                    "sigma_{}{} marked {} but level grading demands {}",
                    j + 1,
                    k + 1,
                    if odd[j][k] { "odd" } else { "even" },
                    if grade[j] ^ grade[k] { "odd" } else { "even" },
                )));
            }
        }
    }
    let signs: Vec<i8> = grade.iter().map(|&g| if g { -1 } else { 1 }).collect();
    let space = if signs.iter().all(|&s| s == 1) {
        GradedSpace::trivial(3)
    } else {
        GradedSpace::fermionic(signs)?
    };
    let comp = CompositeSpace::single(space.clone());
    let mut sigma = Vec::with_capacity(9);
    for j in 0..3 {
        for k in 0..3 {
            let m = CMatrix::from_fn(3, 3, |r, c| {
                if r == j && c == k {
                    C64::new(1.0, 0.0)
                } else {
                    C64::new(0.0, 0.0)
                }
            });
            sigma.push(GradedOperator::new(m, comp.clone())?);
        }
    }
    Ok(ThreeLevel { space, sigma })
}

/// The parity assignment used by the photodetection model: σ32 and σ13
/// (and their adjoints) odd, everything else even.
pub fn detector_parity_assignment() -> Vec<(usize, usize)> {
    vec![(3, 2), (2, 3), (1, 3), (3, 1)]
}
