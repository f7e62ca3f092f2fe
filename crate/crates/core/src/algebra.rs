//! Finite matrix *-algebras: closure of a generator set, maximal commutative
//! subalgebras and their characters, spectral decomposition of Hermitian
//! elements, state functionals, and the GNS representation built from a
//! state.
//!
//! Algebra elements are ordinary square matrices. A [`FiniteAlgebra`] keeps a
//! Frobenius-orthonormal basis of its linear span, so coordinates of an
//! element are plain Frobenius inner products.

use nalgebra::{DMatrix, SymmetricEigen, SVD};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::{c, re, Complex, Matrix, StateVector, ANALYTIC_TOL};

/// Eigenvalues closer than this are merged into one spectral projector.
pub const EIGEN_MERGE_TOL: f64 = 1e-8;

/// Gram eigenvalues below this are treated as the GNS null space.
pub const GNS_NULL_TOL: f64 = 1e-10;

/// A Gram eigenvalue below this means the functional is not positive.
pub const GNS_NEGATIVE_TOL: f64 = 1e-8;

const SPAN_TOL: f64 = 1e-9;
const MEMBERSHIP_TOL: f64 = 1e-8;

// ---------------------------------------------------------------------------
// Span bookkeeping
// ---------------------------------------------------------------------------

/// Frobenius-orthonormal basis grown by Gram–Schmidt.
#[derive(Clone, Debug, Default)]
struct Span {
    elems: Vec<Matrix>,
}

impl Span {
    fn residual(&self, m: &Matrix) -> Matrix {
        // Two passes of classical Gram–Schmidt keep the basis orthonormal to
        // machine precision at these sizes.
        let mut r = m.clone();
        for _ in 0..2 {
            for e in &self.elems {
                let k = e.frobenius_inner(&r);
                r = r.sub(&e.scale(k));
            }
        }
        r
    }

    fn try_insert(&mut self, m: &Matrix) -> bool {
        let r = self.residual(m);
        let n = r.frobenius_norm();
        if n > SPAN_TOL * m.frobenius_norm().max(1.0) {
            self.elems.push(r.scale_real(1.0 / n));
            true
        } else {
            false
        }
    }

    fn contains(&self, m: &Matrix, tol: f64) -> bool {
        self.residual(m).frobenius_norm() <= tol * m.frobenius_norm().max(1.0)
    }
}

/// Closes `seed` under products (and adjoints when `star` is set). The
/// identity is always included. Capped at `dim²` elements.
fn close(dim: usize, seed: &[Matrix], star: bool) -> Vec<Matrix> {
    let mut span = Span::default();
    span.try_insert(&Matrix::identity(dim));
    for g in seed {
        span.try_insert(g);
        if star {
            span.try_insert(&g.adjoint());
        }
    }
    let cap = dim * dim;
    let mut done = 0;
    // Products of span elements with the seed generate the whole algebra.
    let mut gens: Vec<Matrix> = seed.to_vec();
    if star {
        gens.extend(seed.iter().map(Matrix::adjoint));
    }
    while done < span.elems.len() && span.elems.len() < cap {
        let current = span.elems[done].clone();
        for g in &gens {
            span.try_insert(&current.mul(g));
            span.try_insert(&g.mul(&current));
            if span.elems.len() >= cap {
                break;
            }
        }
        done += 1;
    }
    span.elems
}

// ---------------------------------------------------------------------------
// FiniteAlgebra
// ---------------------------------------------------------------------------

/// Unital *-algebra of `dim × dim` matrices generated by a set of matrices.
#[derive(Clone, Debug)]
pub struct FiniteAlgebra {
    dim: usize,
    generators: Vec<Matrix>,
    basis: Vec<Matrix>,
}

impl FiniteAlgebra {
    pub fn generated_by(generators: Vec<Matrix>) -> Result<Self> {
        let dim = generators
            .first()
            .map(Matrix::dim)
            .ok_or_else(|| Error::InvalidInput("algebra needs at least one generator".into()))?;
        if let Some(bad) = generators.iter().find(|g| g.dim() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.dim() });
        }
        let basis = close(dim, &generators, true);
        Ok(Self { dim, generators, basis })
    }

    /// The full algebra of `dim × dim` complex matrices (matrix-unit basis).
    pub fn full(dim: usize) -> Self {
        let basis: Vec<Matrix> = (0..dim * dim)
            .map(|k| {
                let (i, j) = (k / dim, k % dim);
                Matrix::from_fn(dim, |r, s| if r == i && s == j { Complex::ONE } else { Complex::ZERO })
            })
            .collect();
        Self { dim, generators: basis.clone(), basis }
    }

    /// Algebra of spin observables of `n` spin-½ particles.
    pub fn spins(n: usize) -> Self {
        use crate::linalg::spin;
        let mut gens = Vec::new();
        for site in 0..n {
            for op in [spin::sx(), spin::sy(), spin::sz()] {
                gens.push(spin::embed(&op, site, n));
            }
        }
        Self::generated_by(gens).expect("spin generators are valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn generators(&self) -> &[Matrix] {
        &self.generators
    }

    /// Frobenius-orthonormal basis of the algebra.
    pub fn basis(&self) -> &[Matrix] {
        &self.basis
    }

    pub fn size(&self) -> usize {
        self.basis.len()
    }

    pub fn contains(&self, m: &Matrix, tol: f64) -> bool {
        m.dim() == self.dim && Span { elems: self.basis.clone() }.contains(m, tol)
    }

    /// Coordinates of `m` in the basis; errors if `m` is outside the span.
    pub fn coordinates(&self, m: &Matrix) -> Result<Vec<Complex>> {
        if m.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: m.dim() });
        }
        if !self.contains(m, MEMBERSHIP_TOL) {
            return Err(Error::InvalidInput("element is not in the algebra".into()));
        }
        Ok(self.basis.iter().map(|b| b.frobenius_inner(m)).collect())
    }

    pub fn combine(&self, coords: &[Complex]) -> Matrix {
        self.basis
            .iter()
            .zip(coords)
            .fold(Matrix::zeros(self.dim), |acc, (b, &k)| acc.add(&b.scale(k)))
    }

    /// Random element with standard-normal-ish complex coordinates.
    pub fn random_element<R: Rng + ?Sized>(&self, rng: &mut R) -> Matrix {
        let coords: Vec<Complex> = (0..self.size())
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect();
        self.combine(&coords)
    }

    /// Closure check: every basis product and adjoint lies in the span.
    pub fn is_closed(&self) -> bool {
        let span = Span { elems: self.basis.clone() };
        self.basis.iter().all(|a| {
            span.contains(&a.adjoint(), MEMBERSHIP_TOL)
                && self.basis.iter().all(|b| span.contains(&a.mul(b), MEMBERSHIP_TOL))
        })
    }
}

// ---------------------------------------------------------------------------
// Spectral decomposition
// ---------------------------------------------------------------------------

#[derive(Clone, Debug)]
pub struct SpectralTerm {
    pub eigenvalue: f64,
    pub projector: Matrix,
}

/// Spectral expansion `h = Σ λ_k P_k` of a Hermitian matrix, eigenvalues
/// ascending, near-degenerate eigenvalues (within 1e-8) merged.
pub fn spectral_decompose(h: &Matrix) -> Result<Vec<SpectralTerm>> {
    let dev = h.hermiticity_deviation();
    if dev > ANALYTIC_TOL {
        return Err(Error::NotHermitian { deviation: dev });
    }
    // Symmetrize away the sub-tolerance anti-Hermitian part.
    let sym = h.add(&h.adjoint()).scale_real(0.5);
    let eig = SymmetricEigen::new(sym.as_nalgebra().clone());
    let n = h.dim();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut terms: Vec<(Vec<f64>, Matrix)> = Vec::new();
    for &k in &order {
        let lambda = eig.eigenvalues[k];
        let col = eig.eigenvectors.column(k);
        let proj = Matrix::from_fn(n, |i, j| col[i] * col[j].conj());
        match terms.last_mut() {
            Some((vals, p)) if (lambda - vals[vals.len() - 1]).abs() < EIGEN_MERGE_TOL => {
                vals.push(lambda);
                *p = p.add(&proj);
            }
            _ => terms.push((vec![lambda], proj)),
        }
    }
    Ok(terms
        .into_iter()
        .map(|(vals, projector)| SpectralTerm {
            eigenvalue: vals.iter().sum::<f64>() / vals.len() as f64,
            projector,
        })
        .collect())
}

// ---------------------------------------------------------------------------
// Commutative subalgebras and characters
// ---------------------------------------------------------------------------

/// A commutative subalgebra `Q_ξ` of a parent algebra: one measurement
/// context.
#[derive(Clone, Debug)]
pub struct CommutativeSubalgebra {
    parent: FiniteAlgebra,
    generators: Vec<Matrix>,
    basis: Vec<Matrix>,
    label: String,
}

impl CommutativeSubalgebra {
    /// Unital algebra generated by `generators` (closed under products,
    /// not adjoints: generators are expected to be Hermitian).
    pub fn generated(
        parent: &FiniteAlgebra,
        generators: Vec<Matrix>,
        label: impl Into<String>,
    ) -> Result<Self> {
        for g in &generators {
            if !parent.contains(g, MEMBERSHIP_TOL) {
                return Err(Error::InvalidInput("generator is outside the parent algebra".into()));
            }
        }
        let basis = close(parent.dim(), &generators, false);
        Ok(Self { parent: parent.clone(), generators, basis, label: label.into() })
    }

    /// The linear span of `elements`, without closing under products. Used
    /// to test candidate sets that may fail the subalgebra invariants.
    pub fn spanned_by(
        parent: &FiniteAlgebra,
        elements: Vec<Matrix>,
        label: impl Into<String>,
    ) -> Self {
        let mut span = Span::default();
        for e in &elements {
            span.try_insert(e);
        }
        Self { parent: parent.clone(), generators: elements, basis: span.elems, label: label.into() }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn parent(&self) -> &FiniteAlgebra {
        &self.parent
    }

    pub fn generators(&self) -> &[Matrix] {
        &self.generators
    }

    pub fn basis(&self) -> &[Matrix] {
        &self.basis
    }

    pub fn contains(&self, m: &Matrix, tol: f64) -> bool {
        Span { elems: self.basis.clone() }.contains(m, tol)
    }

    pub fn is_commutative(&self, tol: f64) -> bool {
        self.basis.iter().enumerate().all(|(i, a)| {
            self.basis[i + 1..].iter().all(|b| a.commutator(b).max_abs() < tol)
        })
    }

    /// Dimension of the commutant of this set inside the parent algebra.
    fn commutant_dim(&self) -> usize {
        let pb = self.parent.basis();
        let d = self.parent.dim();
        let rows = self.basis.len() * d * d;
        let cols = pb.len();
        let mut l = DMatrix::<Complex>::zeros(rows, cols);
        for (col, x) in pb.iter().enumerate() {
            for (qi, q) in self.basis.iter().enumerate() {
                let comm = x.commutator(q);
                for (k, z) in comm.entries().enumerate() {
                    l[(qi * d * d + k, col)] = *z;
                }
            }
        }
        let svd = SVD::new(l, false, false);
        let rank = svd.singular_values.iter().filter(|&&s| s > 1e-9).count();
        cols - rank
    }

    /// Commutative, contained in the parent, and equal to its own commutant
    /// there.
    pub fn is_maximal_commutative(&self) -> bool {
        if !self.is_commutative(ANALYTIC_TOL) {
            return false;
        }
        if !self.basis.iter().all(|b| self.parent.contains(b, MEMBERSHIP_TOL)) {
            return false;
        }
        if !self.contains(&Matrix::identity(self.parent.dim()), MEMBERSHIP_TOL) {
            return false;
        }
        self.commutant_dim() == self.basis.len()
    }
}

pub fn check_maximal_commutative(q: &CommutativeSubalgebra) -> bool {
    q.is_maximal_commutative()
}

/// A character of a commutative subalgebra, stored as its values on the
/// subalgebra's generator list together with the joint eigenprojector that
/// realizes it.
#[derive(Clone, Debug)]
pub struct Character {
    context: String,
    generator_values: Vec<f64>,
    projector: Matrix,
}

impl Character {
    pub fn context(&self) -> &str {
        &self.context
    }

    /// Values on the generating observables, in generator order.
    pub fn values(&self) -> &[f64] {
        &self.generator_values
    }

    /// Joint eigenprojector of the context selected by this character.
    pub fn projector(&self) -> &Matrix {
        &self.projector
    }

    /// Value on any element of the subalgebra.
    pub fn evaluate(&self, a: &Matrix) -> Complex {
        self.projector.mul(a).trace() / self.projector.trace()
    }
}

/// All characters of `q`, found by simultaneous diagonalization of its
/// generators.
pub fn enumerate_characters(q: &CommutativeSubalgebra) -> Vec<Character> {
    let d = q.parent.dim();
    // Hermitian parts of every generator; a commuting family stays commuting.
    let mut observables = Vec::new();
    for g in &q.generators {
        let h = g.add(&g.adjoint()).scale_real(0.5);
        let k = g.sub(&g.adjoint()).scale(c(0.0, -0.5));
        observables.push(h);
        if k.max_abs() > ANALYTIC_TOL {
            observables.push(k);
        }
    }
    let mut blocks = vec![Matrix::identity(d)];
    for h in &observables {
        let mut next = Vec::new();
        for p in &blocks {
            let restricted = p.mul(h).mul(p);
            let terms = spectral_decompose(&restricted).expect("restriction is Hermitian");
            for t in terms {
                let sub = p.mul(&t.projector);
                if sub.trace().re > 0.5 {
                    next.push(sub);
                }
            }
        }
        blocks = next;
    }
    blocks
        .into_iter()
        .map(|p| {
            let tr = p.trace().re;
            let generator_values =
                q.generators.iter().map(|g| (p.mul(g).trace() / tr).re).collect();
            Character { context: q.label.clone(), generator_values, projector: p }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// State functionals
// ---------------------------------------------------------------------------

/// Linear functional on a finite algebra, stored as its values on the
/// algebra basis.
#[derive(Clone, Debug)]
pub struct StateFunctional {
    algebra: FiniteAlgebra,
    values: Vec<Complex>,
    /// `W = Σ_i Ψ(B_i) B_i†`, so that `Ψ(X) = tr(W X)` on the algebra.
    density: Matrix,
}

impl StateFunctional {
    pub fn from_values(algebra: &FiniteAlgebra, values: Vec<Complex>) -> Result<Self> {
        if values.len() != algebra.size() {
            return Err(Error::DimensionMismatch { expected: algebra.size(), found: values.len() });
        }
        let density = algebra
            .basis()
            .iter()
            .zip(&values)
            .fold(Matrix::zeros(algebra.dim()), |acc, (b, &v)| acc.add(&b.adjoint().scale(v)));
        Ok(Self { algebra: algebra.clone(), values, density })
    }

    pub fn from_fn(algebra: &FiniteAlgebra, f: impl Fn(&Matrix) -> Complex) -> Self {
        let values = algebra.basis().iter().map(f).collect();
        Self::from_values(algebra, values).expect("one value per basis element")
    }

    /// Vector state `A ↦ ⟨v|A|v⟩`.
    pub fn vector_state(algebra: &FiniteAlgebra, v: &StateVector) -> Result<Self> {
        if v.dim() != algebra.dim() {
            return Err(Error::DimensionMismatch { expected: algebra.dim(), found: v.dim() });
        }
        let v = v.normalize()?;
        Ok(Self::from_fn(algebra, |b| v.expectation(b).expect("dims checked")))
    }

    /// Normalized trace `A ↦ tr(A)/dim`.
    pub fn normalized_trace(algebra: &FiniteAlgebra) -> Self {
        let d = algebra.dim() as f64;
        Self::from_fn(algebra, |b| b.trace() / d)
    }

    pub fn algebra(&self) -> &FiniteAlgebra {
        &self.algebra
    }

    /// Values on the algebra basis.
    pub fn values(&self) -> &[Complex] {
        &self.values
    }

    /// `Ψ(a)` for an element of the algebra.
    pub fn evaluate(&self, a: &Matrix) -> Result<Complex> {
        if a.dim() != self.algebra.dim() {
            return Err(Error::DimensionMismatch { expected: self.algebra.dim(), found: a.dim() });
        }
        if !self.algebra.contains(a, MEMBERSHIP_TOL) {
            return Err(Error::InvalidInput("element is not in the algebra".into()));
        }
        Ok(self.eval_unchecked(a))
    }

    #[inline]
    fn eval_unchecked(&self, a: &Matrix) -> Complex {
        self.density.mul(a).trace()
    }

    /// Gram matrix `G_ij = Ψ(B_i* B_j)` of the GNS sesquilinear form.
    fn gram(&self) -> DMatrix<Complex> {
        let b = self.algebra.basis();
        let n = b.len();
        let adj: Vec<Matrix> = b.iter().map(Matrix::adjoint).collect();
        DMatrix::from_fn(n, n, |i, j| self.eval_unchecked(&adj[i].mul(&b[j])))
    }

    /// Smallest eigenvalue of the Gram matrix; non-negative iff positive.
    pub fn min_gram_eigenvalue(&self) -> f64 {
        let g = self.gram();
        let g = (&g + g.adjoint()) * re(0.5);
        SymmetricEigen::new(g).eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn is_normalized(&self) -> bool {
        (self.eval_unchecked(&Matrix::identity(self.algebra.dim())) - Complex::ONE).norm() <= 1e-12
    }

    pub fn is_positive(&self) -> bool {
        self.min_gram_eigenvalue() >= -ANALYTIC_TOL
    }
}

/// The functional `Ψ` defined by `p A p = Ψ(A) p` for a rank-one projector
/// `p`, i.e. `Ψ(A) = tr(pAp)/tr(p)`.
pub fn state_from_projector(p: &Matrix, algebra: &FiniteAlgebra) -> Result<StateFunctional> {
    if p.dim() != algebra.dim() {
        return Err(Error::DimensionMismatch { expected: algebra.dim(), found: p.dim() });
    }
    if !p.is_projector(ANALYTIC_TOL) {
        return Err(Error::InvalidInput("matrix is not a projector".into()));
    }
    let tr = p.trace().re;
    if (tr - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidInput(format!("projector has rank {tr:.3}, expected 1")));
    }
    Ok(StateFunctional::from_fn(algebra, |a| p.mul(a).mul(p).trace() / tr))
}

// ---------------------------------------------------------------------------
// GNS construction
// ---------------------------------------------------------------------------

/// Hilbert-space representation of an algebra built from a state.
#[derive(Clone, Debug)]
pub struct GnsRepresentation {
    source: StateFunctional,
    rep_dim: usize,
    cyclic: StateVector,
    /// `rep(B_i)` for every algebra basis element.
    rep_map: Vec<Matrix>,
}

impl GnsRepresentation {
    pub fn source(&self) -> &StateFunctional {
        &self.source
    }

    pub fn rep_dim(&self) -> usize {
        self.rep_dim
    }

    /// `Φ(I)`.
    pub fn cyclic_vector(&self) -> &StateVector {
        &self.cyclic
    }

    pub fn basis_images(&self) -> &[Matrix] {
        &self.rep_map
    }

    /// `Π(a)` for any algebra element, by linearity.
    pub fn represent(&self, a: &Matrix) -> Result<Matrix> {
        let coords = self.source.algebra.coordinates(a)?;
        Ok(self
            .rep_map
            .iter()
            .zip(coords)
            .fold(Matrix::zeros(self.rep_dim), |acc, (r, k)| acc.add(&r.scale(k))))
    }

    /// `(Φ(I), Π(a) Φ(I))`.
    pub fn vacuum_expectation(&self, a: &Matrix) -> Result<Complex> {
        self.cyclic.expectation(&self.represent(a)?)
    }
}

/// GNS construction: quotient the algebra by the null space of the form
/// `(U, V) ↦ Ψ(U*V)`, orthonormalize, and represent elements by left
/// multiplication.
pub fn gns_construct(psi: &StateFunctional) -> Result<GnsRepresentation> {
    let basis = psi.algebra.basis();
    let n = basis.len();
    let g = psi.gram();
    let g = (&g + g.adjoint()) * re(0.5);
    let eig = SymmetricEigen::new(g);
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -GNS_NEGATIVE_TOL {
        return Err(Error::InvalidState(format!(
            "functional is not positive (Gram eigenvalue {min:.3e})"
        )));
    }
    // Columns of `coeff` express the orthonormal quotient vectors e_k as
    // combinations Σ_i coeff[i,k] Φ(B_i).
    let kept: Vec<usize> = (0..n).filter(|&k| eig.eigenvalues[k] > GNS_NULL_TOL).collect();
    let r = kept.len();
    if r == 0 {
        return Err(Error::InvalidState("functional vanishes on the algebra".into()));
    }
    let coeff = DMatrix::from_fn(n, r, |i, k| {
        let col = kept[k];
        eig.eigenvectors[(i, col)] / eig.eigenvalues[col].sqrt()
    });

    let adj: Vec<Matrix> = basis.iter().map(Matrix::adjoint).collect();
    let mut rep_map = Vec::with_capacity(n);
    for a in basis {
        // M_ij = Ψ(B_i* A B_j); rep(A) = C† M C.
        let m = DMatrix::from_fn(n, n, |i, j| psi.eval_unchecked(&adj[i].mul(a).mul(&basis[j])));
        let rep = coeff.adjoint() * m * &coeff;
        rep_map.push(Matrix::from_nalgebra(rep));
    }
    let cyclic_amps: Vec<Complex> = (0..r)
        .map(|k| (0..n).map(|i| coeff[(i, k)].conj() * psi.eval_unchecked(&adj[i])).sum())
        .collect();
    let cyclic = StateVector::new(cyclic_amps)?;
    Ok(GnsRepresentation { source: psi.clone(), rep_dim: r, cyclic, rep_map })
}

// ---------------------------------------------------------------------------
// Two-spin observables
// ---------------------------------------------------------------------------

/// Standard observables of a pair of spin-½ particles.
pub mod two_spin {
    use crate::linalg::{spin, Matrix};

    pub fn s1z() -> Matrix {
        spin::embed(&spin::sz(), 0, 2)
    }

    pub fn s2z() -> Matrix {
        spin::embed(&spin::sz(), 1, 2)
    }

    /// Total `S_z = σ₁z + σ₂z`.
    pub fn sz_total() -> Matrix {
        s1z().add(&s2z())
    }

    /// Total spin squared `S² = (σ₁ + σ₂)²`, eigenvalues 0 (singlet) and 2.
    pub fn s_squared() -> Matrix {
        [spin::sx(), spin::sy(), spin::sz()]
            .iter()
            .map(|op| {
                let total = spin::embed(op, 0, 2).add(&spin::embed(op, 1, 2));
                total.mul(&total)
            })
            .fold(Matrix::zeros(4), |acc, m| acc.add(&m))
    }

    /// The one-dimensional projector `(1 + 2σ₁z)(1 + 2σ₂z)/4`.
    pub fn p_up_up() -> Matrix {
        let id = Matrix::identity(4);
        id.add(&s1z().scale_real(2.0)).mul(&id.add(&s2z().scale_real(2.0))).scale_real(0.25)
    }
}
