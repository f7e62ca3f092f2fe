//! Dense complex linear algebra for the small Hilbert spaces used by the
//! experiments (at most four two-level subsystems, i.e. dimension ≤ 16).
//!
//! [`Matrix`] is a thin wrapper over `nalgebra::DMatrix<Complex64>`; the
//! Hermitian eigensolver is nalgebra's. Everything else (state vectors,
//! tensor products, projective measurement) lives here.

use nalgebra::DMatrix;
use rand::Rng;

use crate::error::{Error, Result};

pub use num_complex::Complex64 as Complex;

/// Tolerance for analytic identities (norms, unitarity, hermiticity).
pub const ANALYTIC_TOL: f64 = 1e-10;

/// Branches with `‖P v‖` below this are never legitimately selected.
pub const ZERO_BRANCH_TOL: f64 = 1e-12;

/// The seeded generator used throughout. Every random operation takes one
/// explicitly; nothing reads global randomness.
pub type SeededRng = rand_chacha::ChaCha8Rng;

#[inline]
pub fn c(re: f64, im: f64) -> Complex {
    Complex::new(re, im)
}

#[inline]
pub fn re(x: f64) -> Complex {
    Complex::new(x, 0.0)
}

// ---------------------------------------------------------------------------
// Matrix
// ---------------------------------------------------------------------------

/// Square complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Matrix {
    inner: DMatrix<Complex>,
}

impl Matrix {
    pub fn zeros(dim: usize) -> Self {
        Self { inner: DMatrix::zeros(dim, dim) }
    }

    pub fn identity(dim: usize) -> Self {
        Self { inner: DMatrix::identity(dim, dim) }
    }

    pub fn from_fn(dim: usize, f: impl FnMut(usize, usize) -> Complex) -> Self {
        Self { inner: DMatrix::from_fn(dim, dim, f) }
    }

    /// Builds a matrix from row-major entries. Panics if `rows` is not square.
    pub fn from_rows(rows: &[Vec<Complex>]) -> Self {
        let dim = rows.len();
        assert!(rows.iter().all(|r| r.len() == dim), "matrix rows must be square");
        Self::from_fn(dim, |i, j| rows[i][j])
    }

    pub fn from_real_rows(rows: &[Vec<f64>]) -> Self {
        let dim = rows.len();
        assert!(rows.iter().all(|r| r.len() == dim), "matrix rows must be square");
        Self::from_fn(dim, |i, j| re(rows[i][j]))
    }

    pub fn diag(entries: &[Complex]) -> Self {
        let dim = entries.len();
        Self::from_fn(dim, |i, j| if i == j { entries[i] } else { Complex::ZERO })
    }

    pub fn diag_real(entries: &[f64]) -> Self {
        let dim = entries.len();
        Self::from_fn(dim, |i, j| if i == j { re(entries[i]) } else { Complex::ZERO })
    }

    /// `|v⟩⟨v|` (not normalized by `⟨v|v⟩`).
    pub fn outer(v: &StateVector) -> Self {
        let a = v.amplitudes();
        Self::from_fn(a.len(), |i, j| a[i] * a[j].conj())
    }

    /// `|a⟩⟨b|`.
    pub fn ket_bra(a: &StateVector, b: &StateVector) -> Result<Self> {
        check_dim(a.dim(), b.dim())?;
        let (x, y) = (a.amplitudes(), b.amplitudes());
        Ok(Self::from_fn(x.len(), |i, j| x[i] * y[j].conj()))
    }

    /// Matrix that claims to be Hermitian; checked to 1e-10.
    pub fn hermitian(m: Matrix) -> Result<Self> {
        let dev = m.hermiticity_deviation();
        if dev > ANALYTIC_TOL {
            return Err(Error::NotHermitian { deviation: dev });
        }
        Ok(m)
    }

    /// Matrix that claims to be unitary; checked to 1e-10.
    pub fn unitary(m: Matrix) -> Result<Self> {
        let dev = m.unitarity_deviation();
        if dev > ANALYTIC_TOL {
            return Err(Error::ContractViolation(format!(
                "matrix is not unitary (deviation {dev:.3e})"
            )));
        }
        Ok(m)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.inner.nrows()
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> Complex {
        self.inner[(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, value: Complex) {
        self.inner[(i, j)] = value;
    }

    pub fn adjoint(&self) -> Self {
        Self { inner: self.inner.adjoint() }
    }

    pub fn trace(&self) -> Complex {
        self.inner.trace()
    }

    pub fn scale(&self, k: Complex) -> Self {
        Self { inner: &self.inner * k }
    }

    pub fn scale_real(&self, k: f64) -> Self {
        self.scale(re(k))
    }

    pub fn add(&self, other: &Matrix) -> Self {
        Self { inner: &self.inner + &other.inner }
    }

    pub fn sub(&self, other: &Matrix) -> Self {
        Self { inner: &self.inner - &other.inner }
    }

    pub fn mul(&self, other: &Matrix) -> Self {
        Self { inner: &self.inner * &other.inner }
    }

    pub fn commutator(&self, other: &Matrix) -> Self {
        self.mul(other).sub(&other.mul(self))
    }

    /// Kronecker product `self ⊗ other`.
    pub fn kron(&self, other: &Matrix) -> Self {
        Self { inner: self.inner.kronecker(&other.inner) }
    }

    /// Frobenius inner product `tr(self† other)`.
    pub fn frobenius_inner(&self, other: &Matrix) -> Complex {
        self.inner.iter().zip(other.inner.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.inner.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// Largest entrywise modulus.
    pub fn max_abs(&self) -> f64 {
        self.inner.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn hermiticity_deviation(&self) -> f64 {
        self.sub(&self.adjoint()).max_abs()
    }

    pub fn unitarity_deviation(&self) -> f64 {
        self.adjoint().mul(self).sub(&Matrix::identity(self.dim())).max_abs()
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_deviation() <= tol
    }

    pub fn is_projector(&self, tol: f64) -> bool {
        self.is_hermitian(tol) && self.mul(self).sub(self).max_abs() <= tol
    }

    pub fn approx_eq(&self, other: &Matrix, tol: f64) -> bool {
        self.dim() == other.dim() && self.sub(other).max_abs() <= tol
    }

    pub fn is_finite(&self) -> bool {
        self.inner.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub(crate) fn as_nalgebra(&self) -> &DMatrix<Complex> {
        &self.inner
    }

    pub(crate) fn from_nalgebra(inner: DMatrix<Complex>) -> Self {
        assert_eq!(inner.nrows(), inner.ncols());
        Self { inner }
    }

    /// Column-major entries, used when a matrix is treated as a vector in
    /// the space of operators.
    pub fn entries(&self) -> impl Iterator<Item = &Complex> {
        self.inner.iter()
    }
}

/// Ordinary matrix-vector product. Not renormalized: projectors may shrink
/// the norm.
pub fn apply(m: &Matrix, v: &StateVector) -> Result<StateVector> {
    check_dim(m.dim(), v.dim())?;
    let amps = (0..m.dim())
        .map(|i| (0..m.dim()).map(|j| m.get(i, j) * v.amps[j]).sum())
        .collect();
    Ok(StateVector { amps, labels: v.labels.clone() })
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// StateVector
// ---------------------------------------------------------------------------

/// Complex amplitude vector over a labelled finite basis.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: Vec<Complex>,
    labels: Vec<String>,
}

impl StateVector {
    /// Builds a vector with explicit basis labels. Rejects non-finite
    /// amplitudes and label/amplitude count mismatches. Does not normalize.
    pub fn with_labels(amps: Vec<Complex>, labels: Vec<String>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::InvalidInput("state vector must have dim ≥ 1".into()));
        }
        check_dim(amps.len(), labels.len())?;
        if amps.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::InvalidInput("non-finite amplitude".into()));
        }
        Ok(Self { amps, labels })
    }

    /// Builds a vector labelled `0..dim`.
    pub fn new(amps: Vec<Complex>) -> Result<Self> {
        let labels = (0..amps.len()).map(|i| i.to_string()).collect();
        Self::with_labels(amps, labels)
    }

    pub fn from_real(amps: &[f64]) -> Result<Self> {
        Self::new(amps.iter().map(|&x| re(x)).collect())
    }

    /// Computational basis vector `e_index`.
    pub fn basis(dim: usize, index: usize) -> Self {
        assert!(index < dim);
        let mut amps = vec![Complex::ZERO; dim];
        amps[index] = Complex::ONE;
        Self::new(amps).expect("basis vector is valid")
    }

    pub fn relabel(mut self, labels: Vec<String>) -> Result<Self> {
        check_dim(self.amps.len(), labels.len())?;
        self.labels = labels;
        Ok(self)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    #[inline]
    pub fn amplitudes(&self) -> &[Complex] {
        &self.amps
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn is_normalized(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn normalize(&self) -> Result<Self> {
        let n = self.norm();
        if n < ZERO_BRANCH_TOL {
            return Err(Error::InvalidState("cannot normalize a zero vector".into()));
        }
        Ok(self.scale(re(1.0 / n)))
    }

    pub fn scale(&self, k: Complex) -> Self {
        Self { amps: self.amps.iter().map(|z| z * k).collect(), labels: self.labels.clone() }
    }

    pub fn add(&self, other: &StateVector) -> Result<Self> {
        check_dim(self.dim(), other.dim())?;
        let amps = self.amps.iter().zip(&other.amps).map(|(a, b)| a + b).collect();
        Ok(Self { amps, labels: self.labels.clone() })
    }

    /// `|amplitude_i|²` for every basis index.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amps.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Index of the basis element with the given label.
    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// `⟨v|M|v⟩`.
    pub fn expectation(&self, m: &Matrix) -> Result<Complex> {
        let mv = apply(m, self)?;
        inner(self, &mv)
    }
}

/// Kronecker product of two vectors; basis labels are concatenated.
pub fn tensor(a: &StateVector, b: &StateVector) -> StateVector {
    let mut amps = Vec::with_capacity(a.dim() * b.dim());
    let mut labels = Vec::with_capacity(a.dim() * b.dim());
    for (x, lx) in a.amps.iter().zip(&a.labels) {
        for (y, ly) in b.amps.iter().zip(&b.labels) {
            amps.push(x * y);
            labels.push(format!("{lx}{ly}"));
        }
    }
    StateVector { amps, labels }
}

/// `⟨a|b⟩`, conjugate-linear in `a`.
pub fn inner(a: &StateVector, b: &StateVector) -> Result<Complex> {
    check_dim(a.dim(), b.dim())?;
    Ok(a.amps.iter().zip(&b.amps).map(|(x, y)| x.conj() * y).sum())
}

/// Phase-insensitive overlap `|⟨a|b⟩|²`.
pub fn fidelity(a: &StateVector, b: &StateVector) -> Result<f64> {
    Ok(inner(a, b)?.norm_sqr())
}

// ---------------------------------------------------------------------------
// Projective measurement
// ---------------------------------------------------------------------------

/// A validated resolution of the identity into orthogonal projectors.
#[derive(Clone, Debug)]
pub struct ProjectiveMeasurement {
    projectors: Vec<Matrix>,
}

impl ProjectiveMeasurement {
    /// Checks that the projectors are Hermitian idempotents, pairwise
    /// orthogonal, and sum to the identity, all within 1e-10.
    pub fn new(projectors: Vec<Matrix>) -> Result<Self> {
        let Some(first) = projectors.first() else {
            return Err(Error::ContractViolation("empty projector set".into()));
        };
        let dim = first.dim();
        let mut sum = Matrix::zeros(dim);
        for (k, p) in projectors.iter().enumerate() {
            check_dim(dim, p.dim())?;
            if !p.is_projector(ANALYTIC_TOL) {
                return Err(Error::ContractViolation(format!("element {k} is not a projector")));
            }
            sum = sum.add(p);
        }
        for j in 0..projectors.len() {
            for k in j + 1..projectors.len() {
                if projectors[j].mul(&projectors[k]).max_abs() > ANALYTIC_TOL {
                    return Err(Error::ContractViolation(format!(
                        "projectors {j} and {k} are not orthogonal"
                    )));
                }
            }
        }
        if !sum.approx_eq(&Matrix::identity(dim), ANALYTIC_TOL) {
            return Err(Error::ContractViolation(
                "projectors do not sum to the identity".into(),
            ));
        }
        Ok(Self { projectors })
    }

    pub fn projectors(&self) -> &[Matrix] {
        &self.projectors
    }

    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    /// Born weights `⟨v|P_k|v⟩` (relative to `⟨v|v⟩`).
    pub fn weights(&self, v: &StateVector) -> Result<Vec<f64>> {
        let norm2 = v.norm().powi(2);
        self.projectors
            .iter()
            .map(|p| Ok(v.expectation(p)?.re / norm2))
            .collect()
    }

    /// Samples outcome `k` with probability `⟨v|P_k|v⟩` using exactly one
    /// uniform draw, returning `k` and the renormalized post-measurement
    /// state `P_k v / ‖P_k v‖`.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        v: &StateVector,
        rng: &mut R,
    ) -> Result<(usize, StateVector)> {
        let weights = self.weights(v)?;
        let u: f64 = rng.random();
        let k = pick_index(&weights, u);
        let projected = apply(&self.projectors[k], v)?;
        if projected.norm() < ZERO_BRANCH_TOL {
            return Err(Error::ContractViolation(format!(
                "selected zero-probability branch {k}"
            )));
        }
        Ok((k, projected.normalize()?))
    }
}

/// Chooses an index from non-negative weights given a uniform `u ∈ [0,1)`.
/// Zero-weight entries are never chosen.
pub(crate) fn pick_index(weights: &[f64], u: f64) -> usize {
    let total: f64 = weights.iter().map(|w| w.max(0.0)).sum();
    let target = u * total;
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (k, &w) in weights.iter().enumerate() {
        let w = w.max(0.0);
        if w > 0.0 {
            last_positive = k;
            acc += w;
            if target < acc {
                return k;
            }
        }
    }
    last_positive
}

/// One-shot projective measurement (validates the projector set each call).
pub fn born_sample<R: Rng + ?Sized>(
    v: &StateVector,
    projectors: &[Matrix],
    rng: &mut R,
) -> Result<(usize, StateVector)> {
    ProjectiveMeasurement::new(projectors.to_vec())?.sample(v, rng)
}

// ---------------------------------------------------------------------------
// Spin-½ operators (eigenvalues ±½) and common qubit matrices
// ---------------------------------------------------------------------------

pub mod spin {
    use super::{c, re, Complex, Matrix};

    /// Spin-½ components `σ_x, σ_y, σ_z` with eigenvalues ±½.
    pub fn sx() -> Matrix {
        Matrix::from_real_rows(&[vec![0.0, 0.5], vec![0.5, 0.0]])
    }

    pub fn sy() -> Matrix {
        Matrix::from_rows(&[vec![Complex::ZERO, c(0.0, -0.5)], vec![c(0.0, 0.5), Complex::ZERO]])
    }

    pub fn sz() -> Matrix {
        Matrix::diag_real(&[0.5, -0.5])
    }

    /// Spin projection `n·σ` for a unit vector `n`.
    pub fn along(n: [f64; 3]) -> Matrix {
        sx().scale(re(n[0])).add(&sy().scale(re(n[1]))).add(&sz().scale(re(n[2])))
    }

    /// Embeds a single-particle operator at `site` of an `n`-particle
    /// two-level system.
    pub fn embed(op: &Matrix, site: usize, n: usize) -> Matrix {
        (0..n).fold(Matrix::identity(1), |acc, k| {
            if k == site {
                acc.kron(op)
            } else {
                acc.kron(&Matrix::identity(2))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn plus_minus() -> (StateVector, StateVector) {
        let p = StateVector::basis(2, 0).relabel(vec!["+".into(), "-".into()]).unwrap();
        let m = StateVector::basis(2, 1).relabel(vec!["+".into(), "-".into()]).unwrap();
        (p, m)
    }

    #[test]
    fn tensor_of_plus_minus() {
        let (p, m) = plus_minus();
        let t = tensor(&p, &m);
        assert_eq!(t.amplitudes(), &[Complex::ZERO, Complex::ONE, Complex::ZERO, Complex::ZERO]);
        assert_eq!(t.labels(), &["++", "+-", "-+", "--"]);
    }

    #[test]
    fn tensor_index_arithmetic() {
        for i in 0..3 {
            for j in 0..4 {
                let t = tensor(&StateVector::basis(3, i), &StateVector::basis(4, j));
                let nz: Vec<_> = (0..12).filter(|&k| t.amplitudes()[k] != Complex::ZERO).collect();
                assert_eq!(nz, vec![i * 4 + j]);
            }
        }
    }

    #[test]
    fn apply_identity_and_projector() {
        let v = StateVector::new(vec![c(0.6, 0.0), c(0.0, 0.8)]).unwrap();
        assert_eq!(apply(&Matrix::identity(2), &v).unwrap(), v);
        let p0 = Matrix::diag_real(&[1.0, 0.0]);
        let out = apply(&p0, &v).unwrap();
        assert_eq!(out.amplitudes(), &[c(0.6, 0.0), Complex::ZERO]);
    }

    #[test]
    fn apply_dimension_mismatch() {
        let v = StateVector::basis(3, 0);
        assert!(matches!(
            apply(&Matrix::identity(2), &v),
            Err(Error::DimensionMismatch { expected: 2, found: 3 })
        ));
        assert!(inner(&v, &StateVector::basis(2, 0)).is_err());
    }

    #[test]
    fn inner_is_conjugate_linear_in_first_argument() {
        let a = StateVector::new(vec![c(0.0, 1.0), Complex::ZERO]).unwrap();
        let b = StateVector::basis(2, 0);
        assert_eq!(inner(&a, &b).unwrap(), c(0.0, -1.0));
        assert_eq!(inner(&b, &a).unwrap(), c(0.0, 1.0));
    }

    #[test]
    fn born_sample_eigenstate_is_deterministic() {
        let v = StateVector::basis(2, 0);
        let ps = [Matrix::diag_real(&[1.0, 0.0]), Matrix::diag_real(&[0.0, 1.0])];
        let mut rng = SeededRng::seed_from_u64(3);
        for _ in 0..1000 {
            let (k, post) = born_sample(&v, &ps, &mut rng).unwrap();
            assert_eq!(k, 0);
            assert_eq!(post, v);
        }
    }

    #[test]
    fn born_sample_rejects_incomplete_resolution() {
        let v = StateVector::basis(2, 0);
        let ps = [Matrix::diag_real(&[1.0, 0.0])];
        let mut rng = SeededRng::seed_from_u64(3);
        assert!(matches!(born_sample(&v, &ps, &mut rng), Err(Error::ContractViolation(_))));
        let overlapping = [Matrix::identity(2), Matrix::diag_real(&[1.0, 0.0])];
        assert!(born_sample(&v, &overlapping, &mut rng).is_err());
    }

    #[test]
    fn born_sample_consumes_one_draw() {
        use rand::RngCore;
        let v = StateVector::from_real(&[1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()]).unwrap();
        let ps = [Matrix::diag_real(&[1.0, 0.0]), Matrix::diag_real(&[0.0, 1.0])];
        let mut a = SeededRng::seed_from_u64(11);
        let mut b = SeededRng::seed_from_u64(11);
        born_sample(&v, &ps, &mut a).unwrap();
        let _: f64 = b.random();
        assert_eq!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn born_sample_half_half_frequency() {
        let v = StateVector::from_real(&[1.0 / 2f64.sqrt(), 1.0 / 2f64.sqrt()]).unwrap();
        let m = ProjectiveMeasurement::new(vec![
            Matrix::diag_real(&[1.0, 0.0]),
            Matrix::diag_real(&[0.0, 1.0]),
        ])
        .unwrap();
        let mut rng = SeededRng::seed_from_u64(2024);
        let n = 100_000;
        let hits = (0..n).filter(|_| m.sample(&v, &mut rng).unwrap().0 == 0).count();
        let sigma = (0.25 / n as f64).sqrt();
        assert!((hits as f64 / n as f64 - 0.5).abs() < 5.0 * sigma);
    }

    #[test]
    fn singlet_sequential_z_measurements_are_opposite() {
        let s = 1.0 / 2f64.sqrt();
        let singlet = StateVector::from_real(&[0.0, s, -s, 0.0]).unwrap();
        let up = Matrix::diag_real(&[1.0, 0.0]);
        let down = Matrix::diag_real(&[0.0, 1.0]);
        let first = [spin::embed(&up, 0, 2), spin::embed(&down, 0, 2)];
        let second = [spin::embed(&up, 1, 2), spin::embed(&down, 1, 2)];
        let mut rng = SeededRng::seed_from_u64(5);
        for _ in 0..2000 {
            let (a, post) = born_sample(&singlet, &first, &mut rng).unwrap();
            let (b, _) = born_sample(&post, &second, &mut rng).unwrap();
            assert_ne!(a, b);
        }
    }

    #[test]
    fn constructors_check_claimed_properties() {
        assert!(Matrix::hermitian(spin::sy()).is_ok());
        let not_h = Matrix::from_real_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]);
        assert!(matches!(Matrix::hermitian(not_h.clone()), Err(Error::NotHermitian { .. })));
        assert!(Matrix::unitary(not_h).is_err());
        assert!(Matrix::unitary(spin::sx().scale_real(2.0)).is_ok());
    }

    #[test]
    fn non_finite_amplitudes_rejected() {
        assert!(StateVector::new(vec![c(f64::NAN, 0.0)]).is_err());
    }
}
