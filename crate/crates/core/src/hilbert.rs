//! Dense complex linear algebra and the quantum types shared by every
//! dynamical module.
//!
//! Units are natural (ħ = 1). Dimensions are small (≤ 64), so everything is
//! stored densely.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

/// Tolerance for Hermiticity of operators accepted by constructors.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Tolerance on the trace of a density matrix.
pub const TRACE_TOL: f64 = 1e-10;
/// Smallest admissible eigenvalue of a density matrix.
pub const POSITIVITY_TOL: f64 = -1e-9;

#[inline]
pub fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn dagger(m: &CMatrix) -> CMatrix {
    m.adjoint()
}

/// Largest |m_ij − conj(m_ji)| together with its position.
pub fn hermitian_defect(m: &CMatrix) -> (f64, usize, usize) {
    let n = m.nrows();
    let mut worst = (0.0, 0, 0);
    for i in 0..n {
        for j in i..n {
            let d = (m[(i, j)] - m[(j, i)].conj()).norm();
            if d > worst.0 {
                worst = (d, i, j);
            }
        }
    }
    worst
}

fn check_square(m: &CMatrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
    }
    Ok(m.nrows())
}

fn check_finite(m: &CMatrix, what: &'static str) -> Result<()> {
    if m.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what))
    }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Hermitian part (m + m†)/2.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// Eigendecomposition of a Hermitian operator, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct Spectrum {
    pub values: Vec<f64>,
    /// Columns are the eigenvectors, in the order of `values`.
    pub vectors: CMatrix,
}

impl Spectrum {
    /// V f(Λ) V†.
    pub fn apply_fn<F: Fn(f64) -> C64>(&self, f: F) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &lambda) in self.values.iter().enumerate() {
            let fj = f(lambda);
            for i in 0..n {
                scaled[(i, j)] *= fj;
            }
        }
        scaled * self.vectors.adjoint()
    }

    /// Projector onto the eigenvector with index `k`.
    pub fn projector(&self, k: usize) -> CMatrix {
        let v = self.vectors.column(k);
        &v * v.adjoint()
    }
}

pub(crate) fn hermitian_spectrum(m: &CMatrix) -> Spectrum {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let vectors = CMatrix::from_fn(m.nrows(), m.ncols(), |i, j| eig.eigenvectors[(i, order[j])]);
    Spectrum { values, vectors }
}

/// Dense complex Hermitian matrix: Hamiltonians and measured observables.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let dim = check_square(&matrix)?;
        if dim < 2 {
            return Err(Error::DimensionTooSmall(dim));
        }
        check_finite(&matrix, "Hermitian operator")?;
        let (deviation, row, col) = hermitian_defect(&matrix);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { row, col, deviation });
        }
        Ok(Self { matrix })
    }

    /// Real diagonal operator with the given eigenvalues.
    pub fn diagonal(values: &[f64]) -> Result<Self> {
        let v = CVector::from_iterator(values.len(), values.iter().map(|&x| c64(x, 0.0)));
        Self::new(CMatrix::from_diagonal(&v))
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(CMatrix::identity(dim, dim))
    }

    pub fn zero(dim: usize) -> Result<Self> {
        Self::new(CMatrix::zeros(dim, dim))
    }

    pub fn pauli_x() -> Self {
        Self { matrix: CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(1., 0.), c64(1., 0.), c64(0., 0.)]) }
    }

    pub fn pauli_y() -> Self {
        Self { matrix: CMatrix::from_row_slice(2, 2, &[c64(0., 0.), c64(0., -1.), c64(0., 1.), c64(0., 0.)]) }
    }

    /// σz = diag(+1, −1).
    pub fn pauli_z() -> Self {
        Self { matrix: CMatrix::from_row_slice(2, 2, &[c64(1., 0.), c64(0., 0.), c64(0., 0.), c64(-1., 0.)]) }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self { matrix: self.matrix.scale(factor) }
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn spectrum(&self) -> Spectrum {
        hermitian_spectrum(&self.matrix)
    }

    /// Largest absolute eigenvalue.
    pub fn spectral_norm(&self) -> f64 {
        self.spectrum().values.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Difference between the largest and smallest eigenvalue.
    pub fn spectral_spread(&self) -> f64 {
        let s = self.spectrum();
        s.values[s.values.len() - 1] - s.values[0]
    }

    /// (A − a·I)².
    pub fn shifted_square(&self, a: f64) -> CMatrix {
        let shifted = &self.matrix - CMatrix::identity(self.dim(), self.dim()).scale(a);
        &shifted * &shifted
    }
}

/// Square complex matrix with no symmetry constraint, e.g. an effective
/// complex Hamiltonian or a partial propagator.
#[derive(Debug, Clone, PartialEq)]
pub struct NonHermitianOperator {
    matrix: CMatrix,
}

impl NonHermitianOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let dim = check_square(&matrix)?;
        if dim < 2 {
            return Err(Error::DimensionTooSmall(dim));
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Result<Self> {
        Self::new(CMatrix::identity(dim, dim))
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }
}

impl From<HermitianOperator> for NonHermitianOperator {
    fn from(h: HermitianOperator) -> Self {
        Self { matrix: h.matrix }
    }
}

/// Pure state with unit-norm stored amplitudes; the true norm is
/// `exp(log_norm)`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    amplitudes: CVector,
    log_norm: f64,
}

impl QuantumState {
    /// Normalizes `amplitudes`, recording the factored-out norm in `log_norm`.
    pub fn new(amplitudes: CVector) -> Result<Self> {
        Self::with_log_norm(amplitudes, 0.0)
    }

    /// Like [`QuantumState::new`] but adds `log_norm` to the log of the
    /// norm of `amplitudes`.
    pub fn with_log_norm(amplitudes: CVector, log_norm: f64) -> Result<Self> {
        if !amplitudes.iter().all(|z| z.re.is_finite() && z.im.is_finite()) || !log_norm.is_finite() {
            return Err(Error::NonFinite("state amplitudes"));
        }
        let norm = amplitudes.norm();
        if norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        Ok(Self { amplitudes: amplitudes.unscale(norm), log_norm: log_norm + norm.ln() })
    }

    pub fn from_slice(amplitudes: &[C64]) -> Result<Self> {
        Self::new(CVector::from_column_slice(amplitudes))
    }

    /// Computational basis vector |k⟩.
    pub fn basis(dim: usize, k: usize) -> Result<Self> {
        if k >= dim {
            return Err(Error::InvalidParameter(format!("basis index {k} out of range for dimension {dim}")));
        }
        let mut v = CVector::zeros(dim);
        v[k] = c64(1.0, 0.0);
        Self::new(v)
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn log_norm(&self) -> f64 {
        self.log_norm
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    /// Same amplitudes with `log_norm` reset to zero.
    pub fn normalized(&self) -> Self {
        Self { amplitudes: self.amplitudes.clone(), log_norm: 0.0 }
    }

    /// |ψ⟩⟨ψ| built from the normalized amplitudes.
    pub fn projector(&self) -> CMatrix {
        &self.amplitudes * self.amplitudes.adjoint()
    }

    /// |⟨φ|ψ⟩|² between normalized states.
    pub fn overlap_probability(&self, other: &Self) -> f64 {
        self.amplitudes.dotc(&other.amplitudes).norm_sqr()
    }
}

/// Positive semidefinite, unit-trace, Hermitian matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        check_finite(&matrix, "density matrix")?;
        let (deviation, row, col) = hermitian_defect(&matrix);
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { row, col, deviation });
        }
        let tr = matrix.trace().re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::BadTrace(tr));
        }
        let rho = Self { matrix };
        let min_eigenvalue = rho.min_eigenvalue();
        if min_eigenvalue < POSITIVITY_TOL {
            return Err(Error::NotPositive { min_eigenvalue });
        }
        Ok(rho)
    }

    pub fn from_state(state: &QuantumState) -> Self {
        Self { matrix: state.projector() }
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self { matrix: CMatrix::identity(dim, dim).unscale(dim as f64) }
    }

    /// Hermitian part of `matrix` rescaled to unit trace. Positivity is the
    /// caller's responsibility.
    pub(crate) fn renormalized(matrix: &CMatrix) -> Result<Self> {
        let h = hermitize(matrix);
        let tr = h.trace().re;
        if !tr.is_finite() || tr <= 0.0 {
            return Err(Error::BadTrace(tr));
        }
        Ok(Self { matrix: h.unscale(tr) })
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn population(&self, k: usize) -> f64 {
        self.matrix[(k, k)].re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_spectrum(&self.matrix).values[0]
    }

    /// Tr(Aρ).
    pub fn expectation(&self, obs: &HermitianOperator) -> Result<f64> {
        check_dims(self.dim(), obs.dim())?;
        Ok((obs.matrix() * &self.matrix).trace().re)
    }
}

/// ⟨ψ|A|ψ⟩ on the normalized stored amplitudes.
pub fn expectation(state: &QuantumState, obs: &HermitianOperator) -> Result<f64> {
    check_dims(obs.dim(), state.dim())?;
    let psi = state.amplitudes();
    let value = psi.dotc(&(obs.matrix() * psi));
    if value.im.abs() > 1e-9 {
        return Err(Error::ComplexExpectation(value.im));
    }
    Ok(value.re)
}

/// ½ Σ|λ_k(ρ₁ − ρ₂)|.
pub fn trace_distance(r1: &DensityMatrix, r2: &DensityMatrix) -> Result<f64> {
    check_dims(r1.dim(), r2.dim())?;
    let diff = hermitize(&(r1.matrix() - r2.matrix()));
    let spec = hermitian_spectrum(&diff);
    Ok(0.5 * spec.values.iter().map(|v| v.abs()).sum::<f64>())
}

/// [A,[A,ρ]] = A²ρ − 2AρA + ρA².
pub fn double_commutator(a: &HermitianOperator, rho: &DensityMatrix) -> Result<CMatrix> {
    check_dims(a.dim(), rho.dim())?;
    Ok(double_commutator_raw(a.matrix(), rho.matrix()))
}

pub(crate) fn double_commutator_raw(a: &CMatrix, rho: &CMatrix) -> CMatrix {
    let inner = commutator(a, rho);
    commutator(a, &inner)
}

// Padé(13) coefficients, Higham (2005).
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

fn one_norm(m: &CMatrix) -> f64 {
    (0..m.ncols()).map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>()).fold(0.0, f64::max)
}

/// exp(M) by scaling and squaring with a degree-13 Padé kernel.
pub fn expm(m: &CMatrix) -> Result<CMatrix> {
    let n = check_square(m)?;
    check_finite(m, "matrix exponential input")?;
    let norm = one_norm(m);
    let squarings = if norm > THETA13 { (norm / THETA13).log2().ceil() as i32 } else { 0 };
    let a = m.unscale(2f64.powi(squarings));
    let b = &PADE13;
    let id = CMatrix::identity(n, n);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (a6.scale(b[13]) + a4.scale(b[11]) + a2.scale(b[9]))
        + a6.scale(b[7])
        + a4.scale(b[5])
        + a2.scale(b[3])
        + id.scale(b[1]);
    let u = &a * u_inner;
    let v = &a6 * (a6.scale(b[12]) + a4.scale(b[10]) + a2.scale(b[8]))
        + a6.scale(b[6])
        + a4.scale(b[4])
        + a2.scale(b[2])
        + id.scale(b[0]);
    let lu = (&v - &u).lu();
    let mut x = lu.solve(&(&v + &u)).ok_or(Error::NonFinite("Padé denominator is singular"))?;
    for _ in 0..squarings {
        x = &x * &x;
    }
    check_finite(&x, "matrix exponential result")?;
    Ok(x)
}

/// exp(M·t).
pub fn matrix_exponential(m: &NonHermitianOperator, t: f64) -> Result<NonHermitianOperator> {
    if !t.is_finite() {
        return Err(Error::NonFinite("matrix exponential time"));
    }
    NonHermitianOperator::new(expm(&m.matrix().scale(t))?)
}

/// exp(−iH·t) for a Hermitian H.
pub fn unitary(h: &HermitianOperator, t: f64) -> Result<CMatrix> {
    expm(&h.matrix().map(|z| z * c64(0.0, -t)))
}
