//! Finite-dimensional Hilbert space primitives.
//!
//! States are indexed `0..N` in the standard basis `{|a>}`. The complementary
//! basis is always the discrete Fourier basis
//! `|b> = sum_a exp(2 pi i a b / N) |a> / sqrt(N)`, so `<b|a> = exp(-2 pi i a b / N) / sqrt(N)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Tolerance for exact algebraic identities (norms, traces, Hermiticity of states).
pub const ALGEBRA_TOL: f64 = 1e-12;
/// Slack allowed below zero for density-matrix eigenvalues.
pub const POSITIVITY_TOL: f64 = 1e-10;
/// Tolerance on `| |<a|b0>| - 1/sqrt(N) |`.
pub const UNBIASED_TOL: f64 = 1e-10;
/// Tolerance used for the advisory Hermitian flag and for coupling observables.
pub const HERMITIAN_TOL: f64 = 1e-10;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

/// A unit-norm ket.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    amps: CVector,
}

impl StateVector {
    /// Wraps amplitudes that must already have unit norm.
    pub fn new(amps: Vec<Complex64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::EmptyDimension);
        }
        let amps = CVector::from_vec(amps);
        let norm = amps.norm();
        if (norm - 1.0).abs() > ALGEBRA_TOL {
            return Err(Error::NotNormalized { norm });
        }
        Ok(Self { amps })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(amps: Vec<Complex64>) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::EmptyDimension);
        }
        let amps = CVector::from_vec(amps);
        let norm = amps.norm();
        if !(norm > f64::MIN_POSITIVE) || !norm.is_finite() {
            return Err(Error::ZeroVector);
        }
        Ok(Self { amps: amps.unscale(norm) })
    }

    /// Standard basis ket `|index>`.
    pub fn basis(dim: usize, index: usize) -> Result<Self> {
        check_index(dim, index)?;
        let mut amps = CVector::zeros(dim);
        amps[index] = ONE;
        Ok(Self { amps })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        self.amps.as_slice()
    }

    pub fn as_vector(&self) -> &CVector {
        &self.amps
    }

    /// `<self|other>`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        self.amps.dotc(&other.amps)
    }

    pub fn projector(&self) -> OperatorMatrix {
        OperatorMatrix::from_hermitian_unchecked(&self.amps * self.amps.adjoint())
    }

    pub fn density(&self) -> DensityMatrix {
        let m = &self.amps * self.amps.adjoint();
        DensityMatrix { matrix: m }
    }
}

/// A square complex matrix. Non-Hermitian entries are allowed; the Hermitian
/// flag is advisory and computed at construction.
#[derive(Clone, Debug, PartialEq)]
pub struct OperatorMatrix {
    matrix: CMatrix,
    hermitian: bool,
}

impl OperatorMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        let hermitian = hermitian_deviation(&matrix) <= HERMITIAN_TOL;
        Ok(Self { matrix, hermitian })
    }

    fn from_hermitian_unchecked(matrix: CMatrix) -> Self {
        Self { matrix, hermitian: true }
    }

    pub fn identity(dim: usize) -> Self {
        Self::from_hermitian_unchecked(CMatrix::identity(dim, dim))
    }

    /// Diagonal Hermitian operator with the given real spectrum.
    pub fn diagonal(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDimension);
        }
        let d = CVector::from_iterator(values.len(), values.iter().map(|&v| Complex64::new(v, 0.0)));
        Ok(Self::from_hermitian_unchecked(CMatrix::from_diagonal(&d)))
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn hermitian_deviation(&self) -> f64 {
        hermitian_deviation(&self.matrix)
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    pub fn adjoint(&self) -> Self {
        Self { matrix: self.matrix.adjoint(), hermitian: self.hermitian }
    }

    /// Operator product `self * rhs`.
    pub fn compose(&self, rhs: &OperatorMatrix) -> Result<OperatorMatrix> {
        check_dims(self.dim(), rhs.dim())?;
        OperatorMatrix::new(&self.matrix * &rhs.matrix)
    }
}

/// A validated density operator: Hermitian, unit trace, positive semidefinite.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        check_square(&matrix)?;
        let dev = hermitian_deviation(&matrix);
        if dev > ALGEBRA_TOL {
            return Err(Error::InvalidDensity(format!("not Hermitian (deviation {dev:e})")));
        }
        let tr = matrix.trace();
        if (tr - ONE).norm() > ALGEBRA_TOL {
            return Err(Error::InvalidDensity(format!("trace {tr} differs from 1")));
        }
        let min = hermitian_eigen(&matrix).0[0];
        if min < -POSITIVITY_TOL {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {min:e}")));
        }
        Ok(Self { matrix })
    }

    pub fn from_pure(psi: &StateVector) -> Self {
        psi.density()
    }

    pub fn maximally_mixed(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::EmptyDimension);
        }
        Ok(Self { matrix: CMatrix::identity(dim, dim).unscale(dim as f64) })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// `<a1|rho|a2>`.
    pub fn element(&self, a1: usize, a2: usize) -> Complex64 {
        self.matrix[(a1, a2)]
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        hermitian_eigen(&self.matrix).0[0]
    }

    /// Spectral ensemble `{(p_k, |v_k>)}` with eigenvalues below `1e-12`
    /// dropped and the remaining weights renormalized. Largest weight first.
    pub fn eigen_ensemble(&self) -> Vec<(f64, StateVector)> {
        let (vals, vecs) = hermitian_eigen(&self.matrix);
        let mut kept: Vec<(f64, StateVector)> = vals
            .iter()
            .enumerate()
            .rev()
            .filter(|(_, &p)| p >= ALGEBRA_TOL)
            .map(|(k, &p)| {
                let col: Vec<Complex64> = vecs.column(k).iter().copied().collect();
                (p, StateVector::normalized(col).expect("eigenvector has unit norm"))
            })
            .collect();
        let total: f64 = kept.iter().map(|(p, _)| p).sum();
        for (p, _) in &mut kept {
            *p /= total;
        }
        kept
    }
}

/// Which of the two complementary bases a label refers to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BasisKind {
    Standard,
    Fourier,
}

/// A basis element: `standard:a` is `|a>`, `fourier:b` is the Fourier ket `|b>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct BasisLabel {
    pub kind: BasisKind,
    pub index: usize,
}

impl BasisLabel {
    pub fn standard(index: usize) -> Self {
        Self { kind: BasisKind::Standard, index }
    }

    pub fn fourier(index: usize) -> Self {
        Self { kind: BasisKind::Fourier, index }
    }

    pub fn ket(&self, dim: usize) -> Result<StateVector> {
        match self.kind {
            BasisKind::Standard => StateVector::basis(dim, self.index),
            BasisKind::Fourier => fourier_ket(dim, self.index),
        }
    }
}

impl fmt::Display for BasisLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            BasisKind::Standard => "standard",
            BasisKind::Fourier => "fourier",
        };
        write!(f, "{kind}:{}", self.index)
    }
}

impl From<BasisLabel> for String {
    fn from(label: BasisLabel) -> Self {
        label.to_string()
    }
}

impl TryFrom<String> for BasisLabel {
    type Error = String;

    fn try_from(s: String) -> std::result::Result<Self, Self::Error> {
        s.parse()
    }
}

impl FromStr for BasisLabel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let (kind, index) = s
            .split_once(':')
            .ok_or_else(|| format!("expected `standard:<i>` or `fourier:<i>`, got `{s}`"))?;
        let kind = match kind.trim() {
            "standard" | "s" => BasisKind::Standard,
            "fourier" | "f" => BasisKind::Fourier,
            other => return Err(format!("unknown basis `{other}`")),
        };
        let index = index
            .trim()
            .parse()
            .map_err(|e| format!("bad basis index `{index}`: {e}"))?;
        Ok(Self { kind, index })
    }
}

/// Fourier ket `|b>` with amplitudes `exp(2 pi i a b / N) / sqrt(N)`.
pub fn fourier_ket(dim: usize, b: usize) -> Result<StateVector> {
    check_index(dim, b)?;
    let scale = 1.0 / (dim as f64).sqrt();
    let amps = (0..dim)
        .map(|a| {
            // reduce the exponent mod N before scaling to keep the phase exact
            let phase = 2.0 * PI * ((a * b) % dim) as f64 / dim as f64;
            Complex64::from_polar(scale, phase)
        })
        .collect();
    Ok(StateVector { amps: CVector::from_vec(amps) })
}

pub fn standard_basis(dim: usize) -> Vec<StateVector> {
    (0..dim).map(|a| StateVector::basis(dim, a).unwrap()).collect()
}

pub fn fourier_basis(dim: usize) -> Vec<StateVector> {
    (0..dim).map(|b| fourier_ket(dim, b).unwrap()).collect()
}

/// Rank-one projector `|ket><ket|`.
pub fn projector(ket: &StateVector) -> OperatorMatrix {
    ket.projector()
}

/// `S_ab = |b><b|a><a|` with `|b>` from the Fourier basis.
pub fn s_ab_operator(dim: usize, a: usize, b: usize) -> Result<OperatorMatrix> {
    let ket_a = StateVector::basis(dim, a)?;
    let ket_b = fourier_ket(dim, b)?;
    let overlap = ket_b.inner(&ket_a);
    OperatorMatrix::new(ket_b.as_vector() * ket_a.as_vector().adjoint() * overlap)
}

/// `Pi_{a1 a2} = pi_{a2} pi_{b0} pi_{a1} = <a2|b0><b0|a1> |a2><a1|`.
pub fn triple_projector(dim: usize, a1: usize, a2: usize, b0: &StateVector) -> Result<OperatorMatrix> {
    check_dims(dim, b0.dim())?;
    check_unbiased(b0)?;
    let ket1 = StateVector::basis(dim, a1)?;
    let ket2 = StateVector::basis(dim, a2)?;
    let coeff = ket2.inner(b0) * b0.inner(&ket1);
    OperatorMatrix::new(ket2.as_vector() * ket1.as_vector().adjoint() * coeff)
}

/// `Tr[op rho]`.
pub fn expectation(op: &OperatorMatrix, rho: &DensityMatrix) -> Result<Complex64> {
    check_dims(op.dim(), rho.dim())?;
    Ok(trace_of_product(op.matrix(), rho.matrix()))
}

/// `Tr[a b]` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = ZERO;
    for i in 0..n {
        for j in 0..n {
            acc += a[(i, j)] * b[(j, i)];
        }
    }
    acc
}

/// Reproducible Ginibre state: `rho = G G^dag / Tr[G G^dag]` with `G` an
/// `N x rank` matrix of seeded complex normal deviates.
pub fn random_density(dim: usize, seed: u64, rank: usize) -> Result<DensityMatrix> {
    if dim == 0 {
        return Err(Error::EmptyDimension);
    }
    if rank == 0 || rank > dim {
        return Err(Error::RankOutOfRange { rank, dim });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = CMatrix::from_fn(dim, rank, |_, _| {
        Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng))
    });
    let mut m = &g * g.adjoint();
    m = (&m + m.adjoint()).unscale(2.0);
    let tr = m.trace().re;
    DensityMatrix::new(m.unscale(tr))
}

/// Reproducible Haar-distributed pure state.
pub fn random_state(dim: usize, seed: u64) -> Result<StateVector> {
    if dim == 0 {
        return Err(Error::EmptyDimension);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amps = (0..dim)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)))
        .collect();
    StateVector::normalized(amps)
}

/// Half the trace norm of `a - b`.
pub fn trace_distance(a: &CMatrix, b: &CMatrix) -> f64 {
    0.5 * (a - b).singular_values().sum()
}

/// Checks `|<a|b0>| = 1/sqrt(N)` for every standard basis state.
pub fn check_unbiased(b0: &StateVector) -> Result<()> {
    let target = 1.0 / (b0.dim() as f64).sqrt();
    let deviation = b0
        .amplitudes()
        .iter()
        .map(|z| (z.norm() - target).abs())
        .fold(0.0, f64::max);
    if deviation > UNBIASED_TOL {
        return Err(Error::NotUnbiased { deviation });
    }
    Ok(())
}

/// Checks that `basis` is a complete orthonormal set for its dimension.
pub fn check_orthonormal(basis: &[StateVector]) -> Result<()> {
    let dim = basis.first().map(StateVector::dim).ok_or(Error::EmptyDimension)?;
    if basis.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: basis.len() });
    }
    let mut deviation: f64 = 0.0;
    for (i, u) in basis.iter().enumerate() {
        check_dims(dim, u.dim())?;
        for (j, v) in basis.iter().enumerate() {
            let target = if i == j { ONE } else { ZERO };
            deviation = deviation.max((u.inner(v) - target).norm());
        }
    }
    if deviation > HERMITIAN_TOL {
        return Err(Error::NotOrthonormal { deviation });
    }
    Ok(())
}

/// Largest entrywise `|m - m^dag|`.
pub fn hermitian_deviation(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending and
/// eigenvectors as matching columns.
pub(crate) fn hermitian_eigen(m: &CMatrix) -> (Vec<f64>, CMatrix) {
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vecs = CMatrix::from_fn(m.nrows(), m.ncols(), |r, c| eig.eigenvectors[(r, order[c])]);
    (vals, vecs)
}

pub(crate) fn check_index(dim: usize, index: usize) -> Result<()> {
    if dim == 0 {
        return Err(Error::EmptyDimension);
    }
    if index >= dim {
        return Err(Error::IndexOutOfRange { index, dim });
    }
    Ok(())
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn check_square(m: &CMatrix) -> Result<()> {
    if m.nrows() == 0 {
        return Err(Error::EmptyDimension);
    }
    check_dims(m.nrows(), m.ncols())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn assert_matrix_eq(m: &CMatrix, expected: &[&[Complex64]], tol: f64) {
        for (i, row) in expected.iter().enumerate() {
            for (j, z) in row.iter().enumerate() {
                assert!((m[(i, j)] - z).norm() <= tol, "entry ({i},{j}) = {} vs {z}", m[(i, j)]);
            }
        }
    }

    #[test]
    fn fourier_kets_match_roots_of_unity() {
        let h = 1.0 / 2f64.sqrt();
        let k = fourier_ket(2, 0).unwrap();
        assert_abs_diff_eq!((k.amplitudes()[0] - c(h, 0.0)).norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!((k.amplitudes()[1] - c(h, 0.0)).norm(), 0.0, epsilon = 1e-15);
        let k = fourier_ket(2, 1).unwrap();
        assert_abs_diff_eq!((k.amplitudes()[1] - c(-h, 0.0)).norm(), 0.0, epsilon = 1e-15);
        let k = fourier_ket(4, 1).unwrap();
        let expected = [c(0.5, 0.0), c(0.0, 0.5), c(-0.5, 0.0), c(0.0, -0.5)];
        for (z, e) in k.amplitudes().iter().zip(expected) {
            assert_abs_diff_eq!((z - e).norm(), 0.0, epsilon = 1e-15);
        }
        assert!(matches!(fourier_ket(3, 3), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn projector_examples() {
        let p = projector(&StateVector::basis(2, 0).unwrap());
        assert_matrix_eq(p.matrix(), &[&[c(1.0, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(0.0, 0.0)]], 0.0);
        let p = projector(&fourier_ket(2, 0).unwrap());
        assert_matrix_eq(p.matrix(), &[&[c(0.5, 0.0), c(0.5, 0.0)], &[c(0.5, 0.0), c(0.5, 0.0)]], 1e-15);
        let p = projector(&fourier_ket(2, 1).unwrap());
        assert_matrix_eq(p.matrix(), &[&[c(0.5, 0.0), c(-0.5, 0.0)], &[c(-0.5, 0.0), c(0.5, 0.0)]], 1e-15);
        assert!(p.is_hermitian());
        let sq = p.compose(&p).unwrap();
        assert!((sq.matrix() - p.matrix()).norm() < 1e-12);
        assert!(matches!(
            StateVector::new(vec![c(1.0, 0.0), c(1.0, 0.0)]),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn s_ab_examples() {
        let s = s_ab_operator(2, 0, 0).unwrap();
        assert_matrix_eq(s.matrix(), &[&[c(0.5, 0.0), c(0.0, 0.0)], &[c(0.5, 0.0), c(0.0, 0.0)]], 1e-15);
        let s = s_ab_operator(2, 1, 1).unwrap();
        assert_matrix_eq(s.matrix(), &[&[c(0.0, 0.0), c(-0.5, 0.0)], &[c(0.0, 0.0), c(0.5, 0.0)]], 1e-15);
        assert!(!s.is_hermitian());
        for n in 2..=6 {
            for a in 0..n {
                for b in 0..n {
                    let tr = s_ab_operator(n, a, b).unwrap().trace();
                    assert!((tr - c(1.0 / n as f64, 0.0)).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn triple_projector_examples() {
        let b0 = fourier_ket(2, 0).unwrap();
        let t = triple_projector(2, 0, 1, &b0).unwrap();
        assert_matrix_eq(t.matrix(), &[&[c(0.0, 0.0), c(0.0, 0.0)], &[c(0.5, 0.0), c(0.0, 0.0)]], 1e-15);
        let t = triple_projector(2, 0, 0, &b0).unwrap();
        assert_matrix_eq(t.matrix(), &[&[c(0.5, 0.0), c(0.0, 0.0)], &[c(0.0, 0.0), c(0.0, 0.0)]], 1e-15);
        let rho = DensityMatrix::maximally_mixed(2).unwrap();
        assert_abs_diff_eq!(expectation(&t, &rho).unwrap().re, 0.25, epsilon = 1e-15);

        let biased = StateVector::normalized(vec![c(0.6, 0.0), c(0.8, 0.0)]).unwrap();
        assert!(matches!(triple_projector(2, 0, 1, &biased), Err(Error::NotUnbiased { .. })));
    }

    #[test]
    fn expectation_examples() {
        let zero = StateVector::basis(2, 0).unwrap();
        let rho = zero.density();
        assert_abs_diff_eq!(expectation(&projector(&zero), &rho).unwrap().re, 1.0, epsilon = 1e-15);
        let s00 = s_ab_operator(2, 0, 0).unwrap();
        assert_abs_diff_eq!(expectation(&s00, &rho).unwrap().re, 0.5, epsilon = 1e-15);
        let mixed = DensityMatrix::maximally_mixed(3).unwrap();
        let op = s_ab_operator(3, 1, 2).unwrap();
        let lhs = expectation(&op, &mixed).unwrap();
        assert!((lhs - op.trace() / 3.0).norm() < 1e-15);
        assert!(matches!(expectation(&op, &rho), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn random_density_contract() {
        let pure = random_density(2, 7, 1).unwrap();
        assert_abs_diff_eq!(pure.purity(), 1.0, epsilon = 1e-12);
        let mixed = random_density(2, 7, 2).unwrap();
        assert!(mixed.purity() < 1.0);
        assert_eq!(random_density(5, 99, 3).unwrap(), random_density(5, 99, 3).unwrap());
        assert!(matches!(random_density(2, 7, 3), Err(Error::RankOutOfRange { .. })));
        assert!(matches!(random_density(2, 7, 0), Err(Error::RankOutOfRange { .. })));
    }

    #[test]
    fn density_validation_rejects_bad_matrices() {
        let not_unit = CMatrix::identity(2, 2);
        assert!(DensityMatrix::new(not_unit).is_err());
        let negative = CMatrix::from_row_slice(2, 2, &[c(1.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0)]);
        assert!(DensityMatrix::new(negative).is_err());
        let non_herm = CMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.1, 0.0), c(0.0, 0.0), c(0.5, 0.0)]);
        assert!(DensityMatrix::new(non_herm).is_err());
    }

    #[test]
    fn eigen_ensemble_weights() {
        let rho = DensityMatrix::maximally_mixed(2).unwrap();
        let ens = rho.eigen_ensemble();
        assert_eq!(ens.len(), 2);
        assert!(ens.iter().all(|(p, _)| (p - 0.5).abs() < 1e-12));

        let diag = DensityMatrix::new(CMatrix::from_diagonal(&CVector::from_vec(vec![c(0.1, 0.0), c(0.9, 0.0)])))
            .unwrap();
        let ens = diag.eigen_ensemble();
        assert_abs_diff_eq!(ens[0].0, 0.9, epsilon = 1e-12);
        assert_abs_diff_eq!(ens[1].0, 0.1, epsilon = 1e-12);

        let pure = StateVector::basis(3, 1).unwrap().density();
        assert_eq!(pure.eigen_ensemble().len(), 1);
    }

    #[test]
    fn projector_products_reproduce_s_ab() {
        for n in 2..=8 {
            for a in 0..n {
                for b in 0..n {
                    let pb = projector(&fourier_ket(n, b).unwrap());
                    let pa = projector(&StateVector::basis(n, a).unwrap());
                    let prod = pb.compose(&pa).unwrap();
                    let s = s_ab_operator(n, a, b).unwrap();
                    assert!((prod.matrix() - s.matrix()).camax() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn basis_label_parsing() {
        let l: BasisLabel = "fourier:3".parse().unwrap();
        assert_eq!(l, BasisLabel::fourier(3));
        assert_eq!(l.to_string(), "fourier:3");
        assert!("diagonal:1".parse::<BasisLabel>().is_err());
        assert!("standard".parse::<BasisLabel>().is_err());
    }

    proptest! {
        #[test]
        fn fourier_basis_is_mutually_unbiased_with_theta_convention(n in 2usize..=16) {
            for b in 0..n {
                let kb = fourier_ket(n, b).unwrap();
                for a in 0..n {
                    let ka = StateVector::basis(n, a).unwrap();
                    let overlap = kb.inner(&ka);
                    prop_assert!((overlap.norm_sqr() - 1.0 / n as f64).abs() < 1e-12);
                    let theta = -2.0 * PI * (a * b) as f64 / n as f64;
                    let expected = Complex64::from_polar(1.0 / (n as f64).sqrt(), theta);
                    prop_assert!((overlap - expected).norm() < 1e-12);
                }
            }
        }

        #[test]
        fn standard_projectors_resolve_identity(n in 1usize..=12) {
            let sum = standard_basis(n)
                .iter()
                .fold(CMatrix::zeros(n, n), |acc, k| acc + k.projector().matrix());
            prop_assert!((sum - CMatrix::identity(n, n)).camax() < 1e-12);
            let sum = fourier_basis(n)
                .iter()
                .fold(CMatrix::zeros(n, n), |acc, k| acc + k.projector().matrix());
            prop_assert!((sum - CMatrix::identity(n, n)).camax() < 1e-12);
        }

        #[test]
        fn random_density_is_valid(n in 1usize..=8, seed in any::<u64>(), r in 1usize..=8) {
            let rank = r.min(n);
            let rho = random_density(n, seed, rank).unwrap();
            prop_assert!(hermitian_deviation(rho.matrix()) <= 1e-12);
            prop_assert!((rho.matrix().trace().re - 1.0).abs() <= 1e-12);
            prop_assert!(rho.min_eigenvalue() >= -1e-10);
            prop_assert_eq!(rho.eigen_ensemble().len(), rank);
        }
    }
}
