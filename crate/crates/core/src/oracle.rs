//! Closed-form reference values. Pure dense linear algebra with no pointer
//! or grid dependence; the simulation is tested against these.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::hilbert::{
    check_dims, check_orthonormal, check_unbiased, expectation, fourier_ket, hermitian_eigen, CMatrix,
    DensityMatrix, OperatorMatrix, StateVector, ALGEBRA_TOL, HERMITIAN_TOL,
};

/// Post-selection overlaps below this are treated as orthogonal.
pub const ORTHOGONAL_TOL: f64 = 1e-12;

/// Square matrix of complex quasi-probabilities `S(a, b)`, `a` indexing the
/// standard basis and `b` the Fourier basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DiracDistribution {
    entries: CMatrix,
}

impl DiracDistribution {
    pub fn new(entries: CMatrix) -> Result<Self> {
        if entries.nrows() == 0 {
            return Err(Error::EmptyDimension);
        }
        check_dims(entries.nrows(), entries.ncols())?;
        Ok(Self { entries })
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn get(&self, a: usize, b: usize) -> Complex64 {
        self.entries[(a, b)]
    }

    pub fn entries(&self) -> &CMatrix {
        &self.entries
    }

    /// `sum_{a,b} S(a, b)`, equal to `Tr[rho]` for an exact distribution.
    pub fn total(&self) -> Complex64 {
        self.entries.iter().sum()
    }
}

/// `<c|A|psi> / <c|psi>`.
pub fn weak_value_pure(a: &OperatorMatrix, psi: &StateVector, c: &StateVector) -> Result<Complex64> {
    check_dims(a.dim(), psi.dim())?;
    check_dims(a.dim(), c.dim())?;
    let overlap = c.inner(psi);
    if overlap.norm() <= ORTHOGONAL_TOL {
        return Err(Error::PostSelectionImpossible { prob: overlap.norm_sqr(), threshold: ORTHOGONAL_TOL });
    }
    let a_psi = a.matrix() * psi.as_vector();
    Ok(c.as_vector().dotc(&a_psi) / overlap)
}

/// `<c|A rho|c> / <c|rho|c>`.
pub fn weak_value_mixed(a: &OperatorMatrix, rho: &DensityMatrix, c: &StateVector) -> Result<Complex64> {
    check_dims(a.dim(), rho.dim())?;
    check_dims(a.dim(), c.dim())?;
    let rho_c = rho.matrix() * c.as_vector();
    let prob = c.as_vector().dotc(&rho_c);
    if prob.re <= ORTHOGONAL_TOL {
        return Err(Error::PostSelectionImpossible { prob: prob.re, threshold: ORTHOGONAL_TOL });
    }
    let a_rho_c = a.matrix() * rho_c;
    Ok(c.as_vector().dotc(&a_rho_c) / prob.re)
}

/// `Tr[A rho]`, also for non-Hermitian `A`.
pub fn weak_average(a: &OperatorMatrix, rho: &DensityMatrix) -> Result<Complex64> {
    expectation(a, rho)
}

/// `S(a, b) = <a|rho|b><b|a>` with `|b>` the Fourier basis.
pub fn dirac_exact(rho: &DensityMatrix) -> DiracDistribution {
    let n = rho.dim();
    let m = rho.matrix();
    let mut s = CMatrix::zeros(n, n);
    for b in 0..n {
        let ket_b = fourier_ket(n, b).expect("index in range");
        let rho_b = m * ket_b.as_vector();
        for a in 0..n {
            // <b|a> is the conjugate of the a-th amplitude of |b>
            s[(a, b)] = rho_b[a] * ket_b.amplitudes()[a].conj();
        }
    }
    DiracDistribution { entries: s }
}

/// Matrix of `Tr[Pi_{a1 a2} rho]` with `Pi_{a1 a2} = pi_{a2} pi_{b0} pi_{a1}`,
/// evaluated as the trace `<a1|rho|a2><a2|b0><b0|a1>`. Equals `rho / N`
/// when `b0` is the uniform superposition.
pub fn density_from_triple_exact(rho: &DensityMatrix, b0: &StateVector) -> Result<CMatrix> {
    check_dims(rho.dim(), b0.dim())?;
    check_unbiased(b0)?;
    let n = rho.dim();
    let b = b0.amplitudes();
    Ok(CMatrix::from_fn(n, n, |a1, a2| rho.element(a1, a2) * b[a2] * b[a1].conj()))
}

/// Both routes of the weak-strong identity for Hermitian `C`: the eigen-sum
/// `sum_c c <c|G rho|c>` and the trace `Tr[C G rho]`, in that order.
pub fn weak_strong_routes(
    rho: &DensityMatrix,
    g: &OperatorMatrix,
    c: &OperatorMatrix,
) -> Result<(Complex64, Complex64)> {
    check_dims(rho.dim(), g.dim())?;
    check_dims(rho.dim(), c.dim())?;
    let deviation = c.hermitian_deviation();
    if deviation > HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    let (vals, vecs) = hermitian_eigen(c.matrix());
    let g_rho = g.matrix() * rho.matrix();
    let mut eigen_sum = Complex64::default();
    for (k, &lambda) in vals.iter().enumerate() {
        let v = vecs.column(k);
        let gv = &g_rho * v;
        eigen_sum += v.dotc(&gv) * lambda;
    }
    let trace = (c.matrix() * g_rho).trace();
    Ok((eigen_sum, trace))
}

/// `<C^s G^w> = Tr[C G rho]`.
pub fn weak_strong_exact(rho: &DensityMatrix, g: &OperatorMatrix, c: &OperatorMatrix) -> Result<Complex64> {
    let (eigen_sum, trace) = weak_strong_routes(rho, g, c)?;
    let scale = 1.0 + trace.norm();
    debug_assert!((eigen_sum - trace).norm() <= ALGEBRA_TOL * scale * rho.dim() as f64);
    Ok(eigen_sum)
}

/// `sum_c c <c|G rho|c>` for an explicit orthonormal measurement basis.
pub fn weak_strong_sum(
    rho: &DensityMatrix,
    g: &OperatorMatrix,
    basis: &[StateVector],
    eigenvalues: &[f64],
) -> Result<Complex64> {
    check_orthonormal(basis)?;
    if basis.len() != eigenvalues.len() {
        return Err(Error::EigenvalueCount { basis: basis.len(), eigenvalues: eigenvalues.len() });
    }
    check_dims(rho.dim(), basis[0].dim())?;
    check_dims(rho.dim(), g.dim())?;
    let g_rho = g.matrix() * rho.matrix();
    Ok(basis
        .iter()
        .zip(eigenvalues)
        .map(|(c, &lambda)| c.as_vector().dotc(&(&g_rho * c.as_vector())) * lambda)
        .sum())
}

/// The column of single-projector weak values `<b0|a><a|rho|b0> / <b0|rho|b0>`
/// produced by the pure-state wavefunction protocol on an arbitrary `rho`.
pub fn mixed_state_weak_values(rho: &DensityMatrix, b0: &StateVector) -> Result<Vec<Complex64>> {
    check_dims(rho.dim(), b0.dim())?;
    let rho_b0 = rho.matrix() * b0.as_vector();
    let prob = b0.as_vector().dotc(&rho_b0).re;
    if prob <= ORTHOGONAL_TOL {
        return Err(Error::PostSelectionImpossible { prob, threshold: ORTHOGONAL_TOL });
    }
    Ok((0..rho.dim()).map(|a| b0.amplitudes()[a].conj() * rho_b0[a] / prob).collect())
}
