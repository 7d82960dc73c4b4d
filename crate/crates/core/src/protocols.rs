//! Direct-measurement procedures assembled from the evolution primitives.
//!
//! * wavefunction: weak projector couplings post-selected on a fixed
//!   unbiased ket `b0`;
//! * Dirac distribution: weak `pi_a` followed by a strong Fourier-basis
//!   readout (or a two-pointer product of `pi_b pi_a`);
//! * density matrix: weak `pi_b0 pi_a1` followed by a strong standard-basis
//!   readout of `a2` (or a fully weak three-pointer product);
//! * products `Tr[E F rho]` of non-commuting projectors by joint
//!   (scheme 1) or sequential (scheme 2) pointer readout.
//!
//! Every coupling in a run uses the same strength `g t`, and all pointers
//! share one grid and width.
//!
//! Scheme 2 readout convention: both runs read the *position* of the second
//! pointer. With `D = K` on the first pointer,
//! `<Q_2> = (g t)^2 Re Tr[E F rho]`; with `D = Q`,
//! `<Q_2> = 2 (g t)^2 sigma^2 Im Tr[E F rho]`. The second pointer's
//! momentum carries no signal because the generator commutes with `K_2`.

use std::fmt;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::convergence::extrapolate_real;
use crate::error::{Error, Result};
use crate::evolution::{
    make_joint, weak_value_from_moments, CouplingSpec, JointState, PointerSpec, PointerVariable, SystemState,
};
use crate::hilbert::{
    check_dims, check_orthonormal, check_unbiased, fourier_basis, fourier_ket, hermitian_eigen, projector,
    standard_basis, BasisLabel, CMatrix, DensityMatrix, OperatorMatrix, StateVector,
};
use crate::oracle::{mixed_state_weak_values, DiracDistribution, ORTHOGONAL_TOL};
use crate::pointer::{PointerGrid, DEFAULT_HALF_WIDTH_SIGMAS, DEFAULT_POINTS, DEFAULT_SIGMA};

/// Default weak coupling `g t` (with `sigma = 1`).
pub const DEFAULT_GT: f64 = 0.02;
/// Default coupling sweep.
pub const DEFAULT_SWEEP: [f64; 4] = [0.08, 0.04, 0.02, 0.01];
/// Settings whose post-selection probability falls below this are aborted.
pub const MIN_POSTSELECT_PROB: f64 = 1e-6;
/// Amplitudes below this are skipped when fixing the global phase.
pub const PHASE_REFERENCE_MIN: f64 = 1e-6;
/// Required agreement between the calibrated scheme 1 constant and
/// `(2 sigma / g t)^2`.
pub const CALIBRATION_TOL: f64 = 0.01;

/// Pointer grid and width shared by every pointer of a run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PointerConfig {
    pub points: usize,
    /// Grid half-width in units of `sigma`.
    pub half_width: f64,
    pub sigma: f64,
}

impl Default for PointerConfig {
    fn default() -> Self {
        Self { points: DEFAULT_POINTS, half_width: DEFAULT_HALF_WIDTH_SIGMAS, sigma: DEFAULT_SIGMA }
    }
}

impl PointerConfig {
    pub fn spec(&self) -> Result<PointerSpec> {
        PointerSpec::new(PointerGrid::new(self.points, self.half_width * self.sigma)?, self.sigma)
    }
}

/// How a non-Hermitian quantity is read out.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    /// One weak coupling (or weak product) followed by a strong readout.
    #[default]
    Substitution,
    /// Independent pointers read jointly through `<a_1 a_2 ...>`.
    Scheme1,
    /// Second pointer coupled conditionally on the first pointer's position.
    Scheme2,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Substitution => "substitution",
            Scheme::Scheme1 => "scheme1",
            Scheme::Scheme2 => "scheme2",
        })
    }
}

/// Parameters of one protocol run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolParams {
    /// Coupling strength `g t` of every weak interaction.
    pub gt: f64,
    pub pointer: PointerConfig,
    pub scheme: Scheme,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        Self { gt: DEFAULT_GT, pointer: PointerConfig::default(), scheme: Scheme::Substitution }
    }
}

impl ProtocolParams {
    pub fn with_gt(gt: f64) -> Self {
        Self { gt, ..Self::default() }
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_pointer(mut self, pointer: PointerConfig) -> Self {
        self.pointer = pointer;
        self
    }

    fn validate(&self) -> Result<PointerSpec> {
        if !(self.gt > 0.0) || !self.gt.is_finite() {
            return Err(Error::ZeroCoupling(self.gt));
        }
        self.pointer.spec()
    }

    /// Scheme 1 calibration constant for `pointers` pointers,
    /// `prod_i 2 sigma / (g_i t)`.
    pub fn kappa(&self, pointers: usize) -> f64 {
        (2.0 * self.pointer.sigma / self.gt).powi(pointers as i32)
    }

    /// Dimensionless coupling `prod_i g_i t / sigma` of a run with the given
    /// number of pointers.
    pub fn weak_parameter(&self, pointers: usize) -> f64 {
        (self.gt / self.pointer.sigma).powi(pointers as i32)
    }
}

/// Labels identifying one measured quantity.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Setting {
    Wavefunction { a: usize },
    Dirac { a: usize, b: usize },
    Density { a1: usize, a2: usize },
    Product { e: BasisLabel, f: BasisLabel },
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Setting::Wavefunction { a } => write!(f, "a={a}"),
            Setting::Dirac { a, b } => write!(f, "a={a};b={b}"),
            Setting::Density { a1, a2 } => write!(f, "a1={a1};a2={a2}"),
            Setting::Product { e, f: fl } => write!(f, "E={e};F={fl}"),
        }
    }
}

/// One estimated weak value, weak average or product.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolEstimate {
    pub value: Complex64,
    pub setting: Setting,
    pub scheme: Scheme,
    /// `g t` of every coupling used.
    pub gt_products: Vec<f64>,
    /// Probability of the post-selected or strongly measured outcome.
    pub postselect_prob: Option<f64>,
    /// Standard errors of the real and imaginary parts (sampled runs only).
    pub stderr: Option<(f64, f64)>,
    /// `prod g t / sigma` over the pointers of the run.
    pub weak_parameter: f64,
}

/// Result of the wavefunction protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct WavefunctionEstimate {
    /// Post-selected weak values `<pi_a>_w`, proportional to `psi_a`.
    pub raw: Vec<ProtocolEstimate>,
    /// Unit-norm amplitudes with the global phase fixed.
    pub normalized: Vec<Complex64>,
}

/// Result of the Dirac-distribution protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct DiracEstimate {
    pub distribution: DiracDistribution,
    pub estimates: Vec<ProtocolEstimate>,
}

/// Result of the density-matrix protocol.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityEstimate {
    /// `<Pi_{a1 a2}>` divided by [`triple_overlap`]; `N <Pi_{a1 a2}>` for
    /// the uniform `b0`.
    pub raw: CMatrix,
    /// Hermitized, unit-trace version of `raw`.
    pub normalized: CMatrix,
    /// Smallest eigenvalue of `normalized`; negative values flag a
    /// non-positive reconstruction.
    pub min_eigenvalue: f64,
    pub estimates: Vec<ProtocolEstimate>,
}

/// What is weakly measured ahead of a strong readout.
#[derive(Clone, Debug, PartialEq)]
pub enum WeakObservable {
    /// One coupling of a Hermitian operator.
    Single(OperatorMatrix),
    /// `E F` read jointly on two pointers (`F` coupled first).
    Product { e: OperatorMatrix, f: OperatorMatrix },
}

/// Scheme 1 calibration over a coupling sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub gt: Vec<f64>,
    /// `1 / <a_1 a_2>` measured with `E = F = pi_0` on `|0><0|`.
    pub measured_kappa: Vec<f64>,
    /// `(2 sigma / g t)^2` at each sweep point.
    pub expected_kappa: Vec<f64>,
    /// Zero-coupling extrapolation of `measured / expected`.
    pub extrapolated_ratio: f64,
    pub sigma: f64,
}

impl Calibration {
    pub fn passes(&self) -> bool {
        (self.extrapolated_ratio - 1.0).abs() <= CALIBRATION_TOL
    }
}

fn pi(dim: usize, a: usize) -> OperatorMatrix {
    projector(&StateVector::basis(dim, a).expect("index in range"))
}

fn check_hermitian(op: &OperatorMatrix) -> Result<()> {
    let deviation = op.hermitian_deviation();
    if deviation > crate::hilbert::HERMITIAN_TOL {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(())
}

fn check_label(dim: usize, label: &BasisLabel) -> Result<StateVector> {
    label.ket(dim)
}

/// Global phase fixed on the first amplitude above [`PHASE_REFERENCE_MIN`],
/// then scaled to unit norm.
pub fn normalize_amplitudes(raw: &[Complex64]) -> Result<Vec<Complex64>> {
    let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return Err(Error::ZeroVector);
    }
    let reference = raw.iter().find(|z| z.norm() > PHASE_REFERENCE_MIN).copied().unwrap_or(Complex64::new(1.0, 0.0));
    let phase = reference.conj() / reference.norm();
    Ok(raw.iter().map(|z| z * phase / norm).collect())
}

/// Post-selected weak values of every `pi_a` for `system`, one coupling per
/// `a`. Shared by the wavefunction protocol and its mixed-state variant.
fn postselected_weak_values(
    system: &SystemState,
    b0: &StateVector,
    params: &ProtocolParams,
) -> Result<Vec<ProtocolEstimate>> {
    let spec = params.validate()?;
    check_dims(system.dim(), b0.dim())?;
    check_unbiased(b0)?;
    let n = system.dim();
    let rho = system.density();
    let prior = b0.as_vector().dotc(&(rho.matrix() * b0.as_vector())).re;
    if prior < MIN_POSTSELECT_PROB {
        return Err(Error::PostSelectionImpossible { prob: prior, threshold: MIN_POSTSELECT_PROB });
    }
    let joint = make_joint(system, &[spec])?;
    (0..n)
        .into_par_iter()
        .map(|a| {
            let coupled = joint.apply_coupling(&CouplingSpec::momentum(pi(n, a), 0, params.gt)?)?;
            let (prob, cond) = coupled.postselect(b0)?;
            if prob < MIN_POSTSELECT_PROB {
                return Err(Error::PostSelectionImpossible { prob, threshold: MIN_POSTSELECT_PROB });
            }
            let (q, k) = cond.pointer_moments(0)?;
            Ok(ProtocolEstimate {
                value: weak_value_from_moments(q, k, params.gt, 1.0, spec.sigma)?,
                setting: Setting::Wavefunction { a },
                scheme: Scheme::Substitution,
                gt_products: vec![params.gt],
                postselect_prob: Some(prob),
                stderr: None,
                weak_parameter: params.weak_parameter(1),
            })
        })
        .collect()
}

/// Direct wavefunction measurement: `psi_a ∝ <pi_a>_w` post-selected on `b0`.
pub fn direct_wavefunction(psi: &StateVector, b0: &StateVector, params: &ProtocolParams) -> Result<WavefunctionEstimate> {
    let raw = postselected_weak_values(&SystemState::Pure(psi.clone()), b0, params)?;
    let values: Vec<Complex64> = raw.iter().map(|e| e.value).collect();
    Ok(WavefunctionEstimate { normalized: normalize_amplitudes(&values)?, raw })
}

/// Closed-form response of the wavefunction protocol to a mixed state,
/// `<b0|a><a|rho|b0> / <b0|rho|b0>`.
pub fn mixed_state_response(rho: &DensityMatrix, b0: &StateVector) -> Result<Vec<Complex64>> {
    mixed_state_weak_values(rho, b0)
}

/// Simulated response of the wavefunction protocol to a mixed state.
pub fn simulate_mixed_state_response(
    rho: &DensityMatrix,
    b0: &StateVector,
    params: &ProtocolParams,
) -> Result<Vec<ProtocolEstimate>> {
    postselected_weak_values(&SystemState::Mixed(rho.clone()), b0, params)
}

/// Pointer-signal contribution `P(c) <G>_c` of every outcome `c` of a
/// strong measurement in `basis`, after weakly measuring `g`.
pub fn weak_strong_contributions(
    system: &SystemState,
    g: &WeakObservable,
    basis: &[StateVector],
    params: &ProtocolParams,
) -> Result<Vec<(Complex64, f64)>> {
    let spec = params.validate()?;
    check_orthonormal(basis)?;
    check_dims(system.dim(), basis[0].dim())?;
    match g {
        WeakObservable::Single(op) => {
            check_dims(system.dim(), op.dim())?;
            let joint = make_joint(system, &[spec])?.apply_coupling(&CouplingSpec::momentum(op.clone(), 0, params.gt)?)?;
            basis
                .iter()
                .map(|c| {
                    let s = joint.conditional_signal(c, 0)?;
                    Ok((weak_value_from_moments(s.q, s.k, params.gt, 1.0, spec.sigma)?, s.prob))
                })
                .collect()
        }
        WeakObservable::Product { e, f } => {
            check_dims(system.dim(), e.dim())?;
            check_dims(system.dim(), f.dim())?;
            let kappa = params.kappa(2);
            let mut out = vec![(Complex64::default(), 0.0); basis.len()];
            // one eigenbranch at a time keeps memory at a single joint tensor
            for (weight, psi) in system.ensemble() {
                let joint = scheme1_state(&psi, e, f, spec, params.gt)?;
                for (slot, c) in out.iter_mut().zip(basis) {
                    let (value, prob) = joint.conditional_ann_product(c, &[0, 1])?;
                    slot.0 += value * (kappa * weight);
                    slot.1 += prob * weight;
                }
            }
            Ok(out)
        }
    }
}

/// `sum_c c P(c) <G>_c`, converging to `Tr[C G rho]`.
pub fn weak_strong_product(
    rho: &DensityMatrix,
    g: &WeakObservable,
    basis: &[StateVector],
    eigenvalues: &[f64],
    params: &ProtocolParams,
) -> Result<Complex64> {
    if basis.len() != eigenvalues.len() {
        return Err(Error::EigenvalueCount { basis: basis.len(), eigenvalues: eigenvalues.len() });
    }
    let contributions = weak_strong_contributions(&SystemState::Mixed(rho.clone()), g, basis, params)?;
    Ok(contributions.iter().zip(eigenvalues).map(|((v, _), c)| v * *c).sum())
}

/// `exp(-i g t E K_2) exp(-i g t F K_1)` on `psi ⊗ phi ⊗ phi`.
fn scheme1_state(
    psi: &StateVector,
    e: &OperatorMatrix,
    f: &OperatorMatrix,
    spec: PointerSpec,
    gt: f64,
) -> Result<JointState> {
    JointState::from_pure(psi, &[spec, spec])?
        .apply_coupling(&CouplingSpec::momentum(f.clone(), 0, gt)?)?
        .apply_coupling(&CouplingSpec::momentum(e.clone(), 1, gt)?)
}

/// Scheme 1 estimate of `Tr[E F rho]`: `kappa <a_1 a_2>`.
pub fn scheme1_weak_product(
    rho: &DensityMatrix,
    e: &OperatorMatrix,
    f: &OperatorMatrix,
    params: &ProtocolParams,
) -> Result<Complex64> {
    let spec = params.validate()?;
    check_dims(rho.dim(), e.dim())?;
    check_dims(rho.dim(), f.dim())?;
    check_hermitian(e)?;
    check_hermitian(f)?;
    let mut total = Complex64::default();
    for (weight, psi) in rho.eigen_ensemble() {
        total += scheme1_state(&psi, e, f, spec, params.gt)?.joint_ann_moment(0, 1)? * weight;
    }
    Ok(total * params.kappa(2))
}

/// `exp(-i g t E K_2 Q_1) exp(-i g t F D_1)` on `psi ⊗ phi ⊗ phi`.
fn scheme2_state(
    psi: &StateVector,
    e: &OperatorMatrix,
    f: &OperatorMatrix,
    spec: PointerSpec,
    gt: f64,
    variable: PointerVariable,
) -> Result<JointState> {
    JointState::from_pure(psi, &[spec, spec])?
        .apply_coupling(&CouplingSpec::new(f.clone(), 0, gt, 1.0, variable)?)?
        .apply_conditional_coupling(e, 0, 1, gt, 1.0)
}

/// Second-pointer `(<Q_2>, <K_2>)` of the two scheme 2 runs, momentum
/// coupling first, position coupling second.
pub fn scheme2_moments(
    rho: &DensityMatrix,
    e: &OperatorMatrix,
    f: &OperatorMatrix,
    params: &ProtocolParams,
) -> Result<[(f64, f64); 2]> {
    let spec = params.validate()?;
    check_dims(rho.dim(), e.dim())?;
    check_dims(rho.dim(), f.dim())?;
    check_hermitian(e)?;
    check_hermitian(f)?;
    let mut out = [(0.0, 0.0); 2];
    for (weight, psi) in rho.eigen_ensemble() {
        for (slot, variable) in out.iter_mut().zip([PointerVariable::Momentum, PointerVariable::Position]) {
            let (q, k) = scheme2_state(&psi, e, f, spec, params.gt, variable)?.pointer_moments(1)?;
            slot.0 += weight * q;
            slot.1 += weight * k;
        }
    }
    Ok(out)
}

/// Scheme 2 estimate of `Tr[E F rho]` from the two runs.
pub fn scheme2_weak_product(
    rho: &DensityMatrix,
    e: &OperatorMatrix,
    f: &OperatorMatrix,
    params: &ProtocolParams,
) -> Result<Complex64> {
    let [(q_re, _), (q_im, _)] = scheme2_moments(rho, e, f, params)?;
    let gt2 = params.gt * params.gt;
    let sigma = params.pointer.sigma;
    Ok(Complex64::new(q_re / gt2, q_im / (2.0 * gt2 * sigma * sigma)))
}

/// `Tr[E F rho]` by the scheme selected in `params` (substitution uses the
/// scheme 1 readout).
pub fn weak_product(rho: &DensityMatrix, e: &OperatorMatrix, f: &OperatorMatrix, params: &ProtocolParams) -> Result<Complex64> {
    match params.scheme {
        Scheme::Substitution | Scheme::Scheme1 => scheme1_weak_product(rho, e, f, params),
        Scheme::Scheme2 => scheme2_weak_product(rho, e, f, params),
    }
}

/// Product estimate for basis-labelled projectors `E = pi_e`, `F = pi_f`.
pub fn labelled_product(
    rho: &DensityMatrix,
    e: &BasisLabel,
    f: &BasisLabel,
    params: &ProtocolParams,
) -> Result<ProtocolEstimate> {
    let n = rho.dim();
    let ek = check_label(n, e)?;
    let fk = check_label(n, f)?;
    let scheme = match params.scheme {
        Scheme::Substitution => Scheme::Scheme1,
        s => s,
    };
    let value = weak_product(rho, &ek.projector(), &fk.projector(), params)?;
    Ok(ProtocolEstimate {
        value,
        setting: Setting::Product { e: *e, f: *f },
        scheme,
        gt_products: vec![params.gt; 2],
        postselect_prob: None,
        stderr: None,
        weak_parameter: params.weak_parameter(2),
    })
}

/// Direct measurement of `S(a, b) = Tr[S_ab rho]` for every `(a, b)`.
pub fn direct_dirac(rho: &DensityMatrix, params: &ProtocolParams) -> Result<DiracEstimate> {
    params.validate()?;
    let n = rho.dim();
    let system = SystemState::Mixed(rho.clone());
    let estimates: Vec<ProtocolEstimate> = match params.scheme {
        Scheme::Substitution => {
            let basis = fourier_basis(n);
            let rows: Vec<Vec<ProtocolEstimate>> = (0..n)
                .into_par_iter()
                .map(|a| {
                    let contributions =
                        weak_strong_contributions(&system, &WeakObservable::Single(pi(n, a)), &basis, params)?;
                    Ok(contributions
                        .into_iter()
                        .enumerate()
                        .map(|(b, (value, prob))| ProtocolEstimate {
                            value,
                            setting: Setting::Dirac { a, b },
                            scheme: Scheme::Substitution,
                            gt_products: vec![params.gt],
                            postselect_prob: Some(prob),
                            stderr: None,
                            weak_parameter: params.weak_parameter(1),
                        })
                        .collect())
                })
                .collect::<Result<_>>()?;
            rows.into_iter().flatten().collect()
        }
        scheme => {
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).collect();
            pairs
                .into_par_iter()
                .map(|(a, b)| {
                    let e = fourier_ket(n, b)?.projector();
                    let value = weak_product(rho, &e, &pi(n, a), params)?;
                    Ok(ProtocolEstimate {
                        value,
                        setting: Setting::Dirac { a, b },
                        scheme,
                        gt_products: vec![params.gt; 2],
                        postselect_prob: None,
                        stderr: None,
                        weak_parameter: params.weak_parameter(2),
                    })
                })
                .collect::<Result<_>>()?
        }
    };
    let mut s = CMatrix::zeros(n, n);
    for e in &estimates {
        if let Setting::Dirac { a, b } = e.setting {
            s[(a, b)] = e.value;
        }
    }
    Ok(DiracEstimate { distribution: DiracDistribution::new(s)?, estimates })
}

/// Hermitian part `(R + R†)/2` scaled to unit trace.
pub fn hermitize_normalize(raw: &CMatrix) -> Result<CMatrix> {
    let h = (raw + raw.adjoint()) * Complex64::new(0.5, 0.0);
    let tr = h.trace().re;
    if !(tr.abs() > ORTHOGONAL_TOL) || !tr.is_finite() {
        return Err(Error::InvalidDensity(format!("reconstructed trace {tr} cannot be normalized")));
    }
    Ok(h / Complex64::new(tr, 0.0))
}

/// The known factor `<a2|b0><b0|a1>` in `<Pi_{a1 a2}> = rho_{a1 a2} <a2|b0><b0|a1>`.
/// Its modulus is `1/N` for unbiased `b0`.
pub fn triple_overlap(b0: &StateVector, a1: usize, a2: usize) -> Complex64 {
    let b = b0.amplitudes();
    b[a2] * b[a1].conj()
}

/// Direct measurement of `rho_{a1 a2}` from `<Pi_{a1 a2}>` with
/// `Pi_{a1 a2} = pi_{a2} pi_{b0} pi_{a1}`.
///
/// The substitution route weakly measures `pi_b0 pi_a1` on two pointers and
/// reads `a2` from a strong standard-basis measurement. The scheme 1 route
/// measures all three projectors weakly on three pointers and needs a grid
/// small enough for an `N M^3` tensor. Scheme 2 has no unbiased strong
/// readout and is rejected.
pub fn direct_density(rho: &DensityMatrix, b0: &StateVector, params: &ProtocolParams) -> Result<DensityEstimate> {
    let spec = params.validate()?;
    check_dims(rho.dim(), b0.dim())?;
    check_unbiased(b0)?;
    let n = rho.dim();
    let system = SystemState::Mixed(rho.clone());
    let e = b0.projector();
    let estimates: Vec<ProtocolEstimate> = match params.scheme {
        Scheme::Substitution => {
            let basis = standard_basis(n);
            let rows: Vec<Vec<ProtocolEstimate>> = (0..n)
                .into_par_iter()
                .map(|a1| {
                    let g = WeakObservable::Product { e: e.clone(), f: pi(n, a1) };
                    let contributions = weak_strong_contributions(&system, &g, &basis, params)?;
                    Ok(contributions
                        .into_iter()
                        .enumerate()
                        .map(|(a2, (value, prob))| ProtocolEstimate {
                            value,
                            setting: Setting::Density { a1, a2 },
                            scheme: Scheme::Substitution,
                            gt_products: vec![params.gt; 2],
                            postselect_prob: Some(prob),
                            stderr: None,
                            weak_parameter: params.weak_parameter(2),
                        })
                        .collect())
                })
                .collect::<Result<_>>()?;
            rows.into_iter().flatten().collect()
        }
        Scheme::Scheme1 => {
            let ensemble = rho.eigen_ensemble();
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).collect();
            pairs
                .into_par_iter()
                .map(|(a1, a2)| {
                    let mut value = Complex64::default();
                    for (weight, psi) in &ensemble {
                        let joint = JointState::from_pure(psi, &[spec, spec, spec])?
                            .apply_coupling(&CouplingSpec::momentum(pi(n, a1), 0, params.gt)?)?
                            .apply_coupling(&CouplingSpec::momentum(e.clone(), 1, params.gt)?)?
                            .apply_coupling(&CouplingSpec::momentum(pi(n, a2), 2, params.gt)?)?;
                        value += joint.joint_ann_product(&[0, 1, 2])? * *weight;
                    }
                    Ok(ProtocolEstimate {
                        value: value * params.kappa(3),
                        setting: Setting::Density { a1, a2 },
                        scheme: Scheme::Scheme1,
                        gt_products: vec![params.gt; 3],
                        postselect_prob: None,
                        stderr: None,
                        weak_parameter: params.weak_parameter(3),
                    })
                })
                .collect::<Result<_>>()?
        }
        Scheme::Scheme2 => {
            return Err(Error::Unsupported(
                "scheme 2 followed by a strong readout does not converge to Tr[C E F rho]; use substitution or scheme1"
                    .into(),
            ))
        }
    };
    let mut raw = CMatrix::zeros(n, n);
    for est in &estimates {
        if let Setting::Density { a1, a2 } = est.setting {
            raw[(a1, a2)] = est.value / triple_overlap(b0, a1, a2);
        }
    }
    let normalized = hermitize_normalize(&raw)?;
    let min_eigenvalue = hermitian_eigen(&normalized).0[0];
    Ok(DensityEstimate { raw, normalized, min_eigenvalue, estimates })
}

/// `rho_{a1 a2} = sum_b S(a1, b) exp(2 pi i b (a1 - a2) / N)`.
pub fn dirac_to_density(s: &DiracDistribution) -> CMatrix {
    let n = s.dim();
    DMatrix::from_fn(n, n, |a1, a2| {
        (0..n)
            .map(|b| {
                let k = (b * ((a1 + n - a2) % n)) % n;
                s.get(a1, b) * Complex64::cis(2.0 * std::f64::consts::PI * k as f64 / n as f64)
            })
            .sum()
    })
}

/// Runs scheme 1 with `E = F = pi_0` on `|0><0|` across `sweep` and
/// compares `1 / <a_1 a_2>` with `(2 sigma / g t)^2`.
pub fn calibrate_scheme1(sweep: &[f64], pointer: &PointerConfig) -> Result<Calibration> {
    if sweep.is_empty() {
        return Err(Error::InvalidSweep("calibration needs at least one coupling".into()));
    }
    let p0 = pi(2, 0);
    let rows: Vec<(f64, f64)> = sweep
        .par_iter()
        .map(|&gt| {
            let params = ProtocolParams { gt, pointer: *pointer, scheme: Scheme::Scheme1 };
            let spec = params.validate()?;
            let moment = scheme1_state(&StateVector::basis(2, 0)?, &p0, &p0, spec, gt)?.joint_ann_moment(0, 1)?;
            Ok((1.0 / moment.re, params.kappa(2)))
        })
        .collect::<Result<_>>()?;
    let measured: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let expected: Vec<f64> = rows.iter().map(|r| r.1).collect();
    let ratios: Vec<f64> = measured.iter().zip(&expected).map(|(m, e)| m / e).collect();
    let extrapolated_ratio = if sweep.len() >= 2 { extrapolate_real(sweep, &ratios)? } else { ratios[0] };
    Ok(Calibration {
        gt: sweep.to_vec(),
        measured_kappa: measured,
        expected_kappa: expected,
        extrapolated_ratio,
        sigma: pointer.sigma,
    })
}
