//! Finite-ensemble emulation of single-pointer weak measurements.
//!
//! Each shot optionally draws a strong-measurement outcome from its exact
//! distribution and then reads exactly one pointer quadrature, position or
//! momentum, from the conditioned grid density. The first
//! `round(split * shots)` shots read position and the rest read momentum.
//! Every shot has its own ChaCha stream (`seed`, stream = shot index), so
//! results do not depend on evaluation order or thread count.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolution::{make_joint, weak_value_from_moments, CouplingSpec, JointState, SystemState};
use crate::hilbert::{check_dims, check_orthonormal, standard_basis, OperatorMatrix, StateVector};
use crate::protocols::ProtocolParams;
use crate::tensor::pairwise_sum;

/// Number of shots, RNG seed and fraction of shots reading position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShotPlan {
    pub shots: usize,
    pub seed: u64,
    #[serde(default = "default_split")]
    pub readout_split: f64,
}

fn default_split() -> f64 {
    0.5
}

impl ShotPlan {
    pub fn new(shots: usize, seed: u64) -> Self {
        Self { shots, seed, readout_split: default_split() }
    }

    fn validate(&self) -> Result<()> {
        if self.shots == 0 {
            return Err(Error::InsufficientShots("at least one shot is required".into()));
        }
        if !(0.0..=1.0).contains(&self.readout_split) {
            return Err(Error::InsufficientShots(format!(
                "readout split {} must lie in [0, 1]",
                self.readout_split
            )));
        }
        Ok(())
    }

    /// Shots assigned to the position quadrature.
    pub fn position_shots(&self) -> usize {
        ((self.shots as f64) * self.readout_split).round() as usize
    }
}

/// Sampled estimate with per-quadrature standard errors. A quadrature that
/// received no shots contributes `0` with a `NaN` standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledEstimate {
    pub value: Complex64,
    pub stderr_re: f64,
    pub stderr_im: f64,
    /// Shots that contributed to the real part (position readouts).
    pub shots_q: usize,
    /// Shots that contributed to the imaginary part (momentum readouts).
    pub shots_k: usize,
}

/// What a single shot measures.
#[derive(Clone, Debug, PartialEq)]
pub enum SampledSetting {
    /// Weak coupling of `observable`, optionally post-selected; shots that
    /// fail post-selection are discarded.
    WeakValue { system: SystemState, observable: OperatorMatrix, postselect: Option<StateVector> },
    /// Weak coupling of `observable` followed by a strong measurement in
    /// `basis`; each shot contributes `c * readout` for its outcome `c`.
    Substitution { system: SystemState, observable: OperatorMatrix, basis: Vec<StateVector>, eigenvalues: Vec<f64> },
}

/// Conditioned pointer densities of one strong outcome, as cumulative
/// tables over grid cells.
struct Branch {
    prob: f64,
    eigenvalue: f64,
    q_cells: Cells,
    k_cells: Cells,
}

struct Cells {
    centers: Vec<f64>,
    cumulative: Vec<f64>,
    width: f64,
}

impl Cells {
    fn new(centers: Vec<f64>, weights: &[f64], width: f64) -> Self {
        let total: f64 = weights.iter().sum();
        let mut acc = 0.0;
        let cumulative = weights
            .iter()
            .map(|w| {
                acc += w / total;
                acc
            })
            .collect();
        Self { centers, cumulative, width }
    }

    /// Inverse CDF with a uniform position inside the chosen cell.
    fn draw(&self, u: f64, v: f64) -> f64 {
        let j = self.cumulative.partition_point(|&c| c < u).min(self.centers.len() - 1);
        self.centers[j] + (v - 0.5) * self.width
    }
}

struct Prepared {
    branches: Vec<Branch>,
    /// Shots outside every branch are discarded (failed post-selection).
    discard_prob: f64,
    gt: f64,
    sigma: f64,
}

fn coupled_state(system: &SystemState, observable: &OperatorMatrix, params: &ProtocolParams) -> Result<JointState> {
    check_dims(system.dim(), observable.dim())?;
    let spec = params.pointer.spec()?;
    if !(params.gt > 0.0) {
        return Err(Error::ZeroCoupling(params.gt));
    }
    make_joint(system, &[spec])?.apply_coupling(&CouplingSpec::momentum(observable.clone(), 0, params.gt)?)
}

fn branch_for(joint: &JointState, c: &StateVector, eigenvalue: f64) -> Result<Branch> {
    let grid = joint.pointers()[0].grid;
    let (pos, mom) = joint.conditional_densities(c, 0)?;
    let prob: f64 = pos.iter().sum::<f64>() * grid.spacing();
    let dk = 2.0 * grid.max_wavenumber() / grid.points() as f64;
    Ok(Branch {
        prob,
        eigenvalue,
        q_cells: Cells::new(grid.positions(), &pos, grid.spacing()),
        k_cells: Cells::new(grid.wavenumbers(), &mom, dk),
    })
}

fn prepare(setting: &SampledSetting, params: &ProtocolParams) -> Result<Prepared> {
    let sigma = params.pointer.sigma;
    let (branches, discard_prob) = match setting {
        SampledSetting::WeakValue { system, observable, postselect } => {
            let joint = coupled_state(system, observable, params)?;
            match postselect {
                Some(c) => {
                    check_dims(system.dim(), c.dim())?;
                    let b = branch_for(&joint, c, 1.0)?;
                    if b.prob < crate::protocols::MIN_POSTSELECT_PROB {
                        return Err(Error::PostSelectionImpossible {
                            prob: b.prob,
                            threshold: crate::protocols::MIN_POSTSELECT_PROB,
                        });
                    }
                    let discard = 1.0 - b.prob;
                    (vec![b], discard)
                }
                None => {
                    // unconditioned marginal as the sum over a complete basis
                    let grid = joint.pointers()[0].grid;
                    let mut pos = vec![0.0; grid.points()];
                    let mut mom = vec![0.0; grid.points()];
                    for c in standard_basis(system.dim()) {
                        let (p, k) = joint.conditional_densities(&c, 0)?;
                        pos.iter_mut().zip(p).for_each(|(a, b)| *a += b);
                        mom.iter_mut().zip(k).for_each(|(a, b)| *a += b);
                    }
                    let dk = 2.0 * grid.max_wavenumber() / grid.points() as f64;
                    let b = Branch {
                        prob: 1.0,
                        eigenvalue: 1.0,
                        q_cells: Cells::new(grid.positions(), &pos, grid.spacing()),
                        k_cells: Cells::new(grid.wavenumbers(), &mom, dk),
                    };
                    (vec![b], 0.0)
                }
            }
        }
        SampledSetting::Substitution { system, observable, basis, eigenvalues } => {
            check_orthonormal(basis)?;
            check_dims(system.dim(), basis[0].dim())?;
            if basis.len() != eigenvalues.len() {
                return Err(Error::EigenvalueCount { basis: basis.len(), eigenvalues: eigenvalues.len() });
            }
            let joint = coupled_state(system, observable, params)?;
            let branches: Vec<Branch> = basis
                .iter()
                .zip(eigenvalues)
                .map(|(c, &e)| branch_for(&joint, c, e))
                .collect::<Result<_>>()?;
            (branches.into_iter().filter(|b| b.prob > 0.0).collect(), 0.0)
        }
    };
    Ok(Prepared { branches, discard_prob, gt: params.gt, sigma })
}

/// `Some(value)` for a kept shot, `None` for a discarded one.
fn shot(prep: &Prepared, seed: u64, index: u64, position: bool) -> Option<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    let u_outcome: f64 = rng.random();
    let u_cell: f64 = rng.random();
    let u_offset: f64 = rng.random();
    let total = 1.0 - prep.discard_prob;
    let mut acc = 0.0;
    let mut chosen = None;
    for b in &prep.branches {
        acc += b.prob;
        if u_outcome < acc {
            chosen = Some(b);
            break;
        }
    }
    let branch = match chosen {
        Some(b) => b,
        // rounding at the top of the last branch when nothing is discarded
        None if prep.discard_prob == 0.0 || u_outcome < total => prep.branches.last()?,
        None => return None,
    };
    let cells = if position { &branch.q_cells } else { &branch.k_cells };
    Some(branch.eigenvalue * cells.draw(u_cell, u_offset))
}

fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = pairwise_sum(values) / n;
    let dev: Vec<f64> = values.iter().map(|v| (v - mean) * (v - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Emulates `plan.shots` experimental repetitions of `setting`.
pub fn sample_protocol(setting: &SampledSetting, params: &ProtocolParams, plan: &ShotPlan) -> Result<SampledEstimate> {
    plan.validate()?;
    let prep = prepare(setting, params)?;
    let n_q = plan.position_shots();
    let draws: Vec<Option<f64>> = (0..plan.shots)
        .into_par_iter()
        .map(|i| shot(&prep, plan.seed, i as u64, i < n_q))
        .collect();
    let q: Vec<f64> = draws[..n_q].iter().flatten().copied().collect();
    let k: Vec<f64> = draws[n_q..].iter().flatten().copied().collect();
    for (name, requested, kept) in [("position", n_q, q.len()), ("momentum", plan.shots - n_q, k.len())] {
        if requested > 0 && kept < 2 {
            return Err(Error::InsufficientShots(format!(
                "{kept} usable {name} readouts out of {requested}; at least 2 are needed"
            )));
        }
    }
    if q.is_empty() && k.is_empty() {
        return Err(Error::InsufficientShots("no readouts".into()));
    }
    let scale_q = 1.0 / prep.gt;
    let scale_k = 2.0 * prep.sigma * prep.sigma / prep.gt;
    let (re, se_re) = if q.is_empty() { (0.0, f64::NAN) } else { mean_and_stderr(&q) };
    let (im, se_im) = if k.is_empty() { (0.0, f64::NAN) } else { mean_and_stderr(&k) };
    Ok(SampledEstimate {
        value: Complex64::new(re * scale_q, im * scale_k),
        stderr_re: se_re * scale_q,
        stderr_im: se_im * scale_k,
        shots_q: q.len(),
        shots_k: k.len(),
    })
}

/// Noiseless value of the same estimator (infinite-ensemble limit).
pub fn deterministic_value(setting: &SampledSetting, params: &ProtocolParams) -> Result<Complex64> {
    let sigma = params.pointer.sigma;
    match setting {
        SampledSetting::WeakValue { system, observable, postselect } => {
            let joint = coupled_state(system, observable, params)?;
            let (q, k) = match postselect {
                Some(c) => {
                    let s = joint.conditional_signal(c, 0)?;
                    (s.q / s.prob, s.k / s.prob)
                }
                None => joint.pointer_moments(0)?,
            };
            weak_value_from_moments(q, k, params.gt, 1.0, sigma)
        }
        SampledSetting::Substitution { system, observable, basis, eigenvalues } => {
            check_orthonormal(basis)?;
            if basis.len() != eigenvalues.len() {
                return Err(Error::EigenvalueCount { basis: basis.len(), eigenvalues: eigenvalues.len() });
            }
            let joint = coupled_state(system, observable, params)?;
            let mut total = Complex64::default();
            for (c, e) in basis.iter().zip(eigenvalues) {
                let s = joint.conditional_signal(c, 0)?;
                total += weak_value_from_moments(s.q, s.k, params.gt, 1.0, sigma)? * *e;
            }
            Ok(total)
        }
    }
}
