//! Executes a scenario across its coupling sweep.

use num_complex::Complex64;
use rayon::prelude::*;
use weakdirect::hilbert::{
    fourier_basis, hermitian_deviation, projector, trace_distance, CMatrix, StateVector,
};
use weakdirect::oracle::{density_from_triple_exact, dirac_exact, mixed_state_weak_values, weak_value_pure};
use weakdirect::protocols::{
    calibrate_scheme1, dirac_to_density, direct_density, direct_dirac, direct_wavefunction, hermitize_normalize,
    labelled_product, normalize_amplitudes, simulate_mixed_state_response, triple_overlap, ProtocolEstimate, Scheme, Setting,
};
use weakdirect::evolution::SystemState;
use weakdirect::sampling::{sample_protocol, SampledSetting, ShotPlan};
use weakdirect::oracle::DiracDistribution;
use weakdirect::pointer::HBAR;

use crate::config::{ProtocolKind, ResolvedState, Scenario};
use crate::error::{protocol_err, CliError, Result};
use crate::output::{
    row_pairs, to_pairs, B0Info, EstimateRow, Format, KappaEntry, Manifest, PointerInfo, Reconstructed, SweepEntry,
};

pub struct RunOutput {
    pub rows: Vec<EstimateRow>,
    pub reconstructed: Reconstructed,
    pub manifest: Manifest,
}

/// Exact value of every quantity the protocol estimates.
pub fn oracle_values(scenario: &Scenario) -> Result<Vec<(Setting, Complex64)>> {
    let n = scenario.dim();
    let rho = scenario.state.density();
    let b0 = &scenario.b0;
    let p = &scenario.config.protocol;
    let err = |e| protocol_err("oracle", e);
    Ok(match p.kind {
        ProtocolKind::Wavefunction => match scenario.state.as_pure() {
            Some(psi) => (0..n)
                .map(|a| {
                    let pa = projector(&StateVector::basis(n, a).expect("in range"));
                    Ok((Setting::Wavefunction { a }, weak_value_pure(&pa, &psi, b0).map_err(err)?))
                })
                .collect::<Result<_>>()?,
            None => mixed_state_weak_values(&rho, b0)
                .map_err(err)?
                .into_iter()
                .enumerate()
                .map(|(a, v)| (Setting::Wavefunction { a }, v))
                .collect(),
        },
        ProtocolKind::Dirac => {
            let s = dirac_exact(&rho);
            (0..n).flat_map(|a| (0..n).map(move |b| (a, b))).map(|(a, b)| (Setting::Dirac { a, b }, s.get(a, b))).collect()
        }
        ProtocolKind::Density => {
            let t = density_from_triple_exact(&rho, b0).map_err(err)?;
            (0..n)
                .flat_map(|a1| (0..n).map(move |a2| (a1, a2)))
                .map(|(a1, a2)| (Setting::Density { a1, a2 }, t[(a1, a2)]))
                .collect()
        }
        ProtocolKind::Product => p
            .products
            .iter()
            .map(|(e, f)| {
                let em = e.ket(n).map_err(err)?.projector();
                let fm = f.ket(n).map_err(err)?.projector();
                Ok((Setting::Product { e: *e, f: *f }, (em.matrix() * fm.matrix() * rho.matrix()).trace()))
            })
            .collect::<Result<_>>()?,
    })
}

/// `sqrt(1 - |<u|v>|^2)` for unit vectors.
fn pure_distance(u: &[Complex64], v: &[Complex64]) -> f64 {
    let overlap: Complex64 = u.iter().zip(v).map(|(a, b)| a.conj() * b).sum();
    (1.0 - overlap.norm_sqr()).max(0.0).sqrt()
}

/// Reference matrices `(reference_raw, reference)` and the distance label.
fn references(scenario: &Scenario, oracle: &[(Setting, Complex64)]) -> Result<(CMatrix, CMatrix, &'static str)> {
    let rho = scenario.state.density();
    let values: Vec<Complex64> = oracle.iter().map(|(_, v)| *v).collect();
    Ok(match scenario.config.protocol.kind {
        ProtocolKind::Wavefunction => {
            let raw = CMatrix::from_row_slice(1, values.len(), &values);
            let normalized = normalize_amplitudes(&values).map_err(|e| protocol_err("reference", e))?;
            (raw, CMatrix::from_row_slice(1, normalized.len(), &normalized), "pure_state_trace_distance")
        }
        ProtocolKind::Dirac => (dirac_exact(&rho).entries().clone(), rho.matrix().clone(), "trace_distance"),
        ProtocolKind::Density => (rho.matrix().clone(), rho.matrix().clone(), "trace_distance"),
        ProtocolKind::Product => {
            let raw = CMatrix::from_row_slice(1, values.len(), &values);
            (raw.clone(), raw, "max_abs_error")
        }
    })
}

/// Normalized state and its smallest eigenvalue from a raw estimate matrix.
pub fn finalize(kind: ProtocolKind, raw: &CMatrix) -> Result<(Option<CMatrix>, Option<f64>)> {
    let err = |e| protocol_err("normalize", e);
    match kind {
        ProtocolKind::Wavefunction => {
            let v: Vec<Complex64> = raw.iter().copied().collect();
            let n = normalize_amplitudes(&v).map_err(err)?;
            Ok((Some(CMatrix::from_row_slice(1, n.len(), &n)), None))
        }
        ProtocolKind::Dirac | ProtocolKind::Density => {
            let inverted = match kind {
                ProtocolKind::Dirac => dirac_to_density(&DiracDistribution::new(raw.clone()).map_err(err)?),
                _ => raw.clone(),
            };
            let normalized = hermitize_normalize(&inverted).map_err(err)?;
            let h = (&normalized + normalized.adjoint()) * Complex64::new(0.5, 0.0);
            debug_assert!(hermitian_deviation(&h) < 1e-12);
            let eig = h.symmetric_eigenvalues();
            let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
            Ok((Some(normalized), Some(min)))
        }
        ProtocolKind::Product => Ok((None, None)),
    }
}

/// Distance between a raw estimate (after [`finalize`]) and the reference.
pub fn distance(kind: ProtocolKind, raw: &CMatrix, reference_raw: &CMatrix, reference: &CMatrix) -> Result<f64> {
    let (normalized, _) = finalize(kind, raw)?;
    Ok(match kind {
        ProtocolKind::Wavefunction => {
            let n = normalized.expect("wavefunction output is normalized");
            pure_distance(n.as_slice(), reference.as_slice())
        }
        ProtocolKind::Dirac | ProtocolKind::Density => trace_distance(&normalized.expect("state output"), reference),
        ProtocolKind::Product => (raw - reference_raw).iter().map(|z| z.norm()).fold(0.0, f64::max),
    })
}

/// Estimates arranged into the raw matrix.
fn raw_matrix(kind: ProtocolKind, n: usize, b0: &StateVector, estimates: &[ProtocolEstimate]) -> CMatrix {
    match kind {
        ProtocolKind::Wavefunction | ProtocolKind::Product => {
            let v: Vec<Complex64> = estimates.iter().map(|e| e.value).collect();
            CMatrix::from_row_slice(1, v.len(), &v)
        }
        ProtocolKind::Dirac | ProtocolKind::Density => {
            let mut m = CMatrix::zeros(n, n);
            for e in estimates {
                match e.setting {
                    Setting::Dirac { a, b } => m[(a, b)] = e.value,
                    Setting::Density { a1, a2 } => m[(a1, a2)] = e.value / triple_overlap(b0, a1, a2),
                    _ => {}
                }
            }
            m
        }
    }
}

/// Independent RNG key for each (coupling, setting) pair.
fn setting_seed(base: u64, gt_index: usize, setting_index: usize) -> u64 {
    base ^ ((gt_index as u64) << 48) ^ ((setting_index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn system_of(state: &ResolvedState) -> SystemState {
    match state {
        ResolvedState::Pure(psi) => SystemState::Pure(psi.clone()),
        ResolvedState::Mixed(rho) => SystemState::Mixed(rho.clone()),
    }
}

fn sampled_estimates(scenario: &Scenario, gt: f64, gt_index: usize, plan: &ShotPlan) -> Result<Vec<ProtocolEstimate>> {
    let n = scenario.dim();
    let params = scenario.params(gt);
    let system = system_of(&scenario.state);
    let pi = |a: usize| projector(&StateVector::basis(n, a).expect("in range"));
    let settings: Vec<(Setting, SampledSetting)> = match scenario.config.protocol.kind {
        ProtocolKind::Wavefunction => (0..n)
            .map(|a| {
                let s = SampledSetting::WeakValue {
                    system: system.clone(),
                    observable: pi(a),
                    postselect: Some(scenario.b0.clone()),
                };
                (Setting::Wavefunction { a }, s)
            })
            .collect(),
        ProtocolKind::Dirac => (0..n)
            .flat_map(|a| (0..n).map(move |b| (a, b)))
            .map(|(a, b)| {
                let eigenvalues = (0..n).map(|c| if c == b { 1.0 } else { 0.0 }).collect();
                let s = SampledSetting::Substitution {
                    system: system.clone(),
                    observable: pi(a),
                    basis: fourier_basis(n),
                    eigenvalues,
                };
                (Setting::Dirac { a, b }, s)
            })
            .collect(),
        _ => return Err(CliError::config("sampling: not available for this protocol")),
    };
    settings
        .par_iter()
        .enumerate()
        .map(|(i, (setting, sampled))| {
            let plan = ShotPlan { seed: setting_seed(plan.seed, gt_index, i), ..*plan };
            let est = sample_protocol(sampled, &params, &plan).map_err(|e| protocol_err(&setting.to_string(), e))?;
            Ok(ProtocolEstimate {
                value: est.value,
                setting: setting.clone(),
                scheme: Scheme::Substitution,
                gt_products: vec![gt],
                postselect_prob: None,
                stderr: Some((est.stderr_re, est.stderr_im)),
                weak_parameter: params.weak_parameter(1),
            })
        })
        .collect()
}

fn simulated_estimates(scenario: &Scenario, gt: f64) -> Result<Vec<ProtocolEstimate>> {
    let params = scenario.params(gt);
    let rho = scenario.state.density();
    let b0 = &scenario.b0;
    let label = |e: weakdirect::Error| protocol_err(&format!("gt={gt}"), e);
    match scenario.config.protocol.kind {
        ProtocolKind::Wavefunction => match scenario.state.as_pure() {
            Some(psi) => Ok(direct_wavefunction(&psi, b0, &params).map_err(label)?.raw),
            None => simulate_mixed_state_response(&rho, b0, &params).map_err(label),
        },
        ProtocolKind::Dirac => Ok(direct_dirac(&rho, &params).map_err(label)?.estimates),
        ProtocolKind::Density => Ok(direct_density(&rho, b0, &params).map_err(label)?.estimates),
        ProtocolKind::Product => scenario
            .config
            .protocol
            .products
            .iter()
            .map(|(e, f)| {
                labelled_product(&rho, e, f, &params).map_err(|err| protocol_err(&format!("gt={gt};E={e};F={f}"), err))
            })
            .collect(),
    }
}

fn uses_pointer_products(scenario: &Scenario) -> bool {
    let p = &scenario.config.protocol;
    match p.kind {
        ProtocolKind::Wavefunction => false,
        ProtocolKind::Dirac => p.scheme == Scheme::Scheme1,
        ProtocolKind::Density => p.scheme != Scheme::Scheme2,
        ProtocolKind::Product => p.scheme != Scheme::Scheme2,
    }
}

pub fn build_manifest(scenario: &Scenario, format: Format, threads: usize, calibration: Option<weakdirect::protocols::Calibration>) -> Result<Manifest> {
    let cfg = &scenario.config;
    let spec = cfg.pointer.spec().map_err(|e| CliError::config(format!("pointer: {e}")))?;
    Ok(Manifest {
        tool: "weakdirect".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        hbar: HBAR,
        config: cfg.clone(),
        dim: scenario.dim(),
        state: to_pairs(scenario.state.density().matrix()),
        b0: B0Info {
            label: format!("fourier:{}", cfg.protocol.b0),
            amplitudes: scenario.b0.amplitudes().iter().map(|z| [z.re, z.im]).collect(),
        },
        pointer: PointerInfo {
            config: cfg.pointer,
            spacing: spec.grid.spacing(),
            max_wavenumber: spec.grid.max_wavenumber(),
            shift_limit: spec.grid.shift_limit(),
        },
        kappa: cfg.protocol.sweep.iter().map(|&gt| KappaEntry { gt, kappa: scenario.params(gt).kappa(2) }).collect(),
        calibration,
        sampling: cfg.sampling,
        threads,
        format,
    })
}

pub fn run(scenario: &Scenario, format: Format, threads: usize) -> Result<RunOutput> {
    let kind = scenario.config.protocol.kind;
    let n = scenario.dim();
    let sweep = scenario.config.protocol.sweep.clone();
    let oracle = oracle_values(scenario)?;
    let (reference_raw, reference, distance_kind) = references(scenario, &oracle)?;

    let calibration = if uses_pointer_products(scenario) {
        let cal = calibrate_scheme1(&sweep, &scenario.config.pointer).map_err(|e| protocol_err("calibration", e))?;
        if !cal.passes() {
            return Err(CliError::protocol(format!(
                "calibration: extrapolated kappa ratio {} differs from 1 by more than 1%",
                cal.extrapolated_ratio
            )));
        }
        Some(cal)
    } else {
        None
    };

    let per_gt: Vec<Vec<ProtocolEstimate>> = sweep
        .par_iter()
        .enumerate()
        .map(|(i, &gt)| match &scenario.config.sampling {
            Some(plan) => sampled_estimates(scenario, gt, i, plan),
            None => simulated_estimates(scenario, gt),
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for (&gt, estimates) in sweep.iter().zip(&per_gt) {
        for est in estimates {
            let exact = oracle
                .iter()
                .find(|(s, _)| *s == est.setting)
                .map(|(_, v)| *v)
                .ok_or_else(|| CliError::protocol(format!("no oracle value for {}", est.setting)))?;
            rows.push(EstimateRow {
                setting: est.setting.to_string(),
                gt,
                scheme: est.scheme.to_string(),
                re: est.value.re,
                im: est.value.im,
                oracle_re: exact.re,
                oracle_im: exact.im,
                abs_error: (est.value - exact).norm(),
                postselect_prob: est.postselect_prob,
                stderr_re: est.stderr.map(|s| s.0),
                stderr_im: est.stderr.map(|s| s.1),
            });
        }
        let raw = raw_matrix(kind, n, &scenario.b0, estimates);
        let (normalized, min_eigenvalue) = finalize(kind, &raw)?;
        entries.push(SweepEntry {
            gt,
            distance: distance(kind, &raw, &reference_raw, &reference)?,
            raw: to_pairs(&raw),
            normalized: normalized.as_ref().map(to_pairs),
            min_eigenvalue,
        });
    }

    let reconstructed = Reconstructed {
        protocol: kind.name().into(),
        dim: n,
        distance_kind: distance_kind.into(),
        reference_raw: to_pairs(&reference_raw),
        reference: to_pairs(&reference),
        sweep: entries,
    };
    let manifest = build_manifest(scenario, format, threads, calibration)?;
    Ok(RunOutput { rows, reconstructed, manifest })
}

/// Closed-form values only; no pointers are simulated.
pub fn oracle_rows(scenario: &Scenario) -> Result<Vec<OracleRow>> {
    Ok(oracle_values(scenario)?
        .into_iter()
        .map(|(s, v)| OracleRow { setting: s.to_string(), re: v.re, im: v.im })
        .collect())
}

#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct OracleRow {
    pub setting: String,
    pub re: f64,
    pub im: f64,
}

/// Reference vector of an oracle run, written next to the oracle table.
pub fn oracle_reference(scenario: &Scenario) -> Result<crate::output::PairMatrix> {
    let oracle = oracle_values(scenario)?;
    let (raw, _, _) = references(scenario, &oracle)?;
    Ok(match scenario.config.protocol.kind {
        ProtocolKind::Wavefunction | ProtocolKind::Product => row_pairs(raw.as_slice()),
        _ => to_pairs(&raw),
    })
}
