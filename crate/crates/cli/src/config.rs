//! Scenario files: TOML with `[state]`, `[protocol]`, optional `[pointer]`
//! and optional `[sampling]` tables.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use weakdirect::hilbert::{fourier_ket, random_density, BasisLabel, CMatrix, DensityMatrix, StateVector};
use weakdirect::protocols::{PointerConfig, ProtocolParams, Scheme, DEFAULT_SWEEP};
use weakdirect::sampling::ShotPlan;

use crate::error::{CliError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub state: StateConfig,
    pub protocol: ProtocolConfig,
    #[serde(default)]
    pub pointer: PointerConfig,
    #[serde(default)]
    pub sampling: Option<ShotPlan>,
}

/// `[state]` table, selected by `kind`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum StateConfig {
    /// Named preset: `basis-<k>`, `fourier-<k>`, `plus-i`, `mixed-qubit`,
    /// `maximally-mixed` or `werner`.
    Preset {
        name: String,
        #[serde(default)]
        dim: Option<usize>,
        /// Mixing weight of the `werner` family.
        #[serde(default)]
        weight: Option<f64>,
    },
    /// Explicit amplitudes as `[re, im]` pairs; normalized on load.
    Pure { amplitudes: Vec<[f64; 2]> },
    /// Explicit density matrix, one row of `[re, im]` pairs per line.
    Density { entries: Vec<Vec<[f64; 2]>> },
    /// Ginibre-random density matrix.
    Random {
        dim: usize,
        seed: u64,
        #[serde(default)]
        rank: Option<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Wavefunction,
    Dirac,
    Density,
    Product,
}

impl ProtocolKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProtocolKind::Wavefunction => "wavefunction",
            ProtocolKind::Dirac => "dirac",
            ProtocolKind::Density => "density",
            ProtocolKind::Product => "product",
        }
    }
}

fn default_sweep() -> Vec<f64> {
    DEFAULT_SWEEP.to_vec()
}

/// `[protocol]` table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProtocolConfig {
    pub kind: ProtocolKind,
    #[serde(default)]
    pub scheme: Scheme,
    #[serde(default = "default_sweep")]
    pub sweep: Vec<f64>,
    /// Index of the Fourier ket used as `b0`.
    #[serde(default)]
    pub b0: usize,
    /// `[E, F]` label pairs for the product protocol, e.g.
    /// `[["fourier:1", "standard:0"]]`.
    #[serde(default)]
    pub products: Vec<(BasisLabel, BasisLabel)>,
}

/// The system state a scenario resolves to.
#[derive(Clone, Debug, PartialEq)]
pub enum ResolvedState {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl ResolvedState {
    pub fn dim(&self) -> usize {
        match self {
            ResolvedState::Pure(psi) => psi.dim(),
            ResolvedState::Mixed(rho) => rho.dim(),
        }
    }

    pub fn density(&self) -> DensityMatrix {
        match self {
            ResolvedState::Pure(psi) => psi.density(),
            ResolvedState::Mixed(rho) => rho.clone(),
        }
    }

    /// The pure ket, also for rank-one density matrices.
    pub fn as_pure(&self) -> Option<StateVector> {
        match self {
            ResolvedState::Pure(psi) => Some(psi.clone()),
            ResolvedState::Mixed(rho) => {
                let ensemble = rho.eigen_ensemble();
                (ensemble.len() == 1).then(|| ensemble[0].1.clone())
            }
        }
    }
}

/// A validated scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub state: ResolvedState,
    pub b0: StateVector,
}

impl Scenario {
    pub fn dim(&self) -> usize {
        self.state.dim()
    }

    pub fn params(&self, gt: f64) -> ProtocolParams {
        ProtocolParams { gt, pointer: self.config.pointer, scheme: self.config.protocol.scheme }
    }
}

fn field(name: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::config(format!("{name}: {msg}"))
}

pub fn load(path: &Path) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("cannot read config {}: {e}", path.display())))?;
    parse(&text).map_err(|e| e.with_prefix(&path.display().to_string()))
}

pub fn parse(text: &str) -> Result<Scenario> {
    let config: ScenarioConfig = toml::from_str(text).map_err(|e| CliError::config(e.to_string()))?;
    validate(config)
}

fn c(pair: &[f64; 2]) -> Complex64 {
    Complex64::new(pair[0], pair[1])
}

fn dim_or(dim: Option<usize>, default: usize) -> Result<usize> {
    let d = dim.unwrap_or(default);
    if d == 0 {
        return Err(field("state.dim", "must be at least 1"));
    }
    Ok(d)
}

fn preset(name: &str, dim: Option<usize>, weight: Option<f64>) -> Result<ResolvedState> {
    let plus_i = || {
        StateVector::normalized(vec![Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]).expect("nonzero")
    };
    if weight.is_some() && name != "werner" {
        return Err(field("state.weight", format!("only used by the `werner` preset, not `{name}`")));
    }
    let indexed = |prefix: &str| -> Option<Result<usize>> {
        name.strip_prefix(prefix).map(|k| k.parse().map_err(|_| field("state.name", format!("bad index in `{name}`"))))
    };
    if let Some(k) = indexed("basis-") {
        let d = dim_or(dim, 2)?;
        let k = k?;
        return StateVector::basis(d, k).map(ResolvedState::Pure).map_err(|e| field("state.name", e));
    }
    if let Some(k) = indexed("fourier-") {
        let d = dim_or(dim, 2)?;
        let k = k?;
        return fourier_ket(d, k).map(ResolvedState::Pure).map_err(|e| field("state.name", e));
    }
    let fixed_qubit = |dim: Option<usize>| -> Result<()> {
        match dim {
            Some(d) if d != 2 => Err(field("state.dim", format!("preset `{name}` is a qubit state, got dim = {d}"))),
            _ => Ok(()),
        }
    };
    match name {
        "plus-i" => {
            fixed_qubit(dim)?;
            Ok(ResolvedState::Pure(plus_i()))
        }
        "mixed-qubit" => {
            fixed_qubit(dim)?;
            Ok(ResolvedState::Mixed(DensityMatrix::maximally_mixed(2).expect("dim 2")))
        }
        "maximally-mixed" => {
            let d = dim_or(dim, 2)?;
            Ok(ResolvedState::Mixed(DensityMatrix::maximally_mixed(d).expect("dim >= 1")))
        }
        "werner" => {
            fixed_qubit(dim)?;
            let w = weight.unwrap_or(0.5);
            if !(0.0..=1.0).contains(&w) {
                return Err(field("state.weight", format!("{w} must lie in [0, 1]")));
            }
            let pure = plus_i().density();
            let m = pure.matrix() * Complex64::new(w, 0.0) + CMatrix::identity(2, 2) * Complex64::new((1.0 - w) / 2.0, 0.0);
            Ok(ResolvedState::Mixed(DensityMatrix::new(m).expect("convex combination")))
        }
        other => Err(field(
            "state.name",
            format!("unknown preset `{other}` (basis-<k>, fourier-<k>, plus-i, mixed-qubit, maximally-mixed, werner)"),
        )),
    }
}

fn resolve_state(state: &StateConfig) -> Result<ResolvedState> {
    match state {
        StateConfig::Preset { name, dim, weight } => preset(name, *dim, *weight),
        StateConfig::Pure { amplitudes } => {
            if amplitudes.is_empty() {
                return Err(field("state.amplitudes", "must not be empty"));
            }
            StateVector::normalized(amplitudes.iter().map(c).collect())
                .map(ResolvedState::Pure)
                .map_err(|e| field("state.amplitudes", e))
        }
        StateConfig::Density { entries } => {
            let n = entries.len();
            if n == 0 {
                return Err(field("state.entries", "must not be empty"));
            }
            if let Some((i, row)) = entries.iter().enumerate().find(|(_, r)| r.len() != n) {
                return Err(field("state.entries", format!("row {i} has {} entries, expected {n}", row.len())));
            }
            let m = CMatrix::from_fn(n, n, |i, j| c(&entries[i][j]));
            DensityMatrix::new(m).map(ResolvedState::Mixed).map_err(|e| field("state.entries", e))
        }
        StateConfig::Random { dim, seed, rank } => {
            if *dim == 0 {
                return Err(field("state.dim", "must be at least 1"));
            }
            let rank = rank.unwrap_or(*dim);
            if rank == 0 || rank > *dim {
                return Err(field("state.rank", format!("rank {rank} must lie in 1..={dim}")));
            }
            random_density(*dim, *seed, rank).map(ResolvedState::Mixed).map_err(|e| field("state", e))
        }
    }
}

pub fn validate(config: ScenarioConfig) -> Result<Scenario> {
    let state = resolve_state(&config.state)?;
    let n = state.dim();
    let p = &config.protocol;
    if p.sweep.is_empty() {
        return Err(field("protocol.sweep", "needs at least one coupling"));
    }
    for (i, &gt) in p.sweep.iter().enumerate() {
        if gt.is_nan() || gt <= 0.0 || gt.is_infinite() {
            return Err(field("protocol.sweep", format!("entry {i} ({gt}) must be positive")));
        }
        if p.sweep[..i].contains(&gt) {
            return Err(field("protocol.sweep", format!("duplicate coupling {gt}")));
        }
    }
    if p.b0 >= n {
        return Err(field("protocol.b0", format!("index {} out of range for dimension {n}", p.b0)));
    }
    let b0 = fourier_ket(n, p.b0).map_err(|e| field("protocol.b0", e))?;
    match p.kind {
        ProtocolKind::Product => {
            if p.products.is_empty() {
                return Err(field("protocol.products", "the product protocol needs at least one [E, F] pair"));
            }
            for (i, (e, f)) in p.products.iter().enumerate() {
                for label in [e, f] {
                    if label.index >= n {
                        return Err(field(
                            "protocol.products",
                            format!("pair {i}: `{label}` out of range for dimension {n}"),
                        ));
                    }
                }
            }
        }
        _ if !p.products.is_empty() => {
            return Err(field("protocol.products", format!("only used by the product protocol, not `{}`", p.kind.name())));
        }
        _ => {}
    }
    if p.kind == ProtocolKind::Wavefunction && p.scheme != Scheme::Substitution {
        return Err(field("protocol.scheme", "the wavefunction protocol uses a single weak coupling; only `substitution`"));
    }
    if p.kind == ProtocolKind::Density && p.scheme == Scheme::Scheme2 {
        return Err(field(
            "protocol.scheme",
            "`scheme2` has no unbiased strong readout for the density protocol; use `substitution` or `scheme1`",
        ));
    }
    if let Some(plan) = &config.sampling {
        let single_pointer = matches!(p.kind, ProtocolKind::Wavefunction)
            || (p.kind == ProtocolKind::Dirac && p.scheme == Scheme::Substitution);
        if !single_pointer {
            return Err(field(
                "sampling",
                "shot sampling is available for the wavefunction protocol and the substitution Dirac protocol",
            ));
        }
        if plan.shots < 2 {
            return Err(field("sampling.shots", format!("{} is too small; at least 2 shots are needed", plan.shots)));
        }
        if !(0.0..=1.0).contains(&plan.readout_split) {
            return Err(field("sampling.readout_split", format!("{} must lie in [0, 1]", plan.readout_split)));
        }
    }
    config.pointer.spec().map_err(|e| field("pointer", e))?;
    Ok(Scenario { config, state, b0 })
}
