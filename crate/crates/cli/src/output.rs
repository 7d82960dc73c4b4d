//! Result files: estimates table, reconstructed matrices and run manifest.
//! Floats are written with shortest round-trip formatting, so re-parsing
//! reproduces the in-memory values exactly.

use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use num_complex::Complex64;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use weakdirect::hilbert::CMatrix;
use weakdirect::protocols::{Calibration, PointerConfig};
use weakdirect::sampling::ShotPlan;

use crate::config::ScenarioConfig;
use crate::error::{io_err, Result};

pub const ESTIMATES_CSV: &str = "estimates.csv";
pub const ESTIMATES_JSON: &str = "estimates.json";
pub const RECONSTRUCTED: &str = "reconstructed.json";
pub const MANIFEST: &str = "manifest.json";
pub const CONVERGENCE_CSV: &str = "convergence.csv";
pub const CONVERGENCE_JSON: &str = "convergence.json";
pub const SWEEP_CSV: &str = "sweep.csv";

/// Table format for row-oriented outputs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Structured,
}

/// Complex matrix as rows of `[re, im]` pairs.
pub type PairMatrix = Vec<Vec<[f64; 2]>>;

pub fn to_pairs(m: &CMatrix) -> PairMatrix {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect()).collect()
}

pub fn row_pairs(v: &[Complex64]) -> PairMatrix {
    vec![v.iter().map(|z| [z.re, z.im]).collect()]
}

pub fn from_pairs(p: &PairMatrix) -> CMatrix {
    let rows = p.len();
    let cols = p.first().map_or(0, |r| r.len());
    CMatrix::from_fn(rows, cols, |i, j| Complex64::new(p[i][j][0], p[i][j][1]))
}

/// One row of the estimates table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateRow {
    pub setting: String,
    pub gt: f64,
    pub scheme: String,
    pub re: f64,
    pub im: f64,
    pub oracle_re: f64,
    pub oracle_im: f64,
    pub abs_error: f64,
    pub postselect_prob: Option<f64>,
    pub stderr_re: Option<f64>,
    pub stderr_im: Option<f64>,
}

/// Reconstruction at one coupling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub gt: f64,
    /// Estimates arranged as a matrix (a single row for vector outputs).
    pub raw: PairMatrix,
    /// Normalized state, when the protocol produces one.
    pub normalized: Option<PairMatrix>,
    pub min_eigenvalue: Option<f64>,
    /// Distance of the normalized state (or the raw values) to the reference.
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reconstructed {
    pub protocol: String,
    pub dim: usize,
    /// How `distance` is measured.
    pub distance_kind: String,
    /// Exact values of `raw`.
    pub reference_raw: PairMatrix,
    /// Exact values of `normalized` (equal to `reference_raw` when there is
    /// no normalized output).
    pub reference: PairMatrix,
    pub sweep: Vec<SweepEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct B0Info {
    pub label: String,
    pub amplitudes: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointerInfo {
    #[serde(flatten)]
    pub config: PointerConfig,
    pub spacing: f64,
    pub max_wavenumber: f64,
    pub shift_limit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KappaEntry {
    pub gt: f64,
    /// `(2 sigma / g t)^2` used for two-pointer products.
    pub kappa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub hbar: f64,
    pub config: ScenarioConfig,
    pub dim: usize,
    pub state: PairMatrix,
    pub b0: B0Info,
    pub pointer: PointerInfo,
    pub kappa: Vec<KappaEntry>,
    /// Present when a pointer-product readout was used.
    pub calibration: Option<Calibration>,
    /// Shot plan after the `--seed` override.
    pub sampling: Option<ShotPlan>,
    pub threads: usize,
    pub format: Format,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).map_err(|e| io_err(path, e))?;
    serde_json::to_writer_pretty(BufWriter::new(file), value).map_err(|e| io_err(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).map_err(|e| io_err(path, e))?;
    serde_json::from_reader(std::io::BufReader::new(file)).map_err(|e| io_err(path, e))
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    for row in rows {
        w.serialize(row).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn read_csv<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| io_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| io_err(path, e))).collect()
}

/// Writes rows as `<stem>.csv` or `<stem>.json`; returns the path.
pub fn write_table<T: Serialize>(dir: &Path, csv_name: &str, json_name: &str, rows: &[T], format: Format) -> Result<PathBuf> {
    let path = match format {
        Format::Csv => dir.join(csv_name),
        Format::Structured => dir.join(json_name),
    };
    match format {
        Format::Csv => write_csv(&path, rows)?,
        Format::Structured => write_json(&path, &rows)?,
    }
    Ok(path)
}

/// Reads the estimates table in whichever format is present.
pub fn read_estimates(dir: &Path) -> Result<Vec<EstimateRow>> {
    let csv_path = dir.join(ESTIMATES_CSV);
    if csv_path.exists() {
        return read_csv(&csv_path);
    }
    read_json(&dir.join(ESTIMATES_JSON))
}
