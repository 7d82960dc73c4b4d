//! Convergence summary of a finished run directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use weakdirect::convergence::{extrapolate_real, extrapolate_to_zero, log_slope, strictly_decreasing_with_coupling};

use crate::config::ProtocolKind;
use crate::error::{CliError, Result};
use crate::output::{
    from_pairs, read_estimates, read_json, write_csv, write_table, EstimateRow, Format, Manifest, Reconstructed,
    CONVERGENCE_CSV, CONVERGENCE_JSON, MANIFEST, RECONSTRUCTED, SWEEP_CSV,
};
use crate::run::distance;

/// Name of the state-level row in the convergence table.
pub const STATE_ROW: &str = "state";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub setting: String,
    pub scheme: String,
    pub points: usize,
    /// Fitted exponent of the error in `g t`; empty when some error is zero.
    pub slope: Option<f64>,
    pub monotone: bool,
    pub extrapolated_re: f64,
    pub extrapolated_im: f64,
    pub oracle_re: f64,
    pub oracle_im: f64,
    pub smallest_gt_error: f64,
    pub extrapolated_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub gt: f64,
    pub distance: f64,
    pub log10_gt: f64,
    pub log10_distance: f64,
    pub min_eigenvalue: Option<f64>,
}

pub struct Report {
    pub rows: Vec<ConvergenceRow>,
    pub sweep: Vec<SweepRow>,
}

fn slope_or_none(gt: &[f64], errors: &[f64]) -> Option<f64> {
    if errors.iter().all(|e| *e > 0.0) {
        log_slope(gt, errors).ok()
    } else {
        None
    }
}

fn kind_of(name: &str) -> Result<ProtocolKind> {
    Ok(match name {
        "wavefunction" => ProtocolKind::Wavefunction,
        "dirac" => ProtocolKind::Dirac,
        "density" => ProtocolKind::Density,
        "product" => ProtocolKind::Product,
        other => return Err(CliError::io(format!("{RECONSTRUCTED}: unknown protocol {other:?}"))),
    })
}

pub fn summarize(rows: &[EstimateRow], recon: &Reconstructed) -> Result<Report> {
    let mut groups: BTreeMap<(String, String), Vec<&EstimateRow>> = BTreeMap::new();
    for row in rows {
        groups.entry((row.setting.clone(), row.scheme.clone())).or_default().push(row);
    }
    let mut out = Vec::new();
    for ((setting, scheme), members) in &groups {
        if members.len() < 2 {
            return Err(CliError::protocol(format!(
                "{setting}: convergence needs at least two couplings, found {}",
                members.len()
            )));
        }
        let gt: Vec<f64> = members.iter().map(|r| r.gt).collect();
        let values: Vec<Complex64> = members.iter().map(|r| Complex64::new(r.re, r.im)).collect();
        let errors: Vec<f64> = members.iter().map(|r| r.abs_error).collect();
        let extrapolated =
            extrapolate_to_zero(&gt, &values).map_err(|e| CliError::protocol(format!("{setting}: {e}")))?;
        let exact = Complex64::new(members[0].oracle_re, members[0].oracle_im);
        let smallest = members.iter().min_by(|a, b| a.gt.total_cmp(&b.gt)).expect("non-empty");
        out.push(ConvergenceRow {
            setting: setting.clone(),
            scheme: scheme.clone(),
            points: members.len(),
            slope: slope_or_none(&gt, &errors),
            monotone: strictly_decreasing_with_coupling(&gt, &errors),
            extrapolated_re: extrapolated.re,
            extrapolated_im: extrapolated.im,
            oracle_re: exact.re,
            oracle_im: exact.im,
            smallest_gt_error: smallest.abs_error,
            extrapolated_error: (extrapolated - exact).norm(),
        });
    }

    let kind = kind_of(&recon.protocol)?;
    if recon.sweep.len() < 2 {
        return Err(CliError::protocol(format!(
            "{STATE_ROW}: convergence needs at least two couplings, found {}",
            recon.sweep.len()
        )));
    }
    let gt: Vec<f64> = recon.sweep.iter().map(|s| s.gt).collect();
    let distances: Vec<f64> = recon.sweep.iter().map(|s| s.distance).collect();
    let first = from_pairs(&recon.sweep[0].raw);
    let mut extrapolated_raw = first.clone();
    for i in 0..first.nrows() {
        for j in 0..first.ncols() {
            let column: Vec<Complex64> = recon.sweep.iter().map(|s| from_pairs(&s.raw)[(i, j)]).collect();
            extrapolated_raw[(i, j)] =
                extrapolate_to_zero(&gt, &column).map_err(|e| CliError::protocol(format!("{STATE_ROW}: {e}")))?;
        }
    }
    let reference_raw = from_pairs(&recon.reference_raw);
    let reference = from_pairs(&recon.reference);
    let extrapolated_distance = distance(kind, &extrapolated_raw, &reference_raw, &reference)?;
    let smallest = recon.sweep.iter().min_by(|a, b| a.gt.total_cmp(&b.gt)).expect("non-empty");
    let naive = extrapolate_real(&gt, &distances).unwrap_or(f64::NAN);
    out.push(ConvergenceRow {
        setting: STATE_ROW.into(),
        scheme: rows.first().map_or_else(String::new, |r| r.scheme.clone()),
        points: recon.sweep.len(),
        slope: slope_or_none(&gt, &distances),
        monotone: strictly_decreasing_with_coupling(&gt, &distances),
        extrapolated_re: naive,
        extrapolated_im: 0.0,
        oracle_re: 0.0,
        oracle_im: 0.0,
        smallest_gt_error: smallest.distance,
        extrapolated_error: extrapolated_distance,
    });

    let sweep = recon
        .sweep
        .iter()
        .map(|s| SweepRow {
            gt: s.gt,
            distance: s.distance,
            log10_gt: s.gt.log10(),
            log10_distance: s.distance.log10(),
            min_eigenvalue: s.min_eigenvalue,
        })
        .collect();
    Ok(Report { rows: out, sweep })
}

/// Reads a run directory and writes the convergence and sweep tables into it.
pub fn report(dir: &Path, format: Option<Format>) -> Result<(Report, Vec<PathBuf>)> {
    let rows = read_estimates(dir)?;
    let recon: Reconstructed = read_json(&dir.join(RECONSTRUCTED))?;
    let format = match format {
        Some(f) => f,
        None => read_json::<Manifest>(&dir.join(MANIFEST)).map(|m| m.format).unwrap_or_default(),
    };
    let report = summarize(&rows, &recon)?;
    let conv = write_table(dir, CONVERGENCE_CSV, CONVERGENCE_JSON, &report.rows, format)?;
    let sweep_path = dir.join(SWEEP_CSV);
    write_csv(&sweep_path, &report.sweep)?;
    Ok((report, vec![conv, sweep_path]))
}
