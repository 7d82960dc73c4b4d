//! Zero-coupling extrapolation and convergence-order fits over a coupling sweep.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Polynomial (Neville) extrapolation of `values` sampled at `gt` to
/// `gt = 0`, treating the values as a polynomial in `gt^2`.
pub fn extrapolate_to_zero(gt: &[f64], values: &[Complex64]) -> Result<Complex64> {
    check_sweep(gt, values.len())?;
    let h: Vec<f64> = gt.iter().map(|x| x * x).collect();
    let mut p = values.to_vec();
    let n = p.len();
    for level in 1..n {
        for i in 0..n - level {
            let (hi, hj) = (h[i], h[i + level]);
            p[i] = (p[i + 1] * hi - p[i] * hj) / (hi - hj);
        }
    }
    Ok(p[0])
}

/// Real-valued convenience wrapper around [`extrapolate_to_zero`].
pub fn extrapolate_real(gt: &[f64], values: &[f64]) -> Result<f64> {
    let v: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    Ok(extrapolate_to_zero(gt, &v)?.re)
}

/// Least-squares slope of `ln(err)` against `ln(gt)`.
pub fn log_slope(gt: &[f64], errors: &[f64]) -> Result<f64> {
    check_sweep(gt, errors.len())?;
    if errors.iter().any(|e| !(*e > 0.0) || !e.is_finite()) {
        return Err(Error::InvalidSweep("errors must be positive and finite for a log fit".into()));
    }
    let xs: Vec<f64> = gt.iter().map(|x| x.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    Ok(sxy / sxx)
}

/// True when every error is strictly smaller than the one at the next
/// larger coupling.
pub fn strictly_decreasing_with_coupling(gt: &[f64], errors: &[f64]) -> bool {
    let mut pairs: Vec<(f64, f64)> = gt.iter().copied().zip(errors.iter().copied()).collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    pairs.windows(2).all(|w| w[1].1 < w[0].1)
}

fn check_sweep(gt: &[f64], count: usize) -> Result<()> {
    if gt.len() != count {
        return Err(Error::InvalidSweep(format!("{} couplings but {} values", gt.len(), count)));
    }
    if gt.len() < 2 {
        return Err(Error::InsufficientPoints { required: 2, found: gt.len() });
    }
    if gt.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
        return Err(Error::InvalidSweep("couplings must be positive and finite".into()));
    }
    for (i, a) in gt.iter().enumerate() {
        if gt[..i].contains(a) {
            return Err(Error::InvalidSweep(format!("duplicate coupling {a}")));
        }
    }
    Ok(())
}
