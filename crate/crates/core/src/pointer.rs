//! Discretized one-dimensional Gaussian measurement pointer.
//!
//! Units have `hbar = 1`. Position `Q` acts diagonally on the grid and
//! momentum `K = -i d/dq` is evaluated through a discrete Fourier transform,
//! which makes translations `exp(-i a K)` exact for band-limited states.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor;

pub const HBAR: f64 = 1.0;
pub const DEFAULT_POINTS: usize = 512;
pub const DEFAULT_SIGMA: f64 = 1.0;
/// Default grid half-width in units of sigma.
pub const DEFAULT_HALF_WIDTH_SIGMAS: f64 = 16.0;
/// Smallest half-width (in sigmas) that keeps Gaussian tails below 1e-14.
pub const MIN_HALF_WIDTH_SIGMAS: f64 = 8.0;
pub const MIN_POINTS: usize = 16;
/// Pointer normalization tolerance.
pub const NORM_TOL: f64 = 1e-10;

/// Uniform grid `q_j = -L + j dq`, `dq = 2L/M`, `j = 0..M`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointerGrid {
    points: usize,
    half_width: f64,
}

impl PointerGrid {
    pub fn new(points: usize, half_width: f64) -> Result<Self> {
        if points < MIN_POINTS || !points.is_power_of_two() {
            return Err(Error::InvalidGrid(format!(
                "point count {points} must be a power of two >= {MIN_POINTS}"
            )));
        }
        if !(half_width > 0.0) || !half_width.is_finite() {
            return Err(Error::InvalidGrid(format!("half-width {half_width} must be positive")));
        }
        Ok(Self { points, half_width })
    }

    /// `M = 512`, `L = 16 sigma`.
    pub fn default_for(sigma: f64) -> Result<Self> {
        Self::new(DEFAULT_POINTS, DEFAULT_HALF_WIDTH_SIGMAS * sigma)
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / self.points as f64
    }

    pub fn position(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    pub fn positions(&self) -> Vec<f64> {
        (0..self.points).map(|j| self.position(j)).collect()
    }

    /// Wavenumber of DFT bin `m`, in FFT order (`0, dk, ..., -dk`).
    pub fn wavenumber(&self, m: usize) -> f64 {
        let signed = if m < self.points / 2 { m as f64 } else { m as f64 - self.points as f64 };
        2.0 * PI * signed / (self.points as f64 * self.spacing())
    }

    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.points).map(|m| self.wavenumber(m)).collect()
    }

    /// Largest representable wavenumber, `pi / dq`.
    pub fn max_wavenumber(&self) -> f64 {
        PI / self.spacing()
    }

    /// Largest total translation allowed before aliasing becomes a concern.
    pub fn shift_limit(&self) -> f64 {
        self.half_width / 4.0
    }

    /// Largest total momentum kick allowed, a quarter of the band.
    pub fn kick_limit(&self) -> f64 {
        self.max_wavenumber() / 4.0
    }
}

/// Width and coupling of one von Neumann measurement.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointerParams {
    pub sigma: f64,
    pub g: f64,
    pub t: f64,
}

impl PointerParams {
    pub fn new(sigma: f64, g: f64, t: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidPointerParams(format!("sigma {sigma} must be positive")));
        }
        if !(g * t >= 0.0) || !(g * t).is_finite() {
            return Err(Error::InvalidPointerParams(format!("g*t = {} must be non-negative", g * t)));
        }
        Ok(Self { sigma, g, t })
    }

    pub fn gt(&self) -> f64 {
        self.g * self.t
    }
}

/// Pointer wavefunction sampled on a [`PointerGrid`], normalized with the
/// grid measure: `sum |amps_j|^2 dq = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct PointerState {
    grid: PointerGrid,
    amps: Vec<Complex64>,
}

impl PointerState {
    pub fn from_amplitudes(grid: PointerGrid, amps: Vec<Complex64>) -> Result<Self> {
        if amps.len() != grid.points() {
            return Err(Error::DimensionMismatch { expected: grid.points(), found: amps.len() });
        }
        let state = Self { grid, amps };
        let norm = state.norm_sqr();
        if (norm - 1.0).abs() > NORM_TOL {
            return Err(Error::NotNormalized { norm: norm.sqrt() });
        }
        Ok(state)
    }

    /// Samples `f(q)` on the grid and rescales to unit norm.
    pub fn from_fn(grid: PointerGrid, f: impl Fn(f64) -> Complex64) -> Result<Self> {
        let mut amps: Vec<Complex64> = grid.positions().into_iter().map(f).collect();
        let norm = (tensor::norm_sqr(&amps) * grid.spacing()).sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::ZeroVector);
        }
        amps.iter_mut().for_each(|z| *z /= norm);
        Ok(Self { grid, amps })
    }

    pub fn grid(&self) -> &PointerGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        tensor::norm_sqr(&self.amps) * self.grid.spacing()
    }

    /// Norm computed in the momentum representation (Parseval).
    pub fn momentum_norm_sqr(&self) -> f64 {
        let mut lane = self.amps.clone();
        tensor::fft(&mut lane);
        tensor::norm_sqr(&lane) / self.grid.points() as f64 * self.grid.spacing()
    }

    /// `exp(-i a K)|phi>`, i.e. `phi(q) -> phi(q - a)`.
    pub fn translated(&self, shift: f64) -> Result<Self> {
        let limit = self.grid.shift_limit();
        if shift.abs() > limit {
            return Err(Error::WrapAround { pointer: 0, shift: shift.abs(), limit });
        }
        let mut amps = self.amps.clone();
        tensor::translate(&mut amps, &self.grid.wavenumbers(), shift);
        Ok(Self { grid: self.grid, amps })
    }

    pub fn expect_q(&self) -> f64 {
        tensor::position_moment(&self.amps, &[self.grid.points()], 0, &self.grid.positions())
            * self.grid.spacing()
    }

    pub fn expect_k(&self) -> f64 {
        tensor::momentum_moment(&self.amps, &[self.grid.points()], 0, &self.grid.wavenumbers())
            * self.grid.spacing()
    }

    /// `<Q>/(2 sigma) + i sigma <K>`.
    pub fn expect_ann(&self, sigma: f64) -> Complex64 {
        Complex64::new(self.expect_q() / (2.0 * sigma), sigma * self.expect_k() / HBAR)
    }
}

/// Normalized Gaussian `phi_i(q) ∝ exp(-q^2 / (4 sigma^2))`.
pub fn gaussian_pointer(grid: &PointerGrid, sigma: f64) -> Result<PointerState> {
    check_width(grid, sigma)?;
    PointerState::from_fn(*grid, |q| Complex64::new((-q * q / (4.0 * sigma * sigma)).exp(), 0.0))
}

pub(crate) fn check_width(grid: &PointerGrid, sigma: f64) -> Result<()> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::InvalidPointerParams(format!("sigma {sigma} must be positive")));
    }
    let required = MIN_HALF_WIDTH_SIGMAS * sigma;
    if grid.half_width() < required {
        return Err(Error::GridTooNarrow { sigma, half_width: grid.half_width(), required });
    }
    Ok(())
}

fn check_normalized(state: &PointerState) -> Result<()> {
    let norm = state.norm_sqr();
    if (norm - 1.0).abs() > NORM_TOL {
        return Err(Error::NotNormalized { norm: norm.sqrt() });
    }
    Ok(())
}

pub fn expect_q(state: &PointerState) -> Result<f64> {
    check_normalized(state)?;
    Ok(state.expect_q())
}

pub fn expect_k(state: &PointerState) -> Result<f64> {
    check_normalized(state)?;
    Ok(state.expect_k())
}

pub fn expect_ann(state: &PointerState, sigma: f64) -> Result<Complex64> {
    check_normalized(state)?;
    Ok(state.expect_ann(sigma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn default_grid() -> PointerGrid {
        PointerGrid::new(512, 16.0).unwrap()
    }

    fn gaussian_at(grid: PointerGrid, sigma: f64, q0: f64, k0: f64) -> PointerState {
        PointerState::from_fn(grid, |q| {
            Complex64::from_polar((-(q - q0) * (q - q0) / (4.0 * sigma * sigma)).exp(), k0 * q)
        })
        .unwrap()
    }

    #[test]
    fn grid_validation() {
        assert!(PointerGrid::new(8, 1.0).is_err());
        assert!(PointerGrid::new(100, 1.0).is_err());
        assert!(PointerGrid::new(64, 0.0).is_err());
        let g = default_grid();
        assert_abs_diff_eq!(g.spacing(), 1.0 / 16.0);
        assert_abs_diff_eq!(g.position(256), 0.0);
        assert_abs_diff_eq!(g.wavenumber(1), PI / 16.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.wavenumber(511), -PI / 16.0, epsilon = 1e-15);
    }

    #[test]
    fn initial_gaussian_moments() {
        let phi = gaussian_pointer(&default_grid(), 1.0).unwrap();
        assert_abs_diff_eq!(phi.norm_sqr(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(expect_q(&phi).unwrap(), 0.0, epsilon = 1e-14);
        assert_abs_diff_eq!(expect_k(&phi).unwrap(), 0.0, epsilon = 1e-14);
        let second: f64 = phi
            .amplitudes()
            .iter()
            .zip(phi.grid().positions())
            .map(|(z, q)| z.norm_sqr() * q * q)
            .sum::<f64>()
            * phi.grid().spacing();
        assert_abs_diff_eq!(second, 1.0, epsilon = 1e-6);
        assert!(expect_ann(&phi, 1.0).unwrap().norm() < 1e-14);
    }

    #[test]
    fn narrow_grid_is_rejected() {
        let grid = PointerGrid::new(64, 4.0).unwrap();
        assert!(matches!(gaussian_pointer(&grid, 1.0), Err(Error::GridTooNarrow { .. })));
    }

    #[test]
    fn displaced_and_boosted_moments() {
        let grid = default_grid();
        let shifted = gaussian_at(grid, 1.0, 0.3, 0.0);
        assert_abs_diff_eq!(expect_q(&shifted).unwrap(), 0.3, epsilon = 1e-8);
        assert_abs_diff_eq!(expect_k(&shifted).unwrap(), 0.0, epsilon = 1e-12);
        let ann = expect_ann(&shifted, 1.0).unwrap();
        assert_abs_diff_eq!(ann.re, 0.15, epsilon = 1e-8);
        assert_abs_diff_eq!(ann.im, 0.0, epsilon = 1e-12);

        let boosted = gaussian_at(grid, 1.0, 0.0, 0.2);
        assert_abs_diff_eq!(expect_k(&boosted).unwrap(), 0.2, epsilon = 1e-8);
        assert_abs_diff_eq!(expect_q(&boosted).unwrap(), 0.0, epsilon = 1e-12);
        let ann = expect_ann(&boosted, 1.0).unwrap();
        assert_abs_diff_eq!(ann.im, 0.2, epsilon = 1e-8);
    }

    #[test]
    fn unnormalized_state_is_rejected() {
        let grid = PointerGrid::new(16, 8.0).unwrap();
        let amps = vec![Complex64::new(1.0, 0.0); 16];
        assert!(matches!(PointerState::from_amplitudes(grid, amps), Err(Error::NotNormalized { .. })));
    }

    #[test]
    fn parseval() {
        let grid = default_grid();
        for (q0, k0) in [(0.0, 0.0), (0.7, -0.4), (-2.0, 1.3)] {
            let phi = gaussian_at(grid, 1.0, q0, k0);
            assert_abs_diff_eq!(phi.norm_sqr(), phi.momentum_norm_sqr(), epsilon = 1e-10);
        }
    }

    #[test]
    fn spectral_translation_is_exact() {
        let phi = gaussian_pointer(&default_grid(), 1.0).unwrap();
        for a in [0.02, -0.5, 1.7, 4.0] {
            let moved = phi.translated(a).unwrap();
            assert_abs_diff_eq!(moved.expect_q(), a, epsilon = 1e-12);
            assert_abs_diff_eq!(moved.norm_sqr(), 1.0, epsilon = 1e-12);
        }
        assert!(matches!(phi.translated(4.5), Err(Error::WrapAround { .. })));
    }

    #[test]
    fn grid_convergence() {
        let coarse = PointerGrid::new(512, 16.0).unwrap();
        let fine = PointerGrid::new(1024, 16.0).unwrap();
        let a = gaussian_at(coarse, 1.0, 0.4, 0.3);
        let b = gaussian_at(fine, 1.0, 0.4, 0.3);
        assert!((a.expect_q() - b.expect_q()).abs() < 1e-9);
        assert!((a.expect_k() - b.expect_k()).abs() < 1e-9);
        assert!((a.expect_ann(1.0) - b.expect_ann(1.0)).norm() < 1e-9);
    }
}
