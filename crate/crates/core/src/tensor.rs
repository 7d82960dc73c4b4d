//! Dense row-major complex tensors and the spectral kernels shared by the
//! pointer and evolution modules. Lanes are 1-D fibers along one axis.

use std::cell::RefCell;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// Unnormalized forward DFT, `X_m = sum_j x_j exp(-2 pi i j m / M)`.
pub(crate) fn fft(buf: &mut [Complex64]) {
    plan(buf.len(), false).process(buf);
}

/// Inverse of [`fft`], including the `1/M` factor.
pub(crate) fn ifft(buf: &mut [Complex64]) {
    plan(buf.len(), true).process(buf);
    let scale = 1.0 / buf.len() as f64;
    buf.iter_mut().for_each(|z| *z *= scale);
}

/// `exp(-i shift K)` applied spectrally: `psi(q) -> psi(q - shift)`.
pub(crate) fn translate(lane: &mut [Complex64], wavenumbers: &[f64], shift: f64) {
    if shift == 0.0 {
        return;
    }
    fft(lane);
    for (z, &k) in lane.iter_mut().zip(wavenumbers) {
        *z *= Complex64::cis(-k * shift);
    }
    ifft(lane);
}

/// `K psi` with `K = -i d/dq`.
pub(crate) fn apply_momentum(lane: &mut [Complex64], wavenumbers: &[f64]) {
    fft(lane);
    for (z, &k) in lane.iter_mut().zip(wavenumbers) {
        *z *= k;
    }
    ifft(lane);
}

fn strides(dims: &[usize], axis: usize) -> (usize, usize, usize) {
    let len = dims[axis];
    let inner: usize = dims[axis + 1..].iter().product();
    let outer: usize = dims[..axis].iter().product();
    (outer, len, inner)
}

fn decode(dims: &[usize], axis: usize, o: usize, i: usize, idx: &mut [usize]) {
    let mut rem = o;
    for a in (0..axis).rev() {
        idx[a] = rem % dims[a];
        rem /= dims[a];
    }
    let mut rem = i;
    for a in (axis + 1..dims.len()).rev() {
        idx[a] = rem % dims[a];
        rem /= dims[a];
    }
    idx[axis] = 0;
}

/// Calls `f` on every lane along `axis`, writing the lane back afterwards.
/// The second argument is the multi-index of the lane (with `idx[axis] == 0`).
pub(crate) fn map_lanes<F>(data: &mut [Complex64], dims: &[usize], axis: usize, mut f: F)
where
    F: FnMut(&mut [Complex64], &[usize]),
{
    let (outer, len, inner) = strides(dims, axis);
    let mut buf = vec![Complex64::default(); len];
    let mut idx = vec![0usize; dims.len()];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            for (j, z) in buf.iter_mut().enumerate() {
                *z = data[base + j * inner];
            }
            decode(dims, axis, o, i, &mut idx);
            f(&mut buf, &idx);
            for (j, z) in buf.iter().enumerate() {
                data[base + j * inner] = *z;
            }
        }
    }
}

/// Read-only lane visitor; lanes are handed over as scratch copies.
pub(crate) fn visit_lanes<F>(data: &[Complex64], dims: &[usize], axis: usize, mut f: F)
where
    F: FnMut(&mut [Complex64]),
{
    let (outer, len, inner) = strides(dims, axis);
    let mut buf = vec![Complex64::default(); len];
    for o in 0..outer {
        for i in 0..inner {
            let base = o * len * inner + i;
            for (j, z) in buf.iter_mut().enumerate() {
                *z = data[base + j * inner];
            }
            f(&mut buf);
        }
    }
}

/// `sum |x|^2` (multiply by the grid measure for the physical norm).
pub(crate) fn norm_sqr(data: &[Complex64]) -> f64 {
    data.iter().map(|z| z.norm_sqr()).sum()
}

/// `sum |x|^2 q` along `axis`, without measure.
pub(crate) fn position_moment(data: &[Complex64], dims: &[usize], axis: usize, positions: &[f64]) -> f64 {
    let (outer, len, inner) = strides(dims, axis);
    let mut acc = 0.0;
    for o in 0..outer {
        for (j, &q) in positions.iter().enumerate().take(len) {
            let base = (o * len + j) * inner;
            let w: f64 = data[base..base + inner].iter().map(|z| z.norm_sqr()).sum();
            acc += w * q;
        }
    }
    acc
}

/// `sum |x|^2 k` along `axis` evaluated in the Fourier representation
/// (Parseval-consistent with [`norm_sqr`]), without measure.
pub(crate) fn momentum_moment(data: &[Complex64], dims: &[usize], axis: usize, wavenumbers: &[f64]) -> f64 {
    let len = dims[axis] as f64;
    let mut acc = 0.0;
    visit_lanes(data, dims, axis, |lane| {
        fft(lane);
        acc += lane.iter().zip(wavenumbers).map(|(z, &k)| z.norm_sqr() * k).sum::<f64>();
    });
    acc / len
}

/// Marginal `|x|^2` summed over every axis except `axis`, without measure.
pub(crate) fn position_marginal(data: &[Complex64], dims: &[usize], axis: usize) -> Vec<f64> {
    let (outer, len, inner) = strides(dims, axis);
    let mut out = vec![0.0; len];
    for o in 0..outer {
        for (j, slot) in out.iter_mut().enumerate() {
            let base = (o * len + j) * inner;
            *slot += data[base..base + inner].iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
    }
    out
}

/// Marginal `|X_m|^2 / M` in FFT order, summed over the other axes.
pub(crate) fn momentum_marginal(data: &[Complex64], dims: &[usize], axis: usize) -> Vec<f64> {
    let len = dims[axis];
    let mut out = vec![0.0; len];
    visit_lanes(data, dims, axis, |lane| {
        fft(lane);
        for (slot, z) in out.iter_mut().zip(lane.iter()) {
            *slot += z.norm_sqr() / len as f64;
        }
    });
    out
}

/// Applies `a = Q/(2 sigma) + i sigma K` along `axis` in place.
pub(crate) fn apply_annihilation(
    data: &mut [Complex64],
    dims: &[usize],
    axis: usize,
    positions: &[f64],
    wavenumbers: &[f64],
    sigma: f64,
) {
    let mut k_lane = vec![Complex64::default(); dims[axis]];
    map_lanes(data, dims, axis, |lane, _| {
        k_lane.copy_from_slice(lane);
        apply_momentum(&mut k_lane, wavenumbers);
        for ((z, kz), &q) in lane.iter_mut().zip(&k_lane).zip(positions) {
            *z = *z * (q / (2.0 * sigma)) + Complex64::new(0.0, sigma) * kz;
        }
    });
}

/// `sum conj(a) b`.
pub(crate) fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Pairwise (cascade) summation; the result depends only on the input order.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if values.len() <= LEAF {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}
