//! Exact unitary evolution of a finite system coupled to up to three
//! Gaussian pointers.
//!
//! A joint state is stored as an ensemble of pure branches. Each branch is a
//! dense row-major tensor of shape `[N, M_1, ..., M_P]` normalized with the
//! grid measure `dq_1 ... dq_P`. Couplings act through the eigenvectors of the
//! system observable: for an eigenvector `u` with eigenvalue `lambda`, the
//! component `u ⊗ (u† psi)` is translated (momentum coupling) or phased
//! (position coupling) by `g t lambda`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hilbert::{
    check_dims, check_orthonormal, hermitian_eigen, CMatrix, CVector, DensityMatrix, OperatorMatrix, StateVector,
    HERMITIAN_TOL,
};
use crate::pointer::{check_width, gaussian_pointer, PointerGrid, HBAR};
use crate::tensor;

pub const MAX_POINTERS: usize = 3;
/// Largest number of amplitudes in a single branch tensor.
pub const MAX_ELEMENTS: usize = 1 << 24;
/// Eigenvalues closer than this are treated as one degenerate level.
pub const DEGENERACY_TOL: f64 = 1e-10;
/// Post-selection below this probability is refused.
pub const POSTSELECT_MIN: f64 = 1e-14;
/// Branch norms are preserved within this tolerance.
pub const UNITARITY_TOL: f64 = 1e-10;

/// Grid and initial Gaussian width of one pointer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointerSpec {
    pub grid: PointerGrid,
    pub sigma: f64,
}

impl PointerSpec {
    pub fn new(grid: PointerGrid, sigma: f64) -> Result<Self> {
        check_width(&grid, sigma)?;
        Ok(Self { grid, sigma })
    }

    /// Default grid for the given width.
    pub fn default_for(sigma: f64) -> Result<Self> {
        Self::new(PointerGrid::default_for(sigma)?, sigma)
    }
}

/// System input for [`make_joint`].
#[derive(Clone, Debug, PartialEq)]
pub enum SystemState {
    Pure(StateVector),
    Mixed(DensityMatrix),
}

impl SystemState {
    pub fn dim(&self) -> usize {
        match self {
            SystemState::Pure(psi) => psi.dim(),
            SystemState::Mixed(rho) => rho.dim(),
        }
    }

    pub fn density(&self) -> DensityMatrix {
        match self {
            SystemState::Pure(psi) => psi.density(),
            SystemState::Mixed(rho) => rho.clone(),
        }
    }

    /// Pure components with their weights, largest first.
    pub fn ensemble(&self) -> Vec<(f64, StateVector)> {
        match self {
            SystemState::Pure(psi) => vec![(1.0, psi.clone())],
            SystemState::Mixed(rho) => rho.eigen_ensemble(),
        }
    }
}

impl From<StateVector> for SystemState {
    fn from(psi: StateVector) -> Self {
        SystemState::Pure(psi)
    }
}

impl From<DensityMatrix> for SystemState {
    fn from(rho: DensityMatrix) -> Self {
        SystemState::Mixed(rho)
    }
}

/// Which pointer variable multiplies the system observable in the coupling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointerVariable {
    /// `exp(-i g t A K)`: translates the pointer position.
    Momentum,
    /// `exp(-i g t A Q)`: kicks the pointer momentum.
    Position,
}

/// One von Neumann coupling `exp(-i g t A D)` on a chosen pointer.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingSpec {
    pub observable: OperatorMatrix,
    pub pointer: usize,
    pub g: f64,
    pub t: f64,
    pub variable: PointerVariable,
}

impl CouplingSpec {
    pub fn new(observable: OperatorMatrix, pointer: usize, g: f64, t: f64, variable: PointerVariable) -> Result<Self> {
        let deviation = observable.hermitian_deviation();
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        if !(g * t).is_finite() {
            return Err(Error::InvalidPointerParams(format!("g*t = {} is not finite", g * t)));
        }
        Ok(Self { observable, pointer, g, t, variable })
    }

    /// Momentum coupling with `g = gt`, `t = 1`.
    pub fn momentum(observable: OperatorMatrix, pointer: usize, gt: f64) -> Result<Self> {
        Self::new(observable, pointer, gt, 1.0, PointerVariable::Momentum)
    }

    /// Position coupling with `g = gt`, `t = 1`.
    pub fn position(observable: OperatorMatrix, pointer: usize, gt: f64) -> Result<Self> {
        Self::new(observable, pointer, gt, 1.0, PointerVariable::Position)
    }

    pub fn gt(&self) -> f64 {
        self.g * self.t
    }
}

/// Eigenmodes with nonzero eigenvalue, degenerate levels snapped to a
/// common value and projector spectra snapped to exactly 0 and 1.
fn spectrum(op: &OperatorMatrix) -> Vec<(f64, CVector)> {
    let (vals, vecs) = hermitian_eigen(op.matrix());
    let m = op.matrix();
    let idempotency = (m * m - m).camax();
    let is_projector = idempotency <= HERMITIAN_TOL;
    let mut modes = Vec::new();
    let mut i = 0;
    while i < vals.len() {
        let mut j = i + 1;
        while j < vals.len() && vals[j] - vals[i] <= DEGENERACY_TOL {
            j += 1;
        }
        let mean = vals[i..j].iter().sum::<f64>() / (j - i) as f64;
        let level = if is_projector {
            if mean > 0.5 {
                1.0
            } else {
                0.0
            }
        } else if mean.abs() <= DEGENERACY_TOL {
            0.0
        } else {
            mean
        };
        if level != 0.0 {
            for k in i..j {
                modes.push((level, vecs.column(k).into_owned()));
            }
        }
        i = j;
    }
    modes
}

fn max_level(modes: &[(f64, CVector)]) -> f64 {
    modes.iter().map(|(l, _)| l.abs()).fold(0.0, f64::max)
}

/// `phi[r] = sum_a conj(u_a) psi[a, r]`.
fn contract_system(amps: &[Complex64], u: &[Complex64]) -> Vec<Complex64> {
    let rest = amps.len() / u.len();
    let mut out = vec![Complex64::default(); rest];
    for (a, ua) in u.iter().enumerate() {
        let w = ua.conj();
        if w == Complex64::default() {
            continue;
        }
        for (o, z) in out.iter_mut().zip(&amps[a * rest..(a + 1) * rest]) {
            *o += w * z;
        }
    }
    out
}

/// `psi[a, r] += u_a delta[r]`.
fn add_outer(amps: &mut [Complex64], u: &[Complex64], delta: &[Complex64]) {
    let rest = delta.len();
    for (a, ua) in u.iter().enumerate() {
        if *ua == Complex64::default() {
            continue;
        }
        for (z, d) in amps[a * rest..(a + 1) * rest].iter_mut().zip(delta) {
            *z += ua * d;
        }
    }
}

/// One pure component of a [`JointState`].
#[derive(Clone, Debug, PartialEq)]
pub struct Branch {
    weight: f64,
    amps: Vec<Complex64>,
}

impl Branch {
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }
}

/// Outcome of a projective measurement on a joint state.
#[derive(Clone, Debug)]
pub struct MeasurementOutcome {
    pub index: usize,
    pub prob: f64,
    /// `None` when the outcome cannot occur.
    pub state: Option<JointState>,
}

/// Probability-weighted pointer readouts restricted to one system outcome,
/// without renormalization.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConditionalSignal {
    pub prob: f64,
    /// `P(c) <Q>_c`.
    pub q: f64,
    /// `P(c) <K>_c`.
    pub k: f64,
}

/// System ⊗ pointers state as a weighted ensemble of pure branches.
#[derive(Clone, Debug, PartialEq)]
pub struct JointState {
    dim: usize,
    pointers: Vec<PointerSpec>,
    branches: Vec<Branch>,
    /// Worst-case accumulated translation of each pointer.
    shifts: Vec<f64>,
    /// Worst-case accumulated momentum kick of each pointer.
    kicks: Vec<f64>,
}

/// Builds `psi_k ⊗ phi_1 ⊗ ... ⊗ phi_P` for every eigenbranch of the system.
pub fn make_joint(system: &SystemState, pointers: &[PointerSpec]) -> Result<JointState> {
    if pointers.is_empty() || pointers.len() > MAX_POINTERS {
        return Err(Error::PointerIndex { index: pointers.len(), count: MAX_POINTERS });
    }
    let dim = system.dim();
    let elements = pointers.iter().try_fold(dim, |acc, p| acc.checked_mul(p.grid.points()));
    match elements {
        Some(e) if e <= MAX_ELEMENTS => {}
        _ => {
            return Err(Error::StateTooLarge { elements: elements.unwrap_or(usize::MAX), limit: MAX_ELEMENTS });
        }
    }
    let mut product = vec![Complex64::new(1.0, 0.0)];
    for p in pointers {
        let phi = gaussian_pointer(&p.grid, p.sigma)?;
        let mut next = Vec::with_capacity(product.len() * phi.amplitudes().len());
        for x in &product {
            next.extend(phi.amplitudes().iter().map(|y| x * y));
        }
        product = next;
    }
    let branches = system
        .ensemble()
        .into_iter()
        .map(|(weight, psi)| {
            let mut amps = Vec::with_capacity(dim * product.len());
            for a in psi.amplitudes() {
                amps.extend(product.iter().map(|z| a * z));
            }
            Branch { weight, amps }
        })
        .collect();
    Ok(JointState {
        dim,
        pointers: pointers.to_vec(),
        branches,
        shifts: vec![0.0; pointers.len()],
        kicks: vec![0.0; pointers.len()],
    })
}

/// `<A_w> = <Q>/(g t) + i <K> 2 sigma^2 / (g t hbar)`.
pub fn weak_value_from_moments(qf: f64, kf: f64, g: f64, t: f64, sigma: f64) -> Result<Complex64> {
    let gt = g * t;
    if !(gt > 0.0) || !gt.is_finite() {
        return Err(Error::ZeroCoupling(gt));
    }
    Ok(Complex64::new(qf / gt, kf * 2.0 * sigma * sigma / (gt * HBAR)))
}

impl JointState {
    pub fn from_pure(psi: &StateVector, pointers: &[PointerSpec]) -> Result<Self> {
        make_joint(&SystemState::Pure(psi.clone()), pointers)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn pointers(&self) -> &[PointerSpec] {
        &self.pointers
    }

    pub fn pointer_count(&self) -> usize {
        self.pointers.len()
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    /// Tensor shape `[N, M_1, ..., M_P]`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.dim).chain(self.pointer_dims()).collect()
    }

    fn pointer_dims(&self) -> Vec<usize> {
        self.pointers.iter().map(|p| p.grid.points()).collect()
    }

    /// Grid measure `dq_1 ... dq_P`.
    fn measure(&self) -> f64 {
        self.pointers.iter().map(|p| p.grid.spacing()).product()
    }

    /// Norm of every branch with the grid measure.
    pub fn branch_norms(&self) -> Vec<f64> {
        let m = self.measure();
        self.branches.iter().map(|b| (tensor::norm_sqr(&b.amps) * m).sqrt()).collect()
    }

    /// Reduced system density matrix, tracing out every pointer.
    pub fn reduced_system(&self) -> CMatrix {
        let n = self.dim;
        let m = self.measure();
        let mut out = CMatrix::zeros(n, n);
        for b in &self.branches {
            let rest = b.amps.len() / n;
            for i in 0..n {
                let ri = &b.amps[i * rest..(i + 1) * rest];
                for j in 0..n {
                    let rj = &b.amps[j * rest..(j + 1) * rest];
                    out[(i, j)] += tensor::inner(rj, ri) * b.weight * m;
                }
            }
        }
        out
    }

    fn check_pointer(&self, index: usize) -> Result<()> {
        if index >= self.pointers.len() {
            return Err(Error::PointerIndex { index, count: self.pointers.len() });
        }
        Ok(())
    }

    fn check_vector(&self, c: &StateVector) -> Result<()> {
        check_dims(self.dim, c.dim())
    }

    /// Applies `exp(-i g t A D)` with `D` the chosen pointer variable.
    pub fn apply_coupling(&self, spec: &CouplingSpec) -> Result<JointState> {
        check_dims(self.dim, spec.observable.dim())?;
        self.check_pointer(spec.pointer)?;
        let gt = spec.gt();
        if gt == 0.0 {
            return Ok(self.clone());
        }
        let modes = spectrum(&spec.observable);
        let reach = gt.abs() * max_level(&modes);
        let p = spec.pointer;
        let grid = self.pointers[p].grid;
        let mut out = self.clone();
        match spec.variable {
            PointerVariable::Momentum => {
                let shift = self.shifts[p] + reach;
                if shift > grid.shift_limit() {
                    return Err(Error::WrapAround { pointer: p, shift, limit: grid.shift_limit() });
                }
                out.shifts[p] = shift;
            }
            PointerVariable::Position => {
                let kick = self.kicks[p] + reach;
                if kick > grid.kick_limit() {
                    return Err(Error::WrapAround { pointer: p, shift: kick, limit: grid.kick_limit() });
                }
                out.kicks[p] = kick;
            }
        }
        let pdims = self.pointer_dims();
        let ks = grid.wavenumbers();
        let qs = grid.positions();
        for branch in &mut out.branches {
            for (level, u) in &modes {
                let u = u.as_slice();
                let phi = contract_system(&branch.amps, u);
                let mut moved = phi.clone();
                let x = gt * level;
                match spec.variable {
                    PointerVariable::Momentum => {
                        tensor::map_lanes(&mut moved, &pdims, p, |lane, _| tensor::translate(lane, &ks, x));
                    }
                    PointerVariable::Position => {
                        let phases: Vec<Complex64> = qs.iter().map(|q| Complex64::cis(-x * q)).collect();
                        tensor::map_lanes(&mut moved, &pdims, p, |lane, _| {
                            lane.iter_mut().zip(&phases).for_each(|(z, ph)| *z *= ph);
                        });
                    }
                }
                let delta: Vec<Complex64> = moved.iter().zip(&phi).map(|(a, b)| a - b).collect();
                add_outer(&mut branch.amps, u, &delta);
            }
        }
        Ok(out)
    }

    /// Applies `exp(-i g2 t E ⊗ K_dst ⊗ Q_src)`: the destination pointer is
    /// translated by `g2 t lambda q_src` for each eigenvalue `lambda` of `E`.
    pub fn apply_conditional_coupling(
        &self,
        e: &OperatorMatrix,
        src: usize,
        dst: usize,
        g2: f64,
        t: f64,
    ) -> Result<JointState> {
        check_dims(self.dim, e.dim())?;
        self.check_pointer(src)?;
        self.check_pointer(dst)?;
        if src == dst {
            return Err(Error::PointerCollision);
        }
        let deviation = e.hermitian_deviation();
        if deviation > HERMITIAN_TOL {
            return Err(Error::NotHermitian { deviation });
        }
        let gt = g2 * t;
        if gt == 0.0 {
            return Ok(self.clone());
        }
        let modes = spectrum(e);
        let src_grid = self.pointers[src].grid;
        let dst_grid = self.pointers[dst].grid;
        let shift = self.shifts[dst] + gt.abs() * max_level(&modes) * src_grid.half_width();
        if shift > dst_grid.shift_limit() {
            return Err(Error::WrapAround { pointer: dst, shift, limit: dst_grid.shift_limit() });
        }
        let mut out = self.clone();
        out.shifts[dst] = shift;
        let pdims = self.pointer_dims();
        let ks = dst_grid.wavenumbers();
        for branch in &mut out.branches {
            for (level, u) in &modes {
                let u = u.as_slice();
                let phi = contract_system(&branch.amps, u);
                let mut moved = phi.clone();
                tensor::map_lanes(&mut moved, &pdims, dst, |lane, idx| {
                    let q = src_grid.position(idx[src]);
                    tensor::translate(lane, &ks, gt * level * q);
                });
                let delta: Vec<Complex64> = moved.iter().zip(&phi).map(|(a, b)| a - b).collect();
                add_outer(&mut branch.amps, u, &delta);
            }
        }
        Ok(out)
    }

    /// Pointer tensors `<c|psi_k>` (unnormalized) with their branch weights.
    fn project(&self, c: &StateVector) -> Vec<(f64, Vec<Complex64>)> {
        self.branches.iter().map(|b| (b.weight, contract_system(&b.amps, c.amplitudes()))).collect()
    }

    fn outcome_prob(&self, projected: &[(f64, Vec<Complex64>)]) -> f64 {
        let m = self.measure();
        projected.iter().map(|(w, phi)| w * tensor::norm_sqr(phi) * m).sum()
    }

    fn conditioned(&self, c: &StateVector, projected: Vec<(f64, Vec<Complex64>)>, prob: f64) -> JointState {
        let m = self.measure();
        let mut branches = Vec::new();
        for (w, phi) in projected {
            let norm_sqr = tensor::norm_sqr(&phi) * m;
            let weight = w * norm_sqr / prob;
            if !(weight > 0.0) {
                continue;
            }
            let scale = 1.0 / norm_sqr.sqrt();
            let mut amps = Vec::with_capacity(self.dim * phi.len());
            for ca in c.amplitudes() {
                amps.extend(phi.iter().map(|z| ca * z * scale));
            }
            branches.push(Branch { weight, amps });
        }
        let total: f64 = branches.iter().map(|b| b.weight).sum();
        branches.iter_mut().for_each(|b| b.weight /= total);
        JointState {
            dim: self.dim,
            pointers: self.pointers.clone(),
            branches,
            shifts: self.shifts.clone(),
            kicks: self.kicks.clone(),
        }
    }

    /// Projects the system onto `c` and renormalizes.
    pub fn postselect(&self, c: &StateVector) -> Result<(f64, JointState)> {
        self.check_vector(c)?;
        let projected = self.project(c);
        let prob = self.outcome_prob(&projected);
        if !(prob >= POSTSELECT_MIN) {
            return Err(Error::PostSelectionImpossible { prob, threshold: POSTSELECT_MIN });
        }
        Ok((prob, self.conditioned(c, projected, prob)))
    }

    /// Projective measurement of the system in an orthonormal basis.
    pub fn strong_measure(&self, basis: &[StateVector]) -> Result<Vec<MeasurementOutcome>> {
        check_orthonormal(basis)?;
        self.check_vector(&basis[0])?;
        Ok(basis
            .iter()
            .enumerate()
            .map(|(index, c)| {
                let projected = self.project(c);
                let prob = self.outcome_prob(&projected);
                let state = (prob >= POSTSELECT_MIN).then(|| self.conditioned(c, projected, prob));
                MeasurementOutcome { index, prob, state }
            })
            .collect())
    }

    /// Weighted `(<Q>, <K>)` of pointer `index`.
    pub fn pointer_moments(&self, index: usize) -> Result<(f64, f64)> {
        self.check_pointer(index)?;
        let dims = self.dims();
        let grid = self.pointers[index].grid;
        let qs = grid.positions();
        let ks = grid.wavenumbers();
        let m = self.measure();
        let mut q = 0.0;
        let mut k = 0.0;
        for b in &self.branches {
            q += b.weight * tensor::position_moment(&b.amps, &dims, index + 1, &qs) * m;
            k += b.weight * tensor::momentum_moment(&b.amps, &dims, index + 1, &ks) * m;
        }
        Ok((q, k))
    }

    /// Marginal position density of pointer `index` on its grid (integrates
    /// to one with `dq`).
    pub fn position_density(&self, index: usize) -> Result<Vec<f64>> {
        self.check_pointer(index)?;
        let dims = self.dims();
        let m = self.measure() / self.pointers[index].grid.spacing();
        let mut out = vec![0.0; dims[index + 1]];
        for b in &self.branches {
            let marg = tensor::position_marginal(&b.amps, &dims, index + 1);
            out.iter_mut().zip(marg).for_each(|(o, x)| *o += b.weight * x * m);
        }
        Ok(out)
    }

    fn check_distinct(&self, indices: &[usize]) -> Result<()> {
        for (i, &a) in indices.iter().enumerate() {
            self.check_pointer(a)?;
            if indices[..i].contains(&a) {
                return Err(Error::PointerCollision);
            }
        }
        Ok(())
    }

    fn ann_product_on(&self, data: &[Complex64], dims: &[usize], axes: &[usize], pointers: &[usize]) -> Complex64 {
        let mut chi = data.to_vec();
        for (&axis, &p) in axes.iter().zip(pointers) {
            let spec = &self.pointers[p];
            tensor::apply_annihilation(
                &mut chi,
                dims,
                axis,
                &spec.grid.positions(),
                &spec.grid.wavenumbers(),
                spec.sigma,
            );
        }
        tensor::inner(data, &chi)
    }

    /// `<a_i a_j ...>` on the joint state, with `a = Q/(2 sigma) + i sigma K`
    /// acting on each listed pointer.
    pub fn joint_ann_product(&self, indices: &[usize]) -> Result<Complex64> {
        self.check_distinct(indices)?;
        let dims = self.dims();
        let axes: Vec<usize> = indices.iter().map(|i| i + 1).collect();
        let m = self.measure();
        Ok(self
            .branches
            .iter()
            .map(|b| self.ann_product_on(&b.amps, &dims, &axes, indices) * (b.weight * m))
            .sum())
    }

    /// `<a_i a_j>` for two distinct pointers.
    pub fn joint_ann_moment(&self, i: usize, j: usize) -> Result<Complex64> {
        if i == j {
            return Err(Error::PointerCollision);
        }
        self.joint_ann_product(&[i, j])
    }

    /// `P(c) <Q>_c` and `P(c) <K>_c` of pointer `index` for system outcome `c`.
    pub fn conditional_signal(&self, c: &StateVector, index: usize) -> Result<ConditionalSignal> {
        self.check_vector(c)?;
        self.check_pointer(index)?;
        let pdims = self.pointer_dims();
        let grid = self.pointers[index].grid;
        let qs = grid.positions();
        let ks = grid.wavenumbers();
        let m = self.measure();
        let mut out = ConditionalSignal { prob: 0.0, q: 0.0, k: 0.0 };
        for (w, phi) in self.project(c) {
            out.prob += w * tensor::norm_sqr(&phi) * m;
            out.q += w * tensor::position_moment(&phi, &pdims, index, &qs) * m;
            out.k += w * tensor::momentum_moment(&phi, &pdims, index, &ks) * m;
        }
        Ok(out)
    }

    /// `P(c) <a_i a_j ...>_c` for system outcome `c`, and `P(c)`.
    pub fn conditional_ann_product(&self, c: &StateVector, indices: &[usize]) -> Result<(Complex64, f64)> {
        self.check_vector(c)?;
        self.check_distinct(indices)?;
        let pdims = self.pointer_dims();
        let m = self.measure();
        let mut value = Complex64::default();
        let mut prob = 0.0;
        for (w, phi) in self.project(c) {
            prob += w * tensor::norm_sqr(&phi) * m;
            value += self.ann_product_on(&phi, &pdims, indices, indices) * (w * m);
        }
        Ok((value, prob))
    }

    /// Conditioned pointer densities for system outcome `c`: the position
    /// density on the grid and the momentum density in FFT order, both
    /// multiplied by `P(c)` (each sums to `P(c)` with its own measure).
    pub fn conditional_densities(&self, c: &StateVector, index: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_vector(c)?;
        self.check_pointer(index)?;
        let pdims = self.pointer_dims();
        let grid = self.pointers[index].grid;
        let other = self.measure() / grid.spacing();
        let mut pos = vec![0.0; grid.points()];
        let mut mom = vec![0.0; grid.points()];
        for (w, phi) in self.project(c) {
            let pm = tensor::position_marginal(&phi, &pdims, index);
            let km = tensor::momentum_marginal(&phi, &pdims, index);
            pos.iter_mut().zip(pm).for_each(|(o, x)| *o += w * x * other);
            mom.iter_mut().zip(km).for_each(|(o, x)| *o += w * x * other);
        }
        Ok((pos, mom))
    }
}
