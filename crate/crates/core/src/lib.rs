//! Simulation of direct quantum-state measurement by weak measurement.
//!
//! A finite-dimensional system is coupled to one or more Gaussian pointers
//! through von Neumann interactions. Weak averages and weak values are read
//! from pointer shifts, products of non-commuting projectors are measured
//! with correlated pointers, and the results are assembled into the
//! wavefunction, the Dirac quasi-probability distribution, or the density
//! matrix. Every simulated quantity has a closed-form counterpart in
//! [`oracle`].
//!
//! ```
//! use weakdirect::hilbert::{fourier_ket, random_density, trace_distance};
//! use weakdirect::protocols::{direct_density, ProtocolParams};
//!
//! let rho = random_density(3, 7, 3)?;
//! let b0 = fourier_ket(3, 0)?;
//! let est = direct_density(&rho, &b0, &ProtocolParams::with_gt(0.01))?;
//! assert!(trace_distance(&est.normalized, rho.matrix()) < 1e-3);
//! # Ok::<(), weakdirect::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod convergence;
pub mod error;
pub mod evolution;
pub mod hilbert;
pub mod oracle;
pub mod pointer;
pub mod protocols;
pub mod sampling;
mod tensor;

pub use error::{Error, Result};
pub use num_complex::Complex64;
