//! Spectral toolkit for Strichartz-type experiments with families of
//! orthonormal data and for periodic Hartree dynamics on the torus.
//!
//! The crate is organized in layers:
//! * [`spectral`]: frequency lattices, space-time grids, quadrature, FFT
//!   plumbing and Fourier multipliers;
//! * [`extension`]: the band-limited extension operator, its adjoint, the
//!   associated kernel and free propagation;
//! * [`norms`]: mixed Lebesgue norms, Schatten and Besov norms, density
//!   functions, potentials and trace pairings;
//! * [`lab`]: experiment drivers (extremal families, exponent sweeps,
//!   duality checks, endpoint decompositions, dyadic time profiles);
//! * [`hartree`]: self-consistent evolution of finite-rank density matrices
//!   under a power-law convolution potential.
//!
//! All floating-point reductions use fixed pairwise trees, so results are
//! reproducible bit-for-bit across runs and thread counts.

// Validation sites use `!(x > 0.0)` on purpose: unlike `x <= 0.0`, the
// negated form also rejects NaN inputs.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod extension;
pub mod hartree;
pub mod lab;
pub mod norms;
pub mod spectral;

pub use error::{Error, Result};

/// Crate version, embedded in experiment sidecars for reproducibility.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
