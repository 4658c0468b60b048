//! Multiscale numerics for the two-dimensional Discrete Gaussian model.
//!
//! The crate is organised bottom-up:
//!
//! * [`lattice`]: torus geometry, step distributions, finite differences.
//! * [`spectral`]: Fourier multipliers and the covariances built from them.
//! * [`multiscale`]: per-scale covariance pieces, sampling, subdecomposition.
//! * [`polymer`]: blocks, polymers, components, small sets and neighbourhoods.
//! * [`activities`]: polymer activities, the `U` functional, regulators.
//! * [`extfield`]: test functions, smoothness scale, external-field schedule.
//! * [`rgstep`]: reblocking and the extended renormalisation step as algebra.
//! * [`dgmc`]: Monte Carlo, exact enumeration, correlation inequalities.
//!
//! [`experiments`] binds these into the runs exposed by the `multigauss` binary.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod activities;
pub mod dense;
pub mod dgmc;
pub mod error;
pub mod experiments;
pub mod extfield;
pub mod fft;
pub mod lattice;
pub mod multiscale;
pub mod output;
pub mod polymer;
pub mod quadrature;
pub mod rgstep;
pub mod rng;
pub mod spectral;

pub use error::{Error, Result};
pub use lattice::{LatticeField, StepDistribution, TorusLattice};

/// Version tag embedded in every output file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
