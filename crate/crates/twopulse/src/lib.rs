//! Spectral stability of two-pulse periodic traveling waves.
//!
//! A two-pulse periodic wave is a periodic profile carrying one bright and
//! one dark pulse per period; as the period diverges it limits onto a pair
//! of solitary waves. This crate decides co-periodic stability through the
//! negative signature of the abbreviated-action Hessian, validates the
//! large-period expansions of that Hessian against direct singular
//! quadrature, and computes periodic and soliton Evans functions whose
//! zeros localize the spectrum.
//!
//! Module map:
//! - [`model`]: the Hamiltonian family, potential W, multipliers.
//! - [`quadrature`]: adaptive singular quadrature and the Taylor-remainder
//!   kernel; the brute-force oracle everything else is tested against.
//! - [`profile`]: saddle structure, turning points, periodic and soliton
//!   profiles by quadrature inversion.
//! - [`action`]: action integral, gradient, finite-difference Hessian,
//!   momenta, signature, verdicts.
//! - [`asymptotics`]: closed-form expansion coefficients and residual-order
//!   regression.
//! - [`evans`]: first-order spectral systems, monodromy, balanced periodic
//!   Evans function, soliton Evans functions, root location, convergence
//!   study.
//! - [`cli`]: config ingestion, experiment orchestration, artifacts.

pub mod action;
pub mod asymptotics;
pub mod error;
pub mod evans;
pub mod jet;
pub mod linalg;
pub mod ode;
pub mod poly;
pub mod profile;
pub mod quadrature;
pub mod util;

pub mod model;

pub use error::{Error, Result};
