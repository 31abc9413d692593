//! Solver and verification harness for the generalized Navier-Stokes-Voigt
//! equations with a spatially varying, wall-degenerate mixing length, an
//! optional bounded eddy viscosity, and the coupled system with turbulent
//! kinetic energy transport.
//!
//! The crate is organised around a staggered (MAC) grid on a channel slab or
//! a fully periodic box:
//!
//! * [`domain`] — geometry, wall distance, mixing-length profiles;
//! * [`field`] — cell-, face- and corner-centred storage with inner products;
//! * [`operators`] — deformation tensor, divergence, gradients and the Voigt
//!   mass operator, all built as exact discrete adjoint pairs;
//! * [`spectral`] — tensor-product eigenbases of the discrete vector
//!   Laplacian and fractional powers (discrete `H^{1/2}` norms);
//! * [`norms`] — norm reports, Korn and weighted-embedding checks;
//! * [`voigt_core`] — the Crank-Nicolson/midpoint time stepper, energy
//!   ledger, Gronwall envelopes and a-priori checks;
//! * [`tke`] — positivity-preserving turbulent-kinetic-energy transport with
//!   truncated closures;
//! * [`coupling`] — the coupled flow/TKE iteration and modelling diagnostics;
//! * [`experiments`] — manufactured solutions, the eddy-viscosity robustness
//!   (compactness) suite and the spectral Galerkin oracle;
//! * [`cli_io`] — run configuration, CSV streaming, checkpoints, summaries.

pub mod cg;
pub mod cli_io;
pub mod coupling;
pub mod domain;
pub mod error;
pub mod experiments;
pub mod field;
pub mod norms;
pub mod operators;
pub mod rng;
pub mod spectral;
pub mod tke;
pub mod voigt_core;

pub use error::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
