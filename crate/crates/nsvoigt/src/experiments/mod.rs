//! Verification harnesses: manufactured solutions, the spectral Galerkin
//! oracle on the periodic box, and the eddy-viscosity robustness
//! (compactness) suite.

pub mod compactness;
pub mod galerkin;
pub mod mms;
pub mod verify;
