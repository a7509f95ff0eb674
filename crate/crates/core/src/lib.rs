//! Models and analysis chain for phonon-mediated Stokes/anti-Stokes photon
//! correlations in two-color pump-probe Raman scattering.
//!
//! - [`fock`]: truncated multi-mode Fock-space algebra.
//! - [`analytic`]: closed-form threshold-detector correlations and
//!   non-classicality bounds.
//! - [`lindblad`]: time-dependent master-equation model of the write/read
//!   sequence with two-time correlations from quantum regression.
//! - [`counting`]: Monte-Carlo click streams, coincidence histograms and g²
//!   extraction.
//! - [`fitting`]: exponential-convolved-Gaussian lifetime fits and the
//!   Gaussian instrument-response fit.
//! - [`checks`]: pass/fail shape and ceiling checks on sweep and fit output.

pub mod analytic;
pub mod checks;
pub mod counting;
pub mod fitting;
pub mod fock;
pub mod lindblad;

pub use fock::{DensityMatrix, FockError, ModeLayout, Operator};
