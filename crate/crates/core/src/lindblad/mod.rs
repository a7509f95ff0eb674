//! Time-dependent master-equation model of the write/read sequence.
//!
//! Four modes: the write-pulse Stokes photon `S1`, the read-pulse Stokes and
//! anti-Stokes photons `S2`/`aS2`, and the optical phonon. Pulses are
//! classical Gaussian drives of the three Raman processes; photon modes damp
//! into baths whose occupancy follows the four-wave-mixing noise of the
//! pulses, the phonon into a thermal bath. Two-time correlations come from
//! quantum regression.

mod correlation;
mod evolve;
mod generator;
mod model;

use thiserror::Error;

use crate::fock::FockError;

pub use correlation::{
    antistokes_emission, calibrate_noise_scale, delay_sweep_g2, g2_power_sweep, heralded_g2,
    peak_g2, peak_times, regression_trace, two_time_g2, windowed_g2, write_sweep_csv, G2Point,
    NoiseCalibration, SweepPoint, WindowG2, PEAK_WINDOW_WIDTHS, SWEEP_CSV_HEADER,
};
pub use evolve::{
    evolve, evolve_lean, evolve_with, lindblad_rhs, EvolveOptions, Trajectory, TRACE_DRIFT_TOL,
};
pub use generator::{Coefficient, Frame, Generator, Occupancy};
pub use model::{
    noise_occupancy, pulse_amplitude, Cutoffs, NoiseParams, PhononRate, PulseParams, SimConfig,
    MODE_AS2, MODE_PHONON, MODE_S1, MODE_S2, OMEGA_L1, OMEGA_L2, OMEGA_M,
};

#[derive(Debug, Error)]
pub enum LindbladError {
    #[error(transparent)]
    Fock(#[from] FockError),
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("trace drifted by {drift:e} at t = {time} ps")]
    TraceDrift { time: f64, drift: f64 },
    #[error("at t = {time} ps: {source}")]
    Truncation { time: f64, source: FockError },
    #[error("time {time} ps outside the simulated span [{start}, {end}] ps")]
    OutOfSpan { time: f64, start: f64, end: f64 },
    #[error("{0} is zero; correlation undefined")]
    ZeroDenominator(&'static str),
    #[error("sweep needs a nonempty {0} grid")]
    EmptyGrid(&'static str),
    #[error("{0} did not converge")]
    NoConvergence(&'static str),
    #[error("grid point {index} ({label}): {source}")]
    GridPoint {
        index: usize,
        label: String,
        source: Box<LindbladError>,
    },
}
