//! Monte-Carlo click streams at the pulse repetition rate and the
//! coincidence-histogram analysis: `g²` from central and side peaks, its
//! uncertainty, and subtraction of a write-only cross-talk histogram.

mod analysis;
mod histogram;
mod simulate;

use thiserror::Error;

pub use analysis::{extract_g2, G2Estimate, G2Options, SideError};
pub use histogram::{
    build_histogram, read_events_csv, subtract_crosstalk, write_events_csv, CoincidenceHistogram,
    HistogramBuilder, DEFAULT_BIN_WIDTH_NS, DEFAULT_SPAN_PERIODS, EVENTS_CSV_HEADER,
};
pub use simulate::{
    simulate_clicks, simulate_histogram, Channel, ClickModel, ClickStream, Event, CHUNK_REPS,
    DEFAULT_REP_PERIOD_NS, RNG_NAME,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CountingError {
    #[error("invalid click model: {0}")]
    InvalidModel(String),
    #[error(
        "infeasible click probabilities: need max(0, p_s + p_as - 1) <= p_joint <= min(p_s, p_as), \
         got p_s = {p_s}, p_as = {p_as}, p_joint = {p_joint}"
    )]
    Infeasible { p_s: f64, p_as: f64, p_joint: f64 },
    #[error("event stream is empty")]
    EmptyStream,
    #[error("events out of order at repetition {rep_index}")]
    Unsorted { rep_index: u64 },
    #[error("histogram spans {have_ns} ns on the positive side, analysis needs {needed_ns} ns")]
    InsufficientSpan { needed_ns: f64, have_ns: f64 },
    #[error("side peaks contain no counts")]
    ZeroSidePeaks,
    #[error("histogram binning mismatch: {0}")]
    BinningMismatch(String),
    #[error("invalid histogram: {0}")]
    InvalidHistogram(String),
    #[error("malformed CSV: {0}")]
    Csv(String),
}
