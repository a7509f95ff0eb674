//! Lifetime fits of `g²(Δt)` delay curves and the Gaussian instrument
//! response fit.

mod decay;
mod irf;
mod model;
mod optimize;

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decay::{
    bootstrap_tau_ci, fit_decay, initial_guess, normalize_curve, FitMethod, FitOptions, FitResult,
    Param,
};
pub use irf::{fit_gaussian_irf, IrfFit};
pub use model::{erfcx, exp_gauss_gradient, exp_gauss_model, ExpGaussParams};
pub use optimize::{levenberg_marquardt, nelder_mead, Minimum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("invalid delay curve: {0}")]
    InvalidCurve(String),
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("degenerate data: {0}")]
    Degenerate(&'static str),
    #[error("fit did not converge within {iterations} iterations (last cost {cost:e})")]
    NoConvergence { iterations: usize, cost: f64 },
    #[error("normalization needs a fitted value at zero delay above the baseline ({peak} <= {baseline})")]
    PeakBelowBaseline { peak: f64, baseline: f64 },
    #[error("malformed CSV: {0}")]
    Csv(String),
}

/// One measured or simulated point of a delay curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayPoint {
    pub delay_ps: f64,
    pub g2: f64,
    pub sigma_g2: f64,
}

/// `g²(Δt)` points with strictly increasing delays.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayCurve {
    points: Vec<DelayPoint>,
}

impl DelayCurve {
    pub fn new(points: Vec<DelayPoint>) -> Result<Self, FitError> {
        for p in &points {
            if !(p.delay_ps.is_finite() && p.g2.is_finite() && p.sigma_g2.is_finite()) {
                return Err(FitError::InvalidCurve("non-finite value".into()));
            }
            if p.sigma_g2 < 0.0 {
                return Err(FitError::InvalidCurve(format!(
                    "negative uncertainty {} at delay {} ps",
                    p.sigma_g2, p.delay_ps
                )));
            }
        }
        if let Some(w) = points.windows(2).find(|w| !(w[1].delay_ps > w[0].delay_ps)) {
            return Err(FitError::InvalidCurve(format!(
                "delays not strictly increasing at {} ps",
                w[1].delay_ps
            )));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[DelayPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Reads `delay_ps,g2,sigma_g2` rows (header required).
    pub fn read_csv<R: Read>(input: R) -> Result<Self, FitError> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = rdr
            .headers()
            .map_err(|e| FitError::Csv(e.to_string()))?
            .clone();
        let expected = ["delay_ps", "g2", "sigma_g2"];
        if headers.iter().collect::<Vec<_>>() != expected {
            return Err(FitError::Csv(format!(
                "expected header `delay_ps,g2,sigma_g2`, found `{}`",
                headers.iter().collect::<Vec<_>>().join(",")
            )));
        }
        let mut points = Vec::new();
        for (line, rec) in rdr.deserialize::<DelayPoint>().enumerate() {
            let p = rec.map_err(|e| FitError::Csv(format!("row {}: {e}", line + 1)))?;
            points.push(p);
        }
        Self::new(points)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["delay_ps", "g2", "sigma_g2"])?;
        for p in &self.points {
            w.write_record([
                format!("{}", p.delay_ps),
                format!("{:e}", p.g2),
                format!("{:e}", p.sigma_g2),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
