//! Gaussian fit of a cross-correlation trace to obtain the instrument
//! response width.

use super::optimize::{levenberg_marquardt, nelder_mead};
use super::FitError;

/// `offset + amplitude · exp(-(t - center)²/2σ²)` fitted to the trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrfFit {
    pub amplitude: f64,
    pub center: f64,
    pub sigma: f64,
    pub offset: f64,
    pub residual_norm: f64,
    pub iterations: usize,
    /// More than one separated region rises above half maximum.
    pub multimodal: bool,
}

fn gaussian(t: f64, p: &[f64]) -> f64 {
    p[3] + p[0] * (-0.5 * ((t - p[1]) / p[2]).powi(2)).exp()
}

/// Number of separated lobes above half maximum; a lobe ends only when the
/// signal falls below a quarter of the maximum.
fn count_lobes(values: &[f64], floor: f64, height: f64) -> usize {
    let mut lobes = 0;
    let mut inside = false;
    for &v in values {
        let x = v - floor;
        if !inside && x > 0.5 * height {
            lobes += 1;
            inside = true;
        } else if inside && x < 0.25 * height {
            inside = false;
        }
    }
    lobes
}

pub fn fit_gaussian_irf(trace: &[(f64, f64)]) -> Result<IrfFit, FitError> {
    if trace.len() < 5 {
        return Err(FitError::TooFewPoints {
            needed: 5,
            got: trace.len(),
        });
    }
    if trace.iter().any(|(t, y)| !t.is_finite() || !y.is_finite()) {
        return Err(FitError::InvalidCurve("non-finite trace value".into()));
    }
    let mut pts = trace.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
    let min = ys.iter().copied().fold(f64::INFINITY, f64::min);
    let (imax, max) =
        ys.iter().enumerate().fold(
            (0, f64::NEG_INFINITY),
            |acc, (i, &y)| if y > acc.1 { (i, y) } else { acc },
        );
    let height = max - min;
    if !(height > 0.0) {
        return Err(FitError::Degenerate("flat trace"));
    }
    let multimodal = count_lobes(&ys, min, height) > 1;

    // Width from the second moment of the baseline-subtracted trace.
    let w: Vec<f64> = ys.iter().map(|y| (y - min).max(0.0)).collect();
    let total: f64 = w.iter().sum();
    let mean = pts.iter().zip(&w).map(|(p, w)| p.0 * w).sum::<f64>() / total;
    let var = pts
        .iter()
        .zip(&w)
        .map(|(p, w)| (p.0 - mean).powi(2) * w)
        .sum::<f64>()
        / total;
    let span = pts[pts.len() - 1].0 - pts[0].0;
    let sigma0 = var.sqrt().clamp(1e-3 * span, span);
    let x0 = [height, pts[imax].0, sigma0, min];

    let residuals = |p: &[f64]| -> Option<Vec<f64>> {
        if !(p[2] > 0.0) {
            return None;
        }
        Some(pts.iter().map(|&(t, y)| gaussian(t, p) - y).collect())
    };
    let jacobian = |p: &[f64]| -> Vec<Vec<f64>> {
        pts.iter()
            .map(|&(t, _)| {
                let x = (t - p[1]) / p[2];
                let e = (-0.5 * x * x).exp();
                vec![e, p[0] * e * x / p[2], p[0] * e * x * x / p[2], 1.0]
            })
            .collect()
    };
    let mut m = levenberg_marquardt(&residuals, jacobian, &x0, 500)
        .ok_or(FitError::Degenerate("infeasible start"))?;
    if !m.converged {
        let cost =
            |p: &[f64]| residuals(p).map_or(f64::INFINITY, |r| r.iter().map(|v| v * v).sum());
        let nm = nelder_mead(cost, &m.x, 20_000);
        if !nm.converged {
            return Err(FitError::NoConvergence {
                iterations: m.iterations + nm.iterations,
                cost: nm.cost,
            });
        }
        m = nm;
    }
    Ok(IrfFit {
        amplitude: m.x[0],
        center: m.x[1],
        sigma: m.x[2].abs(),
        offset: m.x[3],
        residual_norm: m.cost,
        iterations: m.iterations,
        multimodal,
    })
}
