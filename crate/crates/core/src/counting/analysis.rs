//! `g²` from the central coincidence peak and the side peaks at multiples of
//! the repetition period.

use serde::{Deserialize, Serialize};

use super::histogram::CoincidenceHistogram;
use super::CountingError;

/// Uncertainty assigned to the mean side-peak area.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideError {
    /// Sample standard deviation over the side peaks divided by `√n`; the
    /// error of their mean.
    #[default]
    StandardError,
    /// Sample standard deviation over the side peaks; the spread of a single
    /// peak, which overstates the error of the mean by `√n`.
    StandardDeviation,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct G2Options {
    /// Full width of the integration window around each peak.
    pub analysis_bin_ns: f64,
    pub n_side_peaks: usize,
    /// Remove the flat background measured between peaks before
    /// integrating.
    pub subtract_background: bool,
    pub side_error: SideError,
}

impl Default for G2Options {
    fn default() -> Self {
        Self {
            analysis_bin_ns: 1.536,
            n_side_peaks: 25,
            subtract_background: false,
            side_error: SideError::StandardError,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct G2Estimate {
    pub g2: f64,
    pub delta_g2: f64,
    /// Central-peak area after background removal.
    pub central_area: f64,
    /// Raw counts in the central window.
    pub central_raw: u64,
    pub side_mean: f64,
    pub side_error: f64,
    /// Areas of the peaks at `+T, +2T, ...`.
    pub side_areas: Vec<f64>,
    /// Areas of the peaks at `-T, -2T, ...`, for diagnostics only.
    pub negative_side_areas: Vec<f64>,
    pub background_per_bin: f64,
}

impl G2Estimate {
    pub fn negative_side_mean(&self) -> f64 {
        mean(&self.negative_side_areas)
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

/// Mean counts per bin over bins farther than one analysis window from
/// every peak, within the side-peak range.
fn flat_background(hist: &CoincidenceHistogram, options: &G2Options) -> Result<f64, CountingError> {
    let period = hist.rep_period_ns();
    let limit = (options.n_side_peaks as f64 + 0.5) * period;
    let mut sum = 0u64;
    let mut bins = 0usize;
    for (i, &c) in hist.counts().iter().enumerate() {
        let t = hist.bin_center_ns(i);
        if t.abs() > limit {
            continue;
        }
        let to_peak = (t - (t / period).round() * period).abs();
        if to_peak > options.analysis_bin_ns {
            sum += c;
            bins += 1;
        }
    }
    if bins == 0 {
        return Err(CountingError::InvalidHistogram(
            "no bins between peaks to estimate the background".into(),
        ));
    }
    Ok(sum as f64 / bins as f64)
}

/// `g² = A_CP / Ā_SP` and `δg² = g²·√((δA_SP/Ā_SP)² + δA_CP²/A_CP²)`, with
/// Poisson `δA_CP² = raw central counts` (equal to `A_CP` without background
/// removal). The form used stays finite for an empty central peak.
pub fn extract_g2(
    hist: &CoincidenceHistogram,
    options: &G2Options,
) -> Result<G2Estimate, CountingError> {
    if !(options.analysis_bin_ns > 0.0) || options.n_side_peaks == 0 {
        return Err(CountingError::InvalidHistogram(
            "analysis window and side-peak count must be positive".into(),
        ));
    }
    let period = hist.rep_period_ns();
    let half = 0.5 * options.analysis_bin_ns;
    let needed = options.n_side_peaks as f64 * period + half;
    if hist.reach_ns() < needed {
        return Err(CountingError::InsufficientSpan {
            needed_ns: needed,
            have_ns: hist.reach_ns(),
        });
    }
    let background = if options.subtract_background {
        flat_background(hist, options)?
    } else {
        0.0
    };
    let area = |k: i64| -> (f64, u64) {
        let c = k as f64 * period;
        let (raw, bins) = hist.sum_in(c - half, c + half);
        (raw as f64 - background * bins as f64, raw)
    };
    let (central_area, central_raw) = area(0);
    let n = options.n_side_peaks as i64;
    let side_areas: Vec<f64> = (1..=n).map(|k| area(k).0).collect();
    let negative_side_areas: Vec<f64> = (1..=n).map(|k| area(-k).0).collect();
    let side_mean = mean(&side_areas);
    if !(side_mean > 0.0) {
        return Err(CountingError::ZeroSidePeaks);
    }
    let sd = sample_sd(&side_areas);
    let side_error = match options.side_error {
        SideError::StandardError => sd / (side_areas.len() as f64).sqrt(),
        SideError::StandardDeviation => sd,
    };
    let g2 = central_area / side_mean;
    let delta_g2 = ((central_area * side_error).powi(2) / side_mean.powi(4)
        + central_raw as f64 / side_mean.powi(2))
    .sqrt();
    Ok(G2Estimate {
        g2,
        delta_g2,
        central_area,
        central_raw,
        side_mean,
        side_error,
        side_areas,
        negative_side_areas,
        background_per_bin: background,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Histogram with `central` counts at zero delay, `side` at every other
    /// multiple of the period and `floor` in every bin.
    fn synthetic(central: u64, side: u64, floor: u64) -> CoincidenceHistogram {
        let mut h = CoincidenceHistogram::empty(0.512, 12.5, 26.5).unwrap();
        let mut counts = vec![floor; h.counts().len()];
        for k in -26i64..=26 {
            let i = h.bin_index(k as f64 * 12.5).unwrap();
            counts[i] += if k == 0 { central } else { side };
        }
        h = CoincidenceHistogram::from_counts(0.512, 12.5, counts).unwrap();
        h
    }

    #[test]
    fn flat_peaks_give_unity() {
        let e = extract_g2(&synthetic(400, 400, 0), &G2Options::default()).unwrap();
        assert_eq!(e.g2, 1.0);
        // Side peaks identical: only the Poisson term remains.
        assert!((e.delta_g2 - 1.0 / 20.0).abs() < 1e-12);
        assert_eq!(e.side_areas.len(), 25);
        assert_eq!(e.negative_side_areas.len(), 25);
    }

    #[test]
    fn ratio_of_central_to_side() {
        let e = extract_g2(&synthetic(6340, 100, 0), &G2Options::default()).unwrap();
        assert!((e.g2 - 63.4).abs() < 1e-12);
        let expected = 63.4 * (1.0 / 6340.0f64).sqrt();
        assert!((e.delta_g2 - expected).abs() < 1e-12);
    }

    #[test]
    fn window_holds_three_acquisition_bins() {
        let h = synthetic(0, 0, 1);
        let (sum, bins) = h.sum_in(-0.768, 0.768);
        assert_eq!((sum, bins), (3, 3));
        let (_, bins) = h.sum_in(12.5 * 7.0 - 0.768, 12.5 * 7.0 + 0.768);
        assert_eq!(bins, 3);
    }

    #[test]
    fn background_subtraction_removes_floor() {
        let h = synthetic(500, 100, 7);
        let raw = extract_g2(&h, &G2Options::default()).unwrap();
        assert!((raw.g2 - 521.0 / 121.0).abs() < 1e-12);
        let opts = G2Options {
            subtract_background: true,
            ..G2Options::default()
        };
        let e = extract_g2(&h, &opts).unwrap();
        assert!((e.background_per_bin - 7.0).abs() < 1e-12);
        assert!((e.g2 - 5.0).abs() < 1e-12);
    }

    #[test]
    fn deviation_option_is_sqrt_n_larger() {
        let mut h = synthetic(1000, 100, 0);
        let mut counts = h.counts().to_vec();
        let i = h.bin_index(3.0 * 12.5).unwrap();
        counts[i] += 30;
        h = CoincidenceHistogram::from_counts(0.512, 12.5, counts).unwrap();
        let se = extract_g2(&h, &G2Options::default()).unwrap();
        let sd = extract_g2(
            &h,
            &G2Options {
                side_error: SideError::StandardDeviation,
                ..G2Options::default()
            },
        )
        .unwrap();
        assert!((sd.side_error / se.side_error - 5.0).abs() < 1e-12);
        assert!(sd.delta_g2 > se.delta_g2);
    }

    #[test]
    fn failures() {
        assert!(matches!(
            extract_g2(&synthetic(10, 0, 0), &G2Options::default()),
            Err(CountingError::ZeroSidePeaks)
        ));
        let opts = G2Options {
            n_side_peaks: 30,
            ..G2Options::default()
        };
        assert!(matches!(
            extract_g2(&synthetic(10, 10, 0), &opts),
            Err(CountingError::InsufficientSpan { .. })
        ));
    }

    #[test]
    fn empty_central_peak_has_finite_error() {
        let e = extract_g2(&synthetic(0, 50, 0), &G2Options::default()).unwrap();
        assert_eq!(e.g2, 0.0);
        assert!(e.delta_g2.is_finite());
    }
}
