//! Closed-form click statistics of threshold detectors watching a
//! two-mode-squeezed Stokes/phonon state, and the non-classicality bounds
//! built from them.
//!
//! The joint Stokes/phonon state after the write pulse is a product of `N`
//! two-mode squeezed vacua with per-mode emission parameter `p̄`, so each
//! mode's photon number is geometric with `P(n) = (1-p̄) p̄ⁿ`. A detector of
//! efficiency `η` and noise-click probability `q` is the POVM element
//! `1 - (1-q)(1-η)^n̂`; every quantity below is a generating-function
//! evaluation of that distribution.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const K_B: f64 = 1.380_649e-23;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalyticError {
    #[error("parameter `{name}` = {value} is outside {range}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error("{0} is undefined: zero denominator")]
    UndefinedCorrelation(&'static str),
    #[error("emission probability p̄ = {p_bar} at Stokes rate {rate_hz} Hz is not below 1")]
    OutOfRegime { p_bar: f64, rate_hz: f64 },
    #[error("sweep needs at least one {0}")]
    EmptyGrid(&'static str),
}

fn unit_interval(name: &'static str, v: f64) -> Result<(), AnalyticError> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(AnalyticError::InvalidParameter {
            name,
            value: v,
            range: "[0, 1]",
        })
    }
}

fn half_open(name: &'static str, v: f64) -> Result<(), AnalyticError> {
    if (0.0..1.0).contains(&v) {
        Ok(())
    } else {
        Err(AnalyticError::InvalidParameter {
            name,
            value: v,
            range: "[0, 1)",
        })
    }
}

/// Parameters of the multi-mode detector model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticParams {
    pub p_bar: f64,
    pub modes: u32,
    pub eta_a: f64,
    pub eta_b: f64,
    pub q_a: f64,
    pub q_b: f64,
}

impl AnalyticParams {
    pub fn new(
        p_bar: f64,
        modes: u32,
        eta_a: f64,
        eta_b: f64,
        q_a: f64,
        q_b: f64,
    ) -> Result<Self, AnalyticError> {
        let p = Self {
            p_bar,
            modes,
            eta_a,
            eta_b,
            q_a,
            q_b,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameterization at fixed total mean photon number `p/(1-p)`,
    /// independent of the mode count: `p̄ = p / (N - p(N-1))`.
    ///
    /// Raw `p̄` fixes the per-mode emission instead, so the total mean photon
    /// number grows as `N p̄/(1-p̄)`. Compare different `N` with this
    /// constructor; compare read settings at one `N` with [`AnalyticParams::new`].
    pub fn with_mean_photon(
        p: f64,
        modes: u32,
        eta_a: f64,
        eta_b: f64,
        q_a: f64,
        q_b: f64,
    ) -> Result<Self, AnalyticError> {
        half_open("p", p)?;
        if modes == 0 {
            return Err(AnalyticError::InvalidParameter {
                name: "modes",
                value: 0.0,
                range: ">= 1",
            });
        }
        let n = f64::from(modes);
        Self::new(p / (n - p * (n - 1.0)), modes, eta_a, eta_b, q_a, q_b)
    }

    pub fn validate(&self) -> Result<(), AnalyticError> {
        half_open("p_bar", self.p_bar)?;
        if self.modes == 0 {
            return Err(AnalyticError::InvalidParameter {
                name: "modes",
                value: 0.0,
                range: ">= 1",
            });
        }
        unit_interval("eta_a", self.eta_a)?;
        unit_interval("eta_b", self.eta_b)?;
        half_open("q_a", self.q_a)?;
        half_open("q_b", self.q_b)?;
        Ok(())
    }

    /// Mean photon number summed over all modes.
    pub fn mean_photon_number(&self) -> f64 {
        f64::from(self.modes) * self.p_bar / (1.0 - self.p_bar)
    }
}

/// `((1-p̄)/(1-p̄(1-η)))^N`.
pub fn no_click(p_bar: f64, eta: f64, modes: u32) -> f64 {
    ln_no_click(p_bar, eta, modes).exp()
}

fn ln_no_click(p_bar: f64, eta: f64, modes: u32) -> f64 {
    f64::from(modes) * ((-p_bar).ln_1p() - (-p_bar * (1.0 - eta)).ln_1p())
}

/// `1 - (1-q) e^{ln_dark}` without cancellation when both terms are tiny.
fn click(q: f64, ln_dark: f64) -> f64 {
    -((-q).ln_1p() + ln_dark).exp_m1()
}

/// Stokes single-click probability `S_a`.
pub fn stokes_click_prob(p: &AnalyticParams) -> f64 {
    click(p.q_a, ln_no_click(p.p_bar, p.eta_a, p.modes))
}

/// Anti-Stokes single-click probability `S_b`; the readout acts on the phonon
/// modes with effective efficiency `η_b`.
pub fn antistokes_click_prob(p: &AnalyticParams) -> f64 {
    click(p.q_b, ln_no_click(p.p_bar, p.eta_b, p.modes))
}

/// `C_ab - S_a S_b = (1-q_a)(1-q_b)(F(η_ab) - F(η_a)F(η_b))`.
fn coincidence_excess(p: &AnalyticParams) -> f64 {
    let ln_a = ln_no_click(p.p_bar, p.eta_a, p.modes);
    let ln_b = ln_no_click(p.p_bar, p.eta_b, p.modes);
    let joint_eta = 1.0 - (1.0 - p.eta_a) * (1.0 - p.eta_b);
    let ln_ab = ln_no_click(p.p_bar, joint_eta, p.modes);
    let keep = (1.0 - p.q_a) * (1.0 - p.q_b);
    keep * (ln_a + ln_b).exp() * (ln_ab - ln_a - ln_b).exp_m1()
}

/// Joint click probability `C_ab = S_a + S_b - 1 + (1-q_a)(1-q_b)F(η_ab)`,
/// evaluated as `S_a S_b` plus the pair excess.
pub fn coincidence_prob(p: &AnalyticParams) -> f64 {
    stokes_click_prob(p) * antistokes_click_prob(p) + coincidence_excess(p)
}

/// Normalized Stokes/anti-Stokes cross-correlation `C_ab / (S_a S_b)`.
pub fn cross_correlation(p: &AnalyticParams) -> Result<f64, AnalyticError> {
    let denom = stokes_click_prob(p) * antistokes_click_prob(p);
    if denom <= 0.0 {
        return Err(AnalyticError::UndefinedCorrelation("cross-correlation"));
    }
    Ok(1.0 + coincidence_excess(p) / denom)
}

/// Stokes auto-correlation behind a 50/50 splitter (each arm sees `η_a/2`).
///
/// The two-fold coincidence is `1 - 2 P(arm dark) + P(both dark)`, so the
/// single-arm click probability entering it is the halved-efficiency one.
pub fn stokes_autocorrelation(p: &AnalyticParams) -> Result<f64, AnalyticError> {
    let ln_half = ln_no_click(p.p_bar, 0.5 * p.eta_a, p.modes);
    let ln_full = ln_no_click(p.p_bar, p.eta_a, p.modes);
    let single = click(p.q_a, ln_half);
    if single <= 0.0 {
        return Err(AnalyticError::UndefinedCorrelation(
            "Stokes auto-correlation",
        ));
    }
    let excess = (1.0 - p.q_a).powi(2) * (2.0 * ln_half).exp() * (ln_full - 2.0 * ln_half).exp_m1();
    Ok(1.0 + excess / (single * single))
}

/// `E[1 - x^n]` over the geometric distribution `(1-r) r^n`.
fn geometric_click(r: f64, x: f64) -> f64 {
    r * (1.0 - x) / (1.0 - r * x)
}

/// Probability that both arms of a 50/50 splitter detect a photon when each
/// photon is detected with `eta` overall, averaged over `(1-r) r^n`. This is
/// `1 - 2G(1-η/2) + G(1-η)` in a form free of cancellation.
fn geometric_both_arms(r: f64, eta: f64) -> f64 {
    let s = 1.0 - r;
    let re = r * eta;
    re * 0.5 * re / ((s + 0.5 * re) * (s + re))
}

/// Auto-correlation of the anti-Stokes field heralded by a Stokes click
/// (single-mode model; `modes` is ignored).
///
/// The heralded phonon distribution is `P(n)(1 - (1-q_a)(1-η_a)^n)/H`, a
/// signed mixture of two geometric distributions with ratios `p̄` and
/// `p̄(1-η_a)`, so every expectation is a difference of two closed forms.
pub fn conditional_as_autocorrelation(p: &AnalyticParams) -> Result<f64, AnalyticError> {
    let pb = p.p_bar;
    let herald = click(p.q_a, ln_no_click(pb, p.eta_a, 1));
    if herald <= 0.0 {
        return Err(AnalyticError::UndefinedCorrelation(
            "conditional phonon state (herald probability)",
        ));
    }
    let y = 1.0 - p.eta_a;
    let mix = (1.0 - p.q_a) * (1.0 - pb) / (1.0 - pb * y);
    let heralded = |f: &dyn Fn(f64) -> f64| (f(pb) - mix * f(pb * y)) / herald;
    let arm = heralded(&|r| geometric_click(r, 1.0 - 0.5 * p.eta_b));
    let both_arms = heralded(&|r| geometric_both_arms(r, p.eta_b));
    let q = p.q_b;
    let single = q + (1.0 - q) * arm;
    if single <= 0.0 {
        return Err(AnalyticError::UndefinedCorrelation(
            "conditional anti-Stokes auto-correlation",
        ));
    }
    let both = q * q + 2.0 * q * (1.0 - q) * arm + (1.0 - q) * (1.0 - q) * both_arms;
    Ok(both / (single * single))
}

/// Cauchy-Schwarz ratio `R = g_ab² / (g_aa g_bb)`; `R > 1` is non-classical.
pub fn csi_ratio(g_ab: f64, g_aa: f64, g_bb: f64) -> Result<f64, AnalyticError> {
    let denom = g_aa * g_bb;
    if denom <= 0.0 {
        return Err(AnalyticError::UndefinedCorrelation("Cauchy-Schwarz ratio"));
    }
    Ok(g_ab * g_ab / denom)
}

/// Cauchy-Schwarz ratio of an ideal two-mode squeezed vacuum with pair
/// probability `p`: `(1 + 1/p)² / 4`.
pub fn tmsv_csi_ratio(p: f64) -> f64 {
    0.25 * (1.0 + 1.0 / p).powi(2)
}

/// Largest two-photon interference visibility compatible with a given
/// cross-correlation, `(g-1)/(g+1)`.
pub fn max_bell_visibility(g_ab: f64) -> f64 {
    (g_ab - 1.0) / (g_ab + 1.0)
}

/// Bose-Einstein occupancy of a mode at angular frequency `omega` (rad/s).
pub fn thermal_occupancy(omega: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        return 0.0;
    }
    1.0 / (HBAR * omega / (K_B * temperature)).exp_m1()
}

/// One read-pulse setting of a power sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadSetting {
    /// Stokes emission probability of the read pulse alone, `p_S,r`.
    pub stokes_prob: f64,
    /// Noise-click probability on the Stokes detector, `q_a`.
    pub noise_a: f64,
    /// Noise-click probability on the anti-Stokes detector with the write
    /// pulse off, `q_b` (includes thermal phonons and four-wave mixing).
    pub noise_b: f64,
}

/// Write-power sweep at several read powers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Overall collection and detection efficiency.
    pub eta: f64,
    /// Readout conversion factor: `η_r = α_r p_S,r`.
    pub alpha_r: f64,
    pub stokes_rates_hz: Vec<f64>,
    pub rep_rate_hz: f64,
    pub read_settings: Vec<ReadSetting>,
}

impl Default for SweepConfig {
    /// The fitted efficiencies `η = 0.07`, `α_r = 0.3` at 80 MHz with three
    /// read powers whose measured anti-Stokes noise rises faster than the
    /// readout efficiency.
    fn default() -> Self {
        let rates = (0..12)
            .map(|k| 1e3 * (50.0f64).powf(k as f64 / 11.0))
            .collect();
        Self {
            eta: 0.07,
            alpha_r: 0.3,
            stokes_rates_hz: rates,
            rep_rate_hz: 8e7,
            read_settings: vec![
                ReadSetting {
                    stokes_prob: 0.01,
                    noise_a: 1e-6,
                    noise_b: 1e-6,
                },
                ReadSetting {
                    stokes_prob: 0.02,
                    noise_a: 1e-6,
                    noise_b: 3e-6,
                },
                ReadSetting {
                    stokes_prob: 0.04,
                    noise_a: 1e-6,
                    noise_b: 1e-5,
                },
            ],
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), AnalyticError> {
        if !(self.rep_rate_hz > 0.0) {
            return Err(AnalyticError::InvalidParameter {
                name: "rep_rate_hz",
                value: self.rep_rate_hz,
                range: "(0, inf)",
            });
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(AnalyticError::InvalidParameter {
                name: "eta",
                value: self.eta,
                range: "(0, 1]",
            });
        }
        half_open("alpha_r", self.alpha_r).or_else(|e| {
            // α_r = 1 is the ideal readout and allowed.
            if self.alpha_r == 1.0 {
                Ok(())
            } else {
                Err(e)
            }
        })?;
        if self.stokes_rates_hz.is_empty() {
            return Err(AnalyticError::EmptyGrid("Stokes rate"));
        }
        if self.read_settings.is_empty() {
            return Err(AnalyticError::EmptyGrid("read setting"));
        }
        for &r in &self.stokes_rates_hz {
            if !(r >= 0.0 && r.is_finite()) {
                return Err(AnalyticError::InvalidParameter {
                    name: "stokes_rates_hz",
                    value: r,
                    range: "[0, inf)",
                });
            }
        }
        for s in &self.read_settings {
            half_open("stokes_prob", s.stokes_prob)?;
            half_open("noise_a", s.noise_a)?;
            half_open("noise_b", s.noise_b)?;
        }
        Ok(())
    }

    /// Per-mode emission probability inferred from a Stokes count rate.
    pub fn p_bar(&self, rate_hz: f64) -> f64 {
        rate_hz / (self.eta * self.rep_rate_hz)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub read_setting: usize,
    pub p_bar: f64,
    pub q_a: f64,
    pub q_b: f64,
    pub eta_a: f64,
    pub eta_b: f64,
    pub g_ab: f64,
    /// Heralded anti-Stokes auto-correlation at the same parameters.
    pub g_cond: f64,
}

impl SweepRow {
    pub fn params(&self) -> AnalyticParams {
        AnalyticParams {
            p_bar: self.p_bar,
            modes: 1,
            eta_a: self.eta_a,
            eta_b: self.eta_b,
            q_a: self.q_a,
            q_b: self.q_b,
        }
    }
}

/// Single-mode cross-correlation over every (read setting, Stokes rate) pair,
/// grouped by read setting.
pub fn power_sweep(sweep: &SweepConfig) -> Result<Vec<SweepRow>, AnalyticError> {
    sweep.validate()?;
    let mut rows = Vec::with_capacity(sweep.read_settings.len() * sweep.stokes_rates_hz.len());
    for (k, setting) in sweep.read_settings.iter().enumerate() {
        let eta_b = sweep.eta * sweep.alpha_r * setting.stokes_prob;
        for &rate in &sweep.stokes_rates_hz {
            let p_bar = sweep.p_bar(rate);
            if p_bar >= 1.0 {
                return Err(AnalyticError::OutOfRegime {
                    p_bar,
                    rate_hz: rate,
                });
            }
            let params =
                AnalyticParams::new(p_bar, 1, sweep.eta, eta_b, setting.noise_a, setting.noise_b)?;
            rows.push(SweepRow {
                read_setting: k,
                p_bar,
                q_a: setting.noise_a,
                q_b: setting.noise_b,
                eta_a: sweep.eta,
                eta_b,
                g_ab: cross_correlation(&params)?,
                g_cond: conditional_as_autocorrelation(&params)?,
            });
        }
    }
    Ok(rows)
}

/// Stokes auto-correlation against the number of modes at fixed `p̄`.
pub fn mode_count_table(
    p_bar: f64,
    modes: impl IntoIterator<Item = u32>,
    eta_a: f64,
    q_a: f64,
) -> Result<Vec<(u32, f64)>, AnalyticError> {
    modes
        .into_iter()
        .map(|n| {
            let p = AnalyticParams::new(p_bar, n, eta_a, eta_a, q_a, q_a)?;
            Ok((n, stokes_autocorrelation(&p)?))
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "p_bar,q_a,q_b,eta_a,eta_b,g_ab,g_aa_cond_bound";

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepRow], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER.split(','))?;
    for r in rows {
        w.write_record(
            [r.p_bar, r.q_a, r.q_b, r.eta_a, r.eta_b, r.g_ab, r.g_cond]
                .iter()
                .map(|v| format!("{v:e}")),
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn params(p_bar: f64, n: u32, eta_a: f64, eta_b: f64, q_a: f64, q_b: f64) -> AnalyticParams {
        AnalyticParams::new(p_bar, n, eta_a, eta_b, q_a, q_b).unwrap()
    }

    #[test]
    fn click_probabilities_limits() {
        assert_eq!(stokes_click_prob(&params(0.0, 1, 0.5, 0.5, 0.0, 0.0)), 0.0);
        assert_abs_diff_eq!(
            stokes_click_prob(&params(0.0, 3, 0.5, 0.5, 0.01, 0.0)),
            0.01,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            stokes_click_prob(&params(0.5, 1, 1.0, 1.0, 0.0, 0.0)),
            0.5,
            epsilon = 1e-15
        );
        assert_eq!(
            antistokes_click_prob(&params(0.0, 1, 0.5, 0.5, 0.0, 0.0)),
            0.0
        );
        assert_abs_diff_eq!(
            antistokes_click_prob(&params(0.3, 2, 0.5, 0.0, 0.0, 0.02)),
            0.02,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            antistokes_click_prob(&params(0.5, 1, 1.0, 1.0, 0.0, 0.0)),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn coincidence_limits() {
        assert_abs_diff_eq!(
            coincidence_prob(&params(0.0, 1, 0.3, 0.3, 0.0, 0.0)),
            0.0,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            coincidence_prob(&params(0.5, 1, 1.0, 1.0, 0.0, 0.0)),
            0.5,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            coincidence_prob(&params(0.0, 1, 0.3, 0.3, 0.02, 0.05)),
            0.02 * 0.05,
            epsilon = 1e-15
        );
    }

    #[test]
    fn cross_correlation_perfect_pairs() {
        let g = cross_correlation(&params(0.5, 1, 1.0, 1.0, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(g, 2.0, epsilon = 1e-14);
        assert_eq!(
            cross_correlation(&params(0.0, 1, 0.3, 0.3, 0.0, 0.0)),
            Err(AnalyticError::UndefinedCorrelation("cross-correlation"))
        );
    }

    #[test]
    fn cross_correlation_scales_inversely_with_p() {
        // Series expansion: g - 1 = (1-p̄)(...) ~ 1/p̄ for q = 0, small η.
        let g = |p| cross_correlation(&params(p, 1, 0.01, 0.01, 0.0, 0.0)).unwrap();
        let slope = (g(1e-4).ln() - g(1e-3).ln()) / ((1e-4f64).ln() - (1e-3f64).ln());
        assert!((slope + 1.0).abs() < 0.01, "slope {slope}");
        // Ideal detectors: g = 1 + 1/p̄ exactly for the single-mode state
        // measured with unit efficiency... only when η→0; with η small the
        // leading term is 1/p̄.
        assert!((g(1e-4) * 1e-4 - 1.0).abs() < 0.02);
    }

    #[test]
    fn cross_correlation_noise_plateau_decreases_with_qb() {
        let mut last = f64::INFINITY;
        for qb in [1e-6, 3e-6, 1e-5, 3e-5, 1e-4] {
            let g = cross_correlation(&params(1e-6, 1, 0.07, 4e-4, 0.0, qb)).unwrap();
            assert!(g < last);
            // Plateau bounded by 1 + η_b/q_b.
            assert!(g < 1.0 + 4e-4 / qb + 1e-9);
            last = g;
        }
    }

    #[test]
    fn cross_correlation_is_symmetric() {
        let a = params(0.03, 2, 0.07, 0.2, 1e-4, 3e-3);
        let b = params(0.03, 2, 0.2, 0.07, 3e-3, 1e-4);
        assert_eq!(
            cross_correlation(&a).unwrap(),
            cross_correlation(&b).unwrap()
        );
    }

    #[test]
    fn cross_correlation_decreasing_in_p() {
        let mut last = f64::INFINITY;
        for k in 0..200 {
            let p = 1e-5 * (0.5f64 / 1e-5).powf(k as f64 / 199.0);
            let g = cross_correlation(&params(p, 1, 0.07, 0.01, 0.0, 0.0)).unwrap();
            assert!(g < last, "not decreasing at p = {p}");
            last = g;
        }
    }

    #[test]
    fn stokes_autocorrelation_values() {
        let g1 = stokes_autocorrelation(&params(1e-3, 1, 0.07, 0.07, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(g1, 2.0, epsilon = 1e-2);
        for n in [1u32, 2, 4, 10] {
            let p = AnalyticParams::with_mean_photon(1e-4, n, 1.0, 1.0, 0.0, 0.0).unwrap();
            let g = stokes_autocorrelation(&p).unwrap();
            assert_abs_diff_eq!(g, 1.0 + 1.0 / f64::from(n), epsilon = 1e-3);
        }
        let many = stokes_autocorrelation(&params(1e-6, 5000, 0.5, 0.5, 0.0, 0.0)).unwrap();
        assert_abs_diff_eq!(many, 1.0, epsilon = 1e-3);
    }

    #[test]
    fn mean_photon_reparameterization() {
        for n in [1u32, 3, 7] {
            let p = AnalyticParams::with_mean_photon(0.2, n, 1.0, 1.0, 0.0, 0.0).unwrap();
            assert_abs_diff_eq!(p.mean_photon_number(), 0.2 / 0.8, epsilon = 1e-14);
        }
    }

    #[test]
    fn conditional_autocorrelation_limits() {
        let low = conditional_as_autocorrelation(&params(1e-4, 1, 0.07, 0.07, 0.0, 0.0)).unwrap();
        assert!(low <= 1e-3, "{low}");
        let high = conditional_as_autocorrelation(&params(0.999, 1, 0.07, 0.5, 0.0, 0.0)).unwrap();
        assert!(high >= 1.0, "{high}");
        assert!(high < 1.01);
    }

    #[test]
    fn conditional_autocorrelation_heralding_failure() {
        let p = params(0.0, 1, 0.07, 0.07, 0.0, 0.0);
        assert!(matches!(
            conditional_as_autocorrelation(&p),
            Err(AnalyticError::UndefinedCorrelation(_))
        ));
    }

    #[test]
    fn csi_and_visibility() {
        assert_eq!(csi_ratio(2.0, 2.0, 2.0).unwrap(), 1.0);
        assert_abs_diff_eq!(csi_ratio(63.4, 2.0, 2.0).unwrap(), 1004.89, epsilon = 1e-9);
        assert_eq!(tmsv_csi_ratio(1.0), 1.0);
        assert!(csi_ratio(1.0, 0.0, 2.0).is_err());

        let g_thr = (1.0 + 0.5f64.sqrt()) / (1.0 - 0.5f64.sqrt());
        assert_abs_diff_eq!(g_thr, 5.83, epsilon = 1e-2);
        assert_abs_diff_eq!(max_bell_visibility(5.83), 0.5f64.sqrt(), epsilon = 1e-3);
        assert_eq!(max_bell_visibility(1.0), 0.0);
        assert_abs_diff_eq!(max_bell_visibility(63.4), 62.4 / 64.4, epsilon = 1e-12);
        assert_abs_diff_eq!(max_bell_visibility(63.4), 0.9689, epsilon = 1e-4);
    }

    #[test]
    fn thermal_occupancy_values() {
        let omega = 2.0 * std::f64::consts::PI * 39.9e12;
        assert_eq!(thermal_occupancy(omega, 0.0), 0.0);
        assert_abs_diff_eq!(thermal_occupancy(omega, 300.0), 1.7e-3, epsilon = 0.05e-3);
        // Equipartition limit.
        let low = 2.0 * std::f64::consts::PI * 1e6;
        let n = thermal_occupancy(low, 300.0);
        assert_abs_diff_eq!(n * HBAR * low / (K_B * 300.0), 1.0, epsilon = 1e-4);
    }

    #[test]
    fn sweep_p_bar_from_rate() {
        let cfg = SweepConfig {
            stokes_rates_hz: vec![2.4e4],
            ..SweepConfig::default()
        };
        let rows = power_sweep(&cfg).unwrap();
        assert_eq!(rows.len(), 3);
        assert_abs_diff_eq!(rows[0].p_bar, 4.2857e-3, epsilon = 1e-7);
        assert_abs_diff_eq!(rows[2].eta_b, 0.07 * 0.3 * 0.04, epsilon = 1e-15);
    }

    #[test]
    fn sweep_noise_only_row() {
        let cfg = SweepConfig {
            stokes_rates_hz: vec![0.0],
            ..SweepConfig::default()
        };
        let rows = power_sweep(&cfg).unwrap();
        // No pairs: clicks are independent noise and g = 1.
        for r in rows {
            assert_abs_diff_eq!(r.g_ab, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn sweep_out_of_regime() {
        let cfg = SweepConfig {
            stokes_rates_hz: vec![1e7],
            ..SweepConfig::default()
        };
        assert!(matches!(
            power_sweep(&cfg),
            Err(AnalyticError::OutOfRegime { .. })
        ));
    }

    #[test]
    fn default_sweep_shape() {
        let cfg = SweepConfig::default();
        let rows = power_sweep(&cfg).unwrap();
        let per = cfg.stokes_rates_hz.len();
        let mut plateaus = Vec::new();
        for chunk in rows.chunks(per) {
            for w in chunk.windows(2).skip(2) {
                assert!(w[1].g_ab < w[0].g_ab);
            }
            plateaus.push(chunk.iter().map(|r| r.g_ab).fold(0.0, f64::max));
            assert!(chunk.iter().all(|r| r.g_cond < 0.1 && r.g_cond < 0.5));
        }
        assert!(plateaus[0] > plateaus[1] && plateaus[1] > plateaus[2]);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(AnalyticParams::new(1.0, 1, 0.1, 0.1, 0.0, 0.0).is_err());
        assert!(AnalyticParams::new(0.1, 0, 0.1, 0.1, 0.0, 0.0).is_err());
        assert!(AnalyticParams::new(0.1, 1, 1.1, 0.1, 0.0, 0.0).is_err());
        assert!(AnalyticParams::new(0.1, 1, 0.1, 0.1, -0.1, 0.0).is_err());
    }

    #[test]
    fn sweep_csv_header() {
        let mut buf = Vec::new();
        let rows = power_sweep(&SweepConfig::default()).unwrap();
        write_sweep_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with(SWEEP_CSV_HEADER));
        assert_eq!(text.lines().count(), rows.len() + 1);
    }
}
