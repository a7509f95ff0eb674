//! Run configuration: one TOML file with a section per command. Unknown keys
//! are rejected and every field has a default, so a partial file is valid.

use std::path::{Path, PathBuf};

use phonocorr::analytic::{AnalyticParams, SweepConfig};
use phonocorr::counting::{
    G2Options, DEFAULT_BIN_WIDTH_NS, DEFAULT_REP_PERIOD_NS, DEFAULT_SPAN_PERIODS,
};
use phonocorr::fitting::FitOptions;
use phonocorr::lindblad::SimConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

/// The shipped configuration; equal to [`RunConfig::default`].
pub const BUNDLED_DEFAULT: &str = include_str!("../configs/default.toml");

/// Event lists beyond this many repetitions are refused; histograms stream.
pub const MAX_EVENT_LIST_REPS: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub analytic: AnalyticSection,
    pub simulate: SimulateSection,
    pub counts: CountsSection,
    pub fit: FitSection,
    pub reproduce: ReproduceSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyticSection {
    /// Per-mode `p̄` of the mode-count table.
    pub mode_count_p_bar: f64,
    pub mode_count_eta: f64,
    pub max_modes: u32,
    pub sweep: SweepConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateSection {
    /// Write the occupancy trajectory of the base model.
    pub trajectory: bool,
    /// Amplitude grid; the sweep is skipped when either list is empty.
    pub write_amplitudes: Vec<f64>,
    pub read_amplitudes: Vec<f64>,
    /// Read-pulse delays; the delay sweep is skipped when empty.
    pub delays_ps: Vec<f64>,
    pub model: SimConfig,
}

/// Click probabilities given directly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClickProbabilities {
    pub p_s: f64,
    pub p_as: f64,
    pub p_joint: f64,
}

/// Write-only acquisition whose histogram is subtracted as cross-talk.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrosstalkSection {
    /// Anti-Stokes click probability per repetition with the read pulse off.
    pub p_as_leak: f64,
    pub n_reps: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CountsSection {
    pub n_reps: u64,
    pub rep_period_ns: f64,
    pub bin_width_ns: f64,
    pub span_periods: f64,
    pub dark_s: f64,
    pub dark_as: f64,
    /// Also write the raw event list (small runs only).
    pub write_events: bool,
    /// Click probabilities given directly; when absent they follow from
    /// the detector model in `analytic`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub clicks: Option<ClickProbabilities>,
    pub analytic: AnalyticParams,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub crosstalk: Option<CrosstalkSection>,
    pub analysis: G2Options,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitSection {
    /// Delay-curve CSVs, relative to the config file. The bundled synthetic
    /// curve is fitted when empty.
    pub curves: Vec<PathBuf>,
    /// Also write each curve normalized by its own fit.
    pub normalize: bool,
    /// Percentile bootstrap for `τ`; off when zero.
    pub bootstrap_resamples: usize,
    pub options: FitOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReproduceSection {
    pub fig5_write_amplitudes: Vec<f64>,
    pub fig5_read_amplitudes: Vec<f64>,
    pub decay_delays_ps: Vec<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            out_dir: PathBuf::from("phonocorr-out"),
            analytic: AnalyticSection::default(),
            simulate: SimulateSection::default(),
            counts: CountsSection::default(),
            fit: FitSection::default(),
            reproduce: ReproduceSection::default(),
        }
    }
}

impl Default for AnalyticSection {
    fn default() -> Self {
        Self {
            mode_count_p_bar: 1e-3,
            mode_count_eta: 0.07,
            max_modes: 10,
            sweep: SweepConfig::default(),
        }
    }
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self {
            trajectory: true,
            write_amplitudes: vec![0.01, 0.1, 1.0],
            read_amplitudes: vec![0.5, 1.0, 2.0],
            delays_ps: vec![0.0, 0.5, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0],
            model: SimConfig::default(),
        }
    }
}

impl Default for CountsSection {
    /// Twenty minutes at 80 MHz with probabilities from the detector model
    /// at a Stokes rate of about 17 kHz.
    fn default() -> Self {
        Self {
            n_reps: 96_000_000_000,
            rep_period_ns: DEFAULT_REP_PERIOD_NS,
            bin_width_ns: DEFAULT_BIN_WIDTH_NS,
            span_periods: DEFAULT_SPAN_PERIODS,
            dark_s: 0.0,
            dark_as: 0.0,
            write_events: false,
            clicks: None,
            analytic: AnalyticParams {
                p_bar: 3e-3,
                modes: 1,
                eta_a: 0.07,
                eta_b: 2.1e-4,
                q_a: 1e-6,
                q_b: 1e-6,
            },
            crosstalk: None,
            analysis: G2Options::default(),
        }
    }
}

impl Default for FitSection {
    fn default() -> Self {
        Self {
            curves: Vec::new(),
            normalize: true,
            bootstrap_resamples: 0,
            options: FitOptions::default(),
        }
    }
}

impl Default for ReproduceSection {
    fn default() -> Self {
        Self {
            fig5_write_amplitudes: vec![1e-4, 3e-4, 1e-3, 3e-3, 0.01, 0.03, 0.1, 0.3, 1.0, 3.0],
            fig5_read_amplitudes: vec![0.5, 1.0, 2.0],
            decay_delays_ps: vec![
                0.0, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 4.0, 5.0, 6.5, 8.0, 10.0, 12.5, 15.0,
            ],
        }
    }
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(anyhow::anyhow!(msg.into()))
}

fn check_finite_nonneg(name: &str, values: &[f64]) -> Result<(), CliError> {
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(config_err(format!(
            "{name}: {v} is not a finite non-negative number"
        )));
    }
    Ok(())
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(anyhow::anyhow!("invalid config: {e}")))
    }

    /// Reads a config file; relative curve paths are resolved against its
    /// directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(format!("cannot read config {}: {e}", path.display())))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            CliError::Config(inner) => {
                CliError::Config(inner.context(format!("in {}", path.display())))
            }
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for curve in &mut cfg.fit.curves {
            if curve.is_relative() {
                *curve = base.join(&*curve);
            }
        }
        Ok(cfg)
    }

    pub fn bundled() -> Self {
        Self::parse(BUNDLED_DEFAULT).expect("bundled config parses")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks shared by every command.
    pub fn validate(&self) -> Result<(), CliError> {
        let wrap = |e: &dyn std::fmt::Display| config_err(e.to_string());
        self.analytic.sweep.validate().map_err(|e| wrap(&e))?;
        if !(self.analytic.mode_count_p_bar > 0.0 && self.analytic.mode_count_p_bar < 1.0) {
            return Err(config_err("analytic.mode_count_p_bar must lie in (0, 1)"));
        }
        if !(self.analytic.mode_count_eta > 0.0 && self.analytic.mode_count_eta <= 1.0) {
            return Err(config_err("analytic.mode_count_eta must lie in (0, 1]"));
        }
        if self.analytic.max_modes == 0 {
            return Err(config_err("analytic.max_modes must be at least 1"));
        }
        self.simulate.model.validate().map_err(|e| wrap(&e))?;
        check_finite_nonneg("simulate.write_amplitudes", &self.simulate.write_amplitudes)?;
        check_finite_nonneg("simulate.read_amplitudes", &self.simulate.read_amplitudes)?;
        check_finite_nonneg(
            "reproduce.fig5_write_amplitudes",
            &self.reproduce.fig5_write_amplitudes,
        )?;
        check_finite_nonneg(
            "reproduce.fig5_read_amplitudes",
            &self.reproduce.fig5_read_amplitudes,
        )?;
        for (name, d) in [
            ("simulate.delays_ps", &self.simulate.delays_ps),
            ("reproduce.decay_delays_ps", &self.reproduce.decay_delays_ps),
        ] {
            if d.windows(2).any(|w| !(w[1] > w[0])) || d.iter().any(|x| !x.is_finite()) {
                return Err(config_err(format!(
                    "{name} must be finite and strictly increasing"
                )));
            }
        }
        let c = &self.counts;
        if c.clicks.is_none() {
            c.analytic.validate().map_err(|e| wrap(&e))?;
        }
        self.click_model(self.seed)?;
        if c.write_events && c.n_reps > MAX_EVENT_LIST_REPS {
            return Err(config_err(format!(
                "counts.write_events needs n_reps <= {MAX_EVENT_LIST_REPS}, got {}",
                c.n_reps
            )));
        }
        if let Some(x) = &c.crosstalk {
            if !(x.p_as_leak >= 0.0 && x.p_as_leak < 1.0) || x.n_reps == 0 {
                return Err(config_err(
                    "counts.crosstalk needs 0 <= p_as_leak < 1 and n_reps >= 1",
                ));
            }
        }
        if !(c.bin_width_ns > 0.0 && c.span_periods > 0.0) {
            return Err(config_err(
                "counts.bin_width_ns and counts.span_periods must be positive",
            ));
        }
        for curve in &self.fit.curves {
            if !curve.is_file() {
                return Err(config_err(format!(
                    "fit curve {} does not exist",
                    curve.display()
                )));
            }
        }
        if self.fit.options.max_iter == 0 {
            return Err(config_err("fit.options.max_iter must be positive"));
        }
        if self.fit.bootstrap_resamples != 0 && self.fit.bootstrap_resamples < 10 {
            return Err(config_err(
                "fit.bootstrap_resamples must be 0 or at least 10",
            ));
        }
        Ok(())
    }

    /// Click model of the counts section with the given seed.
    pub fn click_model(&self, seed: u64) -> Result<phonocorr::counting::ClickModel, CliError> {
        use phonocorr::counting::ClickModel;
        let c = &self.counts;
        let mut m = match &c.clicks {
            Some(p) => ClickModel::new(p.p_s, p.p_as, p.p_joint, c.n_reps, seed),
            None => ClickModel::from_analytic(&c.analytic, c.n_reps, seed),
        }
        .map_err(|e| config_err(e.to_string()))?;
        m.rep_period_ns = c.rep_period_ns;
        m.dark_s = c.dark_s;
        m.dark_as = c.dark_as;
        m.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(m)
    }
}
