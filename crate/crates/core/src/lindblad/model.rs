//! Parameters of the four-mode write/read model and their compilation into a
//! [`Generator`].

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::analytic::thermal_occupancy;
use crate::fock::{annihilation, creation, make_layout, thermal_state, DensityMatrix, ModeLayout};

use super::generator::{Frame, Generator};
use super::LindbladError;

pub const MODE_S1: &str = "S1";
pub const MODE_S2: &str = "S2";
pub const MODE_AS2: &str = "aS2";
pub const MODE_PHONON: &str = "phonon";

/// Gaussian laser pulse `α(t) = A exp(-(t-t₀)²/2σ²) exp(-iΔt)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseParams {
    pub amplitude: f64,
    pub center_ps: f64,
    pub width_ps: f64,
    /// Laser frequency relative to the frame frequency `ω₀`.
    pub detuning_rad_per_ps: f64,
}

impl PulseParams {
    /// Real envelope `A exp(-(t-t₀)²/2σ²)`.
    pub fn envelope(&self, t: f64) -> f64 {
        let x = (t - self.center_ps) / self.width_ps;
        self.amplitude * (-0.5 * x * x).exp()
    }

    fn validate(&self, name: &str) -> Result<(), LindbladError> {
        if !(self.width_ps > 0.0 && self.width_ps.is_finite()) {
            return Err(LindbladError::InvalidConfig(format!(
                "{name} pulse width must be positive, got {} ps",
                self.width_ps
            )));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(LindbladError::InvalidConfig(format!(
                "{name} pulse amplitude must be non-negative, got {}",
                self.amplitude
            )));
        }
        if !self.center_ps.is_finite() || !self.detuning_rad_per_ps.is_finite() {
            return Err(LindbladError::InvalidConfig(format!(
                "{name} pulse center and detuning must be finite"
            )));
        }
        Ok(())
    }
}

/// Complex drive amplitude of a pulse at time `t`.
pub fn pulse_amplitude(pulse: &PulseParams, t: f64) -> Complex64 {
    pulse.envelope(t) * Complex64::from_polar(1.0, -pulse.detuning_rad_per_ps * t)
}

/// Effective bath occupancy from four-wave-mixing noise of one pulse,
/// `n_th0 (c₂ A(t)⁴ + c₁)`.
pub fn noise_occupancy(pulse: &PulseParams, t: f64, c1: f64, c2: f64, n_th0: f64) -> f64 {
    n_th0 * (c2 * pulse.envelope(t).powi(4) + c1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Cutoffs {
    pub s1: usize,
    pub s2: usize,
    pub as2: usize,
    pub phonon: usize,
}

impl Default for Cutoffs {
    fn default() -> Self {
        Self {
            s1: 3,
            s2: 3,
            as2: 3,
            phonon: 4,
        }
    }
}

impl Cutoffs {
    pub fn raised(self, by: usize) -> Self {
        Self {
            s1: self.s1 + by,
            s2: self.s2 + by,
            as2: self.as2 + by,
            phonon: self.phonon + by,
        }
    }
}

/// Conversion from the phonon lifetime to its damping rate.
///
/// Photon modes always use `γ = 2π/τ`. For the phonon, `Population` uses
/// `γ = 1/τ`, so phonon number and the heralded correlation decay as
/// `e^{-t/τ}`; `Angular` applies `2π/τ` to the phonon as well.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PhononRate {
    #[default]
    Population,
    Angular,
}

/// Four-wave-mixing noise and dark-count parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseParams {
    /// Dark-count term `c₁ = κ_d τ_bin`.
    pub c1: f64,
    /// Four-wave-mixing strength per unit `A⁴`.
    pub c2: f64,
    /// Occupancy scale `n_th0`; the phonon's thermal occupancy when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_th0: Option<f64>,
    /// Per-channel multipliers of the noise occupancy.
    pub scale_s1: f64,
    pub scale_as2: f64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        Self {
            c1: 1e-6,
            c2: 4.5e-6,
            n_th0: None,
            scale_s1: 1.0,
            scale_as2: 1.0,
        }
    }
}

impl NoiseParams {
    pub fn zero() -> Self {
        Self {
            c1: 0.0,
            c2: 0.0,
            ..Self::default()
        }
    }
}

/// Full parameter set of the write/read master-equation model. Frequencies
/// in rad/ps, times in ps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub cutoffs: Cutoffs,
    pub delta_s1_rad_per_ps: f64,
    pub delta_s2_rad_per_ps: f64,
    pub delta_as2_rad_per_ps: f64,
    pub omega_m_rad_per_ps: f64,
    pub lambda_s1_rad_per_ps: f64,
    pub lambda_s2_rad_per_ps: f64,
    pub lambda_as2_rad_per_ps: f64,
    pub write: PulseParams,
    pub read: PulseParams,
    pub tau_s1_ps: f64,
    pub tau_s2_ps: f64,
    pub tau_as2_ps: f64,
    pub tau_m_ps: f64,
    pub phonon_rate: PhononRate,
    pub temperature_k: f64,
    pub noise: NoiseParams,
    pub step_ps: f64,
    pub t_start_ps: f64,
    pub t_end_ps: f64,
    /// Record every `snapshot_stride`-th integration step.
    pub snapshot_stride: usize,
    pub frame: Frame,
}

/// Laser frequencies of the two-color experiment on diamond, rad/ps.
pub const OMEGA_L1: f64 = 2.90e3;
pub const OMEGA_L2: f64 = 2.35e3;
/// Optical phonon frequency, rad/ps.
pub const OMEGA_M: f64 = 2.0 * PI * 40.0;

impl Default for SimConfig {
    /// Diamond parameters: 0.2 ps pulses, photon lifetimes equal to the pulse
    /// width, 4 ps phonon lifetime, 300 K, equal couplings of 0.1 rad/ps per
    /// unit amplitude.
    fn default() -> Self {
        let sigma = 0.2;
        Self::from_laser_frequencies(OMEGA_L1, OMEGA_L2, OMEGA_M, sigma)
    }
}

impl SimConfig {
    /// Detunings in the frame rotating at `ω₀ = (ω_L1 + ω_L2)/2` with the
    /// Raman lines at `ω_L1 - ω_m`, `ω_L2 - ω_m` and `ω_L2 + ω_m`.
    pub fn from_laser_frequencies(
        omega_l1: f64,
        omega_l2: f64,
        omega_m: f64,
        sigma_ps: f64,
    ) -> Self {
        let omega0 = 0.5 * (omega_l1 + omega_l2);
        let lambda = 0.1;
        Self {
            cutoffs: Cutoffs::default(),
            delta_s1_rad_per_ps: omega_l1 - omega_m - omega0,
            delta_s2_rad_per_ps: omega_l2 - omega_m - omega0,
            delta_as2_rad_per_ps: omega_l2 + omega_m - omega0,
            omega_m_rad_per_ps: omega_m,
            lambda_s1_rad_per_ps: lambda,
            lambda_s2_rad_per_ps: lambda,
            lambda_as2_rad_per_ps: lambda,
            write: PulseParams {
                amplitude: 1.0,
                center_ps: 0.0,
                width_ps: sigma_ps,
                detuning_rad_per_ps: omega_l1 - omega0,
            },
            read: PulseParams {
                amplitude: 1.0,
                center_ps: 1.0,
                width_ps: sigma_ps,
                detuning_rad_per_ps: omega_l2 - omega0,
            },
            tau_s1_ps: sigma_ps,
            tau_s2_ps: sigma_ps,
            tau_as2_ps: sigma_ps,
            tau_m_ps: 4.0,
            phonon_rate: PhononRate::Population,
            temperature_k: 300.0,
            noise: NoiseParams::default(),
            step_ps: sigma_ps / 20.0,
            t_start_ps: -6.0 * sigma_ps,
            t_end_ps: 1.0 + 6.0 * sigma_ps,
            snapshot_stride: 1,
            frame: Frame::Interaction,
        }
    }

    pub fn validate(&self) -> Result<(), LindbladError> {
        let bad = |msg: String| Err(LindbladError::InvalidConfig(msg));
        for (name, tau) in [
            ("tau_s1_ps", self.tau_s1_ps),
            ("tau_s2_ps", self.tau_s2_ps),
            ("tau_as2_ps", self.tau_as2_ps),
            ("tau_m_ps", self.tau_m_ps),
        ] {
            if !(tau > 0.0 && tau.is_finite()) {
                return bad(format!("{name} must be positive, got {tau}"));
            }
        }
        if !(self.step_ps > 0.0 && self.step_ps.is_finite()) {
            return bad(format!("step_ps must be positive, got {}", self.step_ps));
        }
        if !(self.t_end_ps > self.t_start_ps) {
            return bad(format!(
                "time span is empty: t_start_ps = {}, t_end_ps = {}",
                self.t_start_ps, self.t_end_ps
            ));
        }
        if self.snapshot_stride == 0 {
            return bad("snapshot_stride must be at least 1".into());
        }
        if !(self.temperature_k >= 0.0) {
            return bad(format!(
                "temperature_k must be >= 0, got {}",
                self.temperature_k
            ));
        }
        let n = &self.noise;
        for (name, v) in [
            ("c1", n.c1),
            ("c2", n.c2),
            ("scale_s1", n.scale_s1),
            ("scale_as2", n.scale_as2),
            ("n_th0", n.n_th0.unwrap_or(0.0)),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("noise.{name} must be finite and >= 0, got {v}"));
            }
        }
        for (name, v) in [
            ("lambda_s1_rad_per_ps", self.lambda_s1_rad_per_ps),
            ("lambda_s2_rad_per_ps", self.lambda_s2_rad_per_ps),
            ("lambda_as2_rad_per_ps", self.lambda_as2_rad_per_ps),
            ("delta_s1_rad_per_ps", self.delta_s1_rad_per_ps),
            ("delta_s2_rad_per_ps", self.delta_s2_rad_per_ps),
            ("delta_as2_rad_per_ps", self.delta_as2_rad_per_ps),
            ("omega_m_rad_per_ps", self.omega_m_rad_per_ps),
        ] {
            if !v.is_finite() {
                return bad(format!("{name} must be finite"));
            }
        }
        if !(self.omega_m_rad_per_ps > 0.0) {
            return bad("omega_m_rad_per_ps must be positive".into());
        }
        self.write.validate("write")?;
        self.read.validate("read")?;
        self.layout()?;
        Ok(())
    }

    pub fn layout(&self) -> Result<ModeLayout, LindbladError> {
        let c = &self.cutoffs;
        Ok(make_layout(&[
            (MODE_S1, c.s1),
            (MODE_S2, c.s2),
            (MODE_AS2, c.as2),
            (MODE_PHONON, c.phonon),
        ])?)
    }

    pub fn photon_rate(tau_ps: f64) -> f64 {
        2.0 * PI / tau_ps
    }

    pub fn phonon_gamma(&self) -> f64 {
        match self.phonon_rate {
            PhononRate::Population => 1.0 / self.tau_m_ps,
            PhononRate::Angular => 2.0 * PI / self.tau_m_ps,
        }
    }

    /// Bose-Einstein occupancy of the phonon at the configured temperature.
    pub fn phonon_occupancy(&self) -> f64 {
        thermal_occupancy(self.omega_m_rad_per_ps * 1e12, self.temperature_k)
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise.n_th0.unwrap_or_else(|| self.phonon_occupancy())
    }

    /// Noise occupancy seen by the two detected photon modes: both pulses
    /// contribute their four-wave-mixing term, the dark-count term once.
    pub fn detection_noise(&self, t: f64) -> f64 {
        let n = &self.noise;
        let a1 = self.write.envelope(t);
        let a2 = self.read.envelope(t);
        self.noise_scale() * (n.c2 * (a1.powi(4) + a2.powi(4)) + n.c1)
    }

    /// Product thermal state at `t_start_ps`: detected photon modes at their
    /// bath occupancy, S2 in vacuum, phonon at its thermal occupancy.
    pub fn initial_state(&self) -> Result<DensityMatrix, LindbladError> {
        let layout = self.layout()?;
        let n_det = self.detection_noise(self.t_start_ps);
        Ok(thermal_state(
            &layout,
            &[
                n_det * self.noise.scale_s1,
                0.0,
                n_det * self.noise.scale_as2,
                self.phonon_occupancy(),
            ],
        )?)
    }

    /// Compiles the Hamiltonian and dissipators.
    pub fn generator(&self) -> Result<Generator, LindbladError> {
        self.validate()?;
        let layout = self.layout()?;
        let mut g = Generator::new(
            &layout,
            &[
                (MODE_S1, self.delta_s1_rad_per_ps),
                (MODE_S2, self.delta_s2_rad_per_ps),
                (MODE_AS2, self.delta_as2_rad_per_ps),
                (MODE_PHONON, self.omega_m_rad_per_ps),
            ],
            self.frame,
        )?;
        let b = annihilation(&layout, MODE_PHONON)?;
        let b_dag = b.dagger();
        let write = self.write;
        let read = self.read;

        let lam = self.lambda_s1_rad_per_ps;
        g.add_drive(
            &(&b_dag * &creation(&layout, MODE_S1)?),
            Arc::new(move |t| lam * pulse_amplitude(&write, t)),
        )?;
        let lam = self.lambda_s2_rad_per_ps;
        g.add_drive(
            &(&b_dag * &creation(&layout, MODE_S2)?),
            Arc::new(move |t| lam * pulse_amplitude(&read, t)),
        )?;
        let lam = self.lambda_as2_rad_per_ps;
        g.add_drive(
            &(&b * &creation(&layout, MODE_AS2)?),
            Arc::new(move |t| lam * pulse_amplitude(&read, t)),
        )?;

        let noise_cfg = self.clone();
        let s1 = self.noise.scale_s1;
        g.add_bath(
            MODE_S1,
            Self::photon_rate(self.tau_s1_ps),
            Arc::new(move |t| s1 * noise_cfg.detection_noise(t)),
        )?;
        g.add_bath(
            MODE_S2,
            Self::photon_rate(self.tau_s2_ps),
            Arc::new(|_| 0.0),
        )?;
        let noise_cfg = self.clone();
        let as2 = self.noise.scale_as2;
        g.add_bath(
            MODE_AS2,
            Self::photon_rate(self.tau_as2_ps),
            Arc::new(move |t| as2 * noise_cfg.detection_noise(t)),
        )?;
        let n_th = self.phonon_occupancy();
        g.add_bath(MODE_PHONON, self.phonon_gamma(), Arc::new(move |_| n_th))?;
        Ok(g)
    }

    /// Number of integration steps covering the span (the last step may end
    /// slightly past `t_end_ps`).
    pub fn n_steps(&self) -> usize {
        ((self.t_end_ps - self.t_start_ps) / self.step_ps - 1e-9).ceil() as usize
    }

    pub fn time_at(&self, step: usize) -> f64 {
        self.t_start_ps + step as f64 * self.step_ps
    }

    /// Grid step nearest to `t`, if inside the span.
    pub fn step_index(&self, t: f64) -> Result<usize, LindbladError> {
        let k = ((t - self.t_start_ps) / self.step_ps).round();
        if !(k >= 0.0 && k <= self.n_steps() as f64) {
            return Err(LindbladError::OutOfSpan {
                time: t,
                start: self.t_start_ps,
                end: self.time_at(self.n_steps()),
            });
        }
        Ok(k as usize)
    }

    /// Extends the span so that both pulses are fully contained (±6σ).
    pub fn covering_pulses(mut self) -> Self {
        let lo = (self.write.center_ps - 6.0 * self.write.width_ps)
            .min(self.read.center_ps - 6.0 * self.read.width_ps);
        let hi = (self.write.center_ps + 6.0 * self.write.width_ps)
            .max(self.read.center_ps + 6.0 * self.read.width_ps);
        self.t_start_ps = self.t_start_ps.min(lo);
        self.t_end_ps = self.t_end_ps.max(hi);
        self
    }
}
