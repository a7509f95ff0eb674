//! Exponential decay convolved with a Gaussian instrument response.

use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::{erf, erfc};

/// Parameters of [`exp_gauss_model`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpGaussParams {
    pub c: f64,
    pub a: f64,
    pub sigma: f64,
    pub t0: f64,
    pub tau: f64,
}

impl ExpGaussParams {
    pub fn to_array(self) -> [f64; 5] {
        [self.c, self.a, self.sigma, self.t0, self.tau]
    }

    pub fn from_array(p: [f64; 5]) -> Self {
        Self {
            c: p[0],
            a: p[1],
            sigma: p[2],
            t0: p[3],
            tau: p[4],
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        exp_gauss_model(t, self.c, self.a, self.sigma, self.t0, self.tau)
    }
}

/// Scaled complementary error function `e^{x²} erfc(x)`.
pub fn erfcx(x: f64) -> f64 {
    if x < 25.0 {
        (x * x).exp() * erfc(x)
    } else {
        let inv = 1.0 / (x * x);
        (1.0 - 0.5 * inv * (1.0 - 1.5 * inv * (1.0 - 2.5 * inv))) / (x * PI.sqrt())
    }
}

/// `½ e^{σ²/2τ²} e^{-u/τ} (1 + erf((u - σ²/τ)/(√2σ)))` with `u = t - t₀`,
/// evaluated without overflow, together with the Gaussian `e^{-u²/2σ²}`.
fn unit_shape(u: f64, sigma: f64, tau: f64) -> (f64, f64) {
    let gauss = (-0.5 * (u / sigma).powi(2)).exp();
    let z = (u - sigma * sigma / tau) / (SQRT_2 * sigma);
    let shape = if z >= 0.0 {
        let e = 0.5 * (sigma / tau).powi(2) - u / tau;
        0.5 * e.exp() * (1.0 + erf(z))
    } else {
        // e^{E - z²} = e^{-u²/2σ²}
        0.5 * gauss * erfcx(-z)
    };
    (shape, gauss)
}

/// `C + ½A e^{σ²/2τ²} e^{-(t-t₀)/τ} (1 + erf((t - t₀ - σ²/τ)/(√2σ)))`.
pub fn exp_gauss_model(t: f64, c: f64, a: f64, sigma: f64, t0: f64, tau: f64) -> f64 {
    c + a * unit_shape(t - t0, sigma, tau).0
}

/// Partial derivatives of [`exp_gauss_model`] with respect to
/// `(C, A, σ, t₀, τ)`.
pub fn exp_gauss_gradient(t: f64, p: &ExpGaussParams) -> [f64; 5] {
    let u = t - p.t0;
    let (s, g) = unit_shape(u, p.sigma, p.tau);
    let (sigma, tau, a) = (p.sigma, p.tau, p.a);
    let body = a * s;
    let k = a * g / (2.0 * PI).sqrt();
    let d_t0 = body / tau - k / sigma;
    let d_tau = body * (u / (tau * tau) - sigma * sigma / tau.powi(3)) + k * sigma / (tau * tau);
    let d_sigma = body * sigma / (tau * tau) - k * (u / (sigma * sigma) + 1.0 / tau);
    [1.0, s, d_sigma, d_t0, d_tau]
}
