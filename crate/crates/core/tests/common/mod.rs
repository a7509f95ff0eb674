//! Independent oracles shared by the integration tests and the acceptance
//! driver.
#![allow(dead_code)]

use phonocorr::analytic::AnalyticParams;
use phonocorr::fitting::{DelayCurve, DelayPoint, ExpGaussParams};
use phonocorr::fock::ModeLayout;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

/// Click statistics evaluated directly in the Fock basis.
#[derive(Debug, Clone, Copy)]
pub struct FockClicks {
    pub s_a: f64,
    pub s_b: f64,
    pub c_ab: f64,
    pub g_ab: f64,
}

/// Single-mode pair state `√(1-p̄) Σ p̄^{n/2} |n⟩_a|n⟩_b` written out on a
/// two-mode product basis with `cutoff` levels per mode.
pub struct PairState {
    pub layout: ModeLayout,
    pub amplitudes: Vec<f64>,
}

impl PairState {
    pub fn new(p_bar: f64, cutoff: usize) -> Self {
        let layout =
            ModeLayout::with_max_dim(&[("a", cutoff), ("b", cutoff)], cutoff * cutoff).unwrap();
        let mut amplitudes = vec![0.0; layout.dim()];
        for n in 0..cutoff {
            let i = layout.flat_index(&[n, n]);
            amplitudes[i] = ((1.0 - p_bar) * p_bar.powi(n as i32)).sqrt();
        }
        Self { layout, amplitudes }
    }

    /// `⟨ψ|Π|ψ⟩` for an operator diagonal in the number basis, `Π|n_a,n_b⟩ =
    /// f(n_a, n_b)|n_a,n_b⟩`. Sums over the whole product basis.
    pub fn expect_diagonal(&self, f: impl Fn(usize, usize) -> f64) -> f64 {
        (0..self.layout.dim())
            .map(|i| {
                let (na, nb) = (self.layout.level(i, 0), self.layout.level(i, 1));
                self.amplitudes[i].powi(2) * f(na, nb)
            })
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.expect_diagonal(|_, _| 1.0)
    }
}

/// No-click POVM element of a detector with efficiency `eta` and
/// per-pulse noise click probability `q` on `n` photons.
pub fn no_click_povm(n: usize, eta: f64, q: f64) -> f64 {
    (1.0 - q) * (1.0 - eta).powi(n as i32)
}

pub fn fock_clicks(p: &AnalyticParams, cutoff: usize) -> FockClicks {
    assert_eq!(p.modes, 1, "the Fock oracle covers the single-mode state");
    let psi = PairState::new(p.p_bar, cutoff);
    let dark_a = psi.expect_diagonal(|na, _| no_click_povm(na, p.eta_a, p.q_a));
    let dark_b = psi.expect_diagonal(|_, nb| no_click_povm(nb, p.eta_b, p.q_b));
    let dark_ab = psi.expect_diagonal(|na, nb| {
        no_click_povm(na, p.eta_a, p.q_a) * no_click_povm(nb, p.eta_b, p.q_b)
    });
    let s_a = 1.0 - dark_a;
    let s_b = 1.0 - dark_b;
    let c_ab = 1.0 - dark_a - dark_b + dark_ab;
    FockClicks {
        s_a,
        s_b,
        c_ab,
        g_ab: c_ab / (s_a * s_b),
    }
}

/// Auto-correlation of the `b` field behind a 50/50 splitter, heralded by a
/// click on `a`, from the Fock-basis conditional state.
pub fn fock_conditional_bb(p: &AnalyticParams, cutoff: usize) -> f64 {
    let psi = PairState::new(p.p_bar, cutoff);
    let click_a = |na: usize| 1.0 - no_click_povm(na, p.eta_a, p.q_a);
    let herald = psi.expect_diagonal(|na, _| click_a(na));
    // Each arm: detected with η_b/2, independent noise q_b.
    let arm_dark = |nb: usize| no_click_povm(nb, 0.5 * p.eta_b, p.q_b);
    let both_dark = |nb: usize| (1.0 - p.q_b).powi(2) * (1.0 - p.eta_b).powi(nb as i32);
    let single = psi.expect_diagonal(|na, nb| click_a(na) * (1.0 - arm_dark(nb))) / herald;
    let both = psi
        .expect_diagonal(|na, nb| click_a(na) * (1.0 - 2.0 * arm_dark(nb) + both_dark(nb)))
        / herald;
    both / (single * single)
}

/// Multi-mode thermal statistics summed over the total photon number, whose
/// distribution for `N` independent modes is negative binomial.
pub fn negative_binomial_weights(p_bar: f64, modes: u32, n_max: usize) -> Vec<f64> {
    let r = f64::from(modes);
    let mut w = Vec::with_capacity(n_max + 1);
    let mut term = (1.0 - p_bar).powf(r);
    for n in 0..=n_max {
        w.push(term);
        term *= (n as f64 + r) / (n as f64 + 1.0) * p_bar;
    }
    w
}

/// Stokes auto-correlation behind a 50/50 splitter by direct summation over
/// the multi-mode photon-number distribution.
pub fn summed_autocorrelation(p_bar: f64, modes: u32, eta: f64, q: f64, n_max: usize) -> f64 {
    let w = negative_binomial_weights(p_bar, modes, n_max);
    let mut single = 0.0;
    let mut both = 0.0;
    for (n, &pn) in w.iter().enumerate() {
        let arm_dark = no_click_povm(n, 0.5 * eta, q);
        let all_dark = (1.0 - q).powi(2) * (1.0 - eta).powi(n as i32);
        single += pn * (1.0 - arm_dark);
        both += pn * (1.0 - 2.0 * arm_dark + all_dark);
    }
    both / (single * single)
}

/// Exponentially modified Gaussian by numerical convolution of the
/// Gaussian with the one-sided exponential (composite Simpson up to where
/// the Gaussian factor vanishes).
pub fn convolved_decay(t: f64, p: &ExpGaussParams) -> f64 {
    let steps = 20_000;
    let upper = (t - p.t0 + 12.0 * p.sigma).max(0.0);
    if upper == 0.0 {
        return p.c;
    }
    let h = upper / steps as f64;
    let norm = 1.0 / (p.sigma * (2.0 * std::f64::consts::PI).sqrt());
    let integrand = |s: f64| {
        let d = t - p.t0 - s;
        (-s / p.tau).exp() * norm * (-0.5 * d * d / (p.sigma * p.sigma)).exp()
    };
    let mut acc = integrand(0.0) + integrand(upper);
    for k in 1..steps {
        acc += if k % 2 == 1 { 4.0 } else { 2.0 } * integrand(k as f64 * h);
    }
    p.c + p.a * acc * h / 3.0
}

pub const SYNTHETIC_DELAYS: [f64; 31] = [
    -1.0, -0.5, 0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0, 5.5, 6.0,
    7.0, 8.0, 9.0, 10.0, 11.0, 12.0, 13.0, 14.0, 15.0, 16.0, 18.0, 20.0, 22.0,
];

/// Synthetic delay curve with Gaussian noise of standard deviation
/// `rel_noise` times the model value; the curve carries those standard
/// deviations. `rel_noise = 0` gives an exact curve with no uncertainties.
pub fn synthetic_curve(
    p: &ExpGaussParams,
    delays: &[f64],
    rel_noise: f64,
    seed: u64,
) -> DelayCurve {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let std = Normal::new(0.0, 1.0).unwrap();
    let points = delays
        .iter()
        .map(|&t| {
            let v = p.eval(t);
            let s = rel_noise * v;
            DelayPoint {
                delay_ps: t,
                g2: v + s * std.sample(&mut rng),
                sigma_g2: s,
            }
        })
        .collect();
    DelayCurve::new(points).unwrap()
}
