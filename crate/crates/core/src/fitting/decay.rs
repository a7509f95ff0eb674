//! Weighted least-squares fit of the exponential-convolved-Gaussian model to
//! delay curves.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use super::model::{exp_gauss_gradient, ExpGaussParams};
use super::optimize::{invert_spd, levenberg_marquardt, nelder_mead, normal_matrix};
use super::{DelayCurve, DelayPoint, FitError};

/// Model parameters that can be held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Param {
    C,
    A,
    Sigma,
    T0,
    Tau,
}

impl Param {
    const ALL: [Param; 5] = [Param::C, Param::A, Param::Sigma, Param::T0, Param::Tau];

    fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Param::C => "C",
            Param::A => "A",
            Param::Sigma => "sigma",
            Param::T0 => "t0",
            Param::Tau => "tau",
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    LevenbergMarquardt,
    NelderMead,
}

/// Fit settings. `sigma_ps` and `c` hold those parameters fixed when set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitOptions {
    pub sigma_ps: Option<f64>,
    pub c: Option<f64>,
    /// Weight points by `1/σ_g2²`; unit weights when false or when the curve
    /// has no uncertainties.
    pub weighted: bool,
    pub max_iter: usize,
    pub initial_tau_ps: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            sigma_ps: Some(0.22),
            c: Some(1.0),
            weighted: true,
            max_iter: 500,
            initial_tau_ps: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub c: f64,
    pub a: f64,
    pub sigma: f64,
    pub t0: f64,
    pub tau: f64,
    /// 95 % interval for `τ` from the linearized covariance scaled by the
    /// reduced χ².
    pub tau_ci: (f64, f64),
    pub tau_stderr: f64,
    /// Weighted sum of squared residuals.
    pub residual_norm: f64,
    pub reduced_chi2: f64,
    pub dof: usize,
    pub iterations: usize,
    pub method: FitMethod,
    pub fixed_params: Vec<Param>,
}

impl FitResult {
    pub fn params(&self) -> ExpGaussParams {
        ExpGaussParams {
            c: self.c,
            a: self.a,
            sigma: self.sigma,
            t0: self.t0,
            tau: self.tau,
        }
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.params().eval(t)
    }

    /// `key = value` lines.
    pub fn to_text(&self) -> String {
        let fixed: Vec<&str> = self.fixed_params.iter().map(|p| p.name()).collect();
        format!(
            "C = {}\nA = {}\nsigma_ps = {}\nt0_ps = {}\ntau_ps = {}\ntau_ci_low_ps = {}\ntau_ci_high_ps = {}\n\
             tau_stderr_ps = {}\nresidual_norm = {:e}\nreduced_chi2 = {}\ndof = {}\niterations = {}\nmethod = {}\nfixed = {}\n",
            self.c,
            self.a,
            self.sigma,
            self.t0,
            self.tau,
            self.tau_ci.0,
            self.tau_ci.1,
            self.tau_stderr,
            self.residual_norm,
            self.reduced_chi2,
            self.dof,
            self.iterations,
            match self.method {
                FitMethod::LevenbergMarquardt => "levenberg_marquardt",
                FitMethod::NelderMead => "nelder_mead",
            },
            fixed.join(",")
        )
    }

    pub const CSV_HEADER: &'static str =
        "C,A,sigma_ps,t0_ps,tau_ps,tau_ci_low_ps,tau_ci_high_ps,residual_norm,reduced_chi2,dof";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{:e},{},{}",
            self.c,
            self.a,
            self.sigma,
            self.t0,
            self.tau,
            self.tau_ci.0,
            self.tau_ci.1,
            self.residual_norm,
            self.reduced_chi2,
            self.dof
        )
    }
}

/// Starting point: `t₀` at the steepest rise, `A = max g² - C`, `τ` from the
/// options, `σ` and `C` at their fixed values (or 0.22 ps and the last
/// point when free).
pub fn initial_guess(curve: &DelayCurve, options: &FitOptions) -> ExpGaussParams {
    let pts = curve.points();
    let c = options
        .c
        .unwrap_or_else(|| pts.last().map_or(1.0, |p| p.g2));
    let sigma = options.sigma_ps.unwrap_or(0.22);
    let max = pts.iter().map(|p| p.g2).fold(f64::NEG_INFINITY, f64::max);
    let mut t0 = pts[0].delay_ps;
    let mut steepest = f64::NEG_INFINITY;
    for w in pts.windows(2) {
        let slope = (w[1].g2 - w[0].g2) / (w[1].delay_ps - w[0].delay_ps);
        if slope > steepest {
            steepest = slope;
            t0 = 0.5 * (w[0].delay_ps + w[1].delay_ps);
        }
    }
    if !(steepest > 0.0) {
        // Only the decay was sampled: start at the first point.
        t0 = pts[0].delay_ps;
    }
    ExpGaussParams {
        c,
        a: max - c,
        sigma,
        t0,
        tau: options.initial_tau_ps,
    }
}

struct Problem<'a> {
    points: &'a [DelayPoint],
    weights: Vec<f64>,
    base: [f64; 5],
    free: Vec<usize>,
}

impl Problem<'_> {
    fn full(&self, x: &[f64]) -> [f64; 5] {
        let mut p = self.base;
        for (&k, &v) in self.free.iter().zip(x) {
            p[k] = v;
        }
        p
    }

    fn residuals(&self, x: &[f64]) -> Option<Vec<f64>> {
        let p = ExpGaussParams::from_array(self.full(x));
        if !(p.tau > 0.0 && p.sigma > 0.0) {
            return None;
        }
        let r: Vec<f64> = self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(pt, w)| (p.eval(pt.delay_ps) - pt.g2) * w)
            .collect();
        r.iter().all(|v| v.is_finite()).then_some(r)
    }

    fn jacobian(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let p = ExpGaussParams::from_array(self.full(x));
        self.points
            .iter()
            .zip(&self.weights)
            .map(|(pt, w)| {
                let g = exp_gauss_gradient(pt.delay_ps, &p);
                self.free.iter().map(|&k| g[k] * w).collect()
            })
            .collect()
    }
}

fn weights(curve: &DelayCurve, weighted: bool) -> Result<Vec<f64>, FitError> {
    let pts = curve.points();
    let with_sigma = pts.iter().filter(|p| p.sigma_g2 > 0.0).count();
    if !weighted || with_sigma == 0 {
        return Ok(vec![1.0; pts.len()]);
    }
    if with_sigma != pts.len() {
        return Err(FitError::InvalidCurve(
            "weighted fit needs an uncertainty on every point or on none".into(),
        ));
    }
    Ok(pts.iter().map(|p| 1.0 / p.sigma_g2).collect())
}

/// Fits `C + ½A e^{σ²/2τ²} e^{-(t-t₀)/τ}(1 + erf(...))` to the curve by
/// weighted Levenberg-Marquardt, falling back to Nelder-Mead.
pub fn fit_decay(curve: &DelayCurve, options: &FitOptions) -> Result<FitResult, FitError> {
    let pts = curve.points();
    if pts.len() < 5 {
        return Err(FitError::TooFewPoints {
            needed: 5,
            got: pts.len(),
        });
    }
    let first = pts[0].g2;
    if pts.iter().all(|p| p.g2 == first) {
        return Err(FitError::Degenerate("all g² values are equal"));
    }
    for (name, v) in [
        ("sigma_ps", options.sigma_ps),
        ("initial_tau_ps", Some(options.initial_tau_ps)),
    ] {
        if let Some(v) = v {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FitError::InvalidCurve(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
    }
    let init = initial_guess(curve, options);
    let mut fixed = Vec::new();
    if options.c.is_some() {
        fixed.push(Param::C);
    }
    if options.sigma_ps.is_some() {
        fixed.push(Param::Sigma);
    }
    let free: Vec<usize> = Param::ALL
        .iter()
        .filter(|p| !fixed.contains(p))
        .map(|p| p.index())
        .collect();
    if pts.len() <= free.len() {
        return Err(FitError::TooFewPoints {
            needed: free.len() + 1,
            got: pts.len(),
        });
    }
    let problem = Problem {
        points: pts,
        weights: weights(curve, options.weighted)?,
        base: init.to_array(),
        free: free.clone(),
    };
    let x0: Vec<f64> = free.iter().map(|&k| problem.base[k]).collect();

    let lm = levenberg_marquardt(
        |x| problem.residuals(x),
        |x| problem.jacobian(x),
        &x0,
        options.max_iter,
    );
    let (x, cost, iterations, method) = match lm {
        Some(m) if m.converged => (m.x, m.cost, m.iterations, FitMethod::LevenbergMarquardt),
        other => {
            let cost_fn = |x: &[f64]| {
                problem
                    .residuals(x)
                    .map_or(f64::INFINITY, |r| r.iter().map(|v| v * v).sum())
            };
            let start = other.map_or(x0.clone(), |m| m.x);
            let nm = nelder_mead(cost_fn, &start, 20 * options.max_iter);
            if !nm.converged || !nm.cost.is_finite() {
                return Err(FitError::NoConvergence {
                    iterations: nm.iterations,
                    cost: nm.cost,
                });
            }
            // Polish the simplex optimum with a short LM run when possible.
            match levenberg_marquardt(
                |x| problem.residuals(x),
                |x| problem.jacobian(x),
                &nm.x,
                options.max_iter,
            ) {
                Some(m) if m.converged && m.cost <= nm.cost => (
                    m.x,
                    m.cost,
                    nm.iterations + m.iterations,
                    FitMethod::NelderMead,
                ),
                _ => (nm.x, nm.cost, nm.iterations, FitMethod::NelderMead),
            }
        }
    };

    let p = ExpGaussParams::from_array(problem.full(&x));
    let dof = pts.len() - free.len();
    let reduced_chi2 = cost / dof as f64;
    let cov = invert_spd(&normal_matrix(&problem.jacobian(&x)))
        .ok_or(FitError::Degenerate("singular Jacobian at the optimum"))?;
    let tau_pos = free
        .iter()
        .position(|&k| k == Param::Tau.index())
        .expect("tau is free");
    let tau_stderr = (cov[tau_pos][tau_pos] * reduced_chi2).max(0.0).sqrt();
    let t_crit = StudentsT::new(0.0, 1.0, dof as f64)
        .map(|d| d.inverse_cdf(0.975))
        .unwrap_or(1.959_963_984_540_054);
    Ok(FitResult {
        c: p.c,
        a: p.a,
        sigma: p.sigma,
        t0: p.t0,
        tau: p.tau,
        tau_ci: (p.tau - t_crit * tau_stderr, p.tau + t_crit * tau_stderr),
        tau_stderr,
        residual_norm: cost,
        reduced_chi2,
        dof,
        iterations,
        method,
        fixed_params: fixed,
    })
}

/// Percentile 95 % interval for `τ` from refits of curves resampled with
/// replacement (duplicated delays are merged by keeping the first copy).
pub fn bootstrap_tau_ci(
    curve: &DelayCurve,
    options: &FitOptions,
    resamples: usize,
    seed: u64,
) -> Result<(f64, f64), FitError> {
    if resamples < 10 {
        return Err(FitError::TooFewPoints {
            needed: 10,
            got: resamples,
        });
    }
    let pts = curve.points();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut taus = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        let mut idx: Vec<usize> = (0..pts.len())
            .map(|_| rng.random_range(0..pts.len()))
            .collect();
        idx.sort_unstable();
        idx.dedup();
        let sample: Vec<DelayPoint> = idx.iter().map(|&i| pts[i]).collect();
        let Ok(c) = DelayCurve::new(sample) else {
            continue;
        };
        if let Ok(fit) = fit_decay(&c, options) {
            taus.push(fit.tau);
        }
    }
    if taus.len() < resamples / 2 {
        return Err(FitError::Degenerate("most bootstrap refits failed"));
    }
    taus.sort_by(f64::total_cmp);
    let q = |f: f64| taus[((taus.len() - 1) as f64 * f).round() as usize];
    Ok((q(0.025), q(0.975)))
}

/// `(g² - C)/(g²_fit(0) - C)` with `C` and the zero-delay value taken from
/// `fit`; uncertainties scale by the same factor.
pub fn normalize_curve(curve: &DelayCurve, fit: &FitResult) -> Result<DelayCurve, FitError> {
    let baseline = fit.c;
    let peak = fit.eval(0.0);
    if !(peak > baseline) {
        return Err(FitError::PeakBelowBaseline { peak, baseline });
    }
    let scale = 1.0 / (peak - baseline);
    DelayCurve::new(
        curve
            .points()
            .iter()
            .map(|p| DelayPoint {
                delay_ps: p.delay_ps,
                g2: (p.g2 - baseline) * scale,
                sigma_g2: p.sigma_g2 * scale,
            })
            .collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn synthetic(p: &ExpGaussParams, rel_noise: f64, seed: u64) -> DelayCurve {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let pts = (0..31)
            .map(|k| {
                let t = -2.0 + 0.5 * k as f64;
                let v = p.eval(t);
                let s = rel_noise * v;
                DelayPoint {
                    delay_ps: t,
                    g2: v + s * normal.sample(&mut rng),
                    sigma_g2: s,
                }
            })
            .collect();
        DelayCurve::new(pts).unwrap()
    }

    fn truth(tau: f64) -> ExpGaussParams {
        ExpGaussParams {
            c: 1.0,
            a: 62.0,
            sigma: 0.22,
            t0: 0.3,
            tau,
        }
    }

    #[test]
    fn noiseless_recovery() {
        let p = truth(3.9);
        let curve = synthetic(&p, 0.0, 0);
        let fit = fit_decay(&curve, &FitOptions::default()).unwrap();
        assert!(fit.residual_norm < 1e-10);
        assert!((fit.tau - 3.9).abs() < 1e-6);
        assert!((fit.a - 62.0).abs() < 1e-6);
        assert!((fit.t0 - 0.3).abs() < 1e-6);
        assert!(fit.tau_ci.0 <= fit.tau && fit.tau <= fit.tau_ci.1);
        assert_eq!(fit.fixed_params, vec![Param::C, Param::Sigma]);
    }

    #[test]
    fn noisy_recovery_within_band() {
        let curve = synthetic(&truth(3.9), 0.05, 7);
        let fit = fit_decay(&curve, &FitOptions::default()).unwrap();
        assert!((3.2..=4.6).contains(&fit.tau), "{}", fit.tau);
        assert!(fit.tau_ci.0 < fit.tau && fit.tau < fit.tau_ci.1);
    }

    #[test]
    fn free_sigma_and_baseline() {
        let mut p = truth(4.2);
        p.c = 1.3;
        p.sigma = 0.4;
        let curve = synthetic(&p, 0.0, 0);
        let opts = FitOptions {
            sigma_ps: None,
            c: None,
            ..FitOptions::default()
        };
        let fit = fit_decay(&curve, &opts).unwrap();
        assert!((fit.tau - 4.2).abs() < 1e-6, "{}", fit.tau);
        assert!((fit.sigma - 0.4).abs() < 1e-5);
        assert!((fit.c - 1.3).abs() < 1e-6);
        assert!(fit.fixed_params.is_empty());
    }

    #[test]
    fn unweighted_when_no_uncertainties() {
        let p = truth(4.0);
        let pts: Vec<DelayPoint> = synthetic(&p, 0.0, 0)
            .points()
            .iter()
            .map(|q| DelayPoint {
                sigma_g2: 0.0,
                ..*q
            })
            .collect();
        let fit = fit_decay(&DelayCurve::new(pts).unwrap(), &FitOptions::default()).unwrap();
        assert!((fit.tau - 4.0).abs() < 1e-6);
    }

    #[test]
    fn degenerate_and_short_curves() {
        let flat: Vec<DelayPoint> = (0..6)
            .map(|k| DelayPoint {
                delay_ps: k as f64,
                g2: 2.0,
                sigma_g2: 0.1,
            })
            .collect();
        assert_eq!(
            fit_decay(
                &DelayCurve::new(flat.clone()).unwrap(),
                &FitOptions::default()
            ),
            Err(FitError::Degenerate("all g² values are equal"))
        );
        let short = DelayCurve::new(flat[..4].to_vec()).unwrap();
        assert!(matches!(
            fit_decay(&short, &FitOptions::default()),
            Err(FitError::TooFewPoints { .. })
        ));
    }

    #[test]
    fn normalization_preserves_tau() {
        let curve = synthetic(&truth(3.9), 0.05, 11);
        let fit = fit_decay(&curve, &FitOptions::default()).unwrap();
        let norm = normalize_curve(&curve, &fit).unwrap();
        let refit = fit_decay(
            &norm,
            &FitOptions {
                c: Some(0.0),
                ..FitOptions::default()
            },
        )
        .unwrap();
        assert!((refit.tau / fit.tau - 1.0).abs() < 1e-3);
        assert!((refit.eval(0.0) - 1.0).abs() < 1e-6);
        // Normalizing the normalized curve is the identity.
        let again = normalize_curve(&norm, &refit).unwrap();
        for (a, b) in again.points().iter().zip(norm.points()) {
            assert!((a.g2 - b.g2).abs() < 1e-6);
        }
    }

    #[test]
    fn normalization_collapses_amplitudes() {
        let mut small = truth(4.0);
        small.a = 10.0;
        let big = truth(4.0);
        let opts = FitOptions::default();
        let cs = synthetic(&small, 0.0, 0);
        let cb = synthetic(&big, 0.0, 0);
        let ns = normalize_curve(&cs, &fit_decay(&cs, &opts).unwrap()).unwrap();
        let nb = normalize_curve(&cb, &fit_decay(&cb, &opts).unwrap()).unwrap();
        for (a, b) in ns.points().iter().zip(nb.points()) {
            assert!((a.g2 - b.g2).abs() < 1e-6);
        }
    }

    #[test]
    fn normalization_rejects_low_peak() {
        let curve = synthetic(&truth(4.0), 0.0, 0);
        let mut fit = fit_decay(&curve, &FitOptions::default()).unwrap();
        fit.a = -1.0;
        assert!(matches!(
            normalize_curve(&curve, &fit),
            Err(FitError::PeakBelowBaseline { .. })
        ));
    }

    #[test]
    fn bootstrap_interval_contains_estimate() {
        let curve = synthetic(&truth(3.9), 0.05, 3);
        let fit = fit_decay(&curve, &FitOptions::default()).unwrap();
        let (lo, hi) = bootstrap_tau_ci(&curve, &FitOptions::default(), 60, 1).unwrap();
        assert!(lo < fit.tau && fit.tau < hi, "{lo} {} {hi}", fit.tau);
    }

    #[test]
    fn text_and_csv_output() {
        let curve = synthetic(&truth(3.9), 0.0, 0);
        let fit = fit_decay(&curve, &FitOptions::default()).unwrap();
        assert!(fit.to_text().contains("tau_ps = 3.9"));
        assert_eq!(
            fit.csv_row().split(',').count(),
            FitResult::CSV_HEADER.split(',').count()
        );
    }
}
