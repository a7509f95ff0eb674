mod common;

use common::{convolved_decay, synthetic_curve, SYNTHETIC_DELAYS};
use phonocorr::fitting::*;

fn truth() -> ExpGaussParams {
    ExpGaussParams {
        c: 1.0,
        a: 40.0,
        sigma: 0.22,
        t0: 0.3,
        tau: 3.9,
    }
}

fn free() -> FitOptions {
    FitOptions {
        sigma_ps: None,
        c: None,
        ..FitOptions::default()
    }
}

#[test]
fn closed_form_matches_numerical_convolution() {
    let p = truth();
    for t in [-1.5, -0.5, 0.0, 0.1, 0.3, 0.7, 2.0, 5.0, 12.0, 30.0] {
        let closed = p.eval(t) - p.c;
        let numeric = convolved_decay(t, &p) - p.c;
        assert!(
            ((closed - numeric) / numeric).abs() < 1e-8,
            "t={t}: {closed} vs {numeric}"
        );
    }
}

#[test]
fn noiseless_curve_recovers_all_parameters() {
    let p = truth();
    let curve = synthetic_curve(&p, &SYNTHETIC_DELAYS, 0.0, 0);
    let fit = fit_decay(&curve, &free()).unwrap();
    for (got, want) in fit.params().to_array().iter().zip(p.to_array()) {
        assert!(((got - want) / want).abs() < 1e-6, "{got} vs {want}");
    }
    let fixed = fit_decay(&curve, &FitOptions::default()).unwrap();
    assert!((fixed.tau - p.tau).abs() / p.tau < 1e-6);
    assert_eq!(fixed.fixed_params.len(), 2);
}

#[test]
fn noisy_fits_cover_the_truth() {
    let p = truth();
    let trials = 60;
    let mut covered = 0;
    let mut sum = 0.0;
    for seed in 0..trials {
        let fit = fit_decay(
            &synthetic_curve(&p, &SYNTHETIC_DELAYS, 0.05, seed),
            &FitOptions::default(),
        )
        .unwrap();
        sum += fit.tau;
        if fit.tau_ci.0 <= p.tau && p.tau <= fit.tau_ci.1 {
            covered += 1;
        }
    }
    assert!((sum / trials as f64 / p.tau - 1.0).abs() < 0.03);
    assert!(covered as f64 >= 0.85 * trials as f64, "{covered}/{trials}");
}

#[test]
fn bootstrap_interval_brackets_the_fit() {
    let curve = synthetic_curve(&truth(), &SYNTHETIC_DELAYS, 0.05, 11);
    let fit = fit_decay(&curve, &FitOptions::default()).unwrap();
    let (lo, hi) = bootstrap_tau_ci(&curve, &FitOptions::default(), 200, 3).unwrap();
    assert!(lo < fit.tau && fit.tau < hi, "{lo} {} {hi}", fit.tau);
    assert_eq!(
        (lo, hi),
        bootstrap_tau_ci(&curve, &FitOptions::default(), 200, 3).unwrap()
    );
}

#[test]
fn normalized_curves_of_different_height_overlap() {
    let low = ExpGaussParams { a: 10.0, ..truth() };
    let high = ExpGaussParams { a: 60.0, ..truth() };
    let norm = |p: &ExpGaussParams| {
        let curve = synthetic_curve(p, &SYNTHETIC_DELAYS, 0.0, 0);
        let fit = fit_decay(&curve, &FitOptions::default()).unwrap();
        normalize_curve(&curve, &fit).unwrap()
    };
    let (a, b) = (norm(&low), norm(&high));
    for (x, y) in a.points().iter().zip(b.points()) {
        assert!((x.g2 - y.g2).abs() < 1e-6);
    }
}

#[test]
fn curve_csv_round_trip() {
    let curve = synthetic_curve(&truth(), &SYNTHETIC_DELAYS, 0.05, 4);
    let mut buf = Vec::new();
    curve.write_csv(&mut buf).unwrap();
    let back = DelayCurve::read_csv(buf.as_slice()).unwrap();
    assert_eq!(back, curve);
    assert!(DelayCurve::read_csv("delay_ps,g2\n1,2\nx,3\n".as_bytes()).is_err());
}

#[test]
fn too_few_points_is_an_error() {
    let curve = synthetic_curve(&truth(), &[0.0, 1.0], 0.0, 0);
    assert!(fit_decay(&curve, &free()).is_err());
}
