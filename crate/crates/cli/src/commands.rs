//! The command pipelines. Each stages its outputs and returns the checks it
//! evaluated (empty for plain runs).

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use phonocorr::analytic::{mode_count_table, power_sweep, write_sweep_csv as write_analytic_sweep};
use phonocorr::checks::{ceiling_checks, decay_check, downturn_check, power_sweep_checks, Check};
use phonocorr::counting::{
    extract_g2, simulate_clicks, simulate_histogram, subtract_crosstalk, write_events_csv,
    ClickModel, CoincidenceHistogram,
};
use phonocorr::fitting::{
    bootstrap_tau_ci, fit_decay, normalize_curve, DelayCurve, FitOptions, FitResult,
};
use phonocorr::lindblad::{
    delay_sweep_g2, evolve_lean, g2_power_sweep, write_sweep_csv as write_lindblad_sweep,
    NoiseParams, SimConfig, SweepPoint,
};

use crate::config::RunConfig;
use crate::error::{input, io, numerical, CliError};
use crate::output::{csv_err, Staging};

/// Delay curve fitted when no curve files are given.
pub const BUNDLED_CURVE: &str = include_str!("../configs/synthetic_curve.csv");

/// Tolerance of the mode-count column against `1 + 1/N`.
pub const MODE_LAW_TOLERANCE: f64 = 1e-2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Target {
    Fig3c,
    Fig5,
    Decay,
}

impl Target {
    pub fn name(self) -> &'static str {
        match self {
            Target::Fig3c => "fig3c",
            Target::Fig5 => "fig5",
            Target::Decay => "decay",
        }
    }
}

fn stage_report(staging: &mut Staging, name: &str, checks: &[Check]) -> Result<(), CliError> {
    staging.write(name, |buf| {
        phonocorr::checks::write_report_csv(checks, buf).map_err(csv_err)
    })
}

pub fn analytic(cfg: &RunConfig, staging: &mut Staging) -> Result<Vec<Check>, CliError> {
    let a = &cfg.analytic;
    let rows = power_sweep(&a.sweep).map_err(numerical)?;
    staging.write("sweep.csv", |buf| {
        write_analytic_sweep(&rows, buf).map_err(csv_err)
    })?;
    staging.write("conditional.csv", |buf| {
        writeln!(buf, "read_setting,p_bar,eta_b,q_b,g_ab,g_bb_cond").map_err(io)?;
        for r in &rows {
            writeln!(
                buf,
                "{},{:e},{:e},{:e},{:e},{:e}",
                r.read_setting, r.p_bar, r.eta_b, r.q_b, r.g_ab, r.g_cond
            )
            .map_err(io)?;
        }
        Ok(())
    })?;
    let table = mode_count_table(a.mode_count_p_bar, 1..=a.max_modes, a.mode_count_eta, 0.0)
        .map_err(numerical)?;
    staging.write("mode_count.csv", |buf| {
        writeln!(buf, "modes,g_aa,one_plus_inverse_modes").map_err(io)?;
        for (n, g) in &table {
            writeln!(buf, "{n},{g},{}", 1.0 + 1.0 / f64::from(*n)).map_err(io)?;
        }
        Ok(())
    })?;
    eprintln!(
        "analytic: {} sweep rows over {} read settings, mode counts 1..={}",
        rows.len(),
        a.sweep.read_settings.len(),
        a.max_modes
    );
    Ok(Vec::new())
}

pub fn simulate(cfg: &RunConfig, staging: &mut Staging) -> Result<Vec<Check>, CliError> {
    let s = &cfg.simulate;
    if s.trajectory {
        let rho0 = s.model.initial_state().map_err(numerical)?;
        let traj = evolve_lean(&rho0, &s.model).map_err(numerical)?;
        staging.write("trajectory.csv", |buf| traj.write_csv(buf).map_err(csv_err))?;
        eprintln!(
            "simulate: trajectory of {} points, max trace drift {:.1e}",
            traj.times.len(),
            traj.max_trace_drift
        );
    }
    if !s.write_amplitudes.is_empty() && !s.read_amplitudes.is_empty() {
        let rows =
            g2_power_sweep(&s.model, &s.write_amplitudes, &s.read_amplitudes).map_err(numerical)?;
        staging.write("sweep.csv", |buf| {
            write_lindblad_sweep(&rows, buf).map_err(csv_err)
        })?;
        let max = rows
            .iter()
            .map(|r| r.point.g2)
            .fold(f64::NEG_INFINITY, f64::max);
        eprintln!(
            "simulate: {} grid points, max g2 {max:.1} (1/n_th = {:.1})",
            rows.len(),
            1.0 / s.model.phonon_occupancy()
        );
    }
    if !s.delays_ps.is_empty() {
        let curve = delay_sweep_g2(&s.model, &s.delays_ps).map_err(numerical)?;
        staging.write("delay_curve.csv", |buf| {
            curve.write_csv(buf).map_err(csv_err)
        })?;
        eprintln!("simulate: delay curve with {} points", curve.len());
    }
    Ok(Vec::new())
}

fn histogram(cfg: &RunConfig, model: &ClickModel) -> Result<CoincidenceHistogram, CliError> {
    simulate_histogram(model, cfg.counts.bin_width_ns, cfg.counts.span_periods).map_err(numerical)
}

pub fn counts(cfg: &RunConfig, staging: &mut Staging) -> Result<Vec<Check>, CliError> {
    let c = &cfg.counts;
    let model = cfg.click_model(cfg.seed)?;
    let raw = histogram(cfg, &model)?;
    let hist = match &c.crosstalk {
        Some(x) => {
            // Write pulse only: Stokes clicks as before, anti-Stokes clicks
            // from leakage alone and uncorrelated with them.
            let mut leak = ClickModel::new(
                model.p_s,
                x.p_as_leak,
                model.p_s * x.p_as_leak,
                x.n_reps,
                cfg.seed.wrapping_add(1),
            )
            .map_err(input)?;
            leak.rep_period_ns = model.rep_period_ns;
            leak.dark_s = model.dark_s;
            leak.dark_as = model.dark_as;
            let leak_hist = histogram(cfg, &leak)?;
            staging.write("histogram_raw.csv", |buf| raw.write_csv(buf).map_err(io))?;
            staging.write("crosstalk.csv", |buf| leak_hist.write_csv(buf).map_err(io))?;
            subtract_crosstalk(&raw, &leak_hist).map_err(numerical)?
        }
        None => raw,
    };
    staging.write("histogram.csv", |buf| hist.write_csv(buf).map_err(io))?;
    if c.write_events {
        let stream = simulate_clicks(&model).map_err(numerical)?;
        staging.write("events.csv", |buf| {
            write_events_csv(stream, model.rep_period_ns, buf).map_err(io)
        })?;
    }
    let e = extract_g2(&hist, &c.analysis).map_err(numerical)?;
    staging.write("g2.csv", |buf| {
        writeln!(
            buf,
            "g2,delta_g2,expected_g2,central_area,central_raw,side_mean,side_error,negative_side_mean,background_per_bin,n_reps,seed"
        )
        .map_err(io)?;
        writeln!(
            buf,
            "{},{},{},{},{},{},{},{},{},{},{}",
            e.g2,
            e.delta_g2,
            model.expected_g2(),
            e.central_area,
            e.central_raw,
            e.side_mean,
            e.side_error,
            e.negative_side_mean(),
            e.background_per_bin,
            model.n_reps,
            model.seed
        )
        .map_err(io)
    })?;
    eprintln!(
        "counts: g2 = {:.3} ± {:.3} (model {:.3}) over {} repetitions",
        e.g2,
        e.delta_g2,
        model.expected_g2(),
        model.n_reps
    );
    Ok(Vec::new())
}

/// File-name stem of a curve path, restricted to safe characters.
fn stem(path: &Path) -> String {
    let s: String = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if s.is_empty() {
        "curve".into()
    } else {
        s
    }
}

fn stage_fit(
    staging: &mut Staging,
    name: &str,
    curve: &DelayCurve,
    fit: &FitResult,
    bootstrap: Option<(f64, f64)>,
    normalize: bool,
) -> Result<(), CliError> {
    staging.write(&format!("fit_{name}.csv"), |buf| {
        writeln!(buf, "{}", FitResult::CSV_HEADER).map_err(io)?;
        writeln!(buf, "{}", fit.csv_row()).map_err(io)
    })?;
    staging.write(&format!("fit_{name}.txt"), |buf| {
        let mut text = fit.to_text();
        if let Some((lo, hi)) = bootstrap {
            let _ = write!(
                text,
                "tau_bootstrap_low_ps = {lo}\ntau_bootstrap_high_ps = {hi}\n"
            );
        }
        buf.extend_from_slice(text.as_bytes());
        Ok(())
    })?;
    staging.write(&format!("residuals_{name}.csv"), |buf| {
        writeln!(buf, "delay_ps,g2,model,residual").map_err(io)?;
        for p in curve.points() {
            let m = fit.eval(p.delay_ps);
            writeln!(buf, "{},{:e},{:e},{:e}", p.delay_ps, p.g2, m, p.g2 - m).map_err(io)?;
        }
        Ok(())
    })?;
    if normalize {
        let n = normalize_curve(curve, fit).map_err(numerical)?;
        staging.write(&format!("normalized_{name}.csv"), |buf| {
            n.write_csv(buf).map_err(csv_err)
        })?;
    }
    Ok(())
}

fn fit_one(curve: &DelayCurve, options: &FitOptions, label: &str) -> Result<FitResult, CliError> {
    fit_decay(curve, options).map_err(|e| {
        numerical(format!(
            "fit of {label} failed: {e} ({} points, initial tau {} ps, max_iter {})",
            curve.len(),
            options.initial_tau_ps,
            options.max_iter
        ))
    })
}

pub fn fit(cfg: &RunConfig, staging: &mut Staging) -> Result<Vec<Check>, CliError> {
    let f = &cfg.fit;
    let mut curves: Vec<(String, DelayCurve)> = Vec::new();
    if f.curves.is_empty() {
        let c = DelayCurve::read_csv(BUNDLED_CURVE.as_bytes()).map_err(input)?;
        curves.push(("synthetic".into(), c));
    }
    for path in &f.curves {
        let file =
            std::fs::File::open(path).map_err(|e| input(format!("{}: {e}", path.display())))?;
        let c =
            DelayCurve::read_csv(file).map_err(|e| input(format!("{}: {e}", path.display())))?;
        let mut name = stem(path);
        if curves.iter().any(|(n, _)| *n == name) {
            name = format!("{name}_{}", curves.len());
        }
        curves.push((name, c));
    }
    let mut summary = String::from("curve,");
    summary.push_str(FitResult::CSV_HEADER);
    summary.push('\n');
    for (name, curve) in &curves {
        let result = fit_one(curve, &f.options, name)?;
        let bootstrap = if f.bootstrap_resamples > 0 {
            Some(
                bootstrap_tau_ci(curve, &f.options, f.bootstrap_resamples, cfg.seed)
                    .map_err(numerical)?,
            )
        } else {
            None
        };
        stage_fit(staging, name, curve, &result, bootstrap, f.normalize)?;
        let _ = writeln!(summary, "{name},{}", result.csv_row());
        eprintln!(
            "fit {name}: tau = {:.3} ps, 95 % interval [{:.3}, {:.3}] ps",
            result.tau, result.tau_ci.0, result.tau_ci.1
        );
    }
    staging.write("fits.csv", |buf| {
        buf.extend_from_slice(summary.as_bytes());
        Ok(())
    })?;
    Ok(Vec::new())
}

fn quiet(model: &SimConfig) -> SimConfig {
    let mut c = model.clone();
    c.noise = NoiseParams {
        c1: 0.0,
        c2: 0.0,
        ..c.noise
    };
    c
}

fn lindblad_grid(model: &SimConfig, cfg: &RunConfig) -> Result<Vec<SweepPoint>, CliError> {
    let r = &cfg.reproduce;
    g2_power_sweep(model, &r.fig5_write_amplitudes, &r.fig5_read_amplitudes).map_err(numerical)
}

pub fn reproduce(
    target: Target,
    cfg: &RunConfig,
    staging: &mut Staging,
) -> Result<Vec<Check>, CliError> {
    let model = &cfg.simulate.model;
    let checks = match target {
        Target::Fig3c => {
            let rows = power_sweep(&cfg.analytic.sweep).map_err(numerical)?;
            staging.write("fig3c_sweep.csv", |buf| {
                write_analytic_sweep(&rows, buf).map_err(csv_err)
            })?;
            let a = &cfg.analytic;
            let table =
                mode_count_table(a.mode_count_p_bar, 1..=a.max_modes, a.mode_count_eta, 0.0)
                    .map_err(numerical)?;
            let worst = table
                .iter()
                .map(|(n, g)| (g - (1.0 + 1.0 / f64::from(*n))).abs())
                .fold(0.0, f64::max);
            let mut checks = power_sweep_checks(&rows);
            checks.push(Check::new(
                "mode-count law",
                worst < MODE_LAW_TOLERANCE,
                format!(
                    "max |g_aa - (1 + 1/N)| = {worst:.2e} at p̄ = {}",
                    a.mode_count_p_bar
                ),
            ));
            checks
        }
        Target::Fig5 => {
            let clean = quiet(model);
            let noise_free = lindblad_grid(&clean, cfg)?;
            staging.write("fig5_noise_free.csv", |buf| {
                write_lindblad_sweep(&noise_free, buf).map_err(csv_err)
            })?;
            let noisy = lindblad_grid(model, cfg)?;
            staging.write("fig5_with_noise.csv", |buf| {
                write_lindblad_sweep(&noisy, buf).map_err(csv_err)
            })?;
            let mut checks = ceiling_checks(&noise_free, clean.phonon_occupancy());
            checks.push(downturn_check(&noisy));
            checks
        }
        Target::Decay => {
            let curve = delay_sweep_g2(model, &cfg.reproduce.decay_delays_ps).map_err(numerical)?;
            staging.write("decay_curve.csv", |buf| {
                curve.write_csv(buf).map_err(csv_err)
            })?;
            let result = fit_one(&curve, &cfg.fit.options, "decay curve")?;
            stage_fit(staging, "decay", &curve, &result, None, true)?;
            vec![decay_check(&result, model.tau_m_ps)]
        }
    };
    for c in &checks {
        eprintln!("{c}");
    }
    stage_report(staging, "report.csv", &checks)?;
    Ok(checks)
}

/// Manifest: the resolved config preceded by comment lines naming the
/// command and its outputs, so `--config manifest.toml` replays the run.
pub fn manifest(command: &str, cfg: &RunConfig, outputs: &[String]) -> String {
    let mut text = format!(
        "# phonocorr {}\n# command: {command}\n# outputs: {}\n",
        env!("CARGO_PKG_VERSION"),
        outputs.join(", ")
    );
    text.push_str(&cfg.to_toml());
    text
}
