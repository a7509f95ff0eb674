//! Two-time Stokes/anti-Stokes correlations by quantum regression, and the
//! sweeps built on them.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::fitting::{DelayCurve, DelayPoint};
use crate::fock::{annihilation, DensityMatrix, FockError, Matrix, Operator};

use super::evolve::{evolve_with, to_flat, EvolveOptions, Propagator};
use super::generator::Generator;
use super::model::{PulseParams, SimConfig, MODE_AS2, MODE_S1};
use super::LindbladError;

/// `g²(t₁, t₂)` with the single-time populations entering its denominator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct G2Point {
    pub t1: f64,
    pub t2: f64,
    pub n_s1: f64,
    pub n_as2: f64,
    pub g2: f64,
}

/// Occupancy of `probe` conditioned on a jump of `herald` at grid step
/// `herald_step`, at each of `probe_steps` (all `>= herald_step`), together
/// with the unconditional occupancies of both modes.
struct Conditional {
    herald_occupancy: f64,
    probe_unconditional: Vec<f64>,
    probe_conditional: Vec<f64>,
}

fn sandwich(a: &Matrix, rho: &[Complex64]) -> Vec<Complex64> {
    let d = a.nrows();
    let r = Array2::from_shape_vec((d, d), rho.to_vec()).expect("square buffer");
    let s = a.dot(&r).dot(&a.t().mapv(|z| z.conj()));
    to_flat(&s)
}

fn conditional(
    generator: &Generator,
    rho0: &DensityMatrix,
    options: &EvolveOptions,
    herald: &str,
    herald_step: usize,
    probe: &str,
    probe_steps: &[usize],
) -> Result<Conditional, LindbladError> {
    let layout = generator.layout();
    let herald_idx = layout.index_of(herald)?;
    let probe_idx = layout.index_of(probe)?;
    let last = probe_steps
        .iter()
        .copied()
        .max()
        .unwrap_or(herald_step)
        .max(herald_step);
    if last > options.n_steps {
        return Err(LindbladError::OutOfSpan {
            time: options.t_start + last as f64 * options.step,
            start: options.t_start,
            end: options.t_start + options.n_steps as f64 * options.step,
        });
    }
    if probe_steps.iter().any(|&k| k < herald_step) {
        return Err(LindbladError::InvalidConfig(
            "probe times must not precede the herald time".into(),
        ));
    }
    let mut rho = to_flat(rho0.matrix());
    let mut prop = Propagator::new(generator);
    let mut at_herald = None;
    let mut herald_occupancy = 0.0;
    let mut probe_unconditional = vec![0.0; probe_steps.len()];
    prop.run(
        &mut rho,
        options.t_start,
        options.step,
        last,
        options.trace_tol,
        options.truncation_limit,
        |s, _, r, occ| {
            if s == herald_step {
                at_herald = Some(r.to_vec());
                herald_occupancy = occ[herald_idx];
            }
            for (slot, &k) in probe_unconditional.iter_mut().zip(probe_steps) {
                if k == s {
                    *slot = occ[probe_idx];
                }
            }
            Ok(())
        },
    )?;
    let state = at_herald.expect("herald step within run");
    let a = annihilation(layout, herald)?;
    let mut cond = sandwich(a.matrix(), &state);
    let norm: f64 = (0..layout.dim())
        .map(|i| cond[i * layout.dim() + i].re)
        .sum();
    if !(norm > 0.0) {
        return Err(LindbladError::ZeroDenominator("herald occupancy"));
    }
    for z in &mut cond {
        *z /= norm;
    }
    let mut probe_conditional = vec![0.0; probe_steps.len()];
    let t_herald = options.t_start + herald_step as f64 * options.step;
    prop.run(
        &mut cond,
        t_herald,
        options.step,
        last - herald_step,
        options.trace_tol,
        // The heralded state has one excitation fewer in the herald mode but
        // may be more excited elsewhere; keep the same guard.
        options.truncation_limit,
        |s, _, _, occ| {
            for (slot, &k) in probe_conditional.iter_mut().zip(probe_steps) {
                if k == herald_step + s {
                    *slot = occ[probe_idx];
                }
            }
            Ok(())
        },
    )?;
    Ok(Conditional {
        herald_occupancy,
        probe_unconditional,
        probe_conditional,
    })
}

fn ratio(num: f64, den: f64, what: &'static str) -> Result<f64, LindbladError> {
    if !(den > 0.0) {
        return Err(LindbladError::ZeroDenominator(what));
    }
    Ok(num / den)
}

/// Normalized number correlation
/// `⟨a†_h(t_h) n_p(t_p) a_h(t_h)⟩ / (⟨n_h(t_h)⟩⟨n_p(t_p)⟩)` for `t_p ≥ t_h`,
/// evaluated by propagating `a_h ρ(t_h) a_h†` under the same generator.
pub fn heralded_g2(
    generator: &Generator,
    rho0: &DensityMatrix,
    options: &EvolveOptions,
    herald: &str,
    t_herald: f64,
    probe: &str,
    t_probe: f64,
) -> Result<f64, LindbladError> {
    let kh = grid_step(options, t_herald)?;
    let kp = grid_step(options, t_probe)?;
    let c = conditional(generator, rho0, options, herald, kh, probe, &[kp])?;
    if !(c.herald_occupancy > 0.0) {
        return Err(LindbladError::ZeroDenominator("herald occupancy"));
    }
    ratio(
        c.probe_conditional[0],
        c.probe_unconditional[0],
        "probe occupancy",
    )
}

fn grid_step(options: &EvolveOptions, t: f64) -> Result<usize, LindbladError> {
    let k = ((t - options.t_start) / options.step).round();
    if !(k >= 0.0 && k <= options.n_steps as f64) {
        return Err(LindbladError::OutOfSpan {
            time: t,
            start: options.t_start,
            end: options.t_start + options.n_steps as f64 * options.step,
        });
    }
    Ok(k as usize)
}

/// General quantum-regression trace `Tr(B U(t₁→t₂)[C ρ(t₁) A])` for every
/// `t₂` in `probe_times` (each `>= t₁`), with `ρ(t₁)` given. Uses the dense
/// right-hand side, so `C ρ A` need not be Hermitian.
pub fn regression_trace(
    generator: &Generator,
    rho_t1: &DensityMatrix,
    t1: f64,
    step: f64,
    c: &Operator,
    a: &Operator,
    b: &Operator,
    probe_times: &[f64],
) -> Result<Vec<Complex64>, LindbladError> {
    if !(step > 0.0) {
        return Err(LindbladError::InvalidConfig("step must be positive".into()));
    }
    for op in [c, a, b] {
        if op.layout() != generator.layout() {
            return Err(FockError::LayoutMismatch.into());
        }
    }
    let mut x = c.matrix().dot(rho_t1.matrix()).dot(a.matrix());
    let mut targets: Vec<(usize, usize)> = Vec::with_capacity(probe_times.len());
    for (i, &t) in probe_times.iter().enumerate() {
        let k = ((t - t1) / step).round();
        if k < 0.0 {
            return Err(LindbladError::InvalidConfig(
                "probe times must not precede t1".into(),
            ));
        }
        targets.push((k as usize, i));
    }
    targets.sort_unstable();
    let mut out = vec![Complex64::new(0.0, 0.0); probe_times.len()];
    let trace_b = |x: &Matrix| crate::fock::trace_product(b.matrix(), x);
    let mut k_now = 0usize;
    for (k, i) in targets {
        while k_now < k {
            let t = t1 + k_now as f64 * step;
            let k1 = generator.rhs_dense(&x, t);
            let k2 = generator.rhs_dense(&(&x + &k1.mapv(|z| z * (0.5 * step))), t + 0.5 * step);
            let k3 = generator.rhs_dense(&(&x + &k2.mapv(|z| z * (0.5 * step))), t + 0.5 * step);
            let k4 = generator.rhs_dense(&(&x + &k3.mapv(|z| z * step)), t + step);
            x = &x + &(&k1 + &(&k2 + &k3).mapv(|z| z * 2.0) + &k4).mapv(|z| z * (step / 6.0));
            k_now += 1;
        }
        out[i] = trace_b(&x);
    }
    Ok(out)
}

/// `g²(t₁, t₂)` between the S1 photon at `t1` and the aS2 photon at `t2`
/// (times snapped to the integration grid). For `t2 < t1` the correlator is
/// evaluated in the time-ordered form heralding on aS2 instead.
pub fn two_time_g2(config: &SimConfig, t1: f64, t2: f64) -> Result<G2Point, LindbladError> {
    let g = config.generator()?;
    let rho0 = config.initial_state()?;
    let options = EvolveOptions::from_config(config, false);
    let k1 = grid_step(&options, t1)?;
    let k2 = grid_step(&options, t2)?;
    let (n_s1, n_as2, g2) = if k2 >= k1 {
        let c = conditional(&g, &rho0, &options, MODE_S1, k1, MODE_AS2, &[k2])?;
        let g2 = ratio(
            c.probe_conditional[0],
            c.probe_unconditional[0],
            "anti-Stokes occupancy",
        )?;
        (c.herald_occupancy, c.probe_unconditional[0], g2)
    } else {
        let c = conditional(&g, &rho0, &options, MODE_AS2, k2, MODE_S1, &[k1])?;
        let g2 = ratio(
            c.probe_conditional[0],
            c.probe_unconditional[0],
            "Stokes occupancy",
        )?;
        (c.probe_unconditional[0], c.herald_occupancy, g2)
    };
    if !(n_s1 > 0.0) {
        return Err(LindbladError::ZeroDenominator("Stokes occupancy"));
    }
    Ok(G2Point {
        t1: config.time_at(k1),
        t2: config.time_at(k2),
        n_s1,
        n_as2,
        g2,
    })
}

/// Half-width, in pulse widths, of the window searched for each peak.
pub const PEAK_WINDOW_WIDTHS: f64 = 2.0;

/// Grid times of peak `⟨n_S1⟩` during the write pulse and peak `⟨n_aS2⟩`
/// during the read pulse.
///
/// Each search is limited to `center ± PEAK_WINDOW_WIDTHS·width` of its own
/// pulse so that noise emitted during the other pulse cannot win; if that
/// window holds no grid point the whole trajectory is searched.
pub fn peak_times(config: &SimConfig) -> Result<(f64, f64), LindbladError> {
    let g = config.generator()?;
    let rho0 = config.initial_state()?;
    let mut options = EvolveOptions::from_config(config, false);
    options.stride = 1;
    let traj = evolve_with(&g, &rho0, &options)?;
    let argmax = |mode: &str, pulse: &PulseParams| -> f64 {
        let occ = traj.occupancy(mode).expect("model mode");
        let half = PEAK_WINDOW_WIDTHS * pulse.width_ps;
        let inside = |t: f64| (t - pulse.center_ps).abs() <= half;
        let any_inside = traj.times.iter().any(|&t| inside(t));
        let (k, _) = occ
            .iter()
            .zip(&traj.times)
            .enumerate()
            .filter(|(_, (_, &t))| !any_inside || inside(t))
            .fold(
                (0, f64::NEG_INFINITY),
                |acc, (k, (&v, _))| if v > acc.1 { (k, v) } else { acc },
            );
        traj.times[k]
    };
    Ok((
        argmax(MODE_S1, &config.write),
        argmax(MODE_AS2, &config.read),
    ))
}

/// `g²` at the peak-population times of the two detected modes.
pub fn peak_g2(config: &SimConfig) -> Result<G2Point, LindbladError> {
    let (t1, t2) = peak_times(config)?;
    two_time_g2(config, t1, t2)
}

/// Window-integrated correlation
/// `∬ G(t₁,t₂) / (∫n_S1 ∫n_aS2)` with `samples` grid points per window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowG2 {
    pub g2: f64,
    pub n_s1_sum: f64,
    pub n_as2_sum: f64,
}

pub fn windowed_g2(
    config: &SimConfig,
    window_s1: (f64, f64),
    window_as2: (f64, f64),
    samples: usize,
) -> Result<WindowG2, LindbladError> {
    if samples == 0 || !(window_s1.1 >= window_s1.0) || !(window_as2.1 >= window_as2.0) {
        return Err(LindbladError::InvalidConfig(
            "windows must be ordered and sampled at least once".into(),
        ));
    }
    let g = config.generator()?;
    let rho0 = config.initial_state()?;
    let options = EvolveOptions::from_config(config, false);
    let grid = |w: (f64, f64)| -> Result<Vec<usize>, LindbladError> {
        let mut ks: Vec<usize> = (0..samples)
            .map(|i| {
                let t = if samples == 1 {
                    0.5 * (w.0 + w.1)
                } else {
                    w.0 + (w.1 - w.0) * i as f64 / (samples - 1) as f64
                };
                grid_step(&options, t)
            })
            .collect::<Result<_, _>>()?;
        ks.dedup();
        Ok(ks)
    };
    let k1s = grid(window_s1)?;
    let k2s = grid(window_as2)?;

    let mut n1 = vec![0.0; k1s.len()];
    let mut n2 = vec![0.0; k2s.len()];
    let mut numerator = 0.0;
    for (i, &k1) in k1s.iter().enumerate() {
        let probes: Vec<usize> = k2s.iter().copied().filter(|&k2| k2 >= k1).collect();
        let c = conditional(&g, &rho0, &options, MODE_S1, k1, MODE_AS2, &probes)?;
        n1[i] = c.herald_occupancy;
        numerator += c.herald_occupancy * c.probe_conditional.iter().sum::<f64>();
    }
    for (j, &k2) in k2s.iter().enumerate() {
        let probes: Vec<usize> = k1s.iter().copied().filter(|&k1| k1 > k2).collect();
        let c = conditional(&g, &rho0, &options, MODE_AS2, k2, MODE_S1, &probes)?;
        n2[j] = c.herald_occupancy;
        numerator += c.herald_occupancy * c.probe_conditional.iter().sum::<f64>();
    }
    let s1: f64 = n1.iter().sum();
    let s2: f64 = n2.iter().sum();
    Ok(WindowG2 {
        g2: ratio(numerator, s1 * s2, "window-integrated occupancies")?,
        n_s1_sum: s1,
        n_as2_sum: s2,
    })
}

/// One row of an amplitude sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub write_amplitude: f64,
    pub read_amplitude: f64,
    pub point: G2Point,
}

/// Peak-time `g²` over the write × read amplitude grid, rows grouped by
/// read amplitude. Grid points run in parallel.
pub fn g2_power_sweep(
    config: &SimConfig,
    write_amplitudes: &[f64],
    read_amplitudes: &[f64],
) -> Result<Vec<SweepPoint>, LindbladError> {
    if write_amplitudes.is_empty() || read_amplitudes.is_empty() {
        return Err(LindbladError::EmptyGrid("amplitude"));
    }
    config.validate()?;
    let grid: Vec<(f64, f64)> = read_amplitudes
        .iter()
        .flat_map(|&a2| write_amplitudes.iter().map(move |&a1| (a1, a2)))
        .collect();
    grid.par_iter()
        .enumerate()
        .map(|(index, &(a1, a2))| {
            let mut cfg = config.clone();
            cfg.write.amplitude = a1;
            cfg.read.amplitude = a2;
            peak_g2(&cfg)
                .map(|point| SweepPoint {
                    write_amplitude: a1,
                    read_amplitude: a2,
                    point,
                })
                .map_err(|e| LindbladError::GridPoint {
                    index,
                    label: format!("write amplitude {a1}, read amplitude {a2}"),
                    source: Box::new(e),
                })
        })
        .collect()
}

pub const SWEEP_CSV_HEADER: &str = "A1,A2,n_S1,g2";

pub fn write_sweep_csv<W: std::io::Write>(rows: &[SweepPoint], out: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SWEEP_CSV_HEADER.split(','))?;
    for r in rows {
        w.write_record([
            format!("{:e}", r.write_amplitude),
            format!("{:e}", r.read_amplitude),
            format!("{:e}", r.point.n_s1),
            format!("{:e}", r.point.g2),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Peak-time `g²` with the read pulse delayed by each `Δt` relative to the
/// write pulse. Delays must be strictly increasing; negative delays put the
/// read pulse first. The span is widened to cover both pulses. The curve
/// carries zero uncertainties (deterministic model).
pub fn delay_sweep_g2(config: &SimConfig, delays_ps: &[f64]) -> Result<DelayCurve, LindbladError> {
    if delays_ps.is_empty() {
        return Err(LindbladError::EmptyGrid("delay"));
    }
    config.validate()?;
    let points: Vec<DelayPoint> = delays_ps
        .par_iter()
        .enumerate()
        .map(|(index, &dt)| {
            let mut cfg = config.clone();
            cfg.read.center_ps = cfg.write.center_ps + dt;
            let cfg = cfg.covering_pulses();
            peak_g2(&cfg)
                .map(|p| DelayPoint {
                    delay_ps: dt,
                    g2: p.g2,
                    sigma_g2: 0.0,
                })
                .map_err(|e| LindbladError::GridPoint {
                    index,
                    label: format!("delay {dt} ps"),
                    source: Box::new(e),
                })
        })
        .collect::<Result<_, _>>()?;
    DelayCurve::new(points).map_err(|e| LindbladError::InvalidConfig(e.to_string()))
}

/// Result of matching the four-wave-mixing share of read-only anti-Stokes
/// emission.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseCalibration {
    pub n_th0: f64,
    pub fwm_fraction: f64,
    /// `γ_aS2 ∫⟨n_aS2⟩dt` with the write pulse off.
    pub antistokes_emission: f64,
    pub iterations: usize,
}

/// Emitted anti-Stokes photon number `γ ∫ ⟨n_aS2⟩ dt` (trapezoid rule).
pub fn antistokes_emission(config: &SimConfig) -> Result<f64, LindbladError> {
    let g = config.generator()?;
    let rho0 = config.initial_state()?;
    let mut options = EvolveOptions::from_config(config, false);
    options.stride = 1;
    let traj = evolve_with(&g, &rho0, &options)?;
    let n = traj.occupancy(MODE_AS2).expect("model mode");
    let integral: f64 = traj
        .times
        .windows(2)
        .zip(n.windows(2))
        .map(|(t, v)| 0.5 * (t[1] - t[0]) * (v[0] + v[1]))
        .sum();
    Ok(SimConfig::photon_rate(config.tau_as2_ps) * integral)
}

/// Chooses `n_th0` so that, with the write pulse off, four-wave mixing
/// (the `c₂` term) supplies `target_fraction` of the emitted anti-Stokes
/// photons. The dark-count term `c₁` is left out of the emission balance.
pub fn calibrate_noise_scale(
    config: &SimConfig,
    target_fraction: f64,
) -> Result<NoiseCalibration, LindbladError> {
    if !(target_fraction > 0.0 && target_fraction < 1.0) {
        return Err(LindbladError::InvalidConfig(format!(
            "target fraction must lie in (0, 1), got {target_fraction}"
        )));
    }
    if !(config.noise.c2 > 0.0 && config.read.amplitude > 0.0) {
        return Err(LindbladError::InvalidConfig(
            "calibration needs c2 > 0 and a read pulse".into(),
        ));
    }
    let mut base = config.clone();
    base.write.amplitude = 0.0;
    // With the write pulse off S1 is decoupled; its noise only loads the
    // truncation guard.
    base.noise.scale_s1 = 0.0;
    // Dark counts are not emitted photons and would otherwise enter the
    // total in proportion to the simulated span.
    base.noise.c1 = 0.0;
    let fraction = |n0: f64| -> Result<(f64, f64), LindbladError> {
        let mut with = base.clone();
        with.noise.n_th0 = Some(n0);
        let mut without = with.clone();
        without.noise.c2 = 0.0;
        let e = antistokes_emission(&with)?;
        let e0 = antistokes_emission(&without)?;
        Ok(((e - e0) / e, e))
    };
    // The fraction is close to k·n/(R + k·n); start from that estimate and
    // refine by secant steps in log n.
    let probe = 1e-3;
    let (f_probe, _) = fraction(probe)?;
    let odds = |f: f64| f / (1.0 - f);
    let mut x0 = probe.ln();
    let mut y0 = odds(f_probe).ln() - odds(target_fraction).ln();
    let mut x1 = (probe * odds(target_fraction) / odds(f_probe)).ln();
    let mut last = fraction(x1.exp())?;
    let mut iterations = 2;
    while (last.0 - target_fraction).abs() > 1e-6 * target_fraction {
        if iterations >= 30 {
            return Err(LindbladError::NoConvergence("noise calibration"));
        }
        let y1 = odds(last.0).ln() - odds(target_fraction).ln();
        if y1 == y0 {
            break;
        }
        let x2 = x1 - y1 * (x1 - x0) / (y1 - y0);
        x0 = x1;
        y0 = y1;
        x1 = x2;
        last = fraction(x1.exp())?;
        iterations += 1;
    }
    Ok(NoiseCalibration {
        n_th0: x1.exp(),
        fwm_fraction: last.0,
        antistokes_emission: last.1,
        iterations,
    })
}
