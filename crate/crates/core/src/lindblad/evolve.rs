//! Fixed-step fourth-order Runge-Kutta propagation.

use ndarray::Array2;
use num_complex::Complex64;

use crate::fock::{DensityMatrix, FockError, Matrix, ModeLayout, TOP_LEVEL_GUARD};

use super::generator::Generator;
use super::model::SimConfig;
use super::LindbladError;

/// Largest tolerated `|Tr ρ(t) - Tr ρ(0)|` relative to the initial trace.
pub const TRACE_DRIFT_TOL: f64 = 1e-6;

/// Integration grid and guards.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolveOptions {
    pub t_start: f64,
    pub step: f64,
    pub n_steps: usize,
    pub stride: usize,
    pub keep_states: bool,
    pub trace_tol: f64,
    pub truncation_limit: f64,
}

impl EvolveOptions {
    pub fn from_config(config: &SimConfig, keep_states: bool) -> Self {
        Self {
            t_start: config.t_start_ps,
            step: config.step_ps,
            n_steps: config.n_steps(),
            stride: config.snapshot_stride,
            keep_states,
            trace_tol: TRACE_DRIFT_TOL,
            truncation_limit: TOP_LEVEL_GUARD,
        }
    }
}

/// Time series of per-mode occupancies, optionally with full states.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub mode_names: Vec<String>,
    pub times: Vec<f64>,
    /// `occupancies[k][m]` is `⟨a†_m a_m⟩` at `times[k]`.
    pub occupancies: Vec<Vec<f64>>,
    pub states: Option<Vec<DensityMatrix>>,
    pub max_trace_drift: f64,
}

impl Trajectory {
    pub fn occupancy(&self, mode: &str) -> Option<Vec<f64>> {
        let m = self.mode_names.iter().position(|n| n == mode)?;
        Some(self.occupancies.iter().map(|row| row[m]).collect())
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["time_ps".to_string()];
        header.extend(self.mode_names.iter().map(|n| format!("n_{n}")));
        w.write_record(&header)?;
        for (t, occ) in self.times.iter().zip(&self.occupancies) {
            let mut rec = vec![format!("{t}")];
            rec.extend(occ.iter().map(|v| format!("{v:e}")));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Per-mode `⟨n⟩` of a row-major state, normalized by its trace.
pub(crate) fn occupancies(layout: &ModeLayout, rho: &[Complex64]) -> (f64, Vec<f64>) {
    let d = layout.dim();
    let mut tr = 0.0;
    let mut occ = vec![0.0; layout.modes().len()];
    for i in 0..d {
        let p = rho[i * d + i].re;
        tr += p;
        for (m, o) in occ.iter_mut().enumerate() {
            *o += p * layout.level(i, m) as f64;
        }
    }
    for o in &mut occ {
        *o /= tr;
    }
    (tr, occ)
}

fn check_top_levels(
    layout: &ModeLayout,
    rho: &[Complex64],
    tr: f64,
    limit: f64,
) -> Result<(), FockError> {
    let d = layout.dim();
    for (m, mode) in layout.modes().iter().enumerate() {
        let top = mode.cutoff - 1;
        let pop: f64 = (0..d)
            .filter(|&i| layout.level(i, m) == top)
            .map(|i| rho[i * d + i].re)
            .sum();
        let fraction = pop / tr;
        if fraction > limit {
            return Err(FockError::TruncationGuard {
                mode: mode.name.clone(),
                fraction,
                limit,
            });
        }
    }
    Ok(())
}

pub(crate) struct Propagator<'a> {
    generator: &'a Generator,
    k: [Vec<Complex64>; 4],
    tmp: Vec<Complex64>,
    work: Vec<Complex64>,
}

impl<'a> Propagator<'a> {
    pub(crate) fn new(generator: &'a Generator) -> Self {
        let n = generator.layout().dim().pow(2);
        let z = vec![Complex64::new(0.0, 0.0); n];
        Self {
            generator,
            k: [z.clone(), z.clone(), z.clone(), z.clone()],
            tmp: z.clone(),
            work: z,
        }
    }

    pub(crate) fn step(&mut self, rho: &mut [Complex64], t: f64, h: f64) {
        let g = self.generator;
        let [k1, k2, k3, k4] = &mut self.k;
        g.rhs_hermitian(rho, t, &mut self.work, k1);
        for ((x, r), k) in self.tmp.iter_mut().zip(rho.iter()).zip(k1.iter()) {
            *x = r + k * (0.5 * h);
        }
        g.rhs_hermitian(&self.tmp, t + 0.5 * h, &mut self.work, k2);
        for ((x, r), k) in self.tmp.iter_mut().zip(rho.iter()).zip(k2.iter()) {
            *x = r + k * (0.5 * h);
        }
        g.rhs_hermitian(&self.tmp, t + 0.5 * h, &mut self.work, k3);
        for ((x, r), k) in self.tmp.iter_mut().zip(rho.iter()).zip(k3.iter()) {
            *x = r + k * h;
        }
        g.rhs_hermitian(&self.tmp, t + h, &mut self.work, k4);
        let c = h / 6.0;
        for i in 0..rho.len() {
            rho[i] += (k1[i] + 2.0 * (k2[i] + k3[i]) + k4[i]) * c;
        }
    }

    /// Advances `rho` through `n_steps` steps from `t_start`, calling
    /// `observe(step, t, rho, occupancies)` at step 0 and after every step.
    /// Trace drift is measured relative to the initial trace.
    pub(crate) fn run(
        &mut self,
        rho: &mut [Complex64],
        t_start: f64,
        h: f64,
        n_steps: usize,
        trace_tol: f64,
        truncation_limit: f64,
        mut observe: impl FnMut(usize, f64, &[Complex64], &[f64]) -> Result<(), LindbladError>,
    ) -> Result<f64, LindbladError> {
        let layout = self.generator.layout().clone();
        let (tr0, occ) = occupancies(&layout, rho);
        if !(tr0 > 0.0) {
            return Err(LindbladError::ZeroDenominator("initial trace"));
        }
        observe(0, t_start, rho, &occ)?;
        let mut max_drift: f64 = 0.0;
        for s in 1..=n_steps {
            let t_prev = t_start + (s - 1) as f64 * h;
            self.step(rho, t_prev, h);
            let t = t_start + s as f64 * h;
            let (tr, occ) = occupancies(&layout, rho);
            let drift = ((tr - tr0) / tr0).abs();
            if !(drift <= trace_tol) {
                return Err(LindbladError::TraceDrift { time: t, drift });
            }
            max_drift = max_drift.max(drift);
            check_top_levels(&layout, rho, tr, truncation_limit)
                .map_err(|source| LindbladError::Truncation { time: t, source })?;
            observe(s, t, rho, &occ)?;
        }
        Ok(max_drift)
    }
}

pub(crate) fn to_flat(m: &Matrix) -> Vec<Complex64> {
    m.iter().copied().collect()
}

pub(crate) fn to_matrix(d: usize, v: &[Complex64]) -> Matrix {
    Array2::from_shape_vec((d, d), v.to_vec()).expect("square buffer")
}

/// Integrates `rho0` under `generator` on the given grid.
pub fn evolve_with(
    generator: &Generator,
    rho0: &DensityMatrix,
    options: &EvolveOptions,
) -> Result<Trajectory, LindbladError> {
    if rho0.layout() != generator.layout() {
        return Err(FockError::LayoutMismatch.into());
    }
    if options.stride == 0 || !(options.step > 0.0) {
        return Err(LindbladError::InvalidConfig(
            "integration stride and step must be positive".into(),
        ));
    }
    let layout = generator.layout().clone();
    let d = layout.dim();
    let mut rho = to_flat(rho0.matrix());
    let mut times = Vec::new();
    let mut occs = Vec::new();
    let mut states = options.keep_states.then(Vec::new);
    let mut prop = Propagator::new(generator);
    let max_trace_drift = prop.run(
        &mut rho,
        options.t_start,
        options.step,
        options.n_steps,
        options.trace_tol,
        options.truncation_limit,
        |s, t, r, occ| {
            if s % options.stride == 0 || s == options.n_steps {
                times.push(t);
                occs.push(occ.to_vec());
                if let Some(st) = states.as_mut() {
                    st.push(DensityMatrix::from_parts(layout.clone(), to_matrix(d, r)));
                }
            }
            Ok(())
        },
    )?;
    Ok(Trajectory {
        mode_names: layout.modes().iter().map(|m| m.name.clone()).collect(),
        times,
        occupancies: occs,
        states,
        max_trace_drift,
    })
}

/// Integrates the model over its configured span with state snapshots.
pub fn evolve(rho0: &DensityMatrix, config: &SimConfig) -> Result<Trajectory, LindbladError> {
    let g = config.generator()?;
    evolve_with(&g, rho0, &EvolveOptions::from_config(config, true))
}

/// As [`evolve`] but recording occupancies only.
pub fn evolve_lean(rho0: &DensityMatrix, config: &SimConfig) -> Result<Trajectory, LindbladError> {
    let g = config.generator()?;
    evolve_with(&g, rho0, &EvolveOptions::from_config(config, false))
}

/// Right-hand side of the model's master equation at time `t`, evaluated
/// with dense operators in the configured frame.
pub fn lindblad_rhs(
    rho: &DensityMatrix,
    t: f64,
    config: &SimConfig,
) -> Result<Matrix, LindbladError> {
    let g = config.generator()?;
    if rho.layout() != g.layout() {
        return Err(FockError::LayoutMismatch.into());
    }
    Ok(g.rhs_dense(rho.matrix(), t))
}
