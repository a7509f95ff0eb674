//! Truncated Fock-space algebra for a handful of bosonic modes.
//!
//! Modes are laid out in tensor-product order: the first mode in a
//! [`ModeLayout`] is the most significant index, so the basis state
//! `|n_0, n_1, ..., n_k⟩` sits at `Σ n_i · stride_i` with `stride_k = 1`.
//! All operators are dense complex matrices over the full product space.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use ndarray::Array2;
use num_complex::Complex64;
use thiserror::Error;

pub type Matrix = Array2<Complex64>;

/// Default ceiling on the total Hilbert-space dimension.
pub const DEFAULT_MAX_DIM: usize = 4096;

/// Hermiticity tolerance for [`DensityMatrix`].
pub const HERMITIAN_TOL: f64 = 1e-10;
/// Trace tolerance for [`DensityMatrix`].
pub const TRACE_TOL: f64 = 1e-8;
/// Smallest eigenvalue accepted for [`DensityMatrix`].
pub const EIGEN_TOL: f64 = -1e-8;
/// Largest top-of-ladder population (relative to the trace) before a state is
/// considered to have run into the truncation.
pub const TOP_LEVEL_GUARD: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FockError {
    #[error("mode name `{0}` appears more than once")]
    DuplicateMode(String),
    #[error("mode `{name}` has cutoff {cutoff}, need at least 2")]
    CutoffTooSmall { name: String, cutoff: usize },
    #[error("total dimension {dim} exceeds the limit of {max}")]
    DimensionTooLarge { dim: usize, max: usize },
    #[error("layout has no modes")]
    EmptyLayout,
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("operands live on different mode layouts")]
    LayoutMismatch,
    #[error("matrix is {rows}x{cols}, layout dimension is {dim}")]
    ShapeMismatch {
        rows: usize,
        cols: usize,
        dim: usize,
    },
    #[error("matrix contains a non-finite entry")]
    NonFinite,
    #[error("occupancy {0} for mode `{1}` is negative or not finite")]
    BadOccupancy(f64, String),
    #[error("expected {expected} occupancies, got {got}")]
    OccupancyCount { expected: usize, got: usize },
    #[error("density matrix is not Hermitian (max deviation {0:.3e})")]
    NotHermitian(f64),
    #[error("density matrix trace is {0}, expected 1")]
    BadTrace(f64),
    #[error("density matrix is not positive semidefinite (Cholesky pivot {0:.3e})")]
    NotPositive(f64),
    #[error("mode `{mode}` top Fock level holds {fraction:.3e} of the trace (limit {limit:.1e})")]
    TruncationGuard {
        mode: String,
        fraction: f64,
        limit: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mode {
    pub name: String,
    pub cutoff: usize,
}

/// Ordered set of truncated bosonic modes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModeLayout {
    modes: Vec<Mode>,
    strides: Vec<usize>,
    dim: usize,
}

impl ModeLayout {
    pub fn new<S: AsRef<str>>(modes: &[(S, usize)]) -> Result<Self, FockError> {
        Self::with_max_dim(modes, DEFAULT_MAX_DIM)
    }

    pub fn with_max_dim<S: AsRef<str>>(
        modes: &[(S, usize)],
        max_dim: usize,
    ) -> Result<Self, FockError> {
        if modes.is_empty() {
            return Err(FockError::EmptyLayout);
        }
        let mut out: Vec<Mode> = Vec::with_capacity(modes.len());
        let mut dim: usize = 1;
        for (name, cutoff) in modes {
            let name = name.as_ref();
            if out.iter().any(|m| m.name == name) {
                return Err(FockError::DuplicateMode(name.to_string()));
            }
            if *cutoff < 2 {
                return Err(FockError::CutoffTooSmall {
                    name: name.to_string(),
                    cutoff: *cutoff,
                });
            }
            dim = dim.checked_mul(*cutoff).filter(|d| *d <= max_dim).ok_or(
                FockError::DimensionTooLarge {
                    dim: dim.saturating_mul(*cutoff),
                    max: max_dim,
                },
            )?;
            out.push(Mode {
                name: name.to_string(),
                cutoff: *cutoff,
            });
        }
        let mut strides = vec![1; out.len()];
        for k in (0..out.len() - 1).rev() {
            strides[k] = strides[k + 1] * out[k + 1].cutoff;
        }
        Ok(Self {
            modes: out,
            strides,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn index_of(&self, name: &str) -> Result<usize, FockError> {
        self.modes
            .iter()
            .position(|m| m.name == name)
            .ok_or_else(|| FockError::UnknownMode(name.to_string()))
    }

    pub fn cutoff(&self, mode: usize) -> usize {
        self.modes[mode].cutoff
    }

    pub fn stride(&self, mode: usize) -> usize {
        self.strides[mode]
    }

    /// Occupation of `mode` in the basis state with flat index `index`.
    pub fn level(&self, index: usize, mode: usize) -> usize {
        (index / self.strides[mode]) % self.modes[mode].cutoff
    }

    /// Flat index of the basis state with the given per-mode occupations.
    pub fn flat_index(&self, levels: &[usize]) -> usize {
        levels.iter().zip(&self.strides).map(|(n, s)| n * s).sum()
    }
}

impl fmt::Display for ModeLayout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .modes
            .iter()
            .map(|m| format!("{}:{}", m.name, m.cutoff))
            .collect();
        write!(f, "[{}]", parts.join(", "))
    }
}

pub fn make_layout<S: AsRef<str>>(modes: &[(S, usize)]) -> Result<ModeLayout, FockError> {
    ModeLayout::new(modes)
}

fn check_shape(layout: &ModeLayout, m: &Matrix) -> Result<(), FockError> {
    let (rows, cols) = m.dim();
    if rows != layout.dim() || cols != layout.dim() {
        return Err(FockError::ShapeMismatch {
            rows,
            cols,
            dim: layout.dim(),
        });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(FockError::NonFinite);
    }
    Ok(())
}

/// Dense operator on the full product space of a layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Operator {
    layout: ModeLayout,
    matrix: Matrix,
}

impl Operator {
    pub fn new(layout: ModeLayout, matrix: Matrix) -> Result<Self, FockError> {
        check_shape(&layout, &matrix)?;
        Ok(Self { layout, matrix })
    }

    pub fn zeros(layout: &ModeLayout) -> Self {
        let d = layout.dim();
        Self {
            layout: layout.clone(),
            matrix: Array2::zeros((d, d)),
        }
    }

    pub fn identity(layout: &ModeLayout) -> Self {
        let d = layout.dim();
        Self {
            layout: layout.clone(),
            matrix: Array2::eye(d),
        }
    }

    /// Operator whose matrix element depends only on the basis-state indices.
    pub fn diagonal_from(layout: &ModeLayout, f: impl Fn(usize) -> Complex64) -> Self {
        let mut op = Self::zeros(layout);
        for i in 0..layout.dim() {
            op.matrix[[i, i]] = f(i);
        }
        op
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn dagger(&self) -> Self {
        Self {
            layout: self.layout.clone(),
            matrix: adjoint(&self.matrix),
        }
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            layout: self.layout.clone(),
            matrix: &self.matrix * c,
        }
    }

    pub fn try_mul(&self, rhs: &Operator) -> Result<Operator, FockError> {
        if self.layout != rhs.layout {
            return Err(FockError::LayoutMismatch);
        }
        Ok(Self {
            layout: self.layout.clone(),
            matrix: self.matrix.dot(&rhs.matrix),
        })
    }

    pub fn try_add(&self, rhs: &Operator) -> Result<Operator, FockError> {
        if self.layout != rhs.layout {
            return Err(FockError::LayoutMismatch);
        }
        Ok(Self {
            layout: self.layout.clone(),
            matrix: &self.matrix + &rhs.matrix,
        })
    }

    pub fn commutator(&self, rhs: &Operator) -> Result<Operator, FockError> {
        let ab = self.try_mul(rhs)?;
        let ba = rhs.try_mul(self)?;
        Ok(&ab - &ba)
    }

    /// Largest entry of `|A - A†|`.
    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.matrix)
    }
}

/// Panics on layout mismatch; use [`Operator::try_mul`] for a checked product.
impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        self.try_mul(rhs).expect("operator layouts differ")
    }
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        self.try_add(rhs).expect("operator layouts differ")
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        assert_eq!(self.layout, rhs.layout, "operator layouts differ");
        Operator {
            layout: self.layout.clone(),
            matrix: &self.matrix - &rhs.matrix,
        }
    }
}

pub fn adjoint(m: &Matrix) -> Matrix {
    m.t().mapv(|z| z.conj())
}

pub fn hermiticity_error(m: &Matrix) -> f64 {
    let n = m.nrows();
    let mut worst: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[[i, j]] - m[[j, i]].conj()).norm());
        }
    }
    worst
}

pub fn trace(m: &Matrix) -> Complex64 {
    m.diag().iter().sum()
}

/// Embed a single-mode matrix `local[n', n]` acting on `mode`, identity elsewhere.
fn embed(layout: &ModeLayout, mode: usize, local: impl Fn(usize, usize) -> f64) -> Operator {
    let d = layout.dim();
    let cutoff = layout.cutoff(mode);
    let stride = layout.stride(mode);
    let mut m = Array2::zeros((d, d));
    for col in 0..d {
        let n = layout.level(col, mode);
        let base = col - n * stride;
        for np in 0..cutoff {
            let v = local(np, n);
            if v != 0.0 {
                m[[base + np * stride, col]] = Complex64::new(v, 0.0);
            }
        }
    }
    Operator {
        layout: layout.clone(),
        matrix: m,
    }
}

/// Lowering operator `a|n⟩ = √n |n-1⟩` on one mode.
pub fn annihilation(layout: &ModeLayout, mode_name: &str) -> Result<Operator, FockError> {
    let mode = layout.index_of(mode_name)?;
    Ok(embed(layout, mode, |np, n| {
        if n >= 1 && np == n - 1 {
            (n as f64).sqrt()
        } else {
            0.0
        }
    }))
}

pub fn creation(layout: &ModeLayout, mode_name: &str) -> Result<Operator, FockError> {
    Ok(annihilation(layout, mode_name)?.dagger())
}

pub fn number_op(layout: &ModeLayout, mode_name: &str) -> Result<Operator, FockError> {
    let mode = layout.index_of(mode_name)?;
    Ok(Operator::diagonal_from(layout, |i| {
        Complex64::new(layout.level(i, mode) as f64, 0.0)
    }))
}

/// Normalized Boltzmann weights `p(n) ∝ (n̄/(1+n̄))^n` on `0..cutoff`.
pub fn thermal_populations(occupancy: f64, cutoff: usize) -> Vec<f64> {
    if occupancy == 0.0 {
        let mut p = vec![0.0; cutoff];
        p[0] = 1.0;
        return p;
    }
    let ratio = occupancy / (1.0 + occupancy);
    let raw: Vec<f64> = (0..cutoff).map(|n| ratio.powi(n as i32)).collect();
    let z: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w / z).collect()
}

/// A validated density matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    layout: ModeLayout,
    matrix: Matrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, unit trace and positivity.
    pub fn new(layout: ModeLayout, matrix: Matrix) -> Result<Self, FockError> {
        check_shape(&layout, &matrix)?;
        let herm = hermiticity_error(&matrix);
        if herm > HERMITIAN_TOL {
            return Err(FockError::NotHermitian(herm));
        }
        let tr = trace(&matrix).re;
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(FockError::BadTrace(tr));
        }
        if let Err(pivot) = positive_within(&matrix, -EIGEN_TOL) {
            return Err(FockError::NotPositive(pivot));
        }
        Ok(Self { layout, matrix })
    }

    /// Wraps a matrix the caller has already validated (integrator output).
    pub(crate) fn from_parts(layout: ModeLayout, matrix: Matrix) -> Self {
        Self { layout, matrix }
    }

    pub fn vacuum(layout: &ModeLayout) -> Self {
        let d = layout.dim();
        let mut m = Array2::zeros((d, d));
        m[[0, 0]] = Complex64::new(1.0, 0.0);
        Self {
            layout: layout.clone(),
            matrix: m,
        }
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &Matrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> Matrix {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        trace(&self.matrix).re
    }

    /// Marginal photon-number distribution of one mode.
    pub fn mode_populations(&self, mode: usize) -> Vec<f64> {
        mode_populations(&self.layout, &self.matrix, mode)
    }
}

/// Marginal populations of `mode` read off the diagonal of any (possibly
/// unnormalized) state matrix.
pub fn mode_populations(layout: &ModeLayout, m: &Matrix, mode: usize) -> Vec<f64> {
    let mut pops = vec![0.0; layout.cutoff(mode)];
    for i in 0..layout.dim() {
        pops[layout.level(i, mode)] += m[[i, i]].re;
    }
    pops
}

/// Fails if any mode's top Fock level carries more than `limit` of the trace.
pub fn check_truncation(layout: &ModeLayout, m: &Matrix, limit: f64) -> Result<(), FockError> {
    let tr = trace(m).re;
    if tr <= 0.0 {
        return Ok(());
    }
    for (k, mode) in layout.modes().iter().enumerate() {
        let pops = mode_populations(layout, m, k);
        let fraction = pops[mode.cutoff - 1] / tr;
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

/// Product of single-mode thermal states, each renormalized after truncation.
pub fn thermal_state(layout: &ModeLayout, occupancies: &[f64]) -> Result<DensityMatrix, FockError> {
    if occupancies.len() != layout.modes().len() {
        return Err(FockError::OccupancyCount {
            expected: layout.modes().len(),
            got: occupancies.len(),
        });
    }
    let mut per_mode = Vec::with_capacity(occupancies.len());
    for (mode, &n) in layout.modes().iter().zip(occupancies) {
        if !(n >= 0.0 && n.is_finite()) {
            return Err(FockError::BadOccupancy(n, mode.name.clone()));
        }
        per_mode.push(thermal_populations(n, mode.cutoff));
    }
    let d = layout.dim();
    let mut m = Array2::zeros((d, d));
    for i in 0..d {
        let p: f64 = per_mode
            .iter()
            .enumerate()
            .map(|(k, pops)| pops[layout.level(i, k)])
            .product();
        m[[i, i]] = Complex64::new(p, 0.0);
    }
    Ok(DensityMatrix {
        layout: layout.clone(),
        matrix: m,
    })
}

/// `Tr(op · rho)`.
pub fn expectation(op: &Operator, rho: &DensityMatrix) -> Result<Complex64, FockError> {
    if op.layout != rho.layout {
        return Err(FockError::LayoutMismatch);
    }
    Ok(trace_product(&op.matrix, &rho.matrix))
}

/// `Tr(a · b)` without forming the product.
pub fn trace_product(a: &Matrix, b: &Matrix) -> Complex64 {
    let n = a.nrows();
    let mut acc = Complex64::new(0.0, 0.0);
    for i in 0..n {
        for j in 0..n {
            acc += a[[i, j]] * b[[j, i]];
        }
    }
    acc
}

/// True when `m + tol·I` admits a Cholesky factorization, i.e. every
/// eigenvalue of the Hermitian part of `m` exceeds `-tol`. Returns the first
/// failing pivot otherwise.
pub fn positive_within(m: &Matrix, tol: f64) -> Result<(), f64> {
    let n = m.nrows();
    let mut l: Matrix = Array2::zeros((n, n));
    for j in 0..n {
        let mut d = m[[j, j]].re + tol;
        for k in 0..j {
            d -= l[[j, k]].norm_sqr();
        }
        if d <= 0.0 {
            return Err(d);
        }
        let djj = d.sqrt();
        l[[j, j]] = Complex64::new(djj, 0.0);
        for i in (j + 1)..n {
            let mut s = 0.5 * (m[[i, j]] + m[[j, i]].conj());
            for k in 0..j {
                s -= l[[i, k]] * l[[j, k]].conj();
            }
            l[[i, j]] = s / djj;
        }
    }
    Ok(())
}
