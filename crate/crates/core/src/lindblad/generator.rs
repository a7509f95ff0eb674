//! A master-equation generator assembled from ladder-type operators.
//!
//! Every drive and jump operator used by the model (single ladders and pair
//! products such as `b†a†`) has at most one nonzero entry per row, so the
//! right-hand side is evaluated row-wise in `O(terms · dim²)` instead of with
//! dense matrix products. The dense [`Generator::rhs_dense`] is kept as the
//! reference implementation.

use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::fock::{adjoint, annihilation, Matrix, ModeLayout, Operator};

use super::LindbladError;

/// Time-dependent complex coefficient of a drive term.
pub type Coefficient = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;
/// Time-dependent bath occupancy.
pub type Occupancy = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Picture in which the state is propagated.
///
/// `Rotating` keeps the free Hamiltonian `Σ ω_x a†_x a_x` in `H`, so the
/// state carries oscillations at the free frequencies. `Interaction` removes
/// it exactly and moves the phases onto the drive coefficients. Populations,
/// jump sandwiches `a ρ a†` and dissipators are identical in both pictures;
/// the interaction picture tolerates much larger steps when the free
/// frequencies are large.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Frame {
    Rotating,
    #[default]
    Interaction,
}

/// Operator with at most one nonzero (real) entry per row.
#[derive(Debug, Clone)]
pub(crate) struct RowOp {
    entries: Vec<Option<(usize, f64)>>,
}

impl RowOp {
    pub(crate) fn from_matrix(m: &Matrix) -> Result<Self, LindbladError> {
        let mut entries = Vec::with_capacity(m.nrows());
        for row in m.rows() {
            let mut entry = None;
            for (col, z) in row.iter().enumerate() {
                if *z == Complex64::new(0.0, 0.0) {
                    continue;
                }
                if entry.is_some() || z.im != 0.0 {
                    return Err(LindbladError::InvalidConfig(
                        "drive and jump operators must be real with one entry per row".into(),
                    ));
                }
                entry = Some((col, z.re));
            }
            entries.push(entry);
        }
        Ok(Self { entries })
    }

    fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.map(|(c, v)| (i, c, v)))
    }
}

struct DriveTerm {
    op: RowOp,
    op_dag: RowOp,
    coefficient: Coefficient,
    /// `E_row - E_col` of the free Hamiltonian for this operator.
    shift: f64,
}

struct Bath {
    mode: String,
    gamma: f64,
    lower: RowOp,
    raise: RowOp,
    dense_lower: Matrix,
    /// Diagonals of `a†a` and `a a†` on the truncated space.
    n_diag: Vec<f64>,
    anti_diag: Vec<f64>,
    occupancy: Occupancy,
}

/// Compiled Lindblad generator
/// `dρ/dt = -i[H(t), ρ] + Σ γ(n̄+1) D[a]ρ + γ n̄ D[a†]ρ`
/// with `H(t) = H₀ + Σ (c(t) O + c(t)* O†)` and diagonal `H₀`.
pub struct Generator {
    layout: ModeLayout,
    frame: Frame,
    free: Vec<f64>,
    terms: Vec<DriveTerm>,
    baths: Vec<Bath>,
}

impl fmt::Debug for Generator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Generator")
            .field("layout", &self.layout)
            .field("frame", &self.frame)
            .field("terms", &self.terms.len())
            .field(
                "baths",
                &self.baths.iter().map(|b| &b.mode).collect::<Vec<_>>(),
            )
            .finish()
    }
}

impl Generator {
    /// `frequencies` gives the free energy `ω` of each named mode; modes not
    /// listed have zero free energy.
    pub fn new(
        layout: &ModeLayout,
        frequencies: &[(&str, f64)],
        frame: Frame,
    ) -> Result<Self, LindbladError> {
        let mut free = vec![0.0; layout.dim()];
        for &(name, omega) in frequencies {
            let mode = layout.index_of(name)?;
            for (i, e) in free.iter_mut().enumerate() {
                *e += omega * layout.level(i, mode) as f64;
            }
        }
        Ok(Self {
            layout: layout.clone(),
            frame,
            free,
            terms: Vec::new(),
            baths: Vec::new(),
        })
    }

    pub fn layout(&self) -> &ModeLayout {
        &self.layout
    }

    pub fn frame(&self) -> Frame {
        self.frame
    }

    /// Adds `c(t) O + c(t)* O†` to the Hamiltonian.
    pub fn add_drive(
        &mut self,
        op: &Operator,
        coefficient: Coefficient,
    ) -> Result<(), LindbladError> {
        if op.layout() != &self.layout {
            return Err(crate::fock::FockError::LayoutMismatch.into());
        }
        let m = op.matrix();
        let row_op = RowOp::from_matrix(m)?;
        let op_dag = RowOp::from_matrix(&adjoint(m))?;
        let mut shift = None;
        for (i, c, _) in row_op.iter() {
            let s = self.free[i] - self.free[c];
            match shift {
                None => shift = Some(s),
                Some(s0) if (s0 - s).abs() > 1e-9 * (1.0 + s0.abs()) => {
                    return Err(LindbladError::InvalidConfig(
                        "drive operator does not shift the free energy uniformly".into(),
                    ))
                }
                _ => {}
            }
        }
        self.terms.push(DriveTerm {
            op: row_op,
            op_dag,
            coefficient,
            shift: shift.unwrap_or(0.0),
        });
        Ok(())
    }

    /// Adds damping of `mode` at rate `gamma` towards a bath of occupancy
    /// `occupancy(t)`.
    pub fn add_bath(
        &mut self,
        mode: &str,
        gamma: f64,
        occupancy: Occupancy,
    ) -> Result<(), LindbladError> {
        if !(gamma >= 0.0 && gamma.is_finite()) {
            return Err(LindbladError::InvalidConfig(format!(
                "damping rate for {mode} must be finite and non-negative, got {gamma}"
            )));
        }
        let a = annihilation(&self.layout, mode)?;
        let a_dag = a.dagger();
        let n_diag = (&a_dag * &a).matrix().diag().iter().map(|z| z.re).collect();
        let anti_diag = (&a * &a_dag).matrix().diag().iter().map(|z| z.re).collect();
        self.baths.push(Bath {
            mode: mode.to_string(),
            gamma,
            lower: RowOp::from_matrix(a.matrix())?,
            raise: RowOp::from_matrix(a_dag.matrix())?,
            dense_lower: a.into_matrix(),
            n_diag,
            anti_diag,
            occupancy,
        });
        Ok(())
    }

    fn coefficient(&self, term: &DriveTerm, t: f64) -> Complex64 {
        let c = (term.coefficient)(t);
        match self.frame {
            Frame::Rotating => c,
            Frame::Interaction => c * Complex64::from_polar(1.0, term.shift * t),
        }
    }

    /// Hamiltonian at time `t` in the generator's frame.
    pub fn hamiltonian(&self, t: f64) -> Operator {
        let d = self.layout.dim();
        let mut h: Matrix = Array2::zeros((d, d));
        if self.frame == Frame::Rotating {
            for (i, e) in self.free.iter().enumerate() {
                h[[i, i]] += *e;
            }
        }
        for term in &self.terms {
            let c = self.coefficient(term, t);
            for (i, col, v) in term.op.iter() {
                h[[i, col]] += c * v;
                h[[col, i]] += c.conj() * v;
            }
        }
        Operator::new(self.layout.clone(), h).expect("shape matches layout")
    }

    /// General right-hand side by dense matrix products; valid for
    /// non-Hermitian arguments such as `a ρ`.
    pub fn rhs_dense(&self, rho: &Matrix, t: f64) -> Matrix {
        let h = self.hamiltonian(t).into_matrix();
        let mut out = (h.dot(rho) - rho.dot(&h)).mapv(|z| -I * z);
        for bath in &self.baths {
            let n = (bath.occupancy)(t);
            let a = &bath.dense_lower;
            let ad = adjoint(a);
            out = out
                + dissipator(a, &ad, rho).mapv(|z| z * bath.gamma * (n + 1.0))
                + dissipator(&ad, a, rho).mapv(|z| z * bath.gamma * n);
        }
        out
    }

    /// Row-wise right-hand side for Hermitian `rho` (row-major slices).
    ///
    /// Uses `-i[H,ρ] - ½{Γ,ρ} = -i(Kρ - (Kρ)†)` with `K = H - (i/2)Γ`, where
    /// `Γ` collects the diagonal anticommutator parts of all dissipators.
    pub(crate) fn rhs_hermitian(
        &self,
        rho: &[Complex64],
        t: f64,
        work: &mut [Complex64],
        out: &mut [Complex64],
    ) {
        let d = self.layout.dim();
        let mut k_diag: Vec<Complex64> = match self.frame {
            Frame::Rotating => self.free.iter().map(|&e| Complex64::new(e, 0.0)).collect(),
            Frame::Interaction => vec![Complex64::new(0.0, 0.0); d],
        };
        let occ: Vec<f64> = self.baths.iter().map(|b| (b.occupancy)(t)).collect();
        for (bath, &n) in self.baths.iter().zip(&occ) {
            for i in 0..d {
                let g = bath.gamma * ((n + 1.0) * bath.n_diag[i] + n * bath.anti_diag[i]);
                k_diag[i] -= I * (0.5 * g);
            }
        }
        for i in 0..d {
            let k = k_diag[i];
            let src = &rho[i * d..(i + 1) * d];
            for (w, r) in work[i * d..(i + 1) * d].iter_mut().zip(src) {
                *w = k * r;
            }
        }
        for term in &self.terms {
            let c = self.coefficient(term, t);
            for (op, coef) in [(&term.op, c), (&term.op_dag, c.conj())] {
                for (i, col, v) in op.iter() {
                    let s = coef * v;
                    let dst = &mut work[i * d..(i + 1) * d];
                    let src = &rho[col * d..(col + 1) * d];
                    for (w, r) in dst.iter_mut().zip(src) {
                        *w += s * r;
                    }
                }
            }
        }
        for i in 0..d {
            for j in 0..d {
                let z = work[i * d + j] - work[j * d + i].conj();
                out[i * d + j] = Complex64::new(z.im, -z.re);
            }
        }
        for (bath, &n) in self.baths.iter().zip(&occ) {
            for (op, rate) in [
                (&bath.lower, bath.gamma * (n + 1.0)),
                (&bath.raise, bath.gamma * n),
            ] {
                if rate == 0.0 {
                    continue;
                }
                for (i, ci, vi) in op.iter() {
                    let ri = rate * vi;
                    let row = &rho[ci * d..(ci + 1) * d];
                    let dst = &mut out[i * d..(i + 1) * d];
                    for (j, cj, vj) in op.iter() {
                        dst[j] += row[cj] * (ri * vj);
                    }
                }
            }
        }
    }

    /// Bath occupancies at time `t`, in insertion order.
    pub fn bath_occupancies(&self, t: f64) -> Vec<(String, f64)> {
        self.baths
            .iter()
            .map(|b| (b.mode.clone(), (b.occupancy)(t)))
            .collect()
    }
}

/// `D[A]ρ = AρA† - ½{A†A, ρ}`.
fn dissipator(a: &Matrix, a_dag: &Matrix, rho: &Matrix) -> Matrix {
    let ada = a_dag.dot(a);
    a.dot(rho).dot(a_dag) - (ada.dot(rho) + rho.dot(&ada)).mapv(|z| 0.5 * z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{creation, make_layout, trace};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_density(d: usize, seed: u64) -> Matrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = Array2::from_shape_fn((d, d), |_| {
            Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        });
        let rho = a.dot(&adjoint(&a));
        let tr = trace(&rho);
        rho.mapv(|z| z / tr)
    }

    fn two_mode_generator(frame: Frame) -> Generator {
        let layout = make_layout(&[("a", 3), ("b", 4)]).unwrap();
        let mut g = Generator::new(&layout, &[("a", 2.5), ("b", -1.3)], frame).unwrap();
        let pair = &creation(&layout, "a").unwrap() * &creation(&layout, "b").unwrap();
        g.add_drive(
            &pair,
            Arc::new(|t: f64| Complex64::new(0.3 * (-t * t).exp(), 0.1)),
        )
        .unwrap();
        let swap = &creation(&layout, "a").unwrap() * &annihilation(&layout, "b").unwrap();
        g.add_drive(&swap, Arc::new(|t: f64| Complex64::new(0.2, 0.0) * t.cos()))
            .unwrap();
        g.add_bath("a", 1.7, Arc::new(|t: f64| 0.05 + 0.01 * t * t))
            .unwrap();
        g.add_bath("b", 0.4, Arc::new(|_| 0.2)).unwrap();
        g
    }

    #[test]
    fn row_wise_rhs_matches_dense() {
        for frame in [Frame::Rotating, Frame::Interaction] {
            let g = two_mode_generator(frame);
            let d = g.layout().dim();
            for (seed, t) in [(1, 0.0), (2, 0.7), (3, -1.4)] {
                let rho = random_density(d, seed);
                let dense = g.rhs_dense(&rho, t);
                let flat: Vec<Complex64> = rho.iter().copied().collect();
                let mut work = vec![Complex64::new(0.0, 0.0); d * d];
                let mut out = vec![Complex64::new(0.0, 0.0); d * d];
                g.rhs_hermitian(&flat, t, &mut work, &mut out);
                let err = dense
                    .iter()
                    .zip(&out)
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                assert!(err < 1e-12, "{frame:?} t={t}: {err}");
            }
        }
    }

    #[test]
    fn rhs_is_traceless_and_hermitian() {
        let g = two_mode_generator(Frame::Rotating);
        let rho = random_density(g.layout().dim(), 9);
        let r = g.rhs_dense(&rho, 0.3);
        assert!(trace(&r).norm() < 1e-12);
        let herm = (&r - &adjoint(&r))
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        assert!(herm < 1e-12);
    }

    #[test]
    fn hamiltonian_is_hermitian() {
        for frame in [Frame::Rotating, Frame::Interaction] {
            let g = two_mode_generator(frame);
            for t in [-2.0, 0.0, 0.4, 3.0] {
                assert!(g.hamiltonian(t).hermiticity_error() < 1e-12);
            }
        }
    }

    #[test]
    fn rejects_non_uniform_drive() {
        let layout = make_layout(&[("a", 3), ("b", 3)]).unwrap();
        let mut g = Generator::new(&layout, &[("a", 1.0), ("b", 2.0)], Frame::Interaction).unwrap();
        let mixed = &creation(&layout, "a").unwrap() + &creation(&layout, "b").unwrap();
        assert!(g
            .add_drive(&mixed, Arc::new(|_| Complex64::new(1.0, 0.0)))
            .is_err());
        assert!(g.add_bath("a", -1.0, Arc::new(|_| 0.0)).is_err());
        assert!(g.add_bath("c", 1.0, Arc::new(|_| 0.0)).is_err());
    }
}
