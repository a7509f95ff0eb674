//! Levenberg-Marquardt and Nelder-Mead minimizers for small least-squares
//! problems.

/// Outcome of a minimization.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    /// Sum of squared residuals at `x`.
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves the symmetric positive-definite system `m x = b` by Cholesky;
/// `None` if `m` is not positive definite.
pub(crate) fn solve_spd(m: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut d = m[j][j];
        for k in 0..j {
            d -= l[j][k] * l[j][k];
        }
        if !(d > 0.0) {
            return None;
        }
        l[j][j] = d.sqrt();
        for i in (j + 1)..n {
            let mut s = m[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            l[i][j] = s / l[j][j];
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    Some(x)
}

/// Inverse of a symmetric positive-definite matrix.
pub(crate) fn invert_spd(m: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let n = m.len();
    let mut inv = vec![vec![0.0; n]; n];
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        let col = solve_spd(m, &e)?;
        for i in 0..n {
            inv[i][j] = col[i];
        }
    }
    Some(inv)
}

/// `JᵀJ` for a row-major Jacobian (`n` rows of length `p`).
pub(crate) fn normal_matrix(jac: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let p = jac.first().map_or(0, Vec::len);
    let mut m = vec![vec![0.0; p]; p];
    for row in jac {
        for a in 0..p {
            for b in 0..=a {
                m[a][b] += row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            m[b][a] = m[a][b];
        }
    }
    m
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

/// Levenberg-Marquardt with Marquardt diagonal scaling.
///
/// `residuals(x)` returns `None` outside the feasible region, which is
/// treated as a rejected step. `jacobian(x)` returns `∂r_i/∂x_j` row-major.
pub fn levenberg_marquardt(
    residuals: impl Fn(&[f64]) -> Option<Vec<f64>>,
    jacobian: impl Fn(&[f64]) -> Vec<Vec<f64>>,
    x0: &[f64],
    max_iter: usize,
) -> Option<Minimum> {
    let p = x0.len();
    let mut x = x0.to_vec();
    let mut r = residuals(&x)?;
    let mut cost = sum_sq(&r);
    let mut lambda = 1e-3;
    for iter in 1..=max_iter {
        let jac = jacobian(&x);
        let jtj = normal_matrix(&jac);
        let mut grad = vec![0.0; p];
        for (row, ri) in jac.iter().zip(&r) {
            for k in 0..p {
                grad[k] += row[k] * ri;
            }
        }
        let gmax = grad.iter().fold(0.0f64, |m, g| m.max(g.abs()));
        if gmax <= 1e-15 * (1.0 + cost) {
            return Some(Minimum {
                x,
                cost,
                iterations: iter,
                converged: true,
            });
        }
        let mut accepted = false;
        while lambda < 1e16 {
            let mut m = jtj.clone();
            for k in 0..p {
                m[k][k] += lambda * jtj[k][k].max(1e-300);
            }
            let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
            let Some(dx) = solve_spd(&m, &neg) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(&dx).map(|(a, b)| a + b).collect();
            match residuals(&trial) {
                Some(rt) if sum_sq(&rt) <= cost => {
                    let new_cost = sum_sq(&rt);
                    let step = dx
                        .iter()
                        .zip(&x)
                        .fold(0.0f64, |m, (d, xi)| m.max(d.abs() / (xi.abs() + 1e-12)));
                    let small_gain = cost - new_cost <= 1e-15 * cost;
                    x = trial;
                    r = rt;
                    cost = new_cost;
                    lambda = (lambda * 0.1).max(1e-12);
                    accepted = true;
                    if step < 1e-12 || small_gain {
                        return Some(Minimum {
                            x,
                            cost,
                            iterations: iter,
                            converged: true,
                        });
                    }
                    break;
                }
                _ => lambda *= 10.0,
            }
        }
        if !accepted {
            // No descent direction left at machine precision.
            return Some(Minimum {
                x,
                cost,
                iterations: iter,
                converged: true,
            });
        }
    }
    Some(Minimum {
        x,
        cost,
        iterations: max_iter,
        converged: false,
    })
}

/// Nelder-Mead simplex minimization of `f`; infeasible points return
/// `f64::INFINITY`.
pub fn nelder_mead(f: impl Fn(&[f64]) -> f64, x0: &[f64], max_iter: usize) -> Minimum {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for k in 0..n {
        let mut v = x0.to_vec();
        v[k] += if v[k] != 0.0 { 0.05 * v[k] } else { 2.5e-4 };
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();
    for iter in 1..=max_iter {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        let spread = (values[n] - values[0]).abs();
        if spread <= 1e-14 * (values[0].abs() + 1e-300) {
            return Minimum {
                x: simplex[0].clone(),
                cost: values[0],
                iterations: iter,
                converged: true,
            };
        }
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
            .collect();
        let along = |t: f64| -> Vec<f64> {
            centroid
                .iter()
                .zip(&simplex[n])
                .map(|(c, w)| c + t * (w - c))
                .collect()
        };
        let xr = along(-1.0);
        let fr = f(&xr);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = f(&xe);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
        } else {
            let (xc, fc) = if fr < values[n] {
                let xc = along(-0.5);
                let fc = f(&xc);
                (xc, fc)
            } else {
                let xc = along(0.5);
                let fc = f(&xc);
                (xc, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = xc;
                values[n] = fc;
            } else {
                let best = simplex[0].clone();
                for i in 1..=n {
                    for k in 0..n {
                        simplex[i][k] = best[k] + 0.5 * (simplex[i][k] - best[k]);
                    }
                    values[i] = f(&simplex[i]);
                }
            }
        }
    }
    let (best, _) =
        values.iter().enumerate().fold(
            (0, f64::INFINITY),
            |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc },
        );
    Minimum {
        x: simplex[best].clone(),
        cost: values[best],
        iterations: max_iter,
        converged: false,
    }
}
