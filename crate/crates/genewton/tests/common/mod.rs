//! Shared oracles for integration tests. Everything here is deliberately
//! brute-force and independent of the library's own algorithms so the two
//! routes can disagree when one of them is wrong.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

use genewton::qp::Ldqp;

/// Brute-force LDQP solve: enumerate every activity subset of the inequality
/// rows, solve the equality-constrained KKT system by pseudoinverse, keep
/// candidates that are primal feasible with nonnegative multipliers, and
/// return the one with the smallest objective. `None` when the feasible set
/// is empty. Only intended for small instances (m <= ~12).
pub fn oracle_ldqp(problem: &Ldqp) -> Option<DVector<f64>> {
    let n = problem.dim();
    let m = problem.ineq_rhs.len();
    let p = problem.eq_rhs.len();
    assert!(m <= 20, "oracle is exponential in the row count");
    let mut best: Option<(f64, DVector<f64>)> = None;
    for mask in 0u32..(1u32 << m) {
        let active: Vec<usize> = (0..m).filter(|&j| mask >> j & 1 == 1).collect();
        let w = active.len();
        // stationarity u + c + A_S^T mu + E^T nu = 0 together with the
        // active rows and equalities, solved in least-squares sense
        let dim = n + w + p;
        let mut kkt = DMatrix::zeros(dim, dim);
        let mut rhs = DVector::zeros(dim);
        for i in 0..n {
            kkt[(i, i)] = 1.0;
            rhs[i] = -problem.linear_term[i];
        }
        for (k, &row) in active.iter().enumerate() {
            for j in 0..n {
                kkt[(j, n + k)] = problem.ineq_matrix[(row, j)];
                kkt[(n + k, j)] = problem.ineq_matrix[(row, j)];
            }
            rhs[n + k] = problem.ineq_rhs[row];
        }
        for i in 0..p {
            for j in 0..n {
                kkt[(j, n + w + i)] = problem.eq_matrix[(i, j)];
                kkt[(n + w + i, j)] = problem.eq_matrix[(i, j)];
            }
            rhs[n + w + i] = problem.eq_rhs[i];
        }
        let svd = kkt.clone().svd(true, true);
        let smax = svd.singular_values.max();
        let Ok(sol) = svd.solve(&rhs, 1e-10 * (1.0 + smax)) else {
            continue;
        };
        if (&kkt * &sol - &rhs).amax() > 1e-8 * (1.0 + rhs.amax()) {
            continue; // inconsistent subset
        }
        let u = sol.rows(0, n).into_owned();
        let mu = sol.rows(n, w).into_owned();
        if (0..w).any(|k| mu[k] < -1e-9) {
            continue;
        }
        let feas_ineq = (0..m).all(|j| {
            let s = problem.ineq_rhs[j]
                - (0..n).map(|i| problem.ineq_matrix[(j, i)] * u[i]).sum::<f64>();
            s >= -1e-8
        });
        if !feas_ineq {
            continue;
        }
        if p > 0 && (&problem.eq_matrix * &u - &problem.eq_rhs).amax() > 1e-8 {
            continue;
        }
        let obj = 0.5 * u.norm_squared() + problem.linear_term.dot(&u);
        if best.as_ref().is_none_or(|(b, _)| obj < b - 1e-12) {
            best = Some((obj, u));
        }
    }
    best.map(|(_, u)| u)
}

/// Multiplier of the LDQP at an optimal `u`, when it is provably unique:
/// the gradients of the tight inequality rows together with the equality
/// rows must be linearly independent, in which case stationarity pins the
/// multiplier exactly. Returns the inequality multiplier expanded to full
/// length and the equality multiplier, or `None` when uniqueness cannot be
/// certified.
pub fn oracle_ldqp_multiplier(
    problem: &Ldqp,
    u: &DVector<f64>,
) -> Option<(DVector<f64>, DVector<f64>)> {
    let n = problem.dim();
    let m = problem.ineq_rhs.len();
    let p = problem.eq_rhs.len();
    let tight: Vec<usize> = (0..m)
        .filter(|&j| {
            let s = problem.ineq_rhs[j]
                - (0..n).map(|i| problem.ineq_matrix[(j, i)] * u[i]).sum::<f64>();
            s.abs() <= 1e-8 * (1.0 + problem.ineq_rhs[j].abs())
        })
        .collect();
    let w = tight.len();
    if w + p > n {
        return None; // more constraints than dimensions: never independent
    }
    let mut mat = DMatrix::zeros(n, w + p);
    for (k, &row) in tight.iter().enumerate() {
        mat.set_column(k, &problem.ineq_matrix.row(row).transpose());
    }
    for i in 0..p {
        mat.set_column(w + i, &problem.eq_matrix.row(i).transpose());
    }
    let rhs = -(u + &problem.linear_term);
    if w + p == 0 {
        return if rhs.amax() <= 1e-8 {
            Some((DVector::zeros(m), DVector::zeros(0)))
        } else {
            None
        };
    }
    let svd = mat.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if svd.singular_values.min() <= 1e-8 * (1.0 + smax) {
        return None;
    }
    let y = svd.solve(&rhs, 1e-12 * (1.0 + smax)).ok()?;
    if (&mat * &y - &rhs).amax() > 1e-7 * (1.0 + rhs.amax()) {
        return None;
    }
    let mut mu = DVector::zeros(m);
    for (k, &row) in tight.iter().enumerate() {
        mu[row] = y[k];
    }
    Some((mu, y.rows(w, p).into_owned()))
}

/// Componentwise clamp onto a box; the reference projection for box sets.
pub fn clamp(z: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(z.len(), |i, _| z[i].clamp(lower[i], upper[i]))
}

/// Derivative-free scalar minimizer: coarse grid scan to bracket the
/// minimizer (robust to indicator infinities), then golden-section
/// refinement. Used as an independent prox oracle on scalar pieces.
pub fn grid_golden_min(f: impl Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    let grid = 800;
    let h = (b - a) / grid as f64;
    let mut best = (f(a), a);
    for k in 1..=grid {
        let x = a + h * k as f64;
        let v = f(x);
        if v < best.0 {
            best = (v, x);
        }
    }
    golden_min(f, best.1 - h, best.1 + h, 120)
}

/// Golden-section search on a bracket already known to contain the minimizer
/// of a unimodal function.
pub fn golden_min(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, iters: usize) -> f64 {
    let phi = (5.0f64.sqrt() - 1.0) / 2.0;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..iters {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Forward-difference Jacobian of a vector map, for derivative checks.
pub fn fd_jacobian(
    f: &dyn Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let fx = f(x);
    let mut jac = DMatrix::zeros(fx.len(), x.len());
    for j in 0..x.len() {
        let mut xp = x.clone();
        xp[j] += h;
        let col = (f(&xp) - &fx) / h;
        jac.set_column(j, &col);
    }
    jac
}
