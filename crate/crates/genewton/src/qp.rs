//! Dense strictly convex least-distance quadratic programs.
//!
//! Solves minimize 1/2 ||u||^2 + <c, u> subject to A u <= b, E u = e.
//! The identity Hessian covers every use in this crate: projections onto
//! polyhedra (c = -y) and the approximation-step QP (c = F(x)).
//!
//! Method: primal active set with smallest-index (Bland) tie-breaking.
//! The starting point is the least-norm solution of the equalities; if that
//! violates an inequality, a phase-1 simplex finds a feasible point (or
//! certifies emptiness) and the least-norm point is then projected onto the
//! feasible set by the same active-set loop before the main solve starts.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;
use crate::tol;

/// Least-distance QP data: minimize 1/2 ||u||^2 + <linear_term, u> over
/// {u : ineq_matrix u <= ineq_rhs, eq_matrix u = eq_rhs}.
#[derive(Debug, Clone)]
pub struct Ldqp {
    pub linear_term: DVector<f64>,
    pub ineq_matrix: DMatrix<f64>,
    pub ineq_rhs: DVector<f64>,
    pub eq_matrix: DMatrix<f64>,
    pub eq_rhs: DVector<f64>,
}

impl Ldqp {
    /// Problem with inequality constraints only.
    pub fn with_ineq(linear_term: DVector<f64>, a: DMatrix<f64>, b: DVector<f64>) -> Self {
        let n = linear_term.len();
        Ldqp {
            linear_term,
            ineq_matrix: a,
            ineq_rhs: b,
            eq_matrix: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
        }
    }

    /// Unconstrained problem (minimizer is -linear_term).
    pub fn unconstrained(linear_term: DVector<f64>) -> Self {
        let n = linear_term.len();
        Ldqp {
            linear_term,
            ineq_matrix: DMatrix::zeros(0, n),
            ineq_rhs: DVector::zeros(0),
            eq_matrix: DMatrix::zeros(0, n),
            eq_rhs: DVector::zeros(0),
        }
    }

    pub fn dim(&self) -> usize {
        self.linear_term.len()
    }

    fn shapes_consistent(&self) -> bool {
        let n = self.dim();
        self.ineq_matrix.ncols() == n
            && self.eq_matrix.ncols() == n
            && self.ineq_matrix.nrows() == self.ineq_rhs.len()
            && self.eq_matrix.nrows() == self.eq_rhs.len()
    }
}

/// Solution of an [`Ldqp`] with the supporting multipliers.
#[derive(Debug, Clone)]
pub struct QpSolution {
    pub point: DVector<f64>,
    /// Multiplier for the inequality rows; nonnegative up to `tol::MULT_TOL`.
    pub ineq_multiplier: DVector<f64>,
    pub eq_multiplier: DVector<f64>,
    /// Working set supporting the multiplier, sorted ascending.
    pub active: Vec<usize>,
    /// Total pivot count across the feasibility and optimality phases.
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QpError {
    #[error("infeasible constraint system")]
    Infeasible,
    #[error("pivot limit reached (ill-conditioned or cycling constraint system)")]
    MaxPivots,
    #[error("mismatched dimensions: {0}")]
    ShapeMismatch(String),
}

/// Solves the least-distance QP. The minimizer is unique by strict convexity;
/// the reported multiplier is the one supported on the final working set.
pub fn solve_ldqp(problem: &Ldqp) -> Result<QpSolution, QpError> {
    if !problem.shapes_consistent() {
        return Err(QpError::ShapeMismatch(format!(
            "ineq {}x{}, eq {}x{}, dim {}",
            problem.ineq_matrix.nrows(),
            problem.ineq_matrix.ncols(),
            problem.eq_matrix.nrows(),
            problem.eq_matrix.ncols(),
            problem.dim()
        )));
    }
    let n = problem.dim();
    if n == 0 {
        return Ok(QpSolution {
            point: DVector::zeros(0),
            ineq_multiplier: DVector::zeros(problem.ineq_rhs.len()),
            eq_multiplier: DVector::zeros(problem.eq_rhs.len()),
            active: Vec::new(),
            iterations: 0,
        });
    }

    let mut pivots = 0usize;

    // least-norm point of the equality system (origin when there are none)
    let u_eq = equality_least_norm(&problem.eq_matrix, &problem.eq_rhs)?;

    let start = if max_violation(problem, &u_eq) <= tol::FEAS_TOL {
        u_eq
    } else {
        let w_feas = simplex_feasible_point(problem, &mut pivots)?;
        // least-distance projection of the least-norm point onto the feasible set
        let proj = Ldqp {
            linear_term: -&u_eq,
            ineq_matrix: problem.ineq_matrix.clone(),
            ineq_rhs: problem.ineq_rhs.clone(),
            eq_matrix: problem.eq_matrix.clone(),
            eq_rhs: problem.eq_rhs.clone(),
        };
        let (point, _, _, _) = active_set_min(&proj, w_feas, &mut pivots)?;
        point
    };

    let (point, mu, nu, working) = active_set_min(problem, start, &mut pivots)?;
    Ok(QpSolution {
        point,
        ineq_multiplier: mu,
        eq_multiplier: nu,
        active: working,
        iterations: pivots,
    })
}

/// Max of the stationarity, feasibility, complementarity, and multiplier-sign
/// residuals; zero only for exact KKT points.
pub fn kkt_residual(problem: &Ldqp, result: &QpSolution) -> Result<f64, QpError> {
    if !problem.shapes_consistent()
        || result.point.len() != problem.dim()
        || result.ineq_multiplier.len() != problem.ineq_rhs.len()
        || result.eq_multiplier.len() != problem.eq_rhs.len()
    {
        return Err(QpError::ShapeMismatch("result does not match problem".into()));
    }
    let grad = &result.point
        + &problem.linear_term
        + problem.ineq_matrix.transpose() * &result.ineq_multiplier
        + problem.eq_matrix.transpose() * &result.eq_multiplier;
    let stat = if grad.is_empty() { 0.0 } else { grad.amax() };
    let mut feas: f64 = 0.0;
    let mut comp: f64 = 0.0;
    let mut sign: f64 = 0.0;
    let slack = &problem.ineq_rhs - &problem.ineq_matrix * &result.point;
    for i in 0..slack.len() {
        feas = feas.max(-slack[i]);
        comp = comp.max((result.ineq_multiplier[i] * slack[i]).abs());
        sign = sign.max(-result.ineq_multiplier[i]);
    }
    if !problem.eq_rhs.is_empty() {
        feas = feas.max((&problem.eq_matrix * &result.point - &problem.eq_rhs).amax());
    }
    Ok(stat.max(feas).max(comp).max(sign).max(0.0))
}

fn max_violation(problem: &Ldqp, u: &DVector<f64>) -> f64 {
    let mut v: f64 = 0.0;
    if !problem.ineq_rhs.is_empty() {
        let s = &problem.ineq_matrix * u - &problem.ineq_rhs;
        v = v.max(s.max());
    }
    if !problem.eq_rhs.is_empty() {
        v = v.max((&problem.eq_matrix * u - &problem.eq_rhs).amax());
    }
    v
}

/// Minimum-norm solution of E u = e; `Infeasible` when the system is
/// inconsistent (the least-squares residual certifies emptiness).
fn equality_least_norm(e_mat: &DMatrix<f64>, e_rhs: &DVector<f64>) -> Result<DVector<f64>, QpError> {
    let n = e_mat.ncols();
    if e_mat.nrows() == 0 {
        return Ok(DVector::zeros(n));
    }
    let svd = e_mat.clone().svd(true, true);
    let u = svd
        .solve(e_rhs, tol::RANK_TOL * (1.0 + svd.singular_values.max()))
        .map_err(|_| QpError::Infeasible)?;
    if (e_mat * &u - e_rhs).amax() > tol::FEAS_TOL * (1.0 + e_rhs.amax()) {
        return Err(QpError::Infeasible);
    }
    Ok(u)
}

/// Primal active-set minimization of the LDQP objective from a feasible start.
/// Returns (point, ineq multiplier, eq multiplier, working set).
#[allow(clippy::type_complexity)]
fn active_set_min(
    problem: &Ldqp,
    start: DVector<f64>,
    pivots: &mut usize,
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>, Vec<usize>), QpError> {
    let n = problem.dim();
    let m = problem.ineq_rhs.len();
    let p = problem.eq_rhs.len();
    let cap = 100 * (n + m + p + 10);

    let mut u = start;
    let mut working: Vec<usize> = Vec::new();
    let mut in_working = vec![false; m];
    let mut local = 0usize;

    loop {
        local += 1;
        *pivots += 1;
        if local > cap {
            return Err(QpError::MaxPivots);
        }
        let (v, mu_w, nu) = solve_working_kkt(problem, &working)?;
        let d = &v - &u;
        if d.norm() <= tol::QP_STEP_REL * (1.0 + u.norm()) {
            // at the working set's minimizer: check multiplier signs
            let mut drop_row: Option<usize> = None;
            for (k, &row) in working.iter().enumerate() {
                if mu_w[k] < -tol::MULT_TOL {
                    drop_row = Some(row);
                    break; // working is sorted: first hit is the smallest index
                }
            }
            match drop_row {
                Some(row) => {
                    working.retain(|&r| r != row);
                    in_working[row] = false;
                }
                None => {
                    let mut mu = DVector::zeros(m);
                    for (k, &row) in working.iter().enumerate() {
                        mu[row] = mu_w[k];
                    }
                    return Ok((v, mu, nu, working));
                }
            }
        } else {
            let dn = d.norm();
            let mut alpha = 1.0f64;
            let mut blocker: Option<usize> = None;
            for (j, &active) in in_working.iter().enumerate() {
                if active {
                    continue;
                }
                let row = problem.ineq_matrix.row(j);
                let adj = row.transpose().dot(&d);
                if adj <= 1e-13 * (1.0 + row.norm() * dn) {
                    continue;
                }
                let slack = problem.ineq_rhs[j] - row.transpose().dot(&u);
                let aj = slack.max(0.0) / adj;
                if aj < alpha - 1e-12 {
                    alpha = aj;
                    blocker = Some(j);
                }
            }
            if let Some(j) = blocker {
                u += alpha * d;
                // blocking rows are independent of the working set: A_W d = 0
                // and E d = 0 while a_j . d > 0
                let pos = working.partition_point(|&r| r < j);
                working.insert(pos, j);
                in_working[j] = true;
            } else {
                u = v;
            }
        }
    }
}

/// Equality-constrained subproblem for the current working set:
/// minimize the objective subject to A_W v = b_W, E v = e.
#[allow(clippy::type_complexity)]
fn solve_working_kkt(
    problem: &Ldqp,
    working: &[usize],
) -> Result<(DVector<f64>, DVector<f64>, DVector<f64>), QpError> {
    let n = problem.dim();
    let w = working.len();
    let p = problem.eq_rhs.len();
    let dim = n + w + p;
    let mut kkt = DMatrix::zeros(dim, dim);
    let mut rhs = DVector::zeros(dim);
    for i in 0..n {
        kkt[(i, i)] = 1.0;
        rhs[i] = -problem.linear_term[i];
    }
    for (k, &row) in working.iter().enumerate() {
        for j in 0..n {
            let a = problem.ineq_matrix[(row, j)];
            kkt[(j, n + k)] = a;
            kkt[(n + k, j)] = a;
        }
        rhs[n + k] = problem.ineq_rhs[row];
    }
    for i in 0..p {
        for j in 0..n {
            let a = problem.eq_matrix[(i, j)];
            kkt[(j, n + w + i)] = a;
            kkt[(n + w + i, j)] = a;
        }
        rhs[n + w + i] = problem.eq_rhs[i];
    }
    // fast path; falls back to a least-squares solve when constraint rows are
    // linearly dependent (the subproblem stays uniquely solvable in v, and the
    // minimum-norm multiplier is as good as any)
    let sol = match linalg::solve_checked(&kkt, &rhs) {
        Some(s) => s,
        None => {
            let svd = kkt.clone().svd(true, true);
            let smax = svd.singular_values.max();
            let s = svd
                .solve(&rhs, tol::RANK_TOL * (1.0 + smax))
                .map_err(|_| QpError::MaxPivots)?;
            if (&kkt * &s - &rhs).amax() > 1e-8 * (1.0 + rhs.amax()) {
                return Err(QpError::MaxPivots);
            }
            s
        }
    };
    let v = sol.rows(0, n).into_owned();
    let mu = sol.rows(n, w).into_owned();
    let nu = sol.rows(n + w, p).into_owned();
    Ok((v, mu, nu))
}

/// Phase-1 simplex: returns a feasible point of the constraint system or
/// certifies emptiness. Dense tableau with Bland's rule throughout.
fn simplex_feasible_point(problem: &Ldqp, pivots: &mut usize) -> Result<DVector<f64>, QpError> {
    let n = problem.dim();
    let m = problem.ineq_rhs.len();
    let p = problem.eq_rhs.len();
    let rows = m + p;

    // row-normalized copies: [A; E] u (+ slack) = rhs, all rhs >= 0
    let mut coef = DMatrix::zeros(rows, n);
    let mut rhs = DVector::zeros(rows);
    let mut slack_sign = vec![0.0f64; rows]; // 0 for equality rows
    for i in 0..rows {
        let (row, b) = if i < m {
            (problem.ineq_matrix.row(i).into_owned(), problem.ineq_rhs[i])
        } else {
            (problem.eq_matrix.row(i - m).into_owned(), problem.eq_rhs[i - m])
        };
        let scale = row.norm().max(1e-30);
        let mut r = row / scale;
        let mut b = b / scale;
        let mut sign = if i < m { 1.0 } else { 0.0 };
        if b < 0.0 {
            r = -r;
            b = -b;
            sign = -sign;
        }
        coef.set_row(i, &r);
        rhs[i] = b;
        slack_sign[i] = sign;
    }

    // columns: u+ (n) | u- (n) | slack (m) | artificial (one per row needing it)
    let mut needs_art = vec![false; rows];
    for i in 0..rows {
        needs_art[i] = slack_sign[i] <= 0.0; // negated-slack and equality rows
    }
    let n_art: usize = needs_art.iter().filter(|&&x| x).count();
    let ncols = 2 * n + m + n_art;
    let mut tab = DMatrix::zeros(rows, ncols + 1);
    let mut basis = vec![0usize; rows];
    let mut art_col = 2 * n + m;
    for i in 0..rows {
        for j in 0..n {
            tab[(i, j)] = coef[(i, j)];
            tab[(i, n + j)] = -coef[(i, j)];
        }
        if i < m {
            tab[(i, 2 * n + i)] = slack_sign[i];
        }
        tab[(i, ncols)] = rhs[i];
        if needs_art[i] {
            tab[(i, art_col)] = 1.0;
            basis[i] = art_col;
            art_col += 1;
        } else {
            basis[i] = 2 * n + i; // slack with +1 coefficient
        }
    }

    // phase-1 objective row: reduced costs of "minimize sum of artificials"
    let art_start = 2 * n + m;
    let mut obj = DVector::zeros(ncols + 1);
    for j in art_start..ncols {
        obj[j] = 1.0;
    }
    for i in 0..rows {
        if basis[i] >= art_start {
            for j in 0..=ncols {
                obj[j] -= tab[(i, j)];
            }
        }
    }

    let cap = 20_000usize;
    let mut steps = 0usize;
    loop {
        steps += 1;
        *pivots += 1;
        if steps > cap {
            return Err(QpError::MaxPivots);
        }
        // Bland entering rule: smallest column index with negative reduced cost
        let mut enter = None;
        for j in 0..ncols {
            if obj[j] < -1e-11 {
                enter = Some(j);
                break;
            }
        }
        let Some(enter) = enter else { break };
        // leaving: min ratio, ties to the smallest basis variable index
        let mut leave: Option<usize> = None;
        let mut best = f64::INFINITY;
        for i in 0..rows {
            let a = tab[(i, enter)];
            if a > 1e-11 {
                let ratio = tab[(i, ncols)] / a;
                let better = ratio < best - 1e-12
                    || (ratio < best + 1e-12 && leave.is_some_and(|l| basis[i] < basis[l]));
                if better {
                    best = ratio;
                    leave = Some(i);
                }
            }
        }
        let Some(leave) = leave else {
            // unbounded phase-1 objective cannot happen (bounded below by 0);
            // numerically treat as a failed pivot
            return Err(QpError::MaxPivots);
        };
        // pivot on (leave, enter)
        let piv = tab[(leave, enter)];
        for j in 0..=ncols {
            tab[(leave, j)] /= piv;
        }
        for i in 0..rows {
            if i != leave {
                let f = tab[(i, enter)];
                if f != 0.0 {
                    for j in 0..=ncols {
                        tab[(i, j)] -= f * tab[(leave, j)];
                    }
                }
            }
        }
        let f = obj[enter];
        if f != 0.0 {
            for j in 0..=ncols {
                obj[j] -= f * tab[(leave, j)];
            }
        }
        basis[leave] = enter;
    }

    // infeasibility = optimal sum of artificials
    let mut art_sum = 0.0;
    for i in 0..rows {
        if basis[i] >= art_start {
            art_sum += tab[(i, ncols)];
        }
    }
    if art_sum > tol::FEAS_TOL * 10.0 * (1.0 + rhs.amax()) {
        return Err(QpError::Infeasible);
    }

    let mut u = DVector::zeros(n);
    for i in 0..rows {
        let j = basis[i];
        let val = tab[(i, ncols)];
        if j < n {
            u[j] += val;
        } else if j < 2 * n {
            u[j - n] -= val;
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nonneg_constraints(n: usize) -> (DMatrix<f64>, DVector<f64>) {
        // u >= 0 as -u <= 0
        (-DMatrix::<f64>::identity(n, n), DVector::zeros(n))
    }

    #[test]
    fn unconstrained_minimum() {
        let c = DVector::from_vec(vec![3.0, -2.0]);
        let sol = solve_ldqp(&Ldqp::unconstrained(c.clone())).unwrap();
        assert!((sol.point + c).norm() < 1e-12);
    }

    #[test]
    fn nonneg_example() {
        // c = (-1, 1): minimizer (1, 0) with mu = (0, 1) on the second row
        let (a, b) = nonneg_constraints(2);
        let q = Ldqp::with_ineq(DVector::from_vec(vec![-1.0, 1.0]), a, b);
        let sol = solve_ldqp(&q).unwrap();
        assert!((sol.point[0] - 1.0).abs() < 1e-12);
        assert!(sol.point[1].abs() < 1e-12);
        assert!(sol.ineq_multiplier[0].abs() < 1e-10);
        assert!((sol.ineq_multiplier[1] - 1.0).abs() < 1e-10);
        assert!(kkt_residual(&q, &sol).unwrap() < 1e-10);
    }

    #[test]
    fn equality_closed_form() {
        // c = 0, u1 + u2 = 2: minimizer (1, 1)
        let q = Ldqp {
            linear_term: DVector::zeros(2),
            ineq_matrix: DMatrix::zeros(0, 2),
            ineq_rhs: DVector::zeros(0),
            eq_matrix: DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            eq_rhs: DVector::from_vec(vec![2.0]),
        };
        let sol = solve_ldqp(&q).unwrap();
        assert!((sol.point - DVector::from_vec(vec![1.0, 1.0])).norm() < 1e-12);
    }

    #[test]
    fn infeasible_box() {
        // u <= -1 and -u <= -1 (u >= 1): empty
        let q = Ldqp::with_ineq(
            DVector::zeros(1),
            DMatrix::from_row_slice(2, 1, &[1.0, -1.0]),
            DVector::from_vec(vec![-1.0, -1.0]),
        );
        assert_eq!(solve_ldqp(&q).unwrap_err(), QpError::Infeasible);
    }

    #[test]
    fn inconsistent_equalities() {
        let q = Ldqp {
            linear_term: DVector::zeros(2),
            ineq_matrix: DMatrix::zeros(0, 2),
            ineq_rhs: DVector::zeros(0),
            eq_matrix: DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
            eq_rhs: DVector::from_vec(vec![1.0, 2.0]),
        };
        assert_eq!(solve_ldqp(&q).unwrap_err(), QpError::Infeasible);
    }

    #[test]
    fn phase_one_feasible_start() {
        // projection of the origin onto {u >= 1}: c = 0 with -u <= -1
        let q = Ldqp::with_ineq(
            DVector::zeros(1),
            DMatrix::from_row_slice(1, 1, &[-1.0]),
            DVector::from_vec(vec![-1.0]),
        );
        let sol = solve_ldqp(&q).unwrap();
        assert!((sol.point[0] - 1.0).abs() < 1e-12);
        assert!((sol.ineq_multiplier[0] - 1.0).abs() < 1e-10);
    }

    #[test]
    fn kkt_residual_flags_sign_violation() {
        let (a, b) = nonneg_constraints(1);
        let q = Ldqp::with_ineq(DVector::from_vec(vec![1.0]), a, b);
        let mut sol = solve_ldqp(&q).unwrap();
        sol.ineq_multiplier[0] = -1.0;
        assert!(kkt_residual(&q, &sol).unwrap() >= 1.0);
    }

    #[test]
    fn degenerate_redundant_rows() {
        // duplicated active rows at the solution; solver must not cycle
        let a = DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, -1.0, 0.0, 0.0, -1.0]);
        let b = DVector::zeros(3);
        let q = Ldqp::with_ineq(DVector::from_vec(vec![1.0, 1.0]), a, b);
        let sol = solve_ldqp(&q).unwrap();
        assert!(sol.point.norm() < 1e-12);
        assert!(kkt_residual(&q, &sol).unwrap() < 1e-10);
    }

    #[test]
    fn objective_dominates_feasible_interior() {
        // interior minimizer: constraints inactive, multiplier zero
        let q = Ldqp::with_ineq(
            DVector::from_vec(vec![-0.25, 0.1]),
            DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1.0]),
            DVector::from_vec(vec![1.0, 1.0]),
        );
        let sol = solve_ldqp(&q).unwrap();
        assert!((sol.point - DVector::from_vec(vec![0.25, -0.1])).norm() < 1e-12);
        assert!(sol.ineq_multiplier.amax() < 1e-10);
    }
}
