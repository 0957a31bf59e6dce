//! Dense linear-algebra helpers shared by the solver modules.
//!
//! Everything here operates on small matrices (desk scale), so SVD- and
//! QR-based routines are used freely where they improve robustness.

use nalgebra::{DMatrix, DVector};

use crate::tol;

/// Solves A x = b by LU with partial pivoting, refusing systems whose pivots
/// collapse below `tol::PIVOT_REL` times the largest pivot. One step of
/// iterative refinement is applied; `None` signals numerical singularity.
pub fn solve_checked(a: &DMatrix<f64>, b: &DVector<f64>) -> Option<DVector<f64>> {
    let n = a.nrows();
    if n != a.ncols() || n != b.len() {
        return None;
    }
    if n == 0 {
        return Some(DVector::zeros(0));
    }
    let lu = a.clone().lu();
    let u = lu.u();
    let mut max_piv: f64 = 0.0;
    let mut min_piv = f64::INFINITY;
    for i in 0..n {
        let p = u[(i, i)].abs();
        max_piv = max_piv.max(p);
        min_piv = min_piv.min(p);
    }
    if !max_piv.is_finite() || min_piv <= tol::PIVOT_REL * max_piv {
        return None;
    }
    let mut x = lu.solve(b)?;
    // one refinement step; cheap and tightens the backward residual
    let r = b - a * &x;
    if let Some(dx) = lu.solve(&r) {
        x += dx;
    }
    if x.iter().all(|v| v.is_finite()) {
        Some(x)
    } else {
        None
    }
}

/// Orthonormal basis of the column space of `a` (may have zero columns).
pub fn orthonormal_range(a: &DMatrix<f64>) -> DMatrix<f64> {
    let rows = a.nrows();
    if rows == 0 || a.ncols() == 0 {
        return DMatrix::zeros(rows, 0);
    }
    let svd = a.clone().svd(true, false);
    let u = svd.u.as_ref().expect("svd with u requested");
    let smax = svd.singular_values.max();
    let cutoff = tol::RANK_TOL * (1.0 + smax);
    let cols: Vec<usize> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, s)| **s > cutoff)
        .map(|(i, _)| i)
        .collect();
    let mut out = DMatrix::zeros(rows, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        out.set_column(j, &u.column(i));
    }
    out
}

/// Orthonormal basis of the kernel of `a` (an r×n matrix; result is n×k).
///
/// Computed as the orthogonal complement of range(aᵀ): robust for wide
/// matrices where a thin SVD of `a` would not expose all kernel directions.
pub fn orthonormal_kernel(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if a.nrows() == 0 {
        return DMatrix::identity(n, n);
    }
    let range = orthonormal_range(&a.transpose());
    let proj = DMatrix::identity(n, n) - &range * range.transpose();
    // the complement projector is symmetric with eigenvalues 0 or 1; the
    // symmetric eigensolver separates them reliably, where the general SVD
    // can fail to converge on near-idempotent input and hand back vectors
    // that are not singular vectors at all
    let eig = nalgebra::SymmetricEigen::new(proj);
    let cols: Vec<usize> = eig
        .eigenvalues
        .iter()
        .enumerate()
        .filter(|(_, v)| **v > 0.5)
        .map(|(i, _)| i)
        .collect();
    let mut out = DMatrix::zeros(n, cols.len());
    for (j, &i) in cols.iter().enumerate() {
        out.set_column(j, &eig.eigenvectors.column(i));
    }
    out
}

/// Orthonormal kernel basis of `a` via full Householder QR of aᵀ with rank
/// tolerance `tol::RANK_TOL` on the R diagonal.
pub fn kernel_via_qr(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.ncols();
    let k = a.nrows();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if k == 0 {
        return DMatrix::identity(n, n);
    }
    let at = a.transpose(); // n×k
    let (q, r) = full_qr(&at);
    let mut rmax: f64 = 0.0;
    for i in 0..k.min(n) {
        rmax = rmax.max(r[(i, i)].abs());
    }
    let cutoff = tol::RANK_TOL * (1.0 + rmax);
    let rank = (0..k.min(n)).filter(|&i| r[(i, i)].abs() > cutoff).count();
    let mut out = DMatrix::zeros(n, n - rank);
    for j in rank..n {
        out.set_column(j - rank, &q.column(j));
    }
    out
}

/// Full (square-Q) Householder QR of an m×k matrix, m ≥ k not required.
pub fn full_qr(a: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = a.nrows();
    let k = a.ncols();
    let mut r = a.clone();
    let mut q = DMatrix::identity(m, m);
    for j in 0..k.min(m) {
        let col = r.view((j, j), (m - j, 1)).into_owned();
        let norm = col.norm();
        if norm <= f64::MIN_POSITIVE {
            continue;
        }
        let mut v = col;
        let sign = if v[0] >= 0.0 { 1.0 } else { -1.0 };
        v[0] += sign * norm;
        let vn = v.norm();
        if vn <= f64::MIN_POSITIVE {
            continue;
        }
        v /= vn;
        // apply H = I − 2vvᵀ to the trailing blocks of R and to Q
        let vt_r = v.transpose() * r.view((j, 0), (m - j, k));
        let update = 2.0 * &v * vt_r;
        let mut block = r.view_mut((j, 0), (m - j, k));
        block -= update;
        let q_v = q.view((0, j), (m, m - j)) * &v;
        let update_q = 2.0 * q_v * v.transpose();
        let mut qblock = q.view_mut((0, j), (m, m - j));
        qblock -= update_q;
    }
    (q, r)
}

/// Smallest singular value (0 for empty matrices).
pub fn smallest_singular_value(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.min()
}

/// Two-norm condition estimate via SVD; +∞ when the matrix is singular.
pub fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 1.0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.max();
    let smin = sv.min();
    if smin <= 0.0 {
        f64::INFINITY
    } else {
        smax / smin
    }
}

/// Whether two orthonormal column blocks span the same subspace: equal widths
/// and all principal-angle cosines at 1 up to `tol::FACE_DEDUP_TOL`.
pub fn same_span(a: &DMatrix<f64>, b: &DMatrix<f64>) -> bool {
    if a.ncols() != b.ncols() {
        return false;
    }
    if a.ncols() == 0 {
        return true;
    }
    let gram = a.transpose() * b;
    smallest_singular_value(&gram) >= 1.0 - tol::FACE_DEDUP_TOL
}

/// Central-difference Jacobian of `f` at `x` with stencil width `h`.
pub fn fd_jacobian(
    f: impl Fn(&DVector<f64>) -> DVector<f64>,
    x: &DVector<f64>,
    h: f64,
) -> DMatrix<f64> {
    let n = x.len();
    let m = f(x).len();
    let mut jac = DMatrix::zeros(m, n);
    for j in 0..n {
        let mut fwd = x.clone();
        let mut bwd = x.clone();
        fwd[j] += h;
        bwd[j] -= h;
        let col = (f(&fwd) - f(&bwd)) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}
