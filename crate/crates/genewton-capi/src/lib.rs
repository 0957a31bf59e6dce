//! C interface to the generalized-equation solvers.
//!
//! Problems and convergence reports live behind opaque handles owned by the
//! caller and released with the matching `_free` function. Every entry point
//! catches unwinds at the boundary and reports them as `Panic` instead of
//! letting them cross into C. Matrices are passed row-major.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use nalgebra::{DMatrix, DVector};

use genewton::ge_composite::{self, CompositeAlgorithm, CompositeError, CompositeGe, GammaSchedule};
use genewton::ge_polyhedral::{self, GeError, PolyAlgorithm, PolyhedralGe};
use genewton::newton::{ConvergenceReport, NewtonConfig, Termination};
use genewton::polyhedral::PolyhedralSet;
use genewton::problems::{make, registry, ProblemParams};
use genewton::prox::{BouligandSelector, ProxFunction};

/// Outcome of a call. `Ok` means the requested object was produced; solver
/// stopping behavior (iteration cap, divergence) is data on the report, not
/// a status.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnStatus {
    Ok = 0,
    /// Null pointer, wrong length, unknown name, or a problem/algorithm
    /// family mismatch.
    InvalidArgument = 1,
    /// The solver hit degenerate structure: ambiguous multiplier, rank loss,
    /// or a singular linear system outside the iteration loop.
    Structural = 2,
    /// The requested datum is not attached to this handle.
    Unavailable = 3,
    /// An internal invariant failed; the unwind was caught at the boundary.
    Panic = 4,
}

/// Solver selection. The first two need the polyhedral encoding, the last
/// two the composite one.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnAlgorithm {
    Ssstar = 0,
    GsemiPoly = 1,
    Scd = 2,
    GsemiComposite = 3,
}

/// Why the iteration stopped.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GnTermination {
    ResidualMet = 0,
    MaxIter = 1,
    Diverged = 2,
    SingularSystem = 3,
}

/// A problem instance: one or both encodings plus an optional reference
/// solution. Opaque to C.
pub struct GnProblem {
    polyhedral: Option<PolyhedralGe>,
    composite: Option<CompositeGe>,
    solution: Option<DVector<f64>>,
}

/// A finished solver run. Opaque to C.
pub struct GnReport {
    inner: ConvergenceReport,
}

fn guard(f: impl FnOnce() -> GnStatus) -> GnStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(GnStatus::Panic)
}

fn guard_value<T>(fallback: T, f: impl FnOnce() -> T) -> T {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(fallback)
}

unsafe fn write_handle<T>(out: *mut *mut T, value: T) -> GnStatus {
    if out.is_null() {
        return GnStatus::InvalidArgument;
    }
    *out = Box::into_raw(Box::new(value));
    GnStatus::Ok
}

unsafe fn slice_arg<'a>(ptr: *const f64, len: usize) -> Option<&'a [f64]> {
    if len == 0 {
        Some(&[])
    } else if ptr.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(ptr, len))
    }
}

fn problem_dim(p: &GnProblem) -> usize {
    p.polyhedral
        .as_ref()
        .map(|g| g.dim())
        .or_else(|| p.composite.as_ref().map(|g| g.dim()))
        .unwrap_or(0)
}

fn status_for_ge(err: &GeError) -> GnStatus {
    match err {
        GeError::QpInfeasible
        | GeError::MultiplierAmbiguous { .. }
        | GeError::DegenerateBase
        | GeError::SingularSystem
        | GeError::Numerical(_) => GnStatus::Structural,
        _ => GnStatus::InvalidArgument,
    }
}

fn status_for_composite(err: &CompositeError) -> GnStatus {
    match err {
        CompositeError::SingularSystem | CompositeError::Numerical(_) => GnStatus::Structural,
        _ => GnStatus::InvalidArgument,
    }
}

/// Builds a registry problem from its name and generator seed.
///
/// # Safety
/// `name` must point to a NUL-terminated string and `out` to writable
/// storage for one pointer. On `Ok` the caller owns the handle and must
/// release it with `gn_problem_free`.
#[no_mangle]
pub unsafe extern "C" fn gn_problem_registry(
    name: *const c_char,
    seed: u64,
    out: *mut *mut GnProblem,
) -> GnStatus {
    guard(|| {
        if name.is_null() || out.is_null() {
            return GnStatus::InvalidArgument;
        }
        let Ok(name) = CStr::from_ptr(name).to_str() else {
            return GnStatus::InvalidArgument;
        };
        if !registry().contains(&name) {
            return GnStatus::InvalidArgument;
        }
        match make(name, &ProblemParams::default(), seed) {
            Ok(made) => {
                let solution = Some(made.solution());
                write_handle(
                    out,
                    GnProblem {
                        polyhedral: made.polyhedral,
                        composite: made.composite,
                        solution,
                    },
                )
            }
            Err(_) => GnStatus::InvalidArgument,
        }
    })
}

unsafe fn composite_from_parts(
    n: usize,
    matrix: *const f64,
    linear: *const f64,
    q: ProxFunction,
    out: *mut *mut GnProblem,
) -> GnStatus {
    let (Some(m), Some(c)) = (slice_arg(matrix, n * n), slice_arg(linear, n)) else {
        return GnStatus::InvalidArgument;
    };
    if n == 0 {
        return GnStatus::InvalidArgument;
    }
    let prob = CompositeGe::affine(
        DMatrix::from_row_slice(n, n, m),
        DVector::from_row_slice(c),
        q,
    );
    write_handle(
        out,
        GnProblem {
            polyhedral: None,
            composite: Some(prob),
            solution: None,
        },
    )
}

/// Builds the l1-regularized composite problem: the generalized equation
/// for Mx + c with the scaled l1 term of weight `tau`, `matrix` row-major.
///
/// # Safety
/// `matrix` must point to n*n doubles, `linear` to n doubles, and `out` to
/// writable storage for one pointer. On `Ok` the caller owns the handle.
#[no_mangle]
pub unsafe extern "C" fn gn_problem_composite_l1(
    n: usize,
    matrix: *const f64,
    linear: *const f64,
    tau: f64,
    out: *mut *mut GnProblem,
) -> GnStatus {
    guard(|| {
        let Ok(q) = ProxFunction::l1(n, tau) else {
            return GnStatus::InvalidArgument;
        };
        composite_from_parts(n, matrix, linear, q, out)
    })
}

/// Builds the nonnegativity-constrained composite problem
/// 0 in Mx + c + N(x), x >= 0.
///
/// # Safety
/// Same layout requirements as `gn_problem_composite_l1`.
#[no_mangle]
pub unsafe extern "C" fn gn_problem_composite_nonneg(
    n: usize,
    matrix: *const f64,
    linear: *const f64,
    out: *mut *mut GnProblem,
) -> GnStatus {
    guard(|| {
        let Ok(q) = ProxFunction::nonneg(n) else {
            return GnStatus::InvalidArgument;
        };
        composite_from_parts(n, matrix, linear, q, out)
    })
}

/// Builds the box-constrained composite problem with componentwise bounds.
///
/// # Safety
/// `lower` and `upper` must each point to n doubles; other arguments as in
/// `gn_problem_composite_l1`.
#[no_mangle]
pub unsafe extern "C" fn gn_problem_composite_box(
    n: usize,
    matrix: *const f64,
    linear: *const f64,
    lower: *const f64,
    upper: *const f64,
    out: *mut *mut GnProblem,
) -> GnStatus {
    guard(|| {
        let (Some(lo), Some(hi)) = (slice_arg(lower, n), slice_arg(upper, n)) else {
            return GnStatus::InvalidArgument;
        };
        let Ok(q) = ProxFunction::box_bounds(
            DVector::from_row_slice(lo),
            DVector::from_row_slice(hi),
        ) else {
            return GnStatus::InvalidArgument;
        };
        composite_from_parts(n, matrix, linear, q, out)
    })
}

/// Builds the variational inequality 0 in Mx + c + N_D(x) over the
/// polyhedron D = {x : Ax <= b, Ex = e}. Row counts of zero admit null
/// matrix/rhs pointers.
///
/// # Safety
/// `matrix` must point to n*n doubles, `linear` to n; `ineq_matrix` to
/// ineq_rows*n and `ineq_rhs` to ineq_rows when ineq_rows > 0 (likewise for
/// the equality block); `out` to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn gn_problem_vi(
    n: usize,
    matrix: *const f64,
    linear: *const f64,
    ineq_rows: usize,
    ineq_matrix: *const f64,
    ineq_rhs: *const f64,
    eq_rows: usize,
    eq_matrix: *const f64,
    eq_rhs: *const f64,
    out: *mut *mut GnProblem,
) -> GnStatus {
    guard(|| {
        if n == 0 {
            return GnStatus::InvalidArgument;
        }
        let parts = (
            slice_arg(matrix, n * n),
            slice_arg(linear, n),
            slice_arg(ineq_matrix, ineq_rows * n),
            slice_arg(ineq_rhs, ineq_rows),
            slice_arg(eq_matrix, eq_rows * n),
            slice_arg(eq_rhs, eq_rows),
        );
        let (Some(m), Some(c), Some(a), Some(b), Some(e), Some(erhs)) = parts else {
            return GnStatus::InvalidArgument;
        };
        let set = match PolyhedralSet::new(
            n,
            DMatrix::from_row_slice(ineq_rows, n, a),
            DVector::from_row_slice(b),
            DMatrix::from_row_slice(eq_rows, n, e),
            DVector::from_row_slice(erhs),
        ) {
            Ok(set) => set,
            Err(_) => return GnStatus::InvalidArgument,
        };
        let prob = PolyhedralGe::affine(
            DMatrix::from_row_slice(n, n, m),
            DVector::from_row_slice(c),
            set,
        );
        write_handle(
            out,
            GnProblem {
                polyhedral: Some(prob),
                composite: None,
                solution: None,
            },
        )
    })
}

/// Number of unknowns, or 0 for a null handle.
///
/// # Safety
/// `p` must be null or a live handle from a constructor.
#[no_mangle]
pub unsafe extern "C" fn gn_problem_dim(p: *const GnProblem) -> usize {
    guard_value(0, || if p.is_null() { 0 } else { problem_dim(&*p) })
}

/// Copies the constructed reference solution into `buf`. `Unavailable` when
/// the problem was built without one.
///
/// # Safety
/// `p` must be a live handle and `buf` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gn_problem_solution(
    p: *const GnProblem,
    buf: *mut f64,
    len: usize,
) -> GnStatus {
    guard(|| {
        if p.is_null() || buf.is_null() {
            return GnStatus::InvalidArgument;
        }
        let Some(solution) = (*p).solution.as_ref() else {
            return GnStatus::Unavailable;
        };
        if len != solution.len() {
            return GnStatus::InvalidArgument;
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(solution.as_slice());
        GnStatus::Ok
    })
}

/// Releases a problem handle. Null is a no-op.
///
/// # Safety
/// `p` must be null or a handle obtained from a constructor, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gn_problem_free(p: *mut GnProblem) {
    guard_value((), || {
        if !p.is_null() {
            drop(Box::from_raw(p));
        }
    });
}

/// Runs a solver. `x0` may be null for the origin; `gamma <= 0`, `tol <= 0`,
/// and `max_iter == 0` select the defaults (1, 1e-10, 50). On `Ok` the
/// caller owns the report handle.
///
/// # Safety
/// `p` must be a live problem handle; `x0`, when non-null, must point to
/// `x0_len` doubles with `x0_len` equal to the problem dimension; `out` must
/// point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn gn_solve(
    p: *const GnProblem,
    algorithm: GnAlgorithm,
    x0: *const f64,
    x0_len: usize,
    gamma: f64,
    tol: f64,
    max_iter: usize,
    out: *mut *mut GnReport,
) -> GnStatus {
    guard(|| {
        if p.is_null() || out.is_null() {
            return GnStatus::InvalidArgument;
        }
        let prob = &*p;
        let n = problem_dim(prob);
        let start = if x0.is_null() {
            DVector::zeros(n)
        } else {
            if x0_len != n {
                return GnStatus::InvalidArgument;
            }
            DVector::from_row_slice(std::slice::from_raw_parts(x0, n))
        };
        let mut config = NewtonConfig::default();
        if tol > 0.0 {
            config.tol_residual = tol;
        }
        if max_iter > 0 {
            config.max_iter = max_iter;
        }
        let reference = prob.solution.as_ref();
        let solved = match algorithm {
            GnAlgorithm::Ssstar | GnAlgorithm::GsemiPoly => {
                let Some(ge) = prob.polyhedral.as_ref() else {
                    return GnStatus::InvalidArgument;
                };
                let alg = if algorithm == GnAlgorithm::Ssstar {
                    PolyAlgorithm::Ssstar
                } else {
                    PolyAlgorithm::Gsemi
                };
                ge_polyhedral::solve(ge, &start, alg, &config, reference)
                    .map_err(|e| status_for_ge(&e))
            }
            GnAlgorithm::Scd | GnAlgorithm::GsemiComposite => {
                let Some(ge) = prob.composite.as_ref() else {
                    return GnStatus::InvalidArgument;
                };
                let alg = if algorithm == GnAlgorithm::Scd {
                    CompositeAlgorithm::Scd
                } else {
                    CompositeAlgorithm::Gsemi
                };
                let schedule = if gamma > 0.0 {
                    match GammaSchedule::constant(gamma) {
                        Ok(s) => s,
                        Err(_) => return GnStatus::InvalidArgument,
                    }
                } else {
                    GammaSchedule::default()
                };
                ge_composite::solve(
                    ge,
                    &start,
                    alg,
                    &schedule,
                    BouligandSelector::Lower,
                    &config,
                    reference,
                )
                .map_err(|e| status_for_composite(&e))
            }
        };
        match solved {
            Ok(report) => write_handle(out, GnReport { inner: report }),
            Err(status) => status,
        }
    })
}

/// Number of stored iterates (starting point included), or 0 for null.
///
/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn gn_report_len(r: *const GnReport) -> usize {
    guard_value(0, || {
        if r.is_null() {
            0
        } else {
            (*r).inner.iterates.len()
        }
    })
}

/// Dimension of the iterates, or 0 for null/empty.
///
/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn gn_report_dim(r: *const GnReport) -> usize {
    guard_value(0, || {
        if r.is_null() {
            0
        } else {
            let report = &*r;
            report.inner.iterates.first().map_or(0, |x| x.len())
        }
    })
}

/// Why the run stopped. Null reports read as `SingularSystem`, the most
/// pessimistic answer.
///
/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn gn_report_termination(r: *const GnReport) -> GnTermination {
    guard_value(GnTermination::SingularSystem, || {
        if r.is_null() {
            return GnTermination::SingularSystem;
        }
        match (*r).inner.termination {
            Termination::ResidualMet => GnTermination::ResidualMet,
            Termination::MaxIter => GnTermination::MaxIter,
            Termination::Diverged => GnTermination::Diverged,
            Termination::SingularSystem => GnTermination::SingularSystem,
        }
    })
}

/// Copies iterate `index` into `buf`.
///
/// # Safety
/// `r` must be a live report handle and `buf` must point to `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gn_report_iterate(
    r: *const GnReport,
    index: usize,
    buf: *mut f64,
    len: usize,
) -> GnStatus {
    guard(|| {
        if r.is_null() || buf.is_null() {
            return GnStatus::InvalidArgument;
        }
        let report = &*r;
        let Some(x) = report.inner.iterates.get(index) else {
            return GnStatus::InvalidArgument;
        };
        if len != x.len() {
            return GnStatus::InvalidArgument;
        }
        std::slice::from_raw_parts_mut(buf, len).copy_from_slice(x.as_slice());
        GnStatus::Ok
    })
}

/// Residual norm at iterate `index`; NaN for null handles or out-of-range
/// indices.
///
/// # Safety
/// `r` must be null or a live report handle.
#[no_mangle]
pub unsafe extern "C" fn gn_report_residual_norm(r: *const GnReport, index: usize) -> f64 {
    guard_value(f64::NAN, || {
        if r.is_null() {
            return f64::NAN;
        }
        let report = &*r;
        report
            .inner
            .residual_norms
            .get(index)
            .copied()
            .unwrap_or(f64::NAN)
    })
}

/// Releases a report handle. Null is a no-op.
///
/// # Safety
/// `r` must be null or a handle obtained from `gn_solve`, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gn_report_free(r: *mut GnReport) {
    guard_value((), || {
        if !r.is_null() {
            drop(Box::from_raw(r));
        }
    });
}

/// Static NUL-terminated name for a status code.
///
/// # Safety
/// Always safe; the returned pointer has static lifetime and must not be
/// freed.
#[no_mangle]
pub unsafe extern "C" fn gn_status_name(status: GnStatus) -> *const c_char {
    let name: &'static [u8] = match status {
        GnStatus::Ok => b"ok\0",
        GnStatus::InvalidArgument => b"invalid_argument\0",
        GnStatus::Structural => b"structural\0",
        GnStatus::Unavailable => b"unavailable\0",
        GnStatus::Panic => b"panic\0",
    };
    name.as_ptr().cast()
}
