/* C interface to the genewton generalized-equation solvers. */

#ifndef GENEWTON_H
#define GENEWTON_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Solver selection. The first two need the polyhedral encoding, the last
 * two the composite one.
 */
typedef enum GnAlgorithm {
  GN_ALGORITHM_SSSTAR = 0,
  GN_ALGORITHM_GSEMI_POLY = 1,
  GN_ALGORITHM_SCD = 2,
  GN_ALGORITHM_GSEMI_COMPOSITE = 3,
} GnAlgorithm;

/**
 * Outcome of a call. `Ok` means the requested object was produced; solver
 * stopping behavior (iteration cap, divergence) is data on the report, not
 * a status.
 */
typedef enum GnStatus {
  GN_STATUS_OK = 0,
  /**
   * Null pointer, wrong length, unknown name, or a problem/algorithm
   * family mismatch.
   */
  GN_STATUS_INVALID_ARGUMENT = 1,
  /**
   * The solver hit degenerate structure: ambiguous multiplier, rank loss,
   * or a singular linear system outside the iteration loop.
   */
  GN_STATUS_STRUCTURAL = 2,
  /**
   * The requested datum is not attached to this handle.
   */
  GN_STATUS_UNAVAILABLE = 3,
  /**
   * An internal invariant failed; the unwind was caught at the boundary.
   */
  GN_STATUS_PANIC = 4,
} GnStatus;

/**
 * Why the iteration stopped.
 */
typedef enum GnTermination {
  GN_TERMINATION_RESIDUAL_MET = 0,
  GN_TERMINATION_MAX_ITER = 1,
  GN_TERMINATION_DIVERGED = 2,
  GN_TERMINATION_SINGULAR_SYSTEM = 3,
} GnTermination;

/**
 * A problem instance: one or both encodings plus an optional reference
 * solution. Opaque to C.
 */
typedef struct GnProblem GnProblem;

/**
 * A finished solver run. Opaque to C.
 */
typedef struct GnReport GnReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a registry problem from its name and generator seed.
 *
 * # Safety
 * `name` must point to a NUL-terminated string and `out` to writable
 * storage for one pointer. On `Ok` the caller owns the handle and must
 * release it with `gn_problem_free`.
 */
enum GnStatus gn_problem_registry(const char *name, uint64_t seed, struct GnProblem **out);

/**
 * Builds the l1-regularized composite problem: the generalized equation
 * for Mx + c with the scaled l1 term of weight `tau`, `matrix` row-major.
 *
 * # Safety
 * `matrix` must point to n*n doubles, `linear` to n doubles, and `out` to
 * writable storage for one pointer. On `Ok` the caller owns the handle.
 */
enum GnStatus gn_problem_composite_l1(size_t n,
                                      const double *matrix,
                                      const double *linear,
                                      double tau,
                                      struct GnProblem **out);

/**
 * Builds the nonnegativity-constrained composite problem
 * 0 in Mx + c + N(x), x >= 0.
 *
 * # Safety
 * Same layout requirements as `gn_problem_composite_l1`.
 */
enum GnStatus gn_problem_composite_nonneg(size_t n,
                                          const double *matrix,
                                          const double *linear,
                                          struct GnProblem **out);

/**
 * Builds the box-constrained composite problem with componentwise bounds.
 *
 * # Safety
 * `lower` and `upper` must each point to n doubles; other arguments as in
 * `gn_problem_composite_l1`.
 */
enum GnStatus gn_problem_composite_box(size_t n,
                                       const double *matrix,
                                       const double *linear,
                                       const double *lower,
                                       const double *upper,
                                       struct GnProblem **out);

/**
 * Builds the variational inequality 0 in Mx + c + N_D(x) over the
 * polyhedron D = {x : Ax <= b, Ex = e}. Row counts of zero admit null
 * matrix/rhs pointers.
 *
 * # Safety
 * `matrix` must point to n*n doubles, `linear` to n; `ineq_matrix` to
 * ineq_rows*n and `ineq_rhs` to ineq_rows when ineq_rows > 0 (likewise for
 * the equality block); `out` to writable storage for one pointer.
 */
enum GnStatus gn_problem_vi(size_t n,
                            const double *matrix,
                            const double *linear,
                            size_t ineq_rows,
                            const double *ineq_matrix,
                            const double *ineq_rhs,
                            size_t eq_rows,
                            const double *eq_matrix,
                            const double *eq_rhs,
                            struct GnProblem **out);

/**
 * Number of unknowns, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live handle from a constructor.
 */
size_t gn_problem_dim(const struct GnProblem *p);

/**
 * Copies the constructed reference solution into `buf`. `Unavailable` when
 * the problem was built without one.
 *
 * # Safety
 * `p` must be a live handle and `buf` must point to `len` doubles.
 */
enum GnStatus gn_problem_solution(const struct GnProblem *p, double *buf, size_t len);

/**
 * Releases a problem handle. Null is a no-op.
 *
 * # Safety
 * `p` must be null or a handle obtained from a constructor, not yet freed.
 */
void gn_problem_free(struct GnProblem *p);

/**
 * Runs a solver. `x0` may be null for the origin; `gamma <= 0`, `tol <= 0`,
 * and `max_iter == 0` select the defaults (1, 1e-10, 50). On `Ok` the
 * caller owns the report handle.
 *
 * # Safety
 * `p` must be a live problem handle; `x0`, when non-null, must point to
 * `x0_len` doubles with `x0_len` equal to the problem dimension; `out` must
 * point to writable storage for one pointer.
 */
enum GnStatus gn_solve(const struct GnProblem *p,
                       enum GnAlgorithm algorithm,
                       const double *x0,
                       size_t x0_len,
                       double gamma,
                       double tol,
                       size_t max_iter,
                       struct GnReport **out);

/**
 * Number of stored iterates (starting point included), or 0 for null.
 *
 * # Safety
 * `r` must be null or a live report handle.
 */
size_t gn_report_len(const struct GnReport *r);

/**
 * Dimension of the iterates, or 0 for null/empty.
 *
 * # Safety
 * `r` must be null or a live report handle.
 */
size_t gn_report_dim(const struct GnReport *r);

/**
 * Why the run stopped. Null reports read as `SingularSystem`, the most
 * pessimistic answer.
 *
 * # Safety
 * `r` must be null or a live report handle.
 */
enum GnTermination gn_report_termination(const struct GnReport *r);

/**
 * Copies iterate `index` into `buf`.
 *
 * # Safety
 * `r` must be a live report handle and `buf` must point to `len` doubles.
 */
enum GnStatus gn_report_iterate(const struct GnReport *r, size_t index, double *buf, size_t len);

/**
 * Residual norm at iterate `index`; NaN for null handles or out-of-range
 * indices.
 *
 * # Safety
 * `r` must be null or a live report handle.
 */
double gn_report_residual_norm(const struct GnReport *r, size_t index);

/**
 * Releases a report handle. Null is a no-op.
 *
 * # Safety
 * `r` must be null or a handle obtained from `gn_solve`, not yet freed.
 */
void gn_report_free(struct GnReport *r);

/**
 * Static NUL-terminated name for a status code.
 *
 * # Safety
 * Always safe; the returned pointer has static lifetime and must not be
 * freed.
 */
const char *gn_status_name(enum GnStatus status);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GENEWTON_H */
