//! Shared numeric tolerances.
//!
//! Every feasibility, rank, sign, or convergence threshold used for a decision
//! lives here, so each value and its scaling convention appears exactly once.
//! Scale-dependent thresholds are written `REL` and multiplied by `1 + scale`
//! at the call site; helpers below encode the common cases.

/// Relative LU pivot collapse threshold: a pivot below `PIVOT_REL * scale`
/// marks the system as numerically singular.
pub const PIVOT_REL: f64 = 1e-12;

/// Accepted backward residual of a Newton linear solve, relative to 1 + ‖H‖.
pub const LINSOLVE_BACKWARD_REL: f64 = 1e-12;

/// Primal feasibility slack accepted on polyhedral constraints.
pub const FEAS_TOL: f64 = 1e-9;

/// Multiplier sign slack: μ ≥ −MULT_TOL counts as nonnegative.
pub const MULT_TOL: f64 = 1e-10;

/// Step-length threshold below which an active-set subproblem solution is
/// treated as the current point (relative to 1 + ‖u‖).
pub const QP_STEP_REL: f64 = 1e-12;

/// Row activity detection, relative to 1 + ‖d‖.
pub const ACTIVE_REL: f64 = 1e-9;

/// Fixed-point check for normal-cone membership: ‖Π_D(d+λ) − d‖ ≤ this × (1+‖d‖).
pub const NORMAL_CHECK_REL: f64 = 1e-8;

/// Rank decisions on singular values, relative to the largest singular value.
pub const RANK_TOL: f64 = 1e-10;

/// Subspace equality for face dedup: σ_min of the basis cross-Gramian must
/// reach 1 − FACE_DEDUP_TOL (equal dimensions assumed).
pub const FACE_DEDUP_TOL: f64 = 1e-10;

/// Strictness every stored face witness must exhibit on non-tight rows:
/// c_j · h < −WITNESS_STRICT × ‖c_j‖.
pub const WITNESS_STRICT: f64 = 1e-6;

/// Kink detection for proximal maps, relative to 1 + ‖z‖.
pub const KINK_REL: f64 = 1e-9;

/// Subgradient membership check, relative to 1 + ‖d‖.
pub const SUBGRAD_REL: f64 = 1e-10;

/// Condition-number bound above which a matrix counts as numerically singular
/// in regularity enumeration.
pub const COND_BOUND: f64 = 1e12;

/// Nondegeneracy modulus at or below this counts as degenerate.
pub const MODULUS_ZERO_TOL: f64 = 1e-8;

/// Residual norm a constructed problem must reach at its own known solution.
pub const KNOWN_SOLUTION_TOL: f64 = 1e-10;

/// Activity threshold scaled by the point.
pub fn active_tol(point_norm: f64) -> f64 {
    ACTIVE_REL * (1.0 + point_norm)
}

/// Kink threshold scaled by the query point.
pub fn kink_tol(z_norm: f64) -> f64 {
    KINK_REL * (1.0 + z_norm)
}
