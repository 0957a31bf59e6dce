//! Seeded generators of small generalized-equation instances with known
//! solutions. Solutions are constructed forward: pick the solution and an
//! activity pattern, then back-solve the affine data so optimality holds
//! exactly. Every instance is verified against its own solution before it is
//! returned, and (name, params, seed) determines the instance bit for bit.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ge_composite::{self, CompositeGe};
use crate::ge_polyhedral::{self, PolyhedralGe};
use crate::polyhedral::PolyhedralSet;
use crate::prox::ProxFunction;

/// Residual bound a constructed solution must meet before the instance is
/// released.
const SOLUTION_VERIFY_TOL: f64 = 1e-12;

const MAX_ATTEMPTS: usize = 100;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("unknown problem name {0:?}")]
    UnknownName(String),
    #[error("could not construct {name:?} within {attempts} attempts")]
    ConstructionFailed { name: String, attempts: usize },
    #[error("bad problem parameters: {0}")]
    BadParams(String),
}

/// Generator knobs. Every field is optional; absent fields take the
/// documented defaults. Unknown keys in the JSON form are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProblemParams {
    /// Dimension (default 4; nonlinear_g_poly is fixed at 2).
    pub n: Option<usize>,
    /// Activity pattern: "inactive", "active", or "mixed" (default).
    pub pattern: Option<String>,
    /// Probability that a coordinate is constrained under "mixed" (default 0.5).
    pub active_fraction: Option<f64>,
    /// Diagonal shift making the affine part strongly monotone (default 1).
    pub delta: Option<f64>,
    /// Magnitude of the random part of the affine matrix (default 1; 0 gives
    /// delta times the identity exactly).
    pub scale: Option<f64>,
    /// Strict-complementarity margin (default 0.1).
    pub margin: Option<f64>,
    /// l1 weight (default 1).
    pub tau: Option<f64>,
    /// Curvature of the nonlinear constraint component (default 0.5).
    pub alpha: Option<f64>,
    /// Box bounds (defaults -1 and 1).
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    /// Required nondegeneracy modulus at the solution (default 0.5).
    pub min_modulus: Option<f64>,
    /// Explicit solution; when given, the activity pattern is read off its
    /// coordinates instead of sampled.
    pub xbar: Option<Vec<f64>>,
}

impl ProblemParams {
    fn n(&self) -> usize {
        self.n.unwrap_or(4)
    }
    fn pattern(&self) -> &str {
        self.pattern.as_deref().unwrap_or("mixed")
    }
    fn active_fraction(&self) -> f64 {
        self.active_fraction.unwrap_or(0.5)
    }
    fn delta(&self) -> f64 {
        self.delta.unwrap_or(1.0)
    }
    fn scale(&self) -> f64 {
        self.scale.unwrap_or(1.0)
    }
    fn margin(&self) -> f64 {
        self.margin.unwrap_or(0.1)
    }
    fn tau(&self) -> f64 {
        self.tau.unwrap_or(1.0)
    }
    fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(0.5)
    }
    fn lower(&self) -> f64 {
        self.lower.unwrap_or(-1.0)
    }
    fn upper(&self) -> f64 {
        self.upper.unwrap_or(1.0)
    }
    fn min_modulus(&self) -> f64 {
        self.min_modulus.unwrap_or(0.5)
    }

    fn validate(&self, name: &str) -> Result<(), ProblemError> {
        let bad = |m: String| Err(ProblemError::BadParams(m));
        if self.n() == 0 {
            return bad("dimension must be positive".into());
        }
        if !matches!(self.pattern(), "inactive" | "active" | "mixed") {
            return bad(format!("unknown pattern {:?}", self.pattern()));
        }
        if self.delta() <= 0.0 || !self.delta().is_finite() {
            return bad("delta must be a positive finite number".into());
        }
        if self.scale() < 0.0 || !self.scale().is_finite() {
            return bad("scale must be a nonnegative finite number".into());
        }
        if self.margin() <= 0.0 || !self.margin().is_finite() {
            return bad("margin must be a positive finite number".into());
        }
        if name == "l1_quadratic" && self.margin() >= 1.0 {
            return bad("margin must be below 1 for l1_quadratic".into());
        }
        if self.tau() <= 0.0 || !self.tau().is_finite() {
            return bad("tau must be a positive finite number".into());
        }
        if !self.alpha().is_finite() {
            return bad("alpha must be finite".into());
        }
        if !(0.0..=1.0).contains(&self.active_fraction()) {
            return bad("active_fraction must lie in [0, 1]".into());
        }
        if self.lower() >= self.upper()
            || !self.lower().is_finite()
            || !self.upper().is_finite()
        {
            return bad("box bounds must be finite with lower < upper".into());
        }
        if self.min_modulus() <= 0.0 || !self.min_modulus().is_finite() {
            return bad("min_modulus must be a positive finite number".into());
        }
        if let Some(xbar) = &self.xbar {
            let n = if name == "nonlinear_g_poly" { 2 } else { self.n() };
            if xbar.len() != n {
                return bad(format!(
                    "explicit solution has length {}, expected {}",
                    xbar.len(),
                    n
                ));
            }
            if !xbar.iter().all(|v| v.is_finite()) {
                return bad("explicit solution must be finite".into());
            }
        }
        Ok(())
    }
}

/// Identifying data of a generated instance, serializable for reports.
#[derive(Debug, Clone, Serialize)]
pub struct ProblemSpec {
    pub name: String,
    pub params: ProblemParams,
    pub seed: u64,
    pub known_solution: Vec<f64>,
    pub known_multiplier: Option<Vec<f64>>,
}

/// A constructed instance: at least one encoding is present, and both are
/// when the constraint map is the identity.
pub struct GeneratedProblem {
    pub spec: ProblemSpec,
    pub polyhedral: Option<PolyhedralGe>,
    pub composite: Option<CompositeGe>,
}

impl GeneratedProblem {
    pub fn solution(&self) -> DVector<f64> {
        DVector::from_vec(self.spec.known_solution.clone())
    }

    pub fn multiplier(&self) -> Option<DVector<f64>> {
        self.spec
            .known_multiplier
            .as_ref()
            .map(|m| DVector::from_vec(m.clone()))
    }
}

pub fn registry() -> &'static [&'static str] {
    &["ncp_affine", "box_vi", "l1_quadratic", "nonlinear_g_poly"]
}

pub fn make(
    name: &str,
    params: &ProblemParams,
    seed: u64,
) -> Result<GeneratedProblem, ProblemError> {
    if !registry().contains(&name) {
        return Err(ProblemError::UnknownName(name.to_string()));
    }
    params.validate(name)?;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let candidate = match name {
            "ncp_affine" => attempt_ncp_affine(params, &mut rng),
            "box_vi" => attempt_box_vi(params, &mut rng),
            "l1_quadratic" => attempt_l1_quadratic(params, &mut rng),
            "nonlinear_g_poly" => attempt_nonlinear_g_poly(params, &mut rng),
            _ => unreachable!(),
        };
        if let Some((polyhedral, composite, solution, multiplier)) = candidate {
            if !verify(&polyhedral, &composite, &solution) {
                continue;
            }
            return Ok(GeneratedProblem {
                spec: ProblemSpec {
                    name: name.to_string(),
                    params: params.clone(),
                    seed,
                    known_solution: solution.iter().cloned().collect(),
                    known_multiplier: multiplier.map(|m| m.iter().cloned().collect()),
                },
                polyhedral,
                composite,
            });
        }
    }
    Err(ProblemError::ConstructionFailed {
        name: name.to_string(),
        attempts: MAX_ATTEMPTS,
    })
}

fn verify(
    polyhedral: &Option<PolyhedralGe>,
    composite: &Option<CompositeGe>,
    xbar: &DVector<f64>,
) -> bool {
    if let Some(p) = polyhedral {
        match ge_polyhedral::approximation_step(p, xbar) {
            Ok(step) if step.u_hat.norm() <= SOLUTION_VERIFY_TOL => {}
            _ => return false,
        }
    }
    if let Some(c) = composite {
        if ge_composite::residual(c, 1.0, xbar).norm() > SOLUTION_VERIFY_TOL {
            return false;
        }
    }
    true
}

type Candidate = (
    Option<PolyhedralGe>,
    Option<CompositeGe>,
    DVector<f64>,
    Option<DVector<f64>>,
);

fn random_monotone(n: usize, scale: f64, delta: f64, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, n, |_, _| scale * rng.gen_range(-1.0..1.0));
    a.transpose() * a + delta * DMatrix::identity(n, n)
}

/// Complementarity problem: F(x) = Mx + c over the nonnegative orthant,
/// with c back-solved so the chosen pattern holds at the solution.
fn attempt_ncp_affine(params: &ProblemParams, rng: &mut ChaCha20Rng) -> Option<Candidate> {
    let n = params.n();
    let margin = params.margin();
    let (xbar, active): (DVector<f64>, Vec<bool>) = match &params.xbar {
        Some(v) => {
            if v.iter().any(|&x| x < 0.0) {
                return None;
            }
            (
                DVector::from_vec(v.clone()),
                v.iter().map(|&x| x == 0.0).collect(),
            )
        }
        None => {
            let active: Vec<bool> = (0..n)
                .map(|_| match params.pattern() {
                    "inactive" => false,
                    "active" => true,
                    _ => rng.gen_bool(params.active_fraction()),
                })
                .collect();
            let xbar = DVector::from_fn(n, |i, _| {
                if active[i] {
                    0.0
                } else {
                    rng.gen_range(0.5..2.5)
                }
            });
            (xbar, active)
        }
    };
    // F value at the solution: zero on free coordinates, a positive margin on
    // constrained ones, so -F(xbar) lies in the orthant's normal cone
    let fbar = DVector::from_fn(n, |i, _| {
        if active[i] {
            rng.gen_range(margin..margin + 1.0)
        } else {
            0.0
        }
    });
    let m = random_monotone(n, params.scale(), params.delta(), rng);
    let c = &fbar - &m * &xbar;
    let multiplier = -&fbar;

    let poly = PolyhedralGe::affine(m.clone(), c.clone(), PolyhedralSet::nonneg_orthant(n));
    let comp = CompositeGe::affine(m, c, ProxFunction::nonneg(n).ok()?);
    Some((Some(poly), Some(comp), xbar, Some(multiplier)))
}

/// Variational inequality over a box; same affine structure as ncp_affine
/// with lower- and upper-bound activity.
fn attempt_box_vi(params: &ProblemParams, rng: &mut ChaCha20Rng) -> Option<Candidate> {
    let n = params.n();
    let (lo, hi) = (params.lower(), params.upper());
    let margin = params.margin();
    // 0 = interior, 1 = at lower bound, 2 = at upper bound
    let (xbar, side): (DVector<f64>, Vec<u8>) = match &params.xbar {
        Some(v) => {
            if v.iter().any(|&x| x < lo || x > hi) {
                return None;
            }
            let side = v
                .iter()
                .map(|&x| {
                    if x == lo {
                        1
                    } else if x == hi {
                        2
                    } else {
                        0
                    }
                })
                .collect();
            (DVector::from_vec(v.clone()), side)
        }
        None => {
            let side: Vec<u8> = (0..n)
                .map(|_| match params.pattern() {
                    "inactive" => 0,
                    "active" => {
                        if rng.gen_bool(0.5) {
                            1
                        } else {
                            2
                        }
                    }
                    _ => {
                        if rng.gen_bool(params.active_fraction()) {
                            if rng.gen_bool(0.5) {
                                1
                            } else {
                                2
                            }
                        } else {
                            0
                        }
                    }
                })
                .collect();
            let gap = hi - lo;
            let xbar = DVector::from_fn(n, |i, _| match side[i] {
                1 => lo,
                2 => hi,
                _ => rng.gen_range(lo + 0.2 * gap..hi - 0.2 * gap),
            });
            (xbar, side)
        }
    };
    // at a lower bound F must point inward (positive), at an upper bound
    // outward (negative), and vanish on interior coordinates
    let fbar = DVector::from_fn(n, |i, _| match side[i] {
        1 => rng.gen_range(margin..margin + 1.0),
        2 => -rng.gen_range(margin..margin + 1.0),
        _ => 0.0,
    });
    let m = random_monotone(n, params.scale(), params.delta(), rng);
    let c = &fbar - &m * &xbar;
    let lower = DVector::from_element(n, lo);
    let upper = DVector::from_element(n, hi);

    let poly = PolyhedralGe::affine(
        m.clone(),
        c.clone(),
        PolyhedralSet::box_set(&lower, &upper).ok()?,
    );
    let comp = CompositeGe::affine(m, c, ProxFunction::box_bounds(lower, upper).ok()?);
    Some((Some(poly), Some(comp), xbar, Some(-fbar)))
}

/// l1-regularized strongly convex quadratic: F(x) = Qx - b with q the
/// weighted l1 norm; b back-solved from a sign pattern with a strict
/// complementarity margin on the zero coordinates.
fn attempt_l1_quadratic(params: &ProblemParams, rng: &mut ChaCha20Rng) -> Option<Candidate> {
    let n = params.n();
    let tau = params.tau();
    let margin = params.margin();
    let xbar = match &params.xbar {
        Some(v) => DVector::from_vec(v.clone()),
        None => DVector::from_fn(n, |_, _| {
            if rng.gen_bool(params.active_fraction()) {
                0.0
            } else {
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                sign * rng.gen_range(margin.max(0.5)..2.0)
            }
        }),
    };
    // subgradient of the l1 norm at xbar: the sign on supports, strictly
    // inside the unit interval elsewhere
    let gbar = DVector::from_fn(n, |i, _| {
        if xbar[i] != 0.0 {
            xbar[i].signum()
        } else {
            rng.gen_range(-(1.0 - margin)..=(1.0 - margin))
        }
    });
    let q = random_monotone(n, params.scale(), params.delta(), rng);
    let b = &q * &xbar + tau * &gbar;
    let comp = CompositeGe::affine(q, -b, ProxFunction::l1(n, tau).ok()?);
    Some((None, Some(comp), xbar, Some(tau * gbar)))
}

/// Two-dimensional instance whose constraint map has a genuinely nonlinear
/// component: G(x) = (x1 + alpha x2^2, x2) over the nonnegative orthant,
/// built so the first constraint is active with a strictly negative
/// multiplier and the nondegeneracy modulus clears the requested floor.
fn attempt_nonlinear_g_poly(params: &ProblemParams, rng: &mut ChaCha20Rng) -> Option<Candidate> {
    let alpha = params.alpha();
    let margin = params.margin();
    let xbar = match &params.xbar {
        Some(v) => DVector::from_vec(v.clone()),
        None => {
            let x2 = rng.gen_range(0.5..1.5);
            DVector::from_vec(vec![-alpha * x2 * x2, x2])
        }
    };
    let multiplier = DVector::from_vec(vec![-rng.gen_range(margin..margin + 1.0), 0.0]);
    let m = random_monotone(2, params.scale(), params.delta(), rng);
    let jac_g_bar =
        DMatrix::from_row_slice(2, 2, &[1.0, 2.0 * alpha * xbar[1], 0.0, 1.0]);
    let c = -jac_g_bar.transpose() * &multiplier - &m * &xbar;

    let prob = PolyhedralGe::new(
        2,
        PolyhedralSet::nonneg_orthant(2),
        {
            let (m, c) = (m.clone(), c.clone());
            move |x: &DVector<f64>| &m * x + &c
        },
        move |_: &DVector<f64>| m.clone(),
        move |x: &DVector<f64>| {
            DVector::from_vec(vec![x[0] + alpha * x[1] * x[1], x[1]])
        },
        move |x: &DVector<f64>| {
            DMatrix::from_row_slice(2, 2, &[1.0, 2.0 * alpha * x[1], 0.0, 1.0])
        },
        move |_: &DVector<f64>, lam: &DVector<f64>| {
            DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 2.0 * alpha * lam[0]])
        },
        move |_: &DVector<f64>, u: &DVector<f64>| {
            DMatrix::from_row_slice(2, 2, &[0.0, 2.0 * alpha * u[1], 0.0, 0.0])
        },
    );

    let ghat = DVector::from_vec(vec![xbar[0] + alpha * xbar[1] * xbar[1], xbar[1]]);
    let modulus = ge_polyhedral::nondegeneracy_modulus(&prob, &xbar, &ghat).ok()?;
    if modulus < params.min_modulus() {
        return None;
    }
    Some((Some(prob), None, xbar, Some(multiplier)))
}
