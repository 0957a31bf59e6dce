//! Polyhedrally constrained generalized equations 0 in F(x) + dG(x) N_D(G(x)).
//!
//! The central object is the approximation step: a least-distance QP whose
//! solution u_hat plays the role of a residual (it vanishes exactly at
//! solutions) and whose multiplier pins the active face of D. Two local
//! methods are built on top of it. The span-reduced iteration solves a
//! stacked linear system split along the normal and tangent subspaces of the
//! face; the generalized-derivative iteration feeds a selected matrix from
//! the solution map's derivative set into the generic Newton driver. The two
//! produce the same steps, which the test suite checks, and both converge
//! superlinearly near nondegenerate solutions.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;
use crate::newton::{self, ConvergenceReport, IterationMeta, NewtonConfig, Termination};
use crate::polyhedral::{PolyhedralError, PolyhedralSet};
use crate::qp::{self, Ldqp, QpError};
use crate::tol;

type VecFn = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatFn = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;
type BilinMatFn = Box<dyn Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync>;

#[derive(Debug, Error)]
pub enum GeError {
    #[error("linearized constraint set is empty at this point")]
    QpInfeasible,
    #[error("degenerate normal geometry: multiplier not unique (modulus {modulus:.3e})")]
    MultiplierAmbiguous { modulus: f64 },
    #[error("normal-span base is rank deficient; no derivative element exists")]
    DegenerateBase,
    #[error("Newton system is numerically singular")]
    SingularSystem,
    #[error("mismatched dimensions: {0}")]
    Shape(String),
    #[error(transparent)]
    Set(#[from] PolyhedralError),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl From<QpError> for GeError {
    fn from(e: QpError) -> Self {
        match e {
            QpError::Infeasible => GeError::QpInfeasible,
            other => GeError::Numerical(other.to_string()),
        }
    }
}

/// Problem data for the polyhedral generalized equation. `f` and `g` are the
/// smooth maps, `jac_*` their Jacobians; `hess_g_lambda(x, lam)` is the
/// lambda-weighted sum of the component Hessians of `g`, and
/// `djac_g_u(x, u)` is the derivative in x of the map x -> jac_g(x) u.
pub struct PolyhedralGe {
    n: usize,
    s: usize,
    f: VecFn,
    jac_f: MatFn,
    g: VecFn,
    jac_g: MatFn,
    hess_g_lambda: BilinMatFn,
    djac_g_u: BilinMatFn,
    set: PolyhedralSet,
}

impl PolyhedralGe {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        n: usize,
        set: PolyhedralSet,
        f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        jac_f: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        g: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        jac_g: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        hess_g_lambda: impl Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
        djac_g_u: impl Fn(&DVector<f64>, &DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        let s = set.dim();
        PolyhedralGe {
            n,
            s,
            f: Box::new(f),
            jac_f: Box::new(jac_f),
            g: Box::new(g),
            jac_g: Box::new(jac_g),
            hess_g_lambda: Box::new(hess_g_lambda),
            djac_g_u: Box::new(djac_g_u),
            set,
        }
    }

    /// Variational inequality over `set`: G is the identity, so s = n and all
    /// second-derivative terms vanish.
    pub fn with_identity_g(
        set: PolyhedralSet,
        f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        jac_f: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        let n = set.dim();
        PolyhedralGe::new(
            n,
            set,
            f,
            jac_f,
            |x| x.clone(),
            move |x| DMatrix::identity(x.len(), x.len()),
            move |x, _| DMatrix::zeros(x.len(), x.len()),
            move |x, _| DMatrix::zeros(x.len(), x.len()),
        )
    }

    /// Affine variational inequality F(x) = M x + c over `set`.
    pub fn affine(m: DMatrix<f64>, c: DVector<f64>, set: PolyhedralSet) -> Self {
        let jac = m.clone();
        PolyhedralGe::with_identity_g(set, move |x| &m * x + &c, move |_| jac.clone())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn range_dim(&self) -> usize {
        self.s
    }

    pub fn set(&self) -> &PolyhedralSet {
        &self.set
    }

    pub fn f(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }

    pub fn jac_f(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.jac_f)(x)
    }

    pub fn g(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.g)(x)
    }

    pub fn jac_g(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.jac_g)(x)
    }

    pub fn hess_g_lambda(&self, x: &DVector<f64>, lam: &DVector<f64>) -> DMatrix<f64> {
        (self.hess_g_lambda)(x, lam)
    }

    pub fn djac_g_u(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        (self.djac_g_u)(x, u)
    }

    /// Derivative of the Lagrangian x -> F(x) + jac_g(x)^T lam.
    pub fn lagrangian_jacobian(&self, x: &DVector<f64>, lam: &DVector<f64>) -> DMatrix<f64> {
        self.jac_f(x) + self.hess_g_lambda(x, lam)
    }
}

/// Output of the approximation step at a point x: the QP minimizer `u_hat`
/// (the residual), its multiplier pulled back to the rows of D, the shifted
/// constraint value `d_hat = G(x) + jac_g(x) u_hat`, the Lagrangian value
/// `p_star = F(x) + jac_g(x)^T lambda_hat` (equal to -u_hat up to solver
/// tolerance), and the indices of D's inequality rows active at d_hat.
#[derive(Debug, Clone)]
pub struct ApproxStep {
    pub u_hat: DVector<f64>,
    pub lambda_hat: DVector<f64>,
    pub d_hat: DVector<f64>,
    pub p_star: DVector<f64>,
    pub active: Vec<usize>,
}

/// Solves the local least-distance QP
/// min 1/2 ||u||^2 + <F(x), u>  s.t.  G(x) + jac_g(x) u in D
/// and maps the constraint multipliers back to a normal vector of D at d_hat.
/// Degenerate geometry with a genuinely non-unique multiplier is reported as
/// `MultiplierAmbiguous` rather than resolved arbitrarily.
pub fn approximation_step(prob: &PolyhedralGe, x: &DVector<f64>) -> Result<ApproxStep, GeError> {
    if x.len() != prob.n {
        return Err(GeError::Shape(format!(
            "point length {} does not match problem dimension {}",
            x.len(),
            prob.n
        )));
    }
    let fx = prob.f(x);
    let gx = prob.g(x);
    let j = prob.jac_g(x);
    if fx.len() != prob.n || gx.len() != prob.s || j.shape() != (prob.s, prob.n) {
        return Err(GeError::Shape(
            "callback output shapes disagree with (n, s)".into(),
        ));
    }

    let a = prob.set.ineq_matrix();
    let e = prob.set.eq_matrix();
    let sol = qp::solve_ldqp(&Ldqp {
        linear_term: fx.clone(),
        ineq_matrix: a * &j,
        ineq_rhs: prob.set.ineq_rhs() - a * &gx,
        eq_matrix: e * &j,
        eq_rhs: prob.set.eq_rhs() - e * &gx,
    })?;

    let lambda_hat = a.transpose() * &sol.ineq_multiplier + e.transpose() * &sol.eq_multiplier;
    let d_hat = &gx + &j * &sol.point;
    let p_star = &fx + j.transpose() * &lambda_hat;

    check_multiplier_unique(prob, &j, &d_hat, &lambda_hat)?;

    Ok(ApproxStep {
        u_hat: sol.point,
        lambda_hat,
        d_hat,
        p_star,
        active: sol.active,
    })
}

/// Degeneracy probe: when the normal-span pullback jac_g^T W loses rank, the
/// multiplier is non-unique exactly if some kernel perturbation of lambda_hat
/// remains a normal vector at d_hat.
fn check_multiplier_unique(
    prob: &PolyhedralGe,
    j: &DMatrix<f64>,
    d_hat: &DVector<f64>,
    lambda_hat: &DVector<f64>,
) -> Result<(), GeError> {
    let w = prob.set.span_normal_basis(d_hat)?;
    if w.ncols() == 0 {
        return Ok(());
    }
    let m = j.transpose() * &w;
    let gram = m.transpose() * &m;
    let eig = gram.symmetric_eigen();
    let (mut lmin, mut kmin) = (f64::INFINITY, 0);
    for (k, &ev) in eig.eigenvalues.iter().enumerate() {
        if ev < lmin {
            lmin = ev;
            kmin = k;
        }
    }
    let modulus = lmin.max(0.0).sqrt();
    if modulus > tol::MODULUS_ZERO_TOL {
        return Ok(());
    }
    let dir = &w * eig.eigenvectors.column(kmin);
    let t = 1e-3 * (1.0 + lambda_hat.norm());
    for sign in [1.0, -1.0] {
        let cand = lambda_hat + sign * t * &dir;
        let proj = prob.set.project(&(d_hat + &cand))?;
        let gap = (&proj.point - d_hat).norm();
        if gap <= tol::NORMAL_CHECK_REL * (1.0 + d_hat.norm() + cand.norm()) {
            return Err(GeError::MultiplierAmbiguous { modulus });
        }
    }
    Ok(())
}

/// Smallest stretch of the normal span under jac_g(x)^T: the minimum of
/// ||jac_g(x)^T lam|| over unit lam in span N_D(d). Infinite when d has no
/// normal directions (interior point); zero means degenerate.
pub fn nondegeneracy_modulus(
    prob: &PolyhedralGe,
    x: &DVector<f64>,
    d: &DVector<f64>,
) -> Result<f64, GeError> {
    let w = prob.set.span_normal_basis(d)?;
    if w.ncols() == 0 {
        return Ok(f64::INFINITY);
    }
    let m = prob.jac_g(x).transpose() * &w;
    // Gram form so that rank loss for wide m (more normals than variables)
    // shows up as a zero eigenvalue rather than being silently dropped
    let gram = m.transpose() * &m;
    let lmin = gram.symmetric_eigen().eigenvalues.min();
    Ok(lmin.max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsVariant {
    /// Full formula including the curvature correction through the face.
    Exact,
    /// Projector form that omits the constraint second derivative; its
    /// distance to the exact element is O(||u_hat||), which is the inexactness
    /// the convergence theory allows.
    DroppedSecondDerivative,
}

/// Derivative element of the solution map at x for the face realized by the
/// approximation step (the face whose span-complement is span N_D(d_hat)).
pub fn ts_element(
    prob: &PolyhedralGe,
    x: &DVector<f64>,
    step: &ApproxStep,
    variant: TsVariant,
) -> Result<DMatrix<f64>, GeError> {
    let w = prob.set.span_normal_basis(&step.d_hat)?;
    element_for_normal_basis(prob, x, step, &w, variant)
}

/// Derivative element for an arbitrary face of the critical cone at d_hat,
/// given by an orthonormal basis of its span (s x f). Exposed for
/// diagnostics; iterations always use the realized face via [`ts_element`].
pub fn ts_element_for_face(
    prob: &PolyhedralGe,
    x: &DVector<f64>,
    step: &ApproxStep,
    face_span: &DMatrix<f64>,
    variant: TsVariant,
) -> Result<DMatrix<f64>, GeError> {
    if face_span.nrows() != prob.s {
        return Err(GeError::Shape(format!(
            "face span has {} rows, expected {}",
            face_span.nrows(),
            prob.s
        )));
    }
    let w = linalg::orthonormal_kernel(&face_span.transpose());
    element_for_normal_basis(prob, x, step, &w, variant)
}

fn element_for_normal_basis(
    prob: &PolyhedralGe,
    x: &DVector<f64>,
    step: &ApproxStep,
    w: &DMatrix<f64>,
    variant: TsVariant,
) -> Result<DMatrix<f64>, GeError> {
    let lprime = prob.lagrangian_jacobian(x, &step.lambda_hat);
    if w.ncols() == 0 {
        return Ok(-lprime);
    }
    let j = prob.jac_g(x);
    let b = j.transpose() * w;
    let scale = b.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    if linalg::smallest_singular_value(&b) <= tol::RANK_TOL * (1.0 + scale) || b.ncols() > b.nrows()
    {
        return Err(GeError::DegenerateBase);
    }
    match variant {
        TsVariant::Exact => {
            let gram = b.transpose() * &b;
            let rhs = w.transpose() * (&j * &lprime - (&j + prob.djac_g_u(x, &step.u_hat)));
            let sol = gram
                .lu()
                .solve(&rhs)
                .ok_or(GeError::DegenerateBase)?;
            Ok(-&lprime + &b * sol)
        }
        TsVariant::DroppedSecondDerivative => {
            let q = linalg::orthonormal_range(&b);
            let pi_w = &q * q.transpose();
            let pi_z = DMatrix::identity(prob.n, prob.n) - &pi_w;
            Ok(-(pi_z * &lprime) - pi_w)
        }
    }
}

/// Diagnostics from one span-reduced step.
#[derive(Debug, Clone)]
pub struct SsstarMeta {
    /// Orthonormal basis of span N_D(d_hat), s x w.
    pub normal_basis: DMatrix<f64>,
    /// Orthonormal basis of ker(W^T jac_g(x)), n x (n - w).
    pub kernel_basis: DMatrix<f64>,
    pub direction: DVector<f64>,
    pub condition: f64,
}

/// One step of the span-reduced iteration from a fresh approximation step.
pub fn ssstar_iterate(
    prob: &PolyhedralGe,
    x: &DVector<f64>,
) -> Result<(DVector<f64>, SsstarMeta), GeError> {
    let step = approximation_step(prob, x)?;
    ssstar_iterate_from(prob, x, &step)
}

/// One step of the span-reduced iteration reusing an already computed
/// approximation step: stack the tangent-space Lagrangian block on the
/// normal-space constraint block and solve the square system for dx.
pub fn ssstar_iterate_from(
    prob: &PolyhedralGe,
    x: &DVector<f64>,
    step: &ApproxStep,
) -> Result<(DVector<f64>, SsstarMeta), GeError> {
    let n = prob.n;
    let w = prob.set.span_normal_basis(&step.d_hat)?;
    let wc = w.ncols();
    let j = prob.jac_g(x);
    let lprime = prob.lagrangian_jacobian(x, &step.lambda_hat);

    let (z, stacked, rhs) = if wc == 0 {
        (DMatrix::identity(n, n), lprime, -&step.p_star)
    } else {
        let wj = w.transpose() * &j;
        let z = linalg::kernel_via_qr(&wj);
        if z.ncols() + wc != n {
            return Err(GeError::DegenerateBase);
        }
        let mut stacked = DMatrix::zeros(n, n);
        let mut rhs = DVector::zeros(n);
        stacked
            .rows_mut(0, z.ncols())
            .copy_from(&(z.transpose() * &lprime));
        stacked.rows_mut(z.ncols(), wc).copy_from(&wj);
        rhs.rows_mut(0, z.ncols())
            .copy_from(&(-z.transpose() * &step.p_star));
        rhs.rows_mut(z.ncols(), wc)
            .copy_from(&(w.transpose() * (&step.d_hat - prob.g(x))));
        (z, stacked, rhs)
    };

    let dx = linalg::solve_checked(&stacked, &rhs).ok_or(GeError::SingularSystem)?;
    let condition = linalg::condition_estimate(&stacked);
    Ok((
        x + &dx,
        SsstarMeta {
            normal_basis: w,
            kernel_basis: z,
            direction: dx,
            condition,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolyAlgorithm {
    /// Span-reduced iteration on the stacked system.
    Ssstar,
    /// Generic Newton driver on the residual u_hat with the projector-form
    /// derivative element.
    Gsemi,
}

/// Runs the chosen iteration from `x0`. Termination states are recorded in
/// the report; structural faults (empty linearized constraints, ambiguous
/// multipliers, rank-deficient normal bases) abort with the diagnostic
/// instead of fabricating a step.
pub fn solve(
    prob: &PolyhedralGe,
    x0: &DVector<f64>,
    algorithm: PolyAlgorithm,
    config: &NewtonConfig,
    reference: Option<&DVector<f64>>,
) -> Result<ConvergenceReport, GeError> {
    match algorithm {
        PolyAlgorithm::Ssstar => solve_ssstar(prob, x0, config, reference),
        PolyAlgorithm::Gsemi => solve_gsemi(prob, x0, config, reference),
    }
}

fn solve_ssstar(
    prob: &PolyhedralGe,
    x0: &DVector<f64>,
    config: &NewtonConfig,
    reference: Option<&DVector<f64>>,
) -> Result<ConvergenceReport, GeError> {
    config
        .validate()
        .map_err(|e| GeError::Numerical(e.to_string()))?;
    let mut iterates = vec![x0.clone()];
    let mut residual_norms = Vec::new();
    let mut meta = Vec::new();
    let mut x = x0.clone();

    let termination = loop {
        let step = approximation_step(prob, &x)?;
        let hn = step.u_hat.norm();
        residual_norms.push(hn);
        if !hn.is_finite() || !x.iter().all(|v| v.is_finite()) {
            break Termination::Diverged;
        }
        if hn <= config.tol_residual {
            break Termination::ResidualMet;
        }
        if x.norm() > config.divergence_guard {
            break Termination::Diverged;
        }
        if iterates.len() > config.max_iter {
            break Termination::MaxIter;
        }
        match ssstar_iterate_from(prob, &x, &step) {
            Ok((xn, m)) => {
                meta.push(IterationMeta {
                    step_norm: m.direction.norm(),
                    condition: m.condition,
                    gamma: None,
                });
                x = xn;
                iterates.push(x.clone());
            }
            Err(GeError::SingularSystem) => break Termination::SingularSystem,
            Err(e) => return Err(e),
        }
    };

    Ok(newton::assemble_report(
        iterates,
        residual_norms,
        meta,
        termination,
        reference,
    ))
}

fn solve_gsemi(
    prob: &PolyhedralGe,
    x0: &DVector<f64>,
    config: &NewtonConfig,
    reference: Option<&DVector<f64>>,
) -> Result<ConvergenceReport, GeError> {
    config
        .validate()
        .map_err(|e| GeError::Numerical(e.to_string()))?;
    // the Newton driver's callbacks are total, so faults are parked here and
    // the driver is steered into a terminal state (NaN residual, zero matrix)
    let fault: RefCell<Option<GeError>> = RefCell::new(None);
    let memo: RefCell<Option<(DVector<f64>, ApproxStep)>> = RefCell::new(None);

    let residual = |x: &DVector<f64>| -> DVector<f64> {
        match approximation_step(prob, x) {
            Ok(step) => {
                let u = step.u_hat.clone();
                *memo.borrow_mut() = Some((x.clone(), step));
                u
            }
            Err(e) => {
                *fault.borrow_mut() = Some(e);
                DVector::from_element(prob.n, f64::NAN)
            }
        }
    };
    let select = |x: &DVector<f64>| -> DMatrix<f64> {
        let cached = {
            let m = memo.borrow();
            match m.as_ref() {
                Some((xm, step)) if xm == x => Some(step.clone()),
                _ => None,
            }
        };
        let step = match cached {
            Some(step) => Ok(step),
            None => approximation_step(prob, x),
        };
        let element =
            step.and_then(|s| ts_element(prob, x, &s, TsVariant::DroppedSecondDerivative));
        match element {
            Ok(v) => v,
            Err(e) => {
                *fault.borrow_mut() = Some(e);
                DMatrix::zeros(prob.n, prob.n)
            }
        }
    };

    let report = newton::run(residual, select, x0, config, reference);
    match fault.into_inner() {
        Some(e) => Err(e),
        None => Ok(report),
    }
}
