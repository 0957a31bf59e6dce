//! Composite generalized equations 0 in F(x) + dq(x) for a prox-friendly
//! convex q. The computable residual is the proximal gap
//! u(x) = prox(q/gamma, x - F(x)/gamma) - x, which vanishes exactly at
//! solutions. Two equivalent local methods operate on it: a coderivative
//! iteration that solves (Ystar^T F' + Xstar^T) dx = (gamma Ystar^T +
//! Xstar^T) u with the subspace pair of the prox, and a Newton iteration on u
//! with the chain-rule derivative element B (I - F'/gamma) - I. Their steps
//! coincide whenever both use the same element B, which the test suite
//! checks.

use std::cell::{Cell, RefCell};

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::linalg;
use crate::newton::{self, ConvergenceReport, IterationMeta, NewtonConfig, Termination};
use crate::prox::{self, BouligandSelector, ProxError, ProxFunction};
use crate::tol;

type VecFn = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type MatFn = Box<dyn Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync>;

#[derive(Debug, Error)]
pub enum CompositeError {
    #[error(transparent)]
    Prox(#[from] ProxError),
    #[error("Newton system is numerically singular")]
    SingularSystem,
    #[error("invalid gamma schedule: {0}")]
    BadSchedule(&'static str),
    #[error("mismatched dimensions: {0}")]
    Shape(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

/// Problem data for the composite generalized equation.
pub struct CompositeGe {
    n: usize,
    f: VecFn,
    jac_f: MatFn,
    q: ProxFunction,
}

impl CompositeGe {
    pub fn new(
        q: ProxFunction,
        f: impl Fn(&DVector<f64>) -> DVector<f64> + Send + Sync + 'static,
        jac_f: impl Fn(&DVector<f64>) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        CompositeGe {
            n: q.dim(),
            f: Box::new(f),
            jac_f: Box::new(jac_f),
            q,
        }
    }

    /// Affine smooth part F(x) = M x + c.
    pub fn affine(m: DMatrix<f64>, c: DVector<f64>, q: ProxFunction) -> Self {
        let jac = m.clone();
        CompositeGe::new(q, move |x| &m * x + &c, move |_| jac.clone())
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> &ProxFunction {
        &self.q
    }

    pub fn f(&self, x: &DVector<f64>) -> DVector<f64> {
        (self.f)(x)
    }

    pub fn jac_f(&self, x: &DVector<f64>) -> DMatrix<f64> {
        (self.jac_f)(x)
    }
}

/// Step-size sequence for the proximal parameter, bounded away from zero and
/// infinity as the convergence theory requires.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaSchedule {
    lower: f64,
    upper: f64,
    rule: GammaRule,
}

#[derive(Debug, Clone, PartialEq)]
pub enum GammaRule {
    Constant(f64),
    Cycle(Vec<f64>),
}

impl GammaSchedule {
    pub fn new(lower: f64, upper: f64, rule: GammaRule) -> Result<Self, CompositeError> {
        if lower <= 0.0 || !lower.is_finite() {
            return Err(CompositeError::BadSchedule("lower bound must be positive"));
        }
        if upper < lower || !upper.is_finite() {
            return Err(CompositeError::BadSchedule(
                "upper bound must be at least the lower bound",
            ));
        }
        let in_range = |g: f64| g >= lower && g <= upper;
        match &rule {
            GammaRule::Constant(g) => {
                if !in_range(*g) {
                    return Err(CompositeError::BadSchedule(
                        "constant value outside [lower, upper]",
                    ));
                }
            }
            GammaRule::Cycle(list) => {
                if list.is_empty() {
                    return Err(CompositeError::BadSchedule("empty cycle"));
                }
                if !list.iter().all(|&g| in_range(g)) {
                    return Err(CompositeError::BadSchedule(
                        "cycle value outside [lower, upper]",
                    ));
                }
            }
        }
        Ok(GammaSchedule { lower, upper, rule })
    }

    pub fn constant(gamma: f64) -> Result<Self, CompositeError> {
        GammaSchedule::new(gamma, gamma, GammaRule::Constant(gamma))
    }

    pub fn cycle(list: Vec<f64>) -> Result<Self, CompositeError> {
        if list.is_empty() {
            return Err(CompositeError::BadSchedule("empty cycle"));
        }
        let lower = list.iter().cloned().fold(f64::INFINITY, f64::min);
        let upper = list.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        GammaSchedule::new(lower, upper, GammaRule::Cycle(list))
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    /// The parameter used at iteration `k`.
    pub fn at(&self, k: usize) -> f64 {
        match &self.rule {
            GammaRule::Constant(g) => *g,
            GammaRule::Cycle(list) => list[k % list.len()],
        }
    }
}

impl Default for GammaSchedule {
    fn default() -> Self {
        GammaSchedule::constant(1.0).unwrap()
    }
}

/// The single place where the proximal parameter gamma is converted to the
/// prox step 1/gamma, pairing it with the forward point z = x - F(x)/gamma.
fn prox_inputs(prob: &CompositeGe, gamma: f64, x: &DVector<f64>) -> (f64, DVector<f64>) {
    assert!(gamma > 0.0, "gamma must be positive");
    let lambda = gamma.recip();
    (lambda, x - lambda * prob.f(x))
}

/// Proximal residual u(x) = prox(q/gamma, x - F(x)/gamma) - x; zero exactly
/// at solutions of the generalized equation.
pub fn residual(prob: &CompositeGe, gamma: f64, x: &DVector<f64>) -> DVector<f64> {
    let (lambda, z) = prox_inputs(prob, gamma, x);
    prob.q.prox(lambda, &z) - x
}

/// Chain-rule derivative element of the residual:
/// V = B (I - jac_f(x)/gamma) - I with B a prox derivative element at the
/// forward point.
pub fn gsemi_element(
    prob: &CompositeGe,
    gamma: f64,
    x: &DVector<f64>,
    sel: BouligandSelector,
) -> Result<DMatrix<f64>, CompositeError> {
    let (lambda, z) = prox_inputs(prob, gamma, x);
    let b = prob.q.bouligand_element(lambda, &z, sel)?;
    let inner = DMatrix::identity(prob.n, prob.n) - lambda * prob.jac_f(x);
    Ok(b * inner - DMatrix::identity(prob.n, prob.n))
}

/// Diagnostics from one coderivative step.
#[derive(Debug, Clone)]
pub struct ScdMeta {
    /// Prox derivative element at the forward point (this is Ystar).
    pub b: DMatrix<f64>,
    pub xstar: DMatrix<f64>,
    pub direction: DVector<f64>,
    pub condition: f64,
}

/// One coderivative step: solve
/// (Ystar^T jac_f(x) + Xstar^T) dx = (gamma Ystar^T + Xstar^T) u
/// with (Ystar, Xstar) the subspace pair of the prox at the forward point.
pub fn scd_iterate(
    prob: &CompositeGe,
    gamma: f64,
    x: &DVector<f64>,
    sel: BouligandSelector,
) -> Result<(DVector<f64>, ScdMeta), CompositeError> {
    let u = residual(prob, gamma, x);
    scd_iterate_from(prob, gamma, x, &u, sel)
}

/// Coderivative step reusing an already computed residual value.
pub fn scd_iterate_from(
    prob: &CompositeGe,
    gamma: f64,
    x: &DVector<f64>,
    u: &DVector<f64>,
    sel: BouligandSelector,
) -> Result<(DVector<f64>, ScdMeta), CompositeError> {
    let (_, z) = prox_inputs(prob, gamma, x);
    let (ystar, xstar) = prob.q.scd_pair(gamma, &z, sel)?;
    let lhs = ystar.transpose() * prob.jac_f(x) + xstar.transpose();
    let rhs = (gamma * ystar.transpose() + xstar.transpose()) * u;
    let dx = linalg::solve_checked(&lhs, &rhs).ok_or(CompositeError::SingularSystem)?;
    let condition = linalg::condition_estimate(&lhs);
    Ok((
        x + &dx,
        ScdMeta {
            b: ystar,
            xstar,
            direction: dx,
            condition,
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompositeAlgorithm {
    /// Coderivative subspace iteration.
    Scd,
    /// Generic Newton driver on the residual with the chain-rule element.
    Gsemi,
}

/// Runs the chosen iteration from `x0` with per-iteration parameters from
/// `schedule`. On a residual-met finish the subdifferential membership of the
/// final iterate is confirmed through the prox fixed point.
pub fn solve(
    prob: &CompositeGe,
    x0: &DVector<f64>,
    algorithm: CompositeAlgorithm,
    schedule: &GammaSchedule,
    sel: BouligandSelector,
    config: &NewtonConfig,
    reference: Option<&DVector<f64>>,
) -> Result<ConvergenceReport, CompositeError> {
    if x0.len() != prob.n {
        return Err(CompositeError::Shape(format!(
            "start length {} does not match problem dimension {}",
            x0.len(),
            prob.n
        )));
    }
    config
        .validate()
        .map_err(|e| CompositeError::Numerical(e.to_string()))?;
    let report = match algorithm {
        CompositeAlgorithm::Scd => solve_scd(prob, x0, schedule, sel, config, reference)?,
        CompositeAlgorithm::Gsemi => solve_gsemi(prob, x0, schedule, sel, config, reference)?,
    };

    if report.termination == Termination::ResidualMet {
        let k_final = report.iterates.len() - 1;
        let gamma = schedule.at(k_final);
        let x = &report.iterates[k_final];
        let u = residual(prob, gamma, x);
        let d = x + &u;
        let dstar = -gamma * &u - prob.f(x);
        if !prob.q.subgradient_check(&d, &dstar) {
            return Err(CompositeError::Numerical(
                "final iterate failed the subdifferential membership check".into(),
            ));
        }
    }
    Ok(report)
}

fn solve_scd(
    prob: &CompositeGe,
    x0: &DVector<f64>,
    schedule: &GammaSchedule,
    sel: BouligandSelector,
    config: &NewtonConfig,
    reference: Option<&DVector<f64>>,
) -> Result<ConvergenceReport, CompositeError> {
    let mut iterates = vec![x0.clone()];
    let mut residual_norms = Vec::new();
    let mut meta = Vec::new();
    let mut x = x0.clone();

    let termination = loop {
        let k = iterates.len() - 1;
        let gamma = schedule.at(k);
        let u = residual(prob, gamma, &x);
        let hn = u.norm();
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
        match scd_iterate_from(prob, gamma, &x, &u, sel) {
            Ok((xn, m)) => {
                meta.push(IterationMeta {
                    step_norm: m.direction.norm(),
                    condition: m.condition,
                    gamma: Some(gamma),
                });
                x = xn;
                iterates.push(x.clone());
            }
            Err(CompositeError::SingularSystem) => break Termination::SingularSystem,
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
    prob: &CompositeGe,
    x0: &DVector<f64>,
    schedule: &GammaSchedule,
    sel: BouligandSelector,
    config: &NewtonConfig,
    reference: Option<&DVector<f64>>,
) -> Result<ConvergenceReport, CompositeError> {
    // the Newton driver calls the residual exactly once per pass, so the pass
    // counter indexes the schedule; the jacobian callback reuses the same
    // gamma, and faults are parked for rethrow after the run
    let fault: RefCell<Option<CompositeError>> = RefCell::new(None);
    let pass = Cell::new(0usize);
    let current_gamma = Cell::new(schedule.at(0));

    let residual_cb = |x: &DVector<f64>| -> DVector<f64> {
        let gamma = schedule.at(pass.get());
        pass.set(pass.get() + 1);
        current_gamma.set(gamma);
        residual(prob, gamma, x)
    };
    let select = |x: &DVector<f64>| -> DMatrix<f64> {
        match gsemi_element(prob, current_gamma.get(), x, sel) {
            Ok(v) => v,
            Err(e) => {
                *fault.borrow_mut() = Some(e);
                DMatrix::zeros(prob.n, prob.n)
            }
        }
    };

    let mut report = newton::run(residual_cb, select, x0, config, reference);
    if let Some(e) = fault.into_inner() {
        return Err(e);
    }
    for (k, m) in report.per_iteration_metadata.iter_mut().enumerate() {
        m.gamma = Some(schedule.at(k));
    }
    Ok(report)
}

/// Violation of the solution-distance bound tying the residual at `x` to a
/// solution `xbar`: firm nonexpansiveness of the prox gives
///
/// `||u + x - xbar||^2 + ||F(xbar) - F(x) - gamma u||^2
///     <= max(1, gamma^2) ||z - zbar||^2`
///
/// with z the forward point of x and zbar that of xbar. Returns
/// lhs - rhs, nonpositive whenever the bound holds.
pub fn prox_residual_gap(
    prob: &CompositeGe,
    gamma: f64,
    x: &DVector<f64>,
    xbar: &DVector<f64>,
) -> f64 {
    let u = residual(prob, gamma, x);
    let (_, z) = prox_inputs(prob, gamma, x);
    let (_, zbar) = prox_inputs(prob, gamma, xbar);
    let lhs = (&u + x - xbar).norm_squared()
        + (prob.f(xbar) - prob.f(x) - gamma * &u).norm_squared();
    let rhs = gamma.powi(2).max(1.0) * (z - zbar).norm_squared();
    lhs - rhs
}

/// A singular pair found by [`regularity_enumerate`]: the derivative element
/// and the coderivative Newton matrix built from the same B.
#[derive(Debug, Clone)]
pub struct RegularityWitness {
    pub index: usize,
    pub element: DMatrix<f64>,
    pub newton_matrix: DMatrix<f64>,
}

/// Enumerates every prox derivative element at the forward point and reports
/// whether all induced Newton systems are nonsingular (condition below
/// 1e12). The element form V and the coderivative form Ystar^T F' + Xstar^T
/// always agree in singularity status; this is asserted, and any singular
/// pair is returned as a witness.
pub fn regularity_enumerate(
    prob: &CompositeGe,
    gamma: f64,
    x: &DVector<f64>,
) -> Result<(bool, Vec<RegularityWitness>), CompositeError> {
    let (lambda, z) = prox_inputs(prob, gamma, x);
    let jf = prob.jac_f(x);
    let inner = DMatrix::identity(prob.n, prob.n) - lambda * &jf;
    let eye = DMatrix::identity(prob.n, prob.n);

    let mut witnesses = Vec::new();
    let mut all_nonsingular = true;
    for (index, b) in prob.q.enumerate_bouligand(lambda, &z)?.into_iter().enumerate() {
        let v = &b * &inner - &eye;
        let (ystar, xstar) = prox::scd_pair_from_element(gamma, b);
        let m = ystar.transpose() * &jf + xstar.transpose();
        let v_ok = linalg::condition_estimate(&v) < tol::COND_BOUND;
        let m_ok = linalg::condition_estimate(&m) < tol::COND_BOUND;
        assert_eq!(
            v_ok, m_ok,
            "singularity status of the two Newton-system families must agree"
        );
        if !v_ok {
            all_nonsingular = false;
            witnesses.push(RegularityWitness {
                index,
                element: v,
                newton_matrix: m,
            });
        }
    }
    Ok((all_nonsingular, witnesses))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec1(v: f64) -> DVector<f64> {
        DVector::from_vec(vec![v])
    }

    /// 1-D complementarity problem in composite form: F(x) = x - 2,
    /// q = indicator of the nonnegative ray.
    fn ncp_composite_1d() -> CompositeGe {
        CompositeGe::affine(
            DMatrix::from_vec(1, 1, vec![1.0]),
            vec1(-2.0),
            ProxFunction::nonneg(1).unwrap(),
        )
    }

    #[test]
    fn residual_is_projection_gap() {
        let q = ProxFunction::nonneg(2).unwrap();
        let b = DVector::from_vec(vec![1.0, -1.0]);
        let prob = CompositeGe::affine(DMatrix::identity(2, 2), -b, q);
        let u = residual(&prob, 1.0, &DVector::zeros(2));
        assert_eq!(u, DVector::from_vec(vec![1.0, 0.0]));
    }

    #[test]
    fn residual_vanishes_for_trivial_problem() {
        let prob = CompositeGe::new(
            ProxFunction::zero(3).unwrap(),
            |_| DVector::zeros(3),
            |_| DMatrix::zeros(3, 3),
        );
        for x in [
            DVector::zeros(3),
            DVector::from_vec(vec![1.0, -2.0, 0.5]),
        ] {
            assert_eq!(residual(&prob, 2.0, &x).norm(), 0.0);
        }
    }

    #[test]
    fn residual_vanishes_at_solution() {
        let prob = ncp_composite_1d();
        for gamma in [0.5, 1.0, 4.0] {
            assert!(residual(&prob, gamma, &vec1(2.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn element_interior_point() {
        let prob = ncp_composite_1d();
        let v = gsemi_element(&prob, 1.0, &vec1(1.0), BouligandSelector::Lower).unwrap();
        assert!((v[(0, 0)] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn element_reductions() {
        // free problem: V = -jac_f / gamma
        let free = CompositeGe::affine(
            DMatrix::from_vec(1, 1, vec![3.0]),
            vec1(0.0),
            ProxFunction::zero(1).unwrap(),
        );
        let v = gsemi_element(&free, 2.0, &vec1(1.0), BouligandSelector::Lower).unwrap();
        assert!((v[(0, 0)] + 1.5).abs() < 1e-14);
        // fully clamped prox: V = -I
        let clamped = CompositeGe::affine(
            DMatrix::from_vec(1, 1, vec![3.0]),
            vec1(5.0),
            ProxFunction::nonneg(1).unwrap(),
        );
        let v = gsemi_element(&clamped, 1.0, &vec1(0.0), BouligandSelector::Lower).unwrap();
        assert!((v[(0, 0)] + 1.0).abs() < 1e-14);
    }

    #[test]
    fn scd_step_solves_ncp_in_one_iteration() {
        let prob = ncp_composite_1d();
        let (x_next, meta) = scd_iterate(&prob, 1.0, &vec1(1.0), BouligandSelector::Lower).unwrap();
        assert!((x_next[0] - 2.0).abs() < 1e-14);
        assert_eq!(meta.b[(0, 0)], 1.0);
        assert_eq!(meta.xstar[(0, 0)], 0.0);
    }

    #[test]
    fn scd_step_is_zero_at_solution() {
        let prob = ncp_composite_1d();
        let (x_next, meta) = scd_iterate(&prob, 1.0, &vec1(2.0), BouligandSelector::Lower).unwrap();
        assert_eq!(x_next[0], 2.0);
        assert_eq!(meta.direction[0], 0.0);
    }

    #[test]
    fn scd_free_problem_is_plain_newton() {
        // q = zero reduces the step to jac_f dx = -F
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.0, 3.0]);
        let root = DVector::from_vec(vec![0.7, -0.4]);
        let c = -&m * &root;
        let prob = CompositeGe::affine(m, c, ProxFunction::zero(2).unwrap());
        let (x_next, _) =
            scd_iterate(&prob, 5.0, &DVector::from_vec(vec![9.0, -3.0]), BouligandSelector::Lower)
                .unwrap();
        assert!((x_next - root).norm() < 1e-12);
    }

    #[test]
    fn both_algorithms_solve_ncp_identically() {
        let prob = ncp_composite_1d();
        let schedule = GammaSchedule::default();
        let config = NewtonConfig::default();
        let reference = vec1(2.0);
        let mut reports = Vec::new();
        for alg in [CompositeAlgorithm::Scd, CompositeAlgorithm::Gsemi] {
            let rep = solve(
                &prob,
                &vec1(1.0),
                alg,
                &schedule,
                BouligandSelector::Lower,
                &config,
                Some(&reference),
            )
            .unwrap();
            assert_eq!(rep.termination, Termination::ResidualMet);
            assert_eq!(rep.iterates.len(), 2);
            assert_eq!(rep.per_iteration_metadata[0].gamma, Some(1.0));
            reports.push(rep);
        }
        for (a, b) in reports[0].iterates.iter().zip(&reports[1].iterates) {
            assert!((a - b).norm() <= 1e-12 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn solved_start_takes_zero_iterations() {
        let prob = ncp_composite_1d();
        for alg in [CompositeAlgorithm::Scd, CompositeAlgorithm::Gsemi] {
            let rep = solve(
                &prob,
                &vec1(2.0),
                alg,
                &GammaSchedule::default(),
                BouligandSelector::Lower,
                &NewtonConfig::default(),
                None,
            )
            .unwrap();
            assert_eq!(rep.termination, Termination::ResidualMet);
            assert_eq!(rep.iterates.len(), 1);
        }
    }

    #[test]
    fn cycled_gammas_recorded_in_metadata() {
        let prob = ncp_composite_1d();
        let schedule = GammaSchedule::cycle(vec![0.5, 2.0]).unwrap();
        let rep = solve(
            &prob,
            &vec1(-7.0),
            CompositeAlgorithm::Gsemi,
            &schedule,
            BouligandSelector::Lower,
            &NewtonConfig::default(),
            None,
        )
        .unwrap();
        assert_eq!(rep.termination, Termination::ResidualMet);
        for (k, m) in rep.per_iteration_metadata.iter().enumerate() {
            assert_eq!(m.gamma, Some(schedule.at(k)));
        }
    }

    #[test]
    fn schedule_validation() {
        assert!(GammaSchedule::constant(0.0).is_err());
        assert!(GammaSchedule::cycle(vec![]).is_err());
        assert!(GammaSchedule::new(1.0, 2.0, GammaRule::Constant(3.0)).is_err());
        let s = GammaSchedule::cycle(vec![2.0, 1.0, 4.0]).unwrap();
        assert_eq!(s.lower(), 1.0);
        assert_eq!(s.upper(), 4.0);
        assert_eq!(s.at(5), 4.0);
    }

    #[test]
    fn regularity_free_problem_is_regular() {
        let prob = CompositeGe::affine(
            DMatrix::from_vec(1, 1, vec![2.0]),
            vec1(0.0),
            ProxFunction::zero(1).unwrap(),
        );
        let (ok, wit) = regularity_enumerate(&prob, 1.0, &vec1(0.3)).unwrap();
        assert!(ok);
        assert!(wit.is_empty());
    }

    #[test]
    fn regularity_flat_f_at_ray_kink_is_singular() {
        // F' = 0 with the ray indicator at its kink: the B = 1 branch gives
        // V = 0, the flat side of the residual (every x >= 0 solves the GE,
        // so the solution is not isolated and regularity fails)
        let prob = CompositeGe::affine(
            DMatrix::zeros(1, 1),
            vec1(0.0),
            ProxFunction::nonneg(1).unwrap(),
        );
        let (ok, wit) = regularity_enumerate(&prob, 1.0, &vec1(0.0)).unwrap();
        assert!(!ok);
        assert_eq!(wit.len(), 1);
        assert_eq!(wit[0].element[(0, 0)], 0.0);
        assert_eq!(wit[0].newton_matrix[(0, 0)], 0.0);
    }

    #[test]
    fn regularity_matched_curvature_at_l1_kink_is_regular() {
        // F' = gamma cancels the inner factor: V = -1 for every branch of
        // the soft-threshold kink
        let gamma = 1.0;
        let prob = CompositeGe::affine(
            DMatrix::from_vec(1, 1, vec![gamma]),
            vec1(-1.0),
            ProxFunction::l1(1, 1.0).unwrap(),
        );
        // forward point z = x - F(x)/gamma = 1 at x = 0: the positive kink
        let (ok, wit) = regularity_enumerate(&prob, gamma, &vec1(0.0)).unwrap();
        assert!(ok, "witnesses: {wit:?}");
    }

    #[test]
    fn residual_distance_bound_holds_around_solution() {
        let prob = ncp_composite_1d();
        let xbar = vec1(2.0);
        for gamma in [0.25, 1.0, 4.0] {
            for x in [-3.0, -0.5, 0.0, 1.9, 2.1, 7.0] {
                let gap = prox_residual_gap(&prob, gamma, &vec1(x), &xbar);
                assert!(gap <= 1e-12, "gamma {gamma}, x {x}: gap {gap}");
            }
        }
    }

    #[test]
    fn json_report_from_solve_round_trips_fields() {
        let prob = ncp_composite_1d();
        let rep = solve(
            &prob,
            &vec1(1.0),
            CompositeAlgorithm::Scd,
            &GammaSchedule::default(),
            BouligandSelector::Lower,
            &NewtonConfig::default(),
            None,
        )
        .unwrap();
        let v = serde_json::to_value(&rep).unwrap();
        assert_eq!(v["termination"], "residual_met");
        assert_eq!(v["per_iteration_metadata"][0]["gamma"], 1.0);
    }
}
