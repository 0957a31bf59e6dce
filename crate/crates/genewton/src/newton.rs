//! Generic Newton driver for nonsmooth residuals: at each iterate a caller
//! supplied selection V of a generalized derivative defines the step through
//! V dx = -H(x). The driver handles termination, divergence and singularity
//! guards, step metadata, and error-ratio bookkeeping against an optional
//! reference solution.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::tol;

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonConfig {
    /// Stop once the residual norm falls to this level.
    pub tol_residual: f64,
    pub max_iter: usize,
    /// Iterate-norm bound beyond which the run is declared divergent.
    pub divergence_guard: f64,
    /// Inexactness budget for the derivative selection. The driver does not
    /// evaluate it: callers contract to supply a V within distance
    /// rho * ||H(x)|| of the exact derivative set, and the recorded residual
    /// norms let them audit that promise.
    pub rho: f64,
}

impl Default for NewtonConfig {
    fn default() -> Self {
        NewtonConfig {
            tol_residual: 1e-10,
            max_iter: 50,
            divergence_guard: 1e8,
            rho: 0.0,
        }
    }
}

impl NewtonConfig {
    pub fn validate(&self) -> Result<(), NewtonError> {
        if self.tol_residual.is_nan() || self.tol_residual <= 0.0 {
            return Err(NewtonError::BadConfig("tol_residual must be positive"));
        }
        if self.max_iter == 0 {
            return Err(NewtonError::BadConfig("max_iter must be at least 1"));
        }
        if self.rho.is_nan() || self.rho < 0.0 {
            return Err(NewtonError::BadConfig("rho must be nonnegative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    ResidualMet,
    MaxIter,
    Diverged,
    SingularSystem,
}

impl std::fmt::Display for Termination {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Termination::ResidualMet => "residual_met",
            Termination::MaxIter => "max_iter",
            Termination::Diverged => "diverged",
            Termination::SingularSystem => "singular_system",
        };
        f.write_str(name)
    }
}

/// Record of one Newton step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationMeta {
    pub step_norm: f64,
    /// Condition estimate of the selected derivative.
    pub condition: f64,
    /// Proximal parameter used this step, where the algorithm has one.
    pub gamma: Option<f64>,
}

/// Full trace of a Newton run. `errors` and `ratios` are populated only when
/// a reference solution was supplied.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub iterates: Vec<DVector<f64>>,
    pub residual_norms: Vec<f64>,
    pub errors: Vec<f64>,
    /// ratios[k] = errors[k+1] / errors[k], recorded while errors stay
    /// positive.
    pub ratios: Vec<f64>,
    pub termination: Termination,
    pub per_iteration_metadata: Vec<IterationMeta>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum NewtonError {
    #[error("need a reference solution and at least 3 iterates with positive error")]
    InsufficientData,
    #[error("invalid configuration: {0}")]
    BadConfig(&'static str),
}

/// Runs the Newton iteration from `x0`. `residual` evaluates H; `select_v`
/// picks the generalized-derivative element used for the step. A reference
/// solution enables error and ratio tracking.
pub fn run(
    mut residual: impl FnMut(&DVector<f64>) -> DVector<f64>,
    mut select_v: impl FnMut(&DVector<f64>) -> DMatrix<f64>,
    x0: &DVector<f64>,
    config: &NewtonConfig,
    reference: Option<&DVector<f64>>,
) -> ConvergenceReport {
    config.validate().expect("invalid Newton configuration");
    let mut iterates = vec![x0.clone()];
    let mut residual_norms = Vec::new();
    let mut meta = Vec::new();
    let mut x = x0.clone();

    let termination = loop {
        let h = residual(&x);
        let hn = h.norm();
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

        let v = select_v(&x);
        let minus_h = -&h;
        let Some(mut dx) = linalg::solve_checked(&v, &minus_h) else {
            break Termination::SingularSystem;
        };
        // enforce the backward-residual contract on the step, with a couple
        // of extra refinement passes before giving up
        let budget = tol::LINSOLVE_BACKWARD_REL * (1.0 + hn);
        let mut ok = false;
        for _ in 0..3 {
            let back = (&v * &dx + &h).norm();
            if back <= budget {
                ok = true;
                break;
            }
            let corr = &minus_h - &v * &dx;
            match linalg::solve_checked(&v, &corr) {
                Some(c) => dx += c,
                None => break,
            }
        }
        if !ok {
            break Termination::SingularSystem;
        }

        meta.push(IterationMeta {
            step_norm: dx.norm(),
            condition: linalg::condition_estimate(&v),
            gamma: None,
        });
        x += dx;
        iterates.push(x.clone());
    };

    assemble_report(iterates, residual_norms, meta, termination, reference)
}

/// Builds the final report, filling in errors and contraction ratios against
/// the reference solution when one is available.
pub(crate) fn assemble_report(
    iterates: Vec<DVector<f64>>,
    residual_norms: Vec<f64>,
    meta: Vec<IterationMeta>,
    termination: Termination,
    reference: Option<&DVector<f64>>,
) -> ConvergenceReport {
    let mut errors = Vec::new();
    let mut ratios = Vec::new();
    if let Some(xbar) = reference {
        errors = iterates.iter().map(|xk| (xk - xbar).norm()).collect();
        for k in 0..errors.len().saturating_sub(1) {
            if errors[k] > 0.0 {
                ratios.push(errors[k + 1] / errors[k]);
            } else {
                break;
            }
        }
    }

    ConvergenceReport {
        iterates,
        residual_norms,
        errors,
        ratios,
        termination,
        per_iteration_metadata: meta,
    }
}

/// Error-contraction ratios of a run and the superlinear verdict: ratios must
/// be strictly decreasing over the last few steps and end below 0.1.
pub fn superlinear_ratios(report: &ConvergenceReport) -> Result<(Vec<f64>, bool), NewtonError> {
    let ratios = &report.ratios;
    if report.errors.is_empty() || ratios.len() < 2 {
        return Err(NewtonError::InsufficientData);
    }
    let window = ratios.len().min(4);
    let tail = &ratios[ratios.len() - window..];
    let decreasing = tail.windows(2).all(|w| w[1] < w[0]);
    let verdict = decreasing && *tail.last().unwrap() < 0.1;
    Ok((ratios.clone(), verdict))
}

#[derive(Serialize, Deserialize)]
struct ReportDto {
    iterates: Vec<Vec<f64>>,
    residual_norms: Vec<f64>,
    errors: Vec<f64>,
    ratios: Vec<f64>,
    termination: Termination,
    per_iteration_metadata: Vec<IterationMeta>,
}

impl From<&ConvergenceReport> for ReportDto {
    fn from(r: &ConvergenceReport) -> Self {
        ReportDto {
            iterates: r
                .iterates
                .iter()
                .map(|x| x.iter().copied().collect())
                .collect(),
            residual_norms: r.residual_norms.clone(),
            errors: r.errors.clone(),
            ratios: r.ratios.clone(),
            termination: r.termination,
            per_iteration_metadata: r.per_iteration_metadata.clone(),
        }
    }
}

impl Serialize for ConvergenceReport {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ReportDto::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for ConvergenceReport {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let dto = ReportDto::deserialize(d)?;
        Ok(ConvergenceReport {
            iterates: dto.iterates.into_iter().map(DVector::from_vec).collect(),
            residual_norms: dto.residual_norms,
            errors: dto.errors,
            ratios: dto.ratios,
            termination: dto.termination,
            per_iteration_metadata: dto.per_iteration_metadata,
        })
    }
}

impl ConvergenceReport {
    /// Writes the per-iterate trace as CSV with columns k, residual_norm,
    /// error, ratio. Error and ratio cells are empty without a reference;
    /// the ratio on row k is errors[k]/errors[k-1].
    pub fn write_csv(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "k,residual_norm,error,ratio")?;
        for k in 0..self.iterates.len() {
            let err = self
                .errors
                .get(k)
                .map(|e| format!("{e:.17e}"))
                .unwrap_or_default();
            let ratio = if k >= 1 {
                self.ratios
                    .get(k - 1)
                    .map(|r| format!("{r:.17e}"))
                    .unwrap_or_default()
            } else {
                String::new()
            };
            let rn = self
                .residual_norms
                .get(k)
                .map(|r| format!("{r:.17e}"))
                .unwrap_or_default();
            writeln!(w, "{k},{rn},{err},{ratio}")?;
        }
        Ok(())
    }
}
