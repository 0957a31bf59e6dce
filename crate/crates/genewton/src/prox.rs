//! Catalog of convex functions with explicit proximal maps, one-sided
//! derivative information at kinks, and the subspace pairs used by the
//! composite-GE solver.
//!
//! All separable kinds reduce to scalar piecewise-linear proxes whose
//! one-sided derivatives are 0 or 1; a kink is a coordinate where the two
//! sides differ, and a [`BouligandSelector`] resolves which side enters the
//! generalized derivative. The quadratic kind is smooth with a dense
//! derivative and supports no kink machinery.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::tol;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProxError {
    #[error("selector carries bits beyond the {kinks} kink coordinates present")]
    SelectorMismatch { kinks: usize },
    #[error("{kinks} kink coordinates exceed the enumeration cap {max}")]
    TooManyKinks { kinks: usize, max: usize },
    #[error("operation does not apply to the {0} kind")]
    UnsupportedKind(&'static str),
    #[error("invalid prox data: {0}")]
    InvalidData(String),
}

/// Cap on kink coordinates for derivative enumeration.
pub const MAX_ENUM_KINKS: usize = 16;

/// Rule resolving the prox derivative at kink coordinates: take the flat
/// side (0), the sloped side (1), or a per-kink bit pattern (bit k set picks
/// 1 for the k-th kink in ascending coordinate order).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BouligandSelector {
    #[default]
    Lower,
    Upper,
    ByIndex(u64),
}

/// Convex function with an explicit prox, validated at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProxFunctionDto", into = "ProxFunctionDto")]
pub struct ProxFunction {
    dim: usize,
    kind: ProxKind,
}

#[derive(Debug, Clone, PartialEq)]
enum ProxKind {
    /// q = 0; prox is the identity.
    Zero,
    /// Indicator of the box [lower, upper]; prox clamps.
    Box {
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    /// Indicator of the nonnegative orthant.
    Nonneg,
    /// q(x) = tau * ||x||_1; prox soft-thresholds.
    L1 { tau: f64 },
    /// q(x) = sum_i w_i |x_i| + indicator of a box; prox soft-thresholds
    /// then clamps coordinatewise.
    WeightedL1Box {
        weights: DVector<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    },
    /// q(x) = 1/2 x^T Q x with Q symmetric PSD; prox solves (I + step Q)w = z.
    Quadratic { matrix: DMatrix<f64> },
}

/// Wire format, tagged by kind.
#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum ProxFunctionDto {
    Zero {
        dim: usize,
    },
    Box {
        dim: usize,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Nonneg {
        dim: usize,
    },
    L1 {
        dim: usize,
        tau: f64,
    },
    WeightedL1Box {
        dim: usize,
        weights: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    Quadratic {
        dim: usize,
        matrix: Vec<Vec<f64>>,
    },
}

impl TryFrom<ProxFunctionDto> for ProxFunction {
    type Error = ProxError;

    fn try_from(dto: ProxFunctionDto) -> Result<Self, ProxError> {
        match dto {
            ProxFunctionDto::Zero { dim } => ProxFunction::zero(dim),
            ProxFunctionDto::Box { dim, lower, upper } => {
                let f = ProxFunction::box_bounds(DVector::from_vec(lower), DVector::from_vec(upper))?;
                f.expect_dim(dim)
            }
            ProxFunctionDto::Nonneg { dim } => ProxFunction::nonneg(dim),
            ProxFunctionDto::L1 { dim, tau } => ProxFunction::l1(dim, tau),
            ProxFunctionDto::WeightedL1Box {
                dim,
                weights,
                lower,
                upper,
            } => {
                let f = ProxFunction::weighted_l1_box(
                    DVector::from_vec(weights),
                    DVector::from_vec(lower),
                    DVector::from_vec(upper),
                )?;
                f.expect_dim(dim)
            }
            ProxFunctionDto::Quadratic { dim, matrix } => {
                let n = matrix.len();
                let mut q = DMatrix::zeros(n, n);
                for (i, row) in matrix.iter().enumerate() {
                    if row.len() != n {
                        return Err(ProxError::InvalidData("matrix is not square".into()));
                    }
                    for (j, &v) in row.iter().enumerate() {
                        q[(i, j)] = v;
                    }
                }
                let f = ProxFunction::quadratic(q)?;
                f.expect_dim(dim)
            }
        }
    }
}

impl From<ProxFunction> for ProxFunctionDto {
    fn from(f: ProxFunction) -> Self {
        let dim = f.dim;
        match f.kind {
            ProxKind::Zero => ProxFunctionDto::Zero { dim },
            ProxKind::Box { lower, upper } => ProxFunctionDto::Box {
                dim,
                lower: lower.iter().copied().collect(),
                upper: upper.iter().copied().collect(),
            },
            ProxKind::Nonneg => ProxFunctionDto::Nonneg { dim },
            ProxKind::L1 { tau } => ProxFunctionDto::L1 { dim, tau },
            ProxKind::WeightedL1Box {
                weights,
                lower,
                upper,
            } => ProxFunctionDto::WeightedL1Box {
                dim,
                weights: weights.iter().copied().collect(),
                lower: lower.iter().copied().collect(),
                upper: upper.iter().copied().collect(),
            },
            ProxKind::Quadratic { matrix } => ProxFunctionDto::Quadratic {
                dim,
                matrix: (0..matrix.nrows())
                    .map(|i| matrix.row(i).iter().copied().collect())
                    .collect(),
            },
        }
    }
}

/// Value and one-sided derivatives of a scalar prox piece.
#[derive(Debug, Clone, Copy)]
struct ScalarProx {
    value: f64,
    left: f64,
    right: f64,
}

fn scalar_clamp(l: f64, u: f64, z: f64, tol: f64) -> ScalarProx {
    if u - l <= tol {
        // degenerate interval: the prox is (numerically) constant
        return ScalarProx {
            value: z.clamp(l, u),
            left: 0.0,
            right: 0.0,
        };
    }
    if z <= l - tol {
        ScalarProx {
            value: l,
            left: 0.0,
            right: 0.0,
        }
    } else if z < l + tol {
        ScalarProx {
            value: l,
            left: 0.0,
            right: 1.0,
        }
    } else if z <= u - tol {
        ScalarProx {
            value: z.clamp(l, u),
            left: 1.0,
            right: 1.0,
        }
    } else if z < u + tol {
        ScalarProx {
            value: u,
            left: 1.0,
            right: 0.0,
        }
    } else {
        ScalarProx {
            value: u,
            left: 0.0,
            right: 0.0,
        }
    }
}

fn scalar_soft(threshold: f64, z: f64, tol: f64) -> ScalarProx {
    if threshold <= 0.0 {
        return ScalarProx {
            value: z,
            left: 1.0,
            right: 1.0,
        };
    }
    if z >= threshold + tol {
        ScalarProx {
            value: z - threshold,
            left: 1.0,
            right: 1.0,
        }
    } else if z > threshold - tol {
        ScalarProx {
            value: 0.0,
            left: 0.0,
            right: 1.0,
        }
    } else if z >= -threshold + tol {
        ScalarProx {
            value: 0.0,
            left: 0.0,
            right: 0.0,
        }
    } else if z > -threshold - tol {
        ScalarProx {
            value: 0.0,
            left: 1.0,
            right: 0.0,
        }
    } else {
        ScalarProx {
            value: z + threshold,
            left: 1.0,
            right: 1.0,
        }
    }
}

fn compose(inner: ScalarProx, outer: ScalarProx) -> ScalarProx {
    // one-sided chain rule for nondecreasing piecewise-linear maps with
    // slopes in {0,1}: a flat inner side freezes the composite side
    ScalarProx {
        value: outer.value,
        left: inner.left * outer.left,
        right: inner.right * outer.right,
    }
}

impl ProxFunction {
    pub fn zero(dim: usize) -> Result<Self, ProxError> {
        require_dim(dim)?;
        Ok(ProxFunction {
            dim,
            kind: ProxKind::Zero,
        })
    }

    pub fn nonneg(dim: usize) -> Result<Self, ProxError> {
        require_dim(dim)?;
        Ok(ProxFunction {
            dim,
            kind: ProxKind::Nonneg,
        })
    }

    pub fn box_bounds(lower: DVector<f64>, upper: DVector<f64>) -> Result<Self, ProxError> {
        let dim = lower.len();
        require_dim(dim)?;
        check_bounds(&lower, &upper)?;
        Ok(ProxFunction {
            dim,
            kind: ProxKind::Box { lower, upper },
        })
    }

    pub fn l1(dim: usize, tau: f64) -> Result<Self, ProxError> {
        require_dim(dim)?;
        if !(tau >= 0.0 && tau.is_finite()) {
            return Err(ProxError::InvalidData("tau must be finite and >= 0".into()));
        }
        Ok(ProxFunction {
            dim,
            kind: ProxKind::L1 { tau },
        })
    }

    pub fn weighted_l1_box(
        weights: DVector<f64>,
        lower: DVector<f64>,
        upper: DVector<f64>,
    ) -> Result<Self, ProxError> {
        let dim = weights.len();
        require_dim(dim)?;
        if lower.len() != dim || upper.len() != dim {
            return Err(ProxError::InvalidData(
                "weights and bounds must share a length".into(),
            ));
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(ProxError::InvalidData(
                "weights must be finite and >= 0".into(),
            ));
        }
        check_bounds(&lower, &upper)?;
        Ok(ProxFunction {
            dim,
            kind: ProxKind::WeightedL1Box {
                weights,
                lower,
                upper,
            },
        })
    }

    pub fn quadratic(matrix: DMatrix<f64>) -> Result<Self, ProxError> {
        let dim = matrix.nrows();
        require_dim(dim)?;
        if matrix.ncols() != dim {
            return Err(ProxError::InvalidData("matrix is not square".into()));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(ProxError::InvalidData("non-finite matrix entry".into()));
        }
        let scale = 1.0 + matrix.amax();
        if (&matrix - matrix.transpose()).amax() > 1e-10 * scale {
            return Err(ProxError::InvalidData("matrix is not symmetric".into()));
        }
        let eigs = matrix.clone().symmetric_eigen().eigenvalues;
        if eigs.iter().any(|&e| e < -1e-10 * scale) {
            return Err(ProxError::InvalidData(
                "matrix is not positive semidefinite".into(),
            ));
        }
        Ok(ProxFunction {
            dim,
            kind: ProxKind::Quadratic { matrix },
        })
    }

    fn expect_dim(self, dim: usize) -> Result<Self, ProxError> {
        if self.dim != dim {
            return Err(ProxError::InvalidData(format!(
                "declared dim {dim} does not match data length {}",
                self.dim
            )));
        }
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Whether the function acts coordinatewise (everything but quadratic).
    pub fn is_separable(&self) -> bool {
        !matches!(self.kind, ProxKind::Quadratic { .. })
    }

    fn scalar(&self, i: usize, step: f64, z: f64, tol: f64) -> ScalarProx {
        match &self.kind {
            ProxKind::Zero => ScalarProx {
                value: z,
                left: 1.0,
                right: 1.0,
            },
            ProxKind::Box { lower, upper } => scalar_clamp(lower[i], upper[i], z, tol),
            ProxKind::Nonneg => scalar_clamp(0.0, f64::INFINITY, z, tol),
            ProxKind::L1 { tau } => scalar_soft(step * tau, z, tol),
            ProxKind::WeightedL1Box {
                weights,
                lower,
                upper,
            } => {
                let soft = scalar_soft(step * weights[i], z, tol);
                let clamp = scalar_clamp(lower[i], upper[i], soft.value, tol);
                compose(soft, clamp)
            }
            ProxKind::Quadratic { .. } => unreachable!("quadratic kind is not separable"),
        }
    }

    /// The proximal point argmin_w q(w) + 1/(2 step) ||w - z||^2.
    pub fn prox(&self, step: f64, z: &DVector<f64>) -> DVector<f64> {
        assert!(step > 0.0, "prox step must be positive");
        assert_eq!(z.len(), self.dim, "prox input has wrong length");
        match &self.kind {
            ProxKind::Quadratic { matrix } => {
                let sys = DMatrix::identity(self.dim, self.dim) + step * matrix;
                match sys.clone().cholesky() {
                    Some(ch) => ch.solve(z),
                    None => linalg::solve_checked(&sys, z)
                        .expect("I + step Q is positive definite"),
                }
            }
            _ => {
                let tol = tol::kink_tol(z.norm());
                DVector::from_fn(self.dim, |i, _| self.scalar(i, step, z[i], tol).value)
            }
        }
    }

    /// Coordinates where the prox has distinct one-sided derivatives at `z`
    /// (always empty for the smooth quadratic kind), ascending.
    pub fn kink_coordinates(&self, step: f64, z: &DVector<f64>) -> Vec<usize> {
        assert!(step > 0.0, "prox step must be positive");
        assert_eq!(z.len(), self.dim);
        if !self.is_separable() {
            return Vec::new();
        }
        let tol = tol::kink_tol(z.norm());
        (0..self.dim)
            .filter(|&i| {
                let s = self.scalar(i, step, z[i], tol);
                s.left != s.right
            })
            .collect()
    }

    /// One element of the Bouligand subdifferential of the prox at `z`, with
    /// kink coordinates resolved by `sel`.
    pub fn bouligand_element(
        &self,
        step: f64,
        z: &DVector<f64>,
        sel: BouligandSelector,
    ) -> Result<DMatrix<f64>, ProxError> {
        assert!(step > 0.0, "prox step must be positive");
        assert_eq!(z.len(), self.dim);
        if let ProxKind::Quadratic { matrix } = &self.kind {
            let sys = DMatrix::identity(self.dim, self.dim) + step * matrix;
            let inv = sys
                .clone()
                .cholesky()
                .map(|c| c.inverse())
                .unwrap_or_else(|| {
                    sys.try_inverse().expect("I + step Q is positive definite")
                });
            // symmetrize away factorization round-off
            return Ok(0.5 * (&inv + inv.transpose()));
        }
        let tol = tol::kink_tol(z.norm());
        let mut diag = DVector::zeros(self.dim);
        let mut kink_no = 0usize;
        for i in 0..self.dim {
            let s = self.scalar(i, step, z[i], tol);
            diag[i] = if s.left == s.right {
                s.left
            } else {
                let pick_one = match sel {
                    BouligandSelector::Lower => false,
                    BouligandSelector::Upper => true,
                    BouligandSelector::ByIndex(bits) => bits >> kink_no & 1 == 1,
                };
                kink_no += 1;
                if pick_one {
                    1.0
                } else {
                    0.0
                }
            };
        }
        if let BouligandSelector::ByIndex(bits) = sel {
            if kink_no < 64 && bits >> kink_no != 0 {
                return Err(ProxError::SelectorMismatch { kinks: kink_no });
            }
        }
        Ok(DMatrix::from_diagonal(&diag))
    }

    /// Every Bouligand element of the prox at `z`: all selector resolutions
    /// of the kink coordinates. Separable kinds only.
    pub fn enumerate_bouligand(
        &self,
        step: f64,
        z: &DVector<f64>,
    ) -> Result<Vec<DMatrix<f64>>, ProxError> {
        if !self.is_separable() {
            return Err(ProxError::UnsupportedKind("quadratic"));
        }
        let kinks = self.kink_coordinates(step, z).len();
        if kinks > MAX_ENUM_KINKS {
            return Err(ProxError::TooManyKinks {
                kinks,
                max: MAX_ENUM_KINKS,
            });
        }
        let mut out: Vec<DMatrix<f64>> = Vec::with_capacity(1 << kinks);
        for bits in 0u64..(1u64 << kinks) {
            let b = self.bouligand_element(step, z, BouligandSelector::ByIndex(bits))?;
            if !out.iter().any(|other| other == &b) {
                out.push(b);
            }
        }
        Ok(out)
    }

    /// The subspace pair (Ystar, Xstar) = (B, gamma (I - B)) encoding the
    /// graphical derivative used by the composite solver, with
    /// B = bouligand_element at step 1/gamma. The stacked pair has full
    /// column rank, and gamma Ystar + Xstar = gamma I.
    pub fn scd_pair(
        &self,
        gamma: f64,
        z: &DVector<f64>,
        sel: BouligandSelector,
    ) -> Result<(DMatrix<f64>, DMatrix<f64>), ProxError> {
        assert!(gamma > 0.0, "gamma must be positive");
        let b = self.bouligand_element(1.0 / gamma, z, sel)?;
        Ok(scd_pair_from_element(gamma, b))
    }

    /// Whether `dstar` is a subgradient of q at `d`, through the prox fixed
    /// point: dstar ∈ ∂q(d) iff prox(q, 1, d + dstar) = d.
    pub fn subgradient_check(&self, d: &DVector<f64>, dstar: &DVector<f64>) -> bool {
        assert_eq!(d.len(), self.dim);
        assert_eq!(dstar.len(), self.dim);
        let back = self.prox(1.0, &(d + dstar));
        (back - d).norm() <= tol::SUBGRAD_REL * (1.0 + d.norm())
    }
}

/// Completes a derivative element of the prox into the subspace pair
/// (Ystar, Xstar) = (B, gamma (I - B)). Xstar is formed entrywise so that
/// gamma Ystar + Xstar equals gamma I without rounding whenever B has 0/1
/// entries.
pub fn scd_pair_from_element(gamma: f64, b: DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let n = b.nrows();
    let xstar = DMatrix::from_fn(n, n, |i, j| {
        let target = if i == j { gamma } else { 0.0 };
        target - gamma * b[(i, j)]
    });
    (b, xstar)
}

fn require_dim(dim: usize) -> Result<(), ProxError> {
    if dim == 0 {
        Err(ProxError::InvalidData("dim must be positive".into()))
    } else {
        Ok(())
    }
}

fn check_bounds(lower: &DVector<f64>, upper: &DVector<f64>) -> Result<(), ProxError> {
    for i in 0..lower.len() {
        let (l, u) = (lower[i], upper[i]);
        if !l.is_finite() || !u.is_finite() {
            return Err(ProxError::InvalidData("bounds must be finite".into()));
        }
        if l > u {
            return Err(ProxError::InvalidData(format!(
                "lower bound exceeds upper bound at coordinate {i}"
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec2(a: f64, b: f64) -> DVector<f64> {
        DVector::from_vec(vec![a, b])
    }

    #[test]
    fn soft_threshold_values() {
        let q = ProxFunction::l1(3, 1.0).unwrap();
        let p = q.prox(1.0, &DVector::from_vec(vec![2.0, -0.5, 0.0]));
        assert!((p - DVector::from_vec(vec![1.0, 0.0, 0.0])).amax() < 1e-15);
    }

    #[test]
    fn box_interior_is_identity() {
        let q = ProxFunction::box_bounds(vec2(-1.0, -1.0), vec2(1.0, 1.0)).unwrap();
        let z = vec2(0.3, -0.9);
        assert!((q.prox(0.5, &z) - &z).amax() < 1e-15);
    }

    #[test]
    fn quadratic_identity_halves() {
        let q = ProxFunction::quadratic(DMatrix::identity(2, 2)).unwrap();
        let z = vec2(3.0, -4.0);
        assert!((q.prox(1.0, &z) - 0.5 * &z).amax() < 1e-12);
    }

    #[test]
    fn l1_derivative_off_kinks() {
        let q = ProxFunction::l1(2, 1.0).unwrap();
        let b = q
            .bouligand_element(1.0, &vec2(2.0, -0.5), BouligandSelector::Lower)
            .unwrap();
        assert_eq!(b, DMatrix::from_diagonal(&vec2(1.0, 0.0)));
        assert!(q.kink_coordinates(1.0, &vec2(2.0, -0.5)).is_empty());
    }

    #[test]
    fn zero_kind_derivative_is_identity() {
        let q = ProxFunction::zero(3).unwrap();
        let b = q
            .bouligand_element(2.0, &DVector::zeros(3), BouligandSelector::Upper)
            .unwrap();
        assert_eq!(b, DMatrix::identity(3, 3));
    }

    #[test]
    fn l1_kink_selectors() {
        let q = ProxFunction::l1(2, 1.0).unwrap();
        let z = vec2(1.0, 0.0);
        // z2 = 0 sits strictly inside the flat region, so only the first
        // coordinate is a kink; its sides are 0 (flat) and 1 (sloped)
        assert_eq!(q.kink_coordinates(1.0, &z), vec![0]);
        let lo = q.bouligand_element(1.0, &z, BouligandSelector::Lower).unwrap();
        let hi = q.bouligand_element(1.0, &z, BouligandSelector::Upper).unwrap();
        assert_eq!(lo, DMatrix::from_diagonal(&vec2(0.0, 0.0)));
        assert_eq!(hi, DMatrix::from_diagonal(&vec2(1.0, 0.0)));
    }

    #[test]
    fn selector_bits_checked() {
        let q = ProxFunction::l1(2, 1.0).unwrap();
        let z = vec2(1.0, 0.0); // one kink
        assert!(q
            .bouligand_element(1.0, &z, BouligandSelector::ByIndex(0b1))
            .is_ok());
        assert_eq!(
            q.bouligand_element(1.0, &z, BouligandSelector::ByIndex(0b10)),
            Err(ProxError::SelectorMismatch { kinks: 1 })
        );
    }

    #[test]
    fn enumerate_covers_all_resolutions() {
        let q = ProxFunction::l1(1, 1.0).unwrap();
        let smooth = q.enumerate_bouligand(1.0, &DVector::from_vec(vec![5.0])).unwrap();
        assert_eq!(smooth.len(), 1);

        let at_kink = q.enumerate_bouligand(1.0, &DVector::from_vec(vec![1.0])).unwrap();
        assert_eq!(at_kink.len(), 2);
        let mut vals: Vec<f64> = at_kink.iter().map(|m| m[(0, 0)]).collect();
        vals.sort_by(f64::total_cmp);
        assert_eq!(vals, vec![0.0, 1.0]);

        let q2 = ProxFunction::l1(2, 1.0).unwrap();
        let both = q2.enumerate_bouligand(1.0, &vec2(1.0, -1.0)).unwrap();
        assert_eq!(both.len(), 4);
    }

    #[test]
    fn enumerate_rejects_quadratic() {
        let q = ProxFunction::quadratic(DMatrix::identity(2, 2)).unwrap();
        assert_eq!(
            q.enumerate_bouligand(1.0, &DVector::zeros(2)),
            Err(ProxError::UnsupportedKind("quadratic"))
        );
    }

    #[test]
    fn scd_pair_examples() {
        let q = ProxFunction::l1(2, 1.0).unwrap();
        let (y, x) = q
            .scd_pair(1.0, &vec2(2.0, -0.5), BouligandSelector::Lower)
            .unwrap();
        assert_eq!(y, DMatrix::from_diagonal(&vec2(1.0, 0.0)));
        assert_eq!(x, DMatrix::from_diagonal(&vec2(0.0, 1.0)));

        let z = ProxFunction::zero(2).unwrap();
        let (y, x) = z.scd_pair(2.0, &vec2(0.0, 0.0), BouligandSelector::Lower).unwrap();
        assert_eq!(y, DMatrix::identity(2, 2));
        assert!(x.amax() == 0.0);
    }

    #[test]
    fn scd_identity_is_exact_for_separable_kinds() {
        let q = ProxFunction::weighted_l1_box(
            DVector::from_vec(vec![0.5, 1.5, 0.0]),
            DVector::from_vec(vec![-1.0, -2.0, 0.0]),
            DVector::from_vec(vec![1.0, 2.0, 0.5]),
        )
        .unwrap();
        for gamma in [0.3, 1.0, 7.7] {
            for z in [
                DVector::from_vec(vec![2.0, -0.5, 0.25]),
                DVector::from_vec(vec![0.5 / gamma, 0.0, 0.5]),
            ] {
                let (y, x) = q.scd_pair(gamma, &z, BouligandSelector::Upper).unwrap();
                let combo = gamma * &y + &x;
                for i in 0..3 {
                    for j in 0..3 {
                        let want = if i == j { gamma } else { 0.0 };
                        assert_eq!(combo[(i, j)], want, "entry ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn subgradient_membership() {
        let z = ProxFunction::zero(2).unwrap();
        assert!(z.subgradient_check(&vec2(1.0, 2.0), &DVector::zeros(2)));

        let nn = ProxFunction::nonneg(2).unwrap();
        assert!(nn.subgradient_check(&vec2(0.0, 1.0), &vec2(-3.0, 0.0)));
        assert!(!nn.subgradient_check(&vec2(0.0, 1.0), &vec2(3.0, 0.0)));

        let l1 = ProxFunction::l1(1, 1.0).unwrap();
        assert!(!l1.subgradient_check(
            &DVector::from_vec(vec![0.0]),
            &DVector::from_vec(vec![2.0])
        ));
        assert!(l1.subgradient_check(
            &DVector::from_vec(vec![0.0]),
            &DVector::from_vec(vec![0.7])
        ));
    }

    #[test]
    fn degenerate_box_coordinate_is_flat() {
        let q = ProxFunction::box_bounds(vec2(0.5, 0.0), vec2(0.5, 1.0)).unwrap();
        let b = q
            .bouligand_element(1.0, &vec2(0.5, 0.5), BouligandSelector::Upper)
            .unwrap();
        assert_eq!(b, DMatrix::from_diagonal(&vec2(0.0, 1.0)));
        assert!(q.kink_coordinates(1.0, &vec2(0.5, 0.5)).is_empty());
    }

    #[test]
    fn weighted_l1_box_composition() {
        // weight 1, box [0, 0.5]: z = 2 soft-thresholds to 1, clamps to 0.5
        let q = ProxFunction::weighted_l1_box(
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![0.5]),
        )
        .unwrap();
        let p = q.prox(1.0, &DVector::from_vec(vec![2.0]));
        assert!((p[0] - 0.5).abs() < 1e-15);
        // derivative 0: the clamp is saturated
        let b = q
            .bouligand_element(1.0, &DVector::from_vec(vec![2.0]), BouligandSelector::Lower)
            .unwrap();
        assert_eq!(b[(0, 0)], 0.0);
        // kink of the composition where the soft output hits the upper bound
        let kinks = q.kink_coordinates(1.0, &DVector::from_vec(vec![1.5]));
        assert_eq!(kinks, vec![0]);
    }

    #[test]
    fn bad_data_rejected() {
        assert!(ProxFunction::l1(2, -1.0).is_err());
        assert!(ProxFunction::box_bounds(vec2(1.0, 0.0), vec2(0.0, 1.0)).is_err());
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 0.0, 1.0]);
        assert!(ProxFunction::quadratic(asym).is_err());
        let indef = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(ProxFunction::quadratic(indef).is_err());
    }

    #[test]
    fn json_round_trip() {
        let q = ProxFunction::l1(20, 1.0).unwrap();
        let s = serde_json::to_string(&q).unwrap();
        assert!(s.contains("\"kind\":\"l1\""));
        assert!(s.contains("\"tau\":1.0"));
        assert!(s.contains("\"dim\":20"));
        let back: ProxFunction = serde_json::from_str(&s).unwrap();
        assert_eq!(back, q);

        let w = ProxFunction::weighted_l1_box(
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![0.0]),
            DVector::from_vec(vec![2.0]),
        )
        .unwrap();
        let s = serde_json::to_string(&w).unwrap();
        assert!(s.contains("\"kind\":\"weighted_l1_box\""));
        assert_eq!(serde_json::from_str::<ProxFunction>(&s).unwrap(), w);
    }

    #[test]
    fn json_rejects_crossed_bounds() {
        let s = r#"{"kind":"box","dim":1,"lower":[1.0],"upper":[0.0]}"#;
        assert!(serde_json::from_str::<ProxFunction>(s).is_err());
    }
}
