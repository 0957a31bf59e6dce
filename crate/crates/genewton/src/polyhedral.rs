//! Polyhedral convex sets and cones: projection, tangent/normal/critical
//! cones, face enumeration, and the Bouligand subdifferential of the
//! projection map.
//!
//! Sets are held in H-representation {d : A d <= b, E d = e}. Cones drop the
//! right-hand sides. Faces of a cone are obtained by tightening subsets of
//! inequality rows; each face is certified by a relative-interior witness
//! found by a margin QP so its span can be read off the rows tight there.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg;
use crate::qp::{self, Ldqp, QpError};
use crate::tol;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PolyhedralError {
    /// The constraint system has no feasible point.
    #[error("constraint system is infeasible")]
    QpInfeasible,
    #[error("point violates the set by {violation:.3e}")]
    PointNotInSet { violation: f64 },
    /// Fixed-point test project(d + lam) = d failed: lam is not a normal at d.
    #[error("vector is not a normal at the given point (gap {gap:.3e})")]
    NotANormal { gap: f64 },
    #[error("face enumeration needs at most {max} inequality rows, got {rows}")]
    TooManyRows { rows: usize, max: usize },
    #[error("invalid polyhedral data: {0}")]
    InvalidData(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl From<QpError> for PolyhedralError {
    fn from(e: QpError) -> Self {
        match e {
            QpError::Infeasible => PolyhedralError::QpInfeasible,
            QpError::MaxPivots => PolyhedralError::Numerical("pivot limit in QP".into()),
            QpError::ShapeMismatch(s) => PolyhedralError::InvalidData(s),
        }
    }
}

/// Maximum inequality-row count accepted by face enumeration.
pub const MAX_FACE_ROWS: usize = 12;

/// Closed convex polyhedral set {d : A d <= b, E d = e}, validated nonempty
/// at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolyhedralSetDto", into = "PolyhedralSetDto")]
pub struct PolyhedralSet {
    dim: usize,
    ineq_matrix: DMatrix<f64>,
    ineq_rhs: DVector<f64>,
    eq_matrix: DMatrix<f64>,
    eq_rhs: DVector<f64>,
}

/// Wire format: nested row-major arrays, empty blocks omitted.
#[derive(Serialize, Deserialize)]
struct PolyhedralSetDto {
    dim: usize,
    #[serde(default)]
    ineq_matrix: Vec<Vec<f64>>,
    #[serde(default)]
    ineq_rhs: Vec<f64>,
    #[serde(default)]
    eq_matrix: Vec<Vec<f64>>,
    #[serde(default)]
    eq_rhs: Vec<f64>,
}

impl TryFrom<PolyhedralSetDto> for PolyhedralSet {
    type Error = PolyhedralError;

    fn try_from(dto: PolyhedralSetDto) -> Result<Self, PolyhedralError> {
        let a = rows_to_matrix(&dto.ineq_matrix, dto.dim, "ineq_matrix")?;
        let e = rows_to_matrix(&dto.eq_matrix, dto.dim, "eq_matrix")?;
        PolyhedralSet::new(
            dto.dim,
            a,
            DVector::from_vec(dto.ineq_rhs),
            e,
            DVector::from_vec(dto.eq_rhs),
        )
    }
}

impl From<PolyhedralSet> for PolyhedralSetDto {
    fn from(set: PolyhedralSet) -> Self {
        PolyhedralSetDto {
            dim: set.dim,
            ineq_matrix: matrix_to_rows(&set.ineq_matrix),
            ineq_rhs: set.ineq_rhs.iter().copied().collect(),
            eq_matrix: matrix_to_rows(&set.eq_matrix),
            eq_rhs: set.eq_rhs.iter().copied().collect(),
        }
    }
}

fn rows_to_matrix(
    rows: &[Vec<f64>],
    dim: usize,
    what: &str,
) -> Result<DMatrix<f64>, PolyhedralError> {
    let mut m = DMatrix::zeros(rows.len(), dim);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != dim {
            return Err(PolyhedralError::InvalidData(format!(
                "{what} row {i} has {} entries, expected {dim}",
                row.len()
            )));
        }
        for (j, &v) in row.iter().enumerate() {
            m[(i, j)] = v;
        }
    }
    Ok(m)
}

fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

/// Result of projecting a point onto a polyhedral set.
#[derive(Debug, Clone)]
pub struct Projection {
    pub point: DVector<f64>,
    /// Inequality multipliers followed by equality multipliers (length m+p).
    pub multiplier: DVector<f64>,
    /// Rows active at the projected point (geometric activity, not the
    /// working set).
    pub active: Vec<usize>,
}

impl PolyhedralSet {
    /// Validated constructor; rejects empty sets, non-finite entries, zero
    /// inequality rows, and shape mismatches.
    pub fn new(
        dim: usize,
        ineq_matrix: DMatrix<f64>,
        ineq_rhs: DVector<f64>,
        eq_matrix: DMatrix<f64>,
        eq_rhs: DVector<f64>,
    ) -> Result<Self, PolyhedralError> {
        if dim == 0 {
            return Err(PolyhedralError::InvalidData("dim must be positive".into()));
        }
        if ineq_matrix.ncols() != dim || eq_matrix.ncols() != dim {
            return Err(PolyhedralError::InvalidData(format!(
                "matrix widths {} / {} do not match dim {dim}",
                ineq_matrix.ncols(),
                eq_matrix.ncols()
            )));
        }
        if ineq_matrix.nrows() != ineq_rhs.len() || eq_matrix.nrows() != eq_rhs.len() {
            return Err(PolyhedralError::InvalidData(
                "row counts do not match rhs lengths".into(),
            ));
        }
        let finite = ineq_matrix.iter().all(|v| v.is_finite())
            && ineq_rhs.iter().all(|v| v.is_finite())
            && eq_matrix.iter().all(|v| v.is_finite())
            && eq_rhs.iter().all(|v| v.is_finite());
        if !finite {
            return Err(PolyhedralError::InvalidData("non-finite entry".into()));
        }
        for i in 0..ineq_matrix.nrows() {
            if ineq_matrix.row(i).norm() == 0.0 {
                return Err(PolyhedralError::InvalidData(format!(
                    "inequality row {i} is the zero vector"
                )));
            }
        }
        let set = PolyhedralSet {
            dim,
            ineq_matrix,
            ineq_rhs,
            eq_matrix,
            eq_rhs,
        };
        // nonemptiness check: project the origin
        set.project(&DVector::zeros(dim))?;
        Ok(set)
    }

    /// The nonnegative orthant of dimension `n`, encoded as -d <= 0.
    pub fn nonneg_orthant(n: usize) -> Self {
        PolyhedralSet::new(
            n,
            -DMatrix::<f64>::identity(n, n),
            DVector::zeros(n),
            DMatrix::zeros(0, n),
            DVector::zeros(0),
        )
        .expect("orthant is nonempty")
    }

    /// The box {d : lower <= d <= upper}; bounds must be finite with
    /// lower <= upper componentwise.
    pub fn box_set(lower: &DVector<f64>, upper: &DVector<f64>) -> Result<Self, PolyhedralError> {
        let n = lower.len();
        if upper.len() != n || n == 0 {
            return Err(PolyhedralError::InvalidData("bad box bounds".into()));
        }
        if (0..n).any(|i| lower[i] > upper[i]) {
            return Err(PolyhedralError::InvalidData(
                "box has lower > upper".into(),
            ));
        }
        let mut a = DMatrix::zeros(2 * n, n);
        let mut b = DVector::zeros(2 * n);
        for i in 0..n {
            a[(i, i)] = 1.0;
            b[i] = upper[i];
            a[(n + i, i)] = -1.0;
            b[n + i] = -lower[i];
        }
        PolyhedralSet::new(n, a, b, DMatrix::zeros(0, n), DVector::zeros(0))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ineq_matrix(&self) -> &DMatrix<f64> {
        &self.ineq_matrix
    }

    pub fn ineq_rhs(&self) -> &DVector<f64> {
        &self.ineq_rhs
    }

    pub fn eq_matrix(&self) -> &DMatrix<f64> {
        &self.eq_matrix
    }

    pub fn eq_rhs(&self) -> &DVector<f64> {
        &self.eq_rhs
    }

    /// Worst constraint violation at `d` (0 inside the set).
    pub fn violation(&self, d: &DVector<f64>) -> f64 {
        let mut v: f64 = 0.0;
        for i in 0..self.ineq_matrix.nrows() {
            v = v.max(self.ineq_matrix.row(i).transpose().dot(d) - self.ineq_rhs[i]);
        }
        for i in 0..self.eq_matrix.nrows() {
            v = v.max((self.eq_matrix.row(i).transpose().dot(d) - self.eq_rhs[i]).abs());
        }
        v
    }

    pub fn contains(&self, d: &DVector<f64>) -> bool {
        self.violation(d) <= tol::active_tol(d.norm())
    }

    /// Indices of inequality rows active at `d` (|a_i . d - b_i| within the
    /// scale-aware activity tolerance).
    pub fn active_rows(&self, d: &DVector<f64>) -> Vec<usize> {
        let tol = tol::active_tol(d.norm());
        (0..self.ineq_matrix.nrows())
            .filter(|&i| {
                (self.ineq_matrix.row(i).transpose().dot(d) - self.ineq_rhs[i]).abs() <= tol
            })
            .collect()
    }

    fn require_member(&self, d: &DVector<f64>) -> Result<(), PolyhedralError> {
        let v = self.violation(d);
        if v > tol::active_tol(d.norm()) {
            Err(PolyhedralError::PointNotInSet { violation: v })
        } else {
            Ok(())
        }
    }

    /// Euclidean projection onto the set with its KKT certificate.
    pub fn project(&self, y: &DVector<f64>) -> Result<Projection, PolyhedralError> {
        if y.len() != self.dim {
            return Err(PolyhedralError::InvalidData(format!(
                "point length {} does not match dim {}",
                y.len(),
                self.dim
            )));
        }
        let sol = qp::solve_ldqp(&Ldqp {
            linear_term: -y,
            ineq_matrix: self.ineq_matrix.clone(),
            ineq_rhs: self.ineq_rhs.clone(),
            eq_matrix: self.eq_matrix.clone(),
            eq_rhs: self.eq_rhs.clone(),
        })?;
        let m = self.ineq_rhs.len();
        let p = self.eq_rhs.len();
        let mut multiplier = DVector::zeros(m + p);
        multiplier.rows_mut(0, m).copy_from(&sol.ineq_multiplier);
        multiplier.rows_mut(m, p).copy_from(&sol.eq_multiplier);
        let active = self.active_rows(&sol.point);
        Ok(Projection {
            point: sol.point,
            multiplier,
            active,
        })
    }

    /// Tangent cone at `d`: active inequality rows plus all equality rows.
    pub fn tangent_cone(&self, d: &DVector<f64>) -> Result<PolyCone, PolyhedralError> {
        self.require_member(d)?;
        let active = self.active_rows(d);
        let mut c = DMatrix::zeros(active.len(), self.dim);
        for (k, &i) in active.iter().enumerate() {
            c.set_row(k, &self.ineq_matrix.row(i));
        }
        PolyCone::new(self.dim, c, self.eq_matrix.clone())
    }

    /// Orthonormal basis of span N_D(d) = span{active normals} + row space of
    /// the equality block. Zero columns when the normal cone is trivial.
    pub fn span_normal_basis(&self, d: &DVector<f64>) -> Result<DMatrix<f64>, PolyhedralError> {
        self.require_member(d)?;
        let active = self.active_rows(d);
        let p = self.eq_matrix.nrows();
        let mut stacked = DMatrix::zeros(active.len() + p, self.dim);
        for (k, &i) in active.iter().enumerate() {
            stacked.set_row(k, &self.ineq_matrix.row(i));
        }
        for i in 0..p {
            stacked.set_row(active.len() + i, &self.eq_matrix.row(i));
        }
        Ok(linalg::orthonormal_range(&stacked.transpose()))
    }

    /// Orthonormal basis of lin T_D(d), the orthogonal complement of
    /// span N_D(d).
    pub fn lin_tangent_basis(&self, d: &DVector<f64>) -> Result<DMatrix<f64>, PolyhedralError> {
        self.require_member(d)?;
        let active = self.active_rows(d);
        let p = self.eq_matrix.nrows();
        let mut stacked = DMatrix::zeros(active.len() + p, self.dim);
        for (k, &i) in active.iter().enumerate() {
            stacked.set_row(k, &self.ineq_matrix.row(i));
        }
        for i in 0..p {
            stacked.set_row(active.len() + i, &self.eq_matrix.row(i));
        }
        Ok(linalg::orthonormal_kernel(&stacked))
    }

    /// Critical cone T_D(d) ∩ [lam]^⊥. `lam` must be a regular normal at `d`,
    /// checked through the projection fixed point project(d + lam) = d.
    pub fn critical_cone(
        &self,
        d: &DVector<f64>,
        lam: &DVector<f64>,
    ) -> Result<PolyCone, PolyhedralError> {
        self.require_member(d)?;
        if lam.len() != self.dim {
            return Err(PolyhedralError::InvalidData(
                "normal length does not match dim".into(),
            ));
        }
        let back = self.project(&(d + lam))?.point;
        let gap = (&back - d).norm();
        if gap > tol::NORMAL_CHECK_REL * (1.0 + d.norm() + lam.norm()) {
            return Err(PolyhedralError::NotANormal { gap });
        }
        let tangent = self.tangent_cone(d)?;
        if lam.norm() == 0.0 {
            return Ok(tangent);
        }
        let p = tangent.eq_matrix.nrows();
        let mut eq = DMatrix::zeros(p + 1, self.dim);
        eq.view_mut((0, 0), (p, self.dim))
            .copy_from(&tangent.eq_matrix);
        eq.set_row(p, &lam.transpose());
        PolyCone::new(self.dim, tangent.ineq_matrix, eq)
    }

    /// All elements of the Bouligand subdifferential of the projection map at
    /// `mu`: the orthogonal projectors onto the spans of the faces of the
    /// critical cone at (Π(mu), mu − Π(mu)).
    pub fn bouligand_projection_elements(
        &self,
        mu: &DVector<f64>,
    ) -> Result<Vec<DMatrix<f64>>, PolyhedralError> {
        let proj = self.project(mu)?;
        let lam = mu - &proj.point;
        let critical = self.critical_cone(&proj.point, &lam)?;
        let faces = critical.enumerate_faces()?;
        Ok(faces
            .iter()
            .map(|f| {
                if f.span_basis.ncols() == 0 {
                    DMatrix::zeros(self.dim, self.dim)
                } else {
                    &f.span_basis * f.span_basis.transpose()
                }
            })
            .collect())
    }
}

/// Polyhedral convex cone {h : C h <= 0, E h = 0}.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyCone {
    dim: usize,
    ineq_matrix: DMatrix<f64>,
    eq_matrix: DMatrix<f64>,
}

/// One face of a cone: the rows tight on it, an orthonormal basis of its
/// span, and a relative-interior witness.
#[derive(Debug, Clone)]
pub struct FaceBasis {
    pub tight_rows: Vec<usize>,
    pub span_basis: DMatrix<f64>,
    pub witness: DVector<f64>,
}

impl PolyCone {
    pub fn new(
        dim: usize,
        ineq_matrix: DMatrix<f64>,
        eq_matrix: DMatrix<f64>,
    ) -> Result<Self, PolyhedralError> {
        if dim == 0 {
            return Err(PolyhedralError::InvalidData("dim must be positive".into()));
        }
        if ineq_matrix.ncols() != dim || eq_matrix.ncols() != dim {
            return Err(PolyhedralError::InvalidData(
                "cone matrix widths do not match dim".into(),
            ));
        }
        Ok(PolyCone {
            dim,
            ineq_matrix,
            eq_matrix,
        })
    }

    pub fn full_space(dim: usize) -> Self {
        PolyCone {
            dim,
            ineq_matrix: DMatrix::zeros(0, dim),
            eq_matrix: DMatrix::zeros(0, dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ineq_matrix(&self) -> &DMatrix<f64> {
        &self.ineq_matrix
    }

    pub fn eq_matrix(&self) -> &DMatrix<f64> {
        &self.eq_matrix
    }

    pub fn contains(&self, h: &DVector<f64>) -> bool {
        let tol = tol::active_tol(h.norm());
        let ineq_ok = (0..self.ineq_matrix.nrows())
            .all(|i| self.ineq_matrix.row(i).transpose().dot(h) <= tol);
        let eq_ok = (0..self.eq_matrix.nrows())
            .all(|i| self.eq_matrix.row(i).transpose().dot(h).abs() <= tol);
        ineq_ok && eq_ok
    }

    /// Euclidean projection onto the cone.
    pub fn project(&self, y: &DVector<f64>) -> Result<DVector<f64>, PolyhedralError> {
        let sol = qp::solve_ldqp(&Ldqp {
            linear_term: -y,
            ineq_matrix: self.ineq_matrix.clone(),
            ineq_rhs: DVector::zeros(self.ineq_matrix.nrows()),
            eq_matrix: self.eq_matrix.clone(),
            eq_rhs: DVector::zeros(self.eq_matrix.nrows()),
        })?;
        Ok(sol.point)
    }

    /// Polar cone membership test for a description row: row j is identically
    /// zero on the cone iff projecting -c_j onto it gives 0.
    fn row_forced_tight(&self, tight: &[bool], j: usize) -> Result<bool, PolyhedralError> {
        let sub = self.tightened(tight);
        let cj = self.ineq_matrix.row(j).transpose().into_owned();
        let w = sub.project(&(-&cj))?;
        Ok(w.norm() <= 1e-8 * (1.0 + cj.norm()))
    }

    /// The cone with the flagged rows moved into the equality block.
    fn tightened(&self, tight: &[bool]) -> PolyCone {
        let m = self.ineq_matrix.nrows();
        let loose: Vec<usize> = (0..m).filter(|&i| !tight[i]).collect();
        let hard: Vec<usize> = (0..m).filter(|&i| tight[i]).collect();
        let p = self.eq_matrix.nrows();
        let mut c = DMatrix::zeros(loose.len(), self.dim);
        for (k, &i) in loose.iter().enumerate() {
            c.set_row(k, &self.ineq_matrix.row(i));
        }
        let mut e = DMatrix::zeros(p + hard.len(), self.dim);
        e.view_mut((0, 0), (p, self.dim)).copy_from(&self.eq_matrix);
        for (k, &i) in hard.iter().enumerate() {
            e.set_row(p + k, &self.ineq_matrix.row(i));
        }
        PolyCone {
            dim: self.dim,
            ineq_matrix: c,
            eq_matrix: e,
        }
    }

    /// All faces of the cone, one per distinct span, each with a
    /// relative-interior witness. Enumeration is over subsets of inequality
    /// rows, so the row count is capped at [`MAX_FACE_ROWS`].
    pub fn enumerate_faces(&self) -> Result<Vec<FaceBasis>, PolyhedralError> {
        let m = self.ineq_matrix.nrows();
        if m > MAX_FACE_ROWS {
            return Err(PolyhedralError::TooManyRows {
                rows: m,
                max: MAX_FACE_ROWS,
            });
        }
        let mut faces: Vec<FaceBasis> = Vec::new();
        for mask in 0u32..(1u32 << m) {
            let mut tight = vec![false; m];
            for (j, t) in tight.iter_mut().enumerate() {
                *t = mask >> j & 1 == 1;
            }
            let face = self.face_for_subset(&mut tight)?;
            if !faces
                .iter()
                .any(|f| linalg::same_span(&f.span_basis, &face.span_basis))
            {
                faces.push(face);
            }
        }
        Ok(faces)
    }

    /// Builds the face generated by a tight subset: close the subset under
    /// implied tightness, find a strict-margin witness, and read the span off
    /// the tight rows.
    fn face_for_subset(&self, tight: &mut [bool]) -> Result<FaceBasis, PolyhedralError> {
        let m = tight.len();
        // closure: absorb rows that vanish identically on the current face
        loop {
            let mut grew = false;
            for j in 0..m {
                if !tight[j] && self.row_forced_tight(tight, j)? {
                    tight[j] = true;
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        loop {
            match self.margin_witness(tight)? {
                Some(witness) => {
                    let rows: Vec<usize> = (0..m).filter(|&i| tight[i]).collect();
                    let p = self.eq_matrix.nrows();
                    let mut stacked = DMatrix::zeros(rows.len() + p, self.dim);
                    for (k, &i) in rows.iter().enumerate() {
                        stacked.set_row(k, &self.ineq_matrix.row(i));
                    }
                    stacked
                        .view_mut((rows.len(), 0), (p, self.dim))
                        .copy_from(&self.eq_matrix);
                    let span_basis = linalg::orthonormal_kernel(&stacked);
                    return Ok(FaceBasis {
                        tight_rows: rows,
                        span_basis,
                        witness,
                    });
                }
                None => {
                    // the closure missed a forced row by tolerance; absorb the
                    // most nearly forced one and retry (terminates: the tight
                    // set grows each pass, and with all rows tight the margin
                    // QP has no inequality constraints left)
                    let mut best: Option<(f64, usize)> = None;
                    for j in 0..m {
                        if tight[j] {
                            continue;
                        }
                        let sub = self.tightened(tight);
                        let cj = self.ineq_matrix.row(j).transpose().into_owned();
                        let w = sub.project(&(-&cj))?;
                        let score = w.norm() / (1.0 + cj.norm());
                        if best.is_none_or(|(s, _)| score < s) {
                            best = Some((score, j));
                        }
                    }
                    let (_, j) = best.ok_or_else(|| {
                        PolyhedralError::Numerical(
                            "margin witness failed with all rows tight".into(),
                        )
                    })?;
                    tight[j] = true;
                }
            }
        }
    }

    /// Minimum-norm point with every non-tight row at margin <= -1; `None`
    /// when no such point exists (some row is implicitly tight).
    fn margin_witness(&self, tight: &[bool]) -> Result<Option<DVector<f64>>, PolyhedralError> {
        let m = self.ineq_matrix.nrows();
        let loose: Vec<usize> = (0..m).filter(|&i| !tight[i]).collect();
        let hard: Vec<usize> = (0..m).filter(|&i| tight[i]).collect();
        let p = self.eq_matrix.nrows();
        let mut c = DMatrix::zeros(loose.len(), self.dim);
        for (k, &i) in loose.iter().enumerate() {
            c.set_row(k, &self.ineq_matrix.row(i));
        }
        let mut e = DMatrix::zeros(p + hard.len(), self.dim);
        e.view_mut((0, 0), (p, self.dim)).copy_from(&self.eq_matrix);
        for (k, &i) in hard.iter().enumerate() {
            e.set_row(p + k, &self.ineq_matrix.row(i));
        }
        match qp::solve_ldqp(&Ldqp {
            linear_term: DVector::zeros(self.dim),
            ineq_matrix: c,
            ineq_rhs: DVector::from_element(loose.len(), -1.0),
            eq_matrix: e,
            eq_rhs: DVector::zeros(p + hard.len()),
        }) {
            Ok(sol) => Ok(Some(sol.point)),
            Err(QpError::Infeasible) => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}
