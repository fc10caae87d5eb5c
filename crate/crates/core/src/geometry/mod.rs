//! Convex polyhedra `C = {x : <x*_j, x> <= c_j}`, their normal cones and
//! Euclidean projections onto them.
//!
//! Face indices are zero-based throughout. Normals are stored exactly as
//! given and are never normalized; projection formulas divide by `|x*|^2`
//! where needed.

pub mod nnls;
pub mod qp;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use nnls::{nnls, NnlsSolution};
pub use qp::{QpError, QpSolution, QuadraticProgram};

/// Default feasibility tolerance for `contains`.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Default tolerance for active-face detection.
pub const ACTIVE_TOL: f64 = 1e-7;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("half-space normal must be nonzero")]
    ZeroNormal,
    #[error("polyhedron needs at least one face")]
    NoFaces,
    #[error("point violates face {face} by {violation:e}")]
    InfeasiblePoint { face: usize, violation: f64 },
    #[error("the constraint system is infeasible")]
    InfeasibleSystem,
    #[error("quadratic program failed: {0}")]
    Qp(#[from] QpError),
}

/// One face `<normal, x> <= offset`.
#[derive(Debug, Clone, PartialEq)]
pub struct HalfSpace {
    normal: DVector<f64>,
    offset: f64,
}

impl HalfSpace {
    pub fn new(normal: DVector<f64>, offset: f64) -> Result<Self, GeometryError> {
        if normal.iter().all(|&v| v == 0.0) || !normal.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::ZeroNormal);
        }
        Ok(Self { normal, offset })
    }

    pub fn normal(&self) -> &DVector<f64> {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// `<normal, x> - offset`; positive means violated.
    pub fn slack(&self, x: &DVector<f64>) -> f64 {
        self.normal.dot(x) - self.offset
    }
}

/// Sorted face indices.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActiveSet(Vec<usize>);

impl ActiveSet {
    pub fn empty() -> Self {
        Self(Vec::new())
    }

    pub fn from_indices(mut indices: Vec<usize>) -> Self {
        indices.sort_unstable();
        indices.dedup();
        Self(indices)
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }
}

/// Nonnegative coefficients `λ` (length `s`, zero off the active set) with
/// `residual = |v - Σ λ_j x*_j|`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeDecomposition {
    pub coefficients: DVector<f64>,
    pub residual: f64,
}

/// Thresholds used when classifying faces against a dual vector `y`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DualIndexRule {
    /// Compare `<x*_j, y>` against `c_j`.
    #[default]
    #[serde(rename = "offset")]
    OffsetThreshold,
    /// Compare `<x*_j, y>` against zero.
    #[serde(rename = "zero")]
    HomogeneousZero,
}

/// `I_0(y)` and `I_>(y)` over all faces.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DualIndexSets {
    pub zero: Vec<usize>,
    pub positive: Vec<usize>,
}

impl DualIndexSets {
    /// `I_0 ∪ I_>`.
    pub fn contains(&self, j: usize) -> bool {
        self.zero.contains(&j) || self.positive.contains(&j)
    }
}

#[derive(Debug, Clone)]
pub struct Projection {
    pub point: DVector<f64>,
    pub decomposition: ConeDecomposition,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    dim: usize,
    faces: Vec<HalfSpace>,
}

impl Polyhedron {
    pub fn new(faces: Vec<HalfSpace>) -> Result<Self, GeometryError> {
        let first = faces.first().ok_or(GeometryError::NoFaces)?;
        let dim = first.normal.len();
        for f in &faces {
            if f.normal.len() != dim {
                return Err(GeometryError::Dimension {
                    expected: dim,
                    got: f.normal.len(),
                });
            }
        }
        Ok(Self { dim, faces })
    }

    /// Builds `{x : A x <= b}`.
    pub fn from_system(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Self, GeometryError> {
        if a.nrows() != b.len() {
            return Err(GeometryError::Dimension {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        let faces = (0..a.nrows())
            .map(|r| HalfSpace::new(a.row(r).transpose(), b[r]))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(faces)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn faces(&self) -> &[HalfSpace] {
        &self.faces
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Face normals as the columns of an `n × s` matrix.
    pub fn normals_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.dim, self.faces.len(), |r, c| self.faces[c].normal[r])
    }

    /// Rows `x*_j'` and offsets `c_j`.
    pub fn system(&self) -> (DMatrix<f64>, DVector<f64>) {
        (
            self.normals_matrix().transpose(),
            DVector::from_iterator(self.faces.len(), self.faces.iter().map(|f| f.offset)),
        )
    }

    fn check_dim(&self, x: &DVector<f64>) -> Result<(), GeometryError> {
        if x.len() != self.dim {
            return Err(GeometryError::Dimension {
                expected: self.dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Largest `<x*_j, x> - c_j` over all faces.
    pub fn max_violation(&self, x: &DVector<f64>) -> f64 {
        self.faces
            .iter()
            .map(|f| f.slack(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: &DVector<f64>, tol: f64) -> Result<bool, GeometryError> {
        self.check_dim(x)?;
        Ok(self.faces.iter().all(|f| f.slack(x) <= tol))
    }

    /// Faces with `|<x*_j, x> - c_j| <= tol`. Fails when `x` is outside `C`
    /// by more than `tol`.
    pub fn active_set(&self, x: &DVector<f64>, tol: f64) -> Result<ActiveSet, GeometryError> {
        self.check_dim(x)?;
        let mut idx = Vec::new();
        for (j, f) in self.faces.iter().enumerate() {
            let s = f.slack(x);
            if s > tol {
                return Err(GeometryError::InfeasiblePoint {
                    face: j,
                    violation: s,
                });
            }
            if s.abs() <= tol {
                idx.push(j);
            }
        }
        Ok(ActiveSet(idx))
    }

    /// Same as [`Polyhedron::active_set`] but never fails: infeasible faces
    /// are simply not reported as active.
    pub fn near_faces(&self, x: &DVector<f64>, tol: f64) -> ActiveSet {
        ActiveSet(
            self.faces
                .iter()
                .enumerate()
                .filter(|(_, f)| f.slack(x).abs() <= tol)
                .map(|(j, _)| j)
                .collect(),
        )
    }

    /// Nonnegative least-squares representation of `v` by the normals of the
    /// active faces. An empty active set gives the cone `{0}`.
    pub fn normal_cone_decompose(&self, active: &ActiveSet, v: &DVector<f64>) -> ConeDecomposition {
        let mut coefficients = DVector::zeros(self.faces.len());
        if active.is_empty() {
            return ConeDecomposition {
                coefficients,
                residual: v.norm(),
            };
        }
        let a = DMatrix::from_fn(self.dim, active.len(), |r, c| {
            self.faces[active.0[c]].normal[r]
        });
        let sol = nnls(&a, v);
        for (c, &j) in active.0.iter().enumerate() {
            coefficients[j] = sol.x[c];
        }
        ConeDecomposition {
            coefficients,
            residual: sol.residual,
        }
    }

    /// Euclidean projection of `v` onto `C` with the decomposition of
    /// `v - z` in `N(z; C)`.
    pub fn project(&self, v: &DVector<f64>) -> Result<Projection, GeometryError> {
        self.check_dim(v)?;
        if self.faces.iter().all(|f| f.slack(v) <= 0.0) {
            return Ok(Projection {
                point: v.clone(),
                decomposition: ConeDecomposition {
                    coefficients: DVector::zeros(self.faces.len()),
                    residual: 0.0,
                },
            });
        }
        let (a, b) = self.system();
        let point = project_linear_system(&a, &b, v)?;
        let active = self.near_faces(&point, ACTIVE_TOL);
        let decomposition = self.normal_cone_decompose(&active, &(v - &point));
        Ok(Projection {
            point,
            decomposition,
        })
    }

    /// Positive linear independence of the active normals at `x`: no
    /// nonnegative `λ` with `Σ λ_j = 1` has `Σ λ_j x*_j = 0`.
    pub fn plicq(&self, x: &DVector<f64>, tol: f64) -> Result<bool, GeometryError> {
        let active = self.active_set(x, tol)?;
        Ok(positively_independent(
            &active
                .indices()
                .iter()
                .map(|&j| self.faces[j].normal.clone())
                .collect::<Vec<_>>(),
        ))
    }

    /// Classifies all faces against `y`:
    /// `I_0 = {j : |<x*_j, y> - θ_j| <= tol}`, `I_> = {j : <x*_j, y> > θ_j + tol}`
    /// with `θ_j = c_j` or `0` depending on `rule`.
    pub fn dual_index_sets(&self, y: &DVector<f64>, tol: f64, rule: DualIndexRule) -> DualIndexSets {
        let mut sets = DualIndexSets::default();
        for (j, f) in self.faces.iter().enumerate() {
            let threshold = match rule {
                DualIndexRule::OffsetThreshold => f.offset,
                DualIndexRule::HomogeneousZero => 0.0,
            };
            let value = f.normal.dot(y);
            if (value - threshold).abs() <= tol {
                sets.zero.push(j);
            } else if value > threshold + tol {
                sets.positive.push(j);
            }
        }
        sets
    }
}

/// True when only `λ = 0` makes `Σ λ_j v_j = 0` with `λ >= 0`.
pub fn positively_independent(vectors: &[DVector<f64>]) -> bool {
    let m = vectors.len();
    if m == 0 {
        return true;
    }
    let n = vectors[0].len();
    let x = DMatrix::from_fn(n, m, |r, c| vectors[c][r]);
    let scale = vectors.iter().map(|v| v.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return false;
    }
    let xs = &x / scale;
    let hessian = xs.tr_mul(&xs) + DMatrix::identity(m, m) * 1e-14;
    let linear = DVector::zeros(m);
    let eq = DMatrix::from_element(1, m, 1.0);
    let eq_rhs = DVector::from_element(1, 1.0);
    let ineq = -DMatrix::identity(m, m);
    let ineq_rhs = DVector::zeros(m);
    match qp::solve(&QuadraticProgram {
        hessian: &hessian,
        linear: &linear,
        eq_matrix: &eq,
        eq_rhs: &eq_rhs,
        ineq_matrix: &ineq,
        ineq_rhs: &ineq_rhs,
    }) {
        Ok(sol) => (&xs * &sol.x).norm() > 1e-6,
        Err(_) => true,
    }
}

/// Unique minimizer of `|z - v|^2` subject to `A z <= b`.
pub fn project_linear_system(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    v: &DVector<f64>,
) -> Result<DVector<f64>, GeometryError> {
    let n = v.len();
    if a.nrows() != b.len() {
        return Err(GeometryError::Dimension {
            expected: a.nrows(),
            got: b.len(),
        });
    }
    if a.nrows() == 0 {
        return Ok(v.clone());
    }
    if a.ncols() != n {
        return Err(GeometryError::Dimension {
            expected: a.ncols(),
            got: n,
        });
    }
    // Zero rows carry no geometry: either vacuous or infeasible.
    let mut keep = Vec::with_capacity(a.nrows());
    for r in 0..a.nrows() {
        if a.row(r).iter().all(|&x| x == 0.0) {
            if b[r] < -FEASIBILITY_TOL {
                return Err(GeometryError::InfeasibleSystem);
            }
        } else {
            keep.push(r);
        }
    }
    let a = a.select_rows(&keep);
    let b = DVector::from_iterator(keep.len(), keep.iter().map(|&r| b[r]));
    if (&a * v - &b).iter().all(|&s| s <= 0.0) {
        return Ok(v.clone());
    }
    let hessian = DMatrix::identity(n, n);
    let linear = -v;
    let eq = DMatrix::zeros(0, n);
    let eq_rhs = DVector::zeros(0);
    let sol = qp::solve(&QuadraticProgram {
        hessian: &hessian,
        linear: &linear,
        eq_matrix: &eq,
        eq_rhs: &eq_rhs,
        ineq_matrix: &a,
        ineq_rhs: &b,
    })
    .map_err(|e| match e {
        QpError::Infeasible => GeometryError::InfeasibleSystem,
        other => GeometryError::Qp(other),
    })?;
    Ok(sol.x)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn marine() -> Polyhedron {
        Polyhedron::new(vec![HalfSpace::new(dv(&[1.0, 1.0, -1.0, -1.0]), -7.0).unwrap()]).unwrap()
    }

    #[test]
    fn contains_examples() {
        let p = marine();
        assert!(p.contains(&dv(&[-25.0, -25.0, -15.0, -15.0]), 0.0).unwrap());
        assert!(!p.contains(&DVector::zeros(4), 0.0).unwrap());
        assert!(p.contains(&dv(&[-1.75, -1.75, 1.75, 1.75]), 0.0).unwrap());
        assert!(matches!(
            p.contains(&DVector::zeros(3), 0.0),
            Err(GeometryError::Dimension { expected: 4, got: 3 })
        ));
    }

    #[test]
    fn active_set_examples() {
        let p = marine();
        assert!(p.active_set(&dv(&[-25.0, -25.0, -15.0, -15.0]), 1e-7).unwrap().is_empty());
        assert_eq!(
            p.active_set(&dv(&[-1.75, -1.75, 1.75, 1.75]), 1e-7).unwrap().indices(),
            &[0]
        );
        assert!(matches!(
            p.active_set(&DVector::zeros(4), 1e-7),
            Err(GeometryError::InfeasiblePoint { face: 0, .. })
        ));
    }

    #[test]
    fn decomposition_examples() {
        let p = marine();
        let all = ActiveSet::from_indices(vec![0]);
        let zero = p.normal_cone_decompose(&all, &DVector::zeros(4));
        assert_eq!(zero.coefficients[0], 0.0);
        assert_eq!(zero.residual, 0.0);

        let v = dv(&[0.41560, 0.41560, -0.41560, -0.41560]);
        let dec = p.normal_cone_decompose(&all, &v);
        assert_relative_eq!(dec.coefficients[0], 0.41560, epsilon = 1e-14);
        assert!(dec.residual < 1e-14);

        let none = p.normal_cone_decompose(&ActiveSet::empty(), &v);
        assert_eq!(none.coefficients[0], 0.0);
        assert_relative_eq!(none.residual, v.norm());
    }

    #[test]
    fn projection_of_origin_onto_marine_face() {
        let p = marine();
        let pr = p.project(&DVector::zeros(4)).unwrap();
        let expected = dv(&[-1.75, -1.75, 1.75, 1.75]);
        assert!((&pr.point - &expected).amax() < 1e-12);
        // v - z = 1.75 x*
        assert_relative_eq!(pr.decomposition.coefficients[0], 1.75, epsilon = 1e-12);
    }

    #[test]
    fn projection_identity_inside() {
        let p = marine();
        let v = dv(&[-25.0, -25.0, -15.0, -15.0]);
        assert_eq!(p.project(&v).unwrap().point, v);
    }

    #[test]
    fn linear_system_projection() {
        let v = dv(&[1.0, 2.0]);
        let a = DMatrix::zeros(0, 2);
        assert_eq!(project_linear_system(&a, &DVector::zeros(0), &v).unwrap(), v);

        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let b = dv(&[1.0]);
        let z = project_linear_system(&a, &b, &v).unwrap();
        // closed form: v - ((a.v - b)/|a|^2) a = (1,2) - 1*(1,1)
        assert!((z - dv(&[0.0, 1.0])).amax() < 1e-14);

        let b = dv(&[5.0]);
        assert_eq!(project_linear_system(&a, &b, &v).unwrap(), v);

        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, -1.0, 0.0]);
        let b = dv(&[-1.0, -1.0]);
        assert_eq!(
            project_linear_system(&a, &b, &v).unwrap_err(),
            GeometryError::InfeasibleSystem
        );
    }

    #[test]
    fn plicq_examples() {
        let p = marine();
        assert!(p.plicq(&dv(&[-1.75, -1.75, 1.75, 1.75]), 1e-7).unwrap());

        let pair = Polyhedron::new(vec![
            HalfSpace::new(dv(&[1.0, 0.0]), 0.0).unwrap(),
            HalfSpace::new(dv(&[-1.0, 0.0]), 0.0).unwrap(),
        ])
        .unwrap();
        assert!(!pair.plicq(&dv(&[0.0, 3.0]), 1e-7).unwrap());

        let corner = Polyhedron::new(vec![
            HalfSpace::new(dv(&[1.0, 0.0]), 0.0).unwrap(),
            HalfSpace::new(dv(&[0.0, 1.0]), 0.0).unwrap(),
        ])
        .unwrap();
        assert!(corner.plicq(&dv(&[0.0, 0.0]), 1e-7).unwrap());
    }

    #[test]
    fn dual_index_examples() {
        let p = marine();
        let y = DVector::zeros(4);
        let lit = p.dual_index_sets(&y, 1e-9, DualIndexRule::OffsetThreshold);
        assert_eq!(lit.positive, vec![0]);
        assert!(lit.zero.is_empty());
        let hom = p.dual_index_sets(&y, 1e-9, DualIndexRule::HomogeneousZero);
        assert_eq!(hom.zero, vec![0]);
        assert!(hom.positive.is_empty());
        let big = dv(&[1.0, 1.0, -1.0, -1.0]) * 100.0;
        assert_eq!(p.dual_index_sets(&big, 1e-9, DualIndexRule::OffsetThreshold).positive, vec![0]);
        assert_eq!(p.dual_index_sets(&big, 1e-9, DualIndexRule::HomogeneousZero).positive, vec![0]);
    }

    #[test]
    fn rejects_zero_normal() {
        assert_eq!(HalfSpace::new(DVector::zeros(2), 1.0).unwrap_err(), GeometryError::ZeroNormal);
        assert_eq!(Polyhedron::new(vec![]).unwrap_err(), GeometryError::NoFaces);
    }
}
