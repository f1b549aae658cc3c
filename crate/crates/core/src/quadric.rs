//! General second-degree surface
//! `a x² + b y² + c z² + 2f yz + 2g xz + 2h xy + 2p x + 2q y + 2r z + d = 0`,
//! its design matrix, the ellipsoid constraint `kJ - I²` and the algebraic
//! distance.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{FitError, Result};
use crate::linalg::{SymMatrix3, RANK_TOL};

/// Number of coefficients of a general quadric.
pub const NUM_COEFFS: usize = 10;

/// Coefficients `(a, b, c, f, g, h, p, q, r, d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadricCoeffs {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub f: f64,
    pub g: f64,
    pub h: f64,
    pub p: f64,
    pub q: f64,
    pub r: f64,
    pub d: f64,
}

impl QuadricCoeffs {
    pub fn from_array(v: [f64; NUM_COEFFS]) -> Self {
        let [a, b, c, f, g, h, p, q, r, d] = v;
        Self { a, b, c, f, g, h, p, q, r, d }
    }

    pub fn to_array(&self) -> [f64; NUM_COEFFS] {
        [self.a, self.b, self.c, self.f, self.g, self.h, self.p, self.q, self.r, self.d]
    }

    pub fn to_vector(&self) -> DVector<f64> {
        DVector::from_row_slice(&self.to_array())
    }

    /// Origin-centered quadric `x^T K x + d = 0`.
    pub fn from_fisher(k: &SymMatrix3, d: f64) -> Self {
        Self::from_array([k.xx, k.yy, k.zz, k.yz, k.xz, k.xy, 0.0, 0.0, 0.0, d])
    }

    pub fn negated(&self) -> Self {
        Self::from_array(self.to_array().map(|v| -v))
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::from_array(self.to_array().map(|v| v * s))
    }

    /// The quadratic-form matrix `[[a h g] [h b f] [g f c]]`.
    pub fn quadratic_part(&self) -> SymMatrix3 {
        SymMatrix3::new(self.a, self.b, self.c, self.f, self.g, self.h)
    }

    pub fn linear_part(&self) -> Vector3<f64> {
        Vector3::new(self.p, self.q, self.r)
    }

    /// Whether the quadratic part has at least one nonzero coefficient.
    pub fn is_valid(&self) -> bool {
        self.to_array()[..6].iter().any(|&v| v != 0.0)
    }

    pub fn evaluate(&self, p: &Vector3<f64>) -> f64 {
        self.quadratic_part().quadratic_form(p)
            + 2.0 * self.linear_part().dot(p)
            + self.d
    }

    /// Coefficients of the same surface after mapping every point `x` to `R^T x`.
    pub fn rotated(&self, r: &Matrix3<f64>) -> Self {
        let k = self.quadratic_part().congruence(&r.transpose());
        let l = r.transpose() * self.linear_part();
        Self::from_array([k.xx, k.yy, k.zz, k.yz, k.xz, k.xy, l.x, l.y, l.z, self.d])
    }
}

/// Ordered list of 3-D points with finite coordinates.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointSet {
    points: Vec<Vector3<f64>>,
}

impl PointSet {
    pub fn new(points: Vec<Vector3<f64>>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| !p.iter().all(|v| v.is_finite())) {
            return Err(FitError::invalid(format!("point {i} has a non-finite coordinate")));
        }
        Ok(Self { points })
    }

    pub fn from_rows(rows: &[[f64; 3]]) -> Result<Self> {
        Self::new(rows.iter().map(|r| Vector3::new(r[0], r[1], r[2])).collect())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn iter(&self) -> impl Iterator<Item = &Vector3<f64>> {
        self.points.iter()
    }

    /// Coordinates of every point in the frame whose axes are the columns of `r`,
    /// i.e. `R^T p`.
    pub fn projected(&self, r: &Matrix3<f64>) -> Self {
        let rt = r.transpose();
        Self { points: self.points.iter().map(|p| rt * p).collect() }
    }

    /// Applies `p -> m p` to every point.
    pub fn transformed(&self, m: &Matrix3<f64>) -> Self {
        Self { points: self.points.iter().map(|p| m * p).collect() }
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self { points: self.points.iter().map(|p| p * s).collect() }
    }

    pub fn centroid(&self) -> Vector3<f64> {
        if self.points.is_empty() {
            return Vector3::zeros();
        }
        self.points.iter().sum::<Vector3<f64>>() / self.points.len() as f64
    }

    /// Second-moment matrix of the points about `center`.
    pub fn covariance_about(&self, center: &Vector3<f64>) -> Matrix3<f64> {
        let n = self.points.len().max(1) as f64;
        self.points
            .iter()
            .map(|p| {
                let d = p - center;
                d * d.transpose()
            })
            .sum::<Matrix3<f64>>()
            / n
    }

    /// Whether the centered point cloud spans three dimensions at relative
    /// singular-value threshold `tol`.
    pub fn spans_3d(&self, tol: f64) -> bool {
        if self.points.len() < 4 {
            return false;
        }
        let c = self.centroid();
        let m = DMatrix::from_fn(self.points.len(), 3, |i, j| self.points[i][j] - c[j]);
        crate::linalg::rank(&m, tol) == 3
    }
}

/// Monomial vector `(x², y², z², 2yz, 2xz, 2xy, 2x, 2y, 2z, 1)` of one point.
pub fn monomials(p: &Vector3<f64>) -> [f64; NUM_COEFFS] {
    let (x, y, z) = (p.x, p.y, p.z);
    [x * x, y * y, z * z, 2.0 * y * z, 2.0 * x * z, 2.0 * x * y, 2.0 * x, 2.0 * y, 2.0 * z, 1.0]
}

/// 10 x N design matrix; column `i` is the monomial vector of point `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix(pub DMatrix<f64>);

impl DesignMatrix {
    pub fn ncols(&self) -> usize {
        self.0.ncols()
    }

    /// Scatter matrix `D D^T`.
    pub fn scatter(&self) -> DMatrix<f64> {
        &self.0 * self.0.transpose()
    }
}

pub fn design_matrix(points: &PointSet) -> Result<DesignMatrix> {
    if points.is_empty() {
        return Err(FitError::invalid("design matrix needs at least one point"));
    }
    let n = points.len();
    let mut d = DMatrix::zeros(NUM_COEFFS, n);
    for (i, p) in points.iter().enumerate() {
        for (row, v) in monomials(p).into_iter().enumerate() {
            d[(row, i)] = v;
        }
    }
    Ok(DesignMatrix(d))
}

/// Trace and second invariant `(I, J)` of the quadratic part.
pub fn invariants_ij(v: &QuadricCoeffs) -> (f64, f64) {
    let i = v.a + v.b + v.c;
    let j = v.a * v.b + v.b * v.c + v.a * v.c - v.f * v.f - v.g * v.g - v.h * v.h;
    (i, j)
}

/// `kJ - I²` evaluated directly from the invariants.
pub fn constraint_value(v: &QuadricCoeffs, k: f64) -> f64 {
    let (i, j) = invariants_ij(v);
    k * j - i * i
}

/// Zero-padded symmetric 10 x 10 matrix `C(k)` with `v^T C v = kJ - I²`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintMatrix {
    pub k: f64,
    pub matrix: DMatrix<f64>,
}

impl ConstraintMatrix {
    /// The non-zero upper-left 6 x 6 block.
    pub fn quadratic_block(&self) -> DMatrix<f64> {
        self.matrix.view((0, 0), (6, 6)).into_owned()
    }

    pub fn form(&self, v: &QuadricCoeffs) -> f64 {
        let x = v.to_vector();
        (x.transpose() * &self.matrix * &x)[0]
    }
}

pub fn constraint_matrix(k: f64) -> Result<ConstraintMatrix> {
    if !k.is_finite() || k < 4.0 {
        return Err(FitError::invalid(format!("constraint parameter k = {k} must be >= 4")));
    }
    let mut m = DMatrix::zeros(NUM_COEFFS, NUM_COEFFS);
    for i in 0..3 {
        for j in 0..3 {
            m[(i, j)] = if i == j { -1.0 } else { k / 2.0 - 1.0 };
        }
    }
    for i in 3..6 {
        m[(i, i)] = -k;
    }
    Ok(ConstraintMatrix { k, matrix: m })
}

/// `Σ (v^T X_i)²` over the columns of the design matrix.
pub fn algebraic_distance(v: &QuadricCoeffs, dm: &DesignMatrix) -> f64 {
    let coeffs = v.to_array();
    dm.0
        .column_iter()
        .map(|col| {
            let e: f64 = col.iter().zip(coeffs.iter()).map(|(x, c)| x * c).sum();
            e * e
        })
        .sum()
}

/// Centered form of an ellipsoid-candidate quadric:
/// `(x - center)^T (K / scale) (x - center) = 1`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherForm {
    /// Quadratic part after the sign fix that makes `scale > 0`.
    pub fisher: SymMatrix3,
    pub center: Vector3<f64>,
    pub scale: f64,
}

impl FisherForm {
    /// `K / scale`; equals one on the surface after centering.
    pub fn normalized(&self) -> SymMatrix3 {
        self.fisher.scaled(1.0 / self.scale)
    }

    pub fn is_ellipsoid(&self) -> bool {
        self.normalized().is_positive_definite()
    }
}

/// Splits a quadric into its quadratic form, center and level.
///
/// The coefficient vector is negated internally when needed so that the
/// returned scale is positive.
pub fn quadric_to_fisher(v: &QuadricCoeffs) -> Result<FisherForm> {
    if !v.to_array().iter().all(|x| x.is_finite()) {
        return Err(FitError::invalid("quadric has non-finite coefficients"));
    }
    let k = v.quadratic_part();
    let km = k.to_matrix();
    let svd = km.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax == 0.0 || smin <= RANK_TOL * smax {
        return Err(FitError::DegenerateQuadric);
    }
    let center = svd
        .solve(&(-v.linear_part()), 0.0)
        .map_err(|e| FitError::invalid(format!("center solve failed: {e}")))?;
    let scale = center.dot(&(km * center)) - v.d;
    if !scale.is_finite() || scale == 0.0 {
        return Err(FitError::NotAnEllipsoid);
    }
    if scale > 0.0 {
        Ok(FisherForm { fisher: k, center, scale })
    } else {
        Ok(FisherForm { fisher: k.scaled(-1.0), center, scale: -scale })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn coeffs(v: [f64; 10]) -> QuadricCoeffs {
        QuadricCoeffs::from_array(v)
    }

    fn column(p: [f64; 3]) -> Vec<f64> {
        let ps = PointSet::from_rows(&[p]).unwrap();
        design_matrix(&ps).unwrap().0.column(0).iter().copied().collect()
    }

    #[test]
    fn design_matrix_columns() {
        assert_eq!(column([1.0, 0.0, 0.0]), vec![1., 0., 0., 0., 0., 0., 2., 0., 0., 1.]);
        assert_eq!(column([0.0, 0.0, 0.0]), vec![0., 0., 0., 0., 0., 0., 0., 0., 0., 1.]);
        assert_eq!(column([1.0, 2.0, 3.0]), vec![1., 4., 9., 12., 6., 4., 2., 4., 6., 1.]);
        assert!(design_matrix(&PointSet::default()).is_err());
    }

    #[test]
    fn invariants_examples() {
        let sphere = coeffs([1., 1., 1., 0., 0., 0., 0., 0., 0., 0.]);
        assert_eq!(invariants_ij(&sphere), (3.0, 3.0));
        let diag = coeffs([1., 2., 3., 0., 0., 0., 0., 0., 0., 0.]);
        assert_eq!(invariants_ij(&diag), (6.0, 11.0));
        let cross = coeffs([0., 0., 0., 1., 0., 0., 0., 0., 0., 0.]);
        assert_eq!(invariants_ij(&cross), (0.0, -1.0));
    }

    #[test]
    fn constraint_matrix_examples() {
        let c4 = constraint_matrix(4.0).unwrap();
        let sphere = coeffs([1., 1., 1., 0., 0., 0., 0., 0., 0., 0.]);
        assert_eq!(c4.form(&sphere), 3.0);
        let diag = coeffs([1., 2., 3., 0., 0., 0., 0., 0., 0., 0.]);
        assert_eq!(c4.form(&diag), 8.0);
        let affine = coeffs([0., 0., 0., 0., 0., 0., 1.5, -2., 0.5, 7.]);
        assert_eq!(constraint_matrix(37.0).unwrap().form(&affine), 0.0);
        assert!(constraint_matrix(3.9).is_err());

        let m = &c4.matrix;
        assert_eq!(m, &m.transpose());
        for i in 6..10 {
            assert!(m.row(i).iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn algebraic_distance_examples() {
        let pts = PointSet::from_rows(&[[1., 0., 0.], [0., 2., 0.], [3., 4., 5.]]).unwrap();
        let dm = design_matrix(&pts).unwrap();
        let constant = coeffs([0., 0., 0., 0., 0., 0., 0., 0., 0., 1.]);
        assert_eq!(algebraic_distance(&constant, &dm), 3.0);

        let on = PointSet::from_rows(&[[1., 0., 0.], [0., -1., 0.], [0.6, 0.8, 0.]]).unwrap();
        let sphere = coeffs([1., 1., 1., 0., 0., 0., 0., 0., 0., -1.]);
        assert!(algebraic_distance(&sphere, &design_matrix(&on).unwrap()) <= 1e-18);
    }

    #[test]
    fn algebraic_distance_matches_loop_oracle() {
        let v = coeffs([0.3, -1.1, 2.0, 0.4, -0.7, 0.05, 1.2, -0.3, 0.8, -2.5]);
        let pts = PointSet::from_rows(&[
            [0.1, 2.0, -1.0],
            [1.5, -0.3, 0.2],
            [-2.0, 0.7, 1.1],
            [0.0, 0.0, 3.0],
            [0.9, 0.9, -0.9],
            [-1.3, -2.2, 0.4],
        ])
        .unwrap();
        // oracle: evaluate the polynomial at every point and sum squares
        let oracle: f64 = pts
            .iter()
            .map(|p| {
                let (x, y, z) = (p.x, p.y, p.z);
                let e = v.a * x * x + v.b * y * y + v.c * z * z
                    + 2.0 * v.f * y * z + 2.0 * v.g * x * z + 2.0 * v.h * x * y
                    + 2.0 * v.p * x + 2.0 * v.q * y + 2.0 * v.r * z + v.d;
                e * e
            })
            .sum();
        let omega = algebraic_distance(&v, &design_matrix(&pts).unwrap());
        assert!((omega - oracle).abs() <= 1e-12 * oracle);
    }

    #[test]
    fn fisher_examples() {
        let unit = quadric_to_fisher(&coeffs([1., 1., 1., 0., 0., 0., 0., 0., 0., -1.])).unwrap();
        assert_eq!(unit.fisher, SymMatrix3::identity());
        assert_eq!(unit.center, Vector3::zeros());
        assert_eq!(unit.scale, 1.0);

        let shifted = quadric_to_fisher(&coeffs([1., 1., 1., 0., 0., 0., -1., 0., 0., 0.])).unwrap();
        assert!((shifted.center - Vector3::new(1.0, 0.0, 0.0)).norm() < 1e-15);
        assert!((shifted.scale - 1.0).abs() < 1e-15);

        // negated coefficients describe the same surface
        let flipped = quadric_to_fisher(&coeffs([-1., -1., -1., 0., 0., 0., 0., 0., 0., 1.])).unwrap();
        assert_eq!(flipped.normalized(), SymMatrix3::identity());
        assert!(flipped.is_ellipsoid());
    }

    #[test]
    fn fisher_errors() {
        let cylinder = coeffs([1., 1., 0., 0., 0., 0., 0., 0., 0., -1.]);
        assert!(matches!(quadric_to_fisher(&cylinder), Err(FitError::DegenerateQuadric)));
        let cone = coeffs([1., 1., -1., 0., 0., 0., 0., 0., 0., 0.]);
        assert!(matches!(quadric_to_fisher(&cone), Err(FitError::NotAnEllipsoid)));
        // x² + y² + z² + 1 = 0 is imaginary: positive scale forces a negative form
        let imaginary = quadric_to_fisher(&coeffs([1., 1., 1., 0., 0., 0., 0., 0., 0., 1.])).unwrap();
        assert!(!imaginary.is_ellipsoid());
    }

    fn arb_coeffs() -> impl Strategy<Value = QuadricCoeffs> {
        proptest::array::uniform10(-5.0f64..5.0).prop_map(QuadricCoeffs::from_array)
    }

    proptest! {
        #[test]
        fn prop_constraint_identity(v in arb_coeffs(), k in 4.0f64..1e6) {
            let c = constraint_matrix(k).unwrap();
            let lhs = c.form(&v);
            let rhs = constraint_value(&v, k);
            let scale = {
                let (i, j) = invariants_ij(&v);
                (k * j.abs()).max(i * i).max(1.0)
            };
            prop_assert!((lhs - rhs).abs() <= 1e-12 * scale);
        }

        #[test]
        fn prop_algebraic_distance_sign_invariant(
            v in arb_coeffs(),
            pts in proptest::collection::vec(proptest::array::uniform3(-3.0f64..3.0), 1..12),
        ) {
            let dm = design_matrix(&PointSet::from_rows(&pts).unwrap()).unwrap();
            prop_assert_eq!(algebraic_distance(&v, &dm), algebraic_distance(&v.negated(), &dm));
        }

        #[test]
        fn prop_design_columns_are_local(
            pts in proptest::collection::vec(proptest::array::uniform3(-3.0f64..3.0), 2..8),
        ) {
            let dm = design_matrix(&PointSet::from_rows(&pts).unwrap()).unwrap();
            for (i, p) in pts.iter().enumerate() {
                let alone = design_matrix(&PointSet::from_rows(&[*p]).unwrap()).unwrap();
                prop_assert_eq!(dm.0.column(i).into_owned(), alone.0.column(0).into_owned());
            }
        }
    }
}
