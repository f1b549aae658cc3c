//! Small dense kernels: cyclic Jacobi for symmetric matrices, sign fixing of
//! orthonormal frames and a rank-revealing linear solve.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{FitError, Result};

/// Largest matrix order the eigensolver accepts.
pub const MAX_ORDER: usize = 10;

/// Relative rank threshold for the least-squares fallback of [`solve_linear`].
pub const RANK_TOL: f64 = 1e-12;

const MAX_SWEEPS: usize = 64;
// an off-diagonal entry is treated as zero once it is below this fraction of
// sqrt(|a_pp a_qq|); keeps exactly-degenerate blocks from being rotated by noise
const JACOBI_SKIP: f64 = 1e-13;

/// Real symmetric 3x3 matrix stored by its six independent entries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SymMatrix3 {
    pub xx: f64,
    pub yy: f64,
    pub zz: f64,
    pub yz: f64,
    pub xz: f64,
    pub xy: f64,
}

impl SymMatrix3 {
    pub fn new(xx: f64, yy: f64, zz: f64, yz: f64, xz: f64, xy: f64) -> Self {
        Self { xx, yy, zz, yz, xz, xy }
    }

    pub fn identity() -> Self {
        Self::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0)
    }

    pub fn from_diagonal(d: [f64; 3]) -> Self {
        Self::new(d[0], d[1], d[2], 0.0, 0.0, 0.0)
    }

    /// Builds from a full matrix, averaging the mirrored off-diagonal pairs.
    pub fn from_matrix(m: &Matrix3<f64>) -> Self {
        Self::new(
            m[(0, 0)],
            m[(1, 1)],
            m[(2, 2)],
            0.5 * (m[(1, 2)] + m[(2, 1)]),
            0.5 * (m[(0, 2)] + m[(2, 0)]),
            0.5 * (m[(0, 1)] + m[(1, 0)]),
        )
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        Matrix3::new(
            self.xx, self.xy, self.xz, //
            self.xy, self.yy, self.yz, //
            self.xz, self.yz, self.zz,
        )
    }

    pub fn diagonal(&self) -> [f64; 3] {
        [self.xx, self.yy, self.zz]
    }

    pub fn off_diagonal(&self) -> [f64; 3] {
        [self.yz, self.xz, self.xy]
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy + self.zz
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(
            self.xx * s,
            self.yy * s,
            self.zz * s,
            self.yz * s,
            self.xz * s,
            self.xy * s,
        )
    }

    pub fn quadratic_form(&self, p: &Vector3<f64>) -> f64 {
        self.xx * p.x * p.x
            + self.yy * p.y * p.y
            + self.zz * p.z * p.z
            + 2.0 * (self.yz * p.y * p.z + self.xz * p.x * p.z + self.xy * p.x * p.y)
    }

    /// `R * self * R^T`, symmetric by construction.
    pub fn congruence(&self, r: &Matrix3<f64>) -> Self {
        Self::from_matrix(&(r * self.to_matrix() * r.transpose()))
    }

    pub fn is_finite(&self) -> bool {
        self.diagonal().iter().chain(self.off_diagonal().iter()).all(|v| v.is_finite())
    }

    pub fn eigen(&self) -> Result<EigenDecomposition> {
        sym_eigen(&DMatrix::from_iterator(3, 3, self.to_matrix().iter().copied()))
    }

    /// Eigenvalues (descending) and eigenvectors as a fixed-size matrix.
    pub fn eigen3(&self) -> Result<(Vector3<f64>, Matrix3<f64>)> {
        let e = self.eigen()?;
        let values = Vector3::new(e.values[0], e.values[1], e.values[2]);
        let vectors = Matrix3::from_fn(|i, j| e.vectors[(i, j)]);
        Ok((values, vectors))
    }

    pub fn is_positive_definite(&self) -> bool {
        match self.eigen() {
            Ok(e) => e.values.iter().all(|&l| l > 0.0),
            Err(_) => false,
        }
    }
}

/// Eigenvalues in descending order with matching orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenDecomposition {
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let lambda = DMatrix::from_diagonal(&DVector::from_vec(self.values.clone()));
        &self.vectors * lambda * self.vectors.transpose()
    }
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
///
/// Sweeps visit pairs `(p, q)` in row-major order, so the result is a
/// deterministic function of the input. Only the upper triangle is read.
pub fn sym_eigen(m: &DMatrix<f64>) -> Result<EigenDecomposition> {
    let n = m.nrows();
    if n == 0 || n != m.ncols() {
        return Err(FitError::invalid("eigendecomposition needs a non-empty square matrix"));
    }
    if n > MAX_ORDER {
        return Err(FitError::invalid(format!("matrix order {n} exceeds {MAX_ORDER}")));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(FitError::invalid("matrix has non-finite entries"));
    }

    let mut a = DMatrix::from_fn(n, n, |i, j| if i <= j { m[(i, j)] } else { m[(j, i)] });
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = max_abs(&a);

    if scale > 0.0 {
        for _ in 0..MAX_SWEEPS {
            let mut rotated = false;
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = a[(p, q)];
                    if apq == 0.0 {
                        continue;
                    }
                    let app = a[(p, p)];
                    let aqq = a[(q, q)];
                    let floor = JACOBI_SKIP * (app.abs() * aqq.abs()).sqrt();
                    if apq.abs() <= floor || apq.abs() <= f64::MIN_POSITIVE * scale {
                        a[(p, q)] = 0.0;
                        a[(q, p)] = 0.0;
                        continue;
                    }
                    rotated = true;
                    let theta = (aqq - app) / (2.0 * apq);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..n {
                        let akp = a[(k, p)];
                        let akq = a[(k, q)];
                        a[(k, p)] = c * akp - s * akq;
                        a[(k, q)] = s * akp + c * akq;
                    }
                    for k in 0..n {
                        let apk = a[(p, k)];
                        let aqk = a[(q, k)];
                        a[(p, k)] = c * apk - s * aqk;
                        a[(q, k)] = s * apk + c * aqk;
                    }
                    a[(p, q)] = 0.0;
                    a[(q, p)] = 0.0;
                    for k in 0..n {
                        let vkp = v[(k, p)];
                        let vkq = v[(k, q)];
                        v[(k, p)] = c * vkp - s * vkq;
                        v[(k, q)] = s * vkp + c * vkq;
                    }
                }
            }
            if !rotated {
                break;
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    // stable: exact ties keep their index order
    order.sort_by(|&i, &j| a[(j, j)].partial_cmp(&a[(i, i)]).unwrap());
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(EigenDecomposition { values, vectors })
}

/// Largest deviation of `M^T M` from the identity.
pub fn orthonormality_error(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).abs().max()
}

/// Sign-fixes an orthonormal frame into a proper rotation.
///
/// Each column is flipped so that its largest-magnitude entry (first one on
/// ties) is nonnegative. If the result has determinant -1 the last column is
/// flipped back.
pub fn make_proper(m: &Matrix3<f64>) -> Result<Matrix3<f64>> {
    if m.iter().any(|v| !v.is_finite()) || orthonormality_error(m) > 1e-8 {
        return Err(FitError::invalid("make_proper needs orthonormal columns"));
    }
    let mut out = *m;
    for j in 0..3 {
        let mut imax = 0;
        for i in 1..3 {
            if out[(i, j)].abs() > out[(imax, j)].abs() {
                imax = i;
            }
        }
        if out[(imax, j)] < 0.0 {
            out.column_mut(j).neg_mut();
        }
    }
    if out.determinant() < 0.0 {
        out.column_mut(2).neg_mut();
    }
    Ok(out)
}

/// Modified Gram-Schmidt on the columns; removes drift from long products of rotations.
pub fn reorthonormalize(m: &Matrix3<f64>) -> Matrix3<f64> {
    let mut cols = [m.column(0).into_owned(), m.column(1).into_owned(), m.column(2).into_owned()];
    for j in 0..3 {
        for i in 0..j {
            let proj = cols[i].dot(&cols[j]);
            let ci = cols[i];
            cols[j] -= ci * proj;
        }
        let n = cols[j].norm();
        cols[j] /= n;
    }
    Matrix3::from_columns(&cols)
}

/// Solves `a x = b`, returning the minimum-norm least-squares solution when `a`
/// is rank deficient at relative threshold [`RANK_TOL`].
pub fn solve_linear(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    if a.nrows() != a.ncols() {
        return Err(FitError::invalid(format!(
            "solve_linear needs a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.nrows() != b.len() {
        return Err(FitError::invalid(format!(
            "right-hand side has length {}, expected {}",
            b.len(),
            a.nrows()
        )));
    }
    if a.iter().chain(b.iter()).any(|v| !v.is_finite()) {
        return Err(FitError::invalid("solve_linear input has non-finite entries"));
    }
    if a.nrows() == 0 {
        return Ok(DVector::zeros(0));
    }
    pseudo_solve(a, b)
}

/// Minimum-norm least-squares solve for any (possibly rectangular) `a`.
pub(crate) fn pseudo_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.iter().fold(0.0f64, |acc, s| acc.max(*s));
    if smax == 0.0 {
        return Ok(DVector::zeros(a.ncols()));
    }
    svd.solve(b, RANK_TOL * smax)
        .map_err(|e| FitError::invalid(format!("least-squares solve failed: {e}")))
}

/// Numerical rank at relative threshold `tol`.
pub(crate) fn rank(a: &DMatrix<f64>, tol: f64) -> usize {
    let svd = a.clone().svd(false, false);
    let smax = svd.singular_values.iter().fold(0.0f64, |acc, s| acc.max(*s));
    if smax == 0.0 {
        return 0;
    }
    svd.singular_values.iter().filter(|&&s| s > tol * smax).count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sym_from(entries: &[f64], n: usize) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(n, n);
        let mut it = entries.iter();
        for i in 0..n {
            for j in i..n {
                let v = *it.next().unwrap();
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    #[test]
    fn identity_eigen() {
        let e = sym_eigen(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
        assert!((e.vectors.transpose() * &e.vectors - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-15);
    }

    #[test]
    fn diagonal_eigen_is_signed_permutation() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 1.0, 9.0]));
        let e = sym_eigen(&m).unwrap();
        assert_eq!(e.values, vec![9.0, 4.0, 1.0]);
        let expected_axis = [2, 0, 1];
        for (col, &axis) in expected_axis.iter().enumerate() {
            assert_eq!(e.vectors[(axis, col)].abs(), 1.0);
        }
    }

    #[test]
    fn six_by_six_reconstruction() {
        let entries: Vec<f64> = (0..21).map(|i| ((i * 37 % 11) as f64 - 5.0) / 3.0).collect();
        let m = sym_from(&entries, 6);
        let e = sym_eigen(&m).unwrap();
        assert!((e.reconstruct() - &m).abs().max() <= 1e-10 * m.abs().max());
    }

    #[test]
    fn rejects_non_finite() {
        let mut m = DMatrix::<f64>::identity(3, 3);
        m[(0, 1)] = f64::NAN;
        assert!(matches!(sym_eigen(&m), Err(FitError::InvalidInput(_))));
    }

    #[test]
    fn make_proper_cases() {
        let id = Matrix3::identity();
        assert_eq!(make_proper(&id).unwrap(), id);
        let mut flipped = id;
        flipped.column_mut(0).neg_mut();
        let fixed = make_proper(&flipped).unwrap();
        assert_eq!(fixed.determinant(), 1.0);
        assert_eq!(fixed, id);
        let skew = Matrix3::new(1.0, 2.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!(make_proper(&skew).is_err());
    }

    #[test]
    fn solve_linear_cases() {
        let b = DVector::from_vec(vec![3.0, -1.0]);
        assert_eq!(solve_linear(&DMatrix::identity(2, 2), &b).unwrap(), b);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 4.0]));
        let x = solve_linear(&d, &DVector::from_vec(vec![2.0, 8.0])).unwrap();
        assert!((x - DVector::from_vec(vec![1.0, 2.0])).abs().max() < 1e-15);
        let bad = DVector::from_vec(vec![1.0, 2.0, 3.0]);
        assert!(solve_linear(&d, &bad).is_err());
        assert!(solve_linear(&DMatrix::zeros(2, 3), &b).is_err());
    }

    #[test]
    fn solve_linear_rank_deficient_is_minimum_norm() {
        // rows are parallel: x + y = 2 twice; minimum-norm answer is (1, 1)
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let x = solve_linear(&a, &DVector::from_vec(vec![2.0, 2.0])).unwrap();
        assert!((x - DVector::from_vec(vec![1.0, 1.0])).abs().max() < 1e-12);
    }

    #[test]
    fn well_conditioned_4x4_residual() {
        let a = DMatrix::from_row_slice(
            4,
            4,
            &[4.0, 1.0, -0.5, 0.2, 1.0, 5.0, 0.3, -1.0, 0.1, 0.7, 3.0, 0.4, -0.2, 0.5, 1.1, 6.0],
        );
        let b = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let x = solve_linear(&a, &b).unwrap();
        let bound = 1e-9 * (a.abs().row_sum().max() * x.abs().max() + b.abs().max());
        assert!((&a * &x - &b).abs().max() <= bound);
    }

    #[test]
    fn sym3_quadratic_form_matches_matrix() {
        let k = SymMatrix3::new(2.0, 3.0, 4.0, 0.5, -0.25, 0.125);
        let p = Vector3::new(0.3, -1.2, 2.0);
        let direct = (p.transpose() * k.to_matrix() * p)[0];
        assert!((k.quadratic_form(&p) - direct).abs() < 1e-14);
    }

    fn rotation_from(angles: (f64, f64, f64)) -> Matrix3<f64> {
        *nalgebra::Rotation3::from_euler_angles(angles.0, angles.1, angles.2).matrix()
    }

    proptest! {
        #[test]
        fn prop_sym_eigen_orthonormal_and_reconstructs(
            n in 1usize..=10,
            seed in proptest::collection::vec(-10.0f64..10.0, 55),
        ) {
            let m = sym_from(&seed[..n * (n + 1) / 2], n);
            let e = sym_eigen(&m).unwrap();
            let eye = DMatrix::<f64>::identity(n, n);
            prop_assert!((e.vectors.transpose() * &e.vectors - eye).abs().max() <= 1e-12);
            let norm = m.abs().row_sum().max().max(1e-300);
            prop_assert!((e.reconstruct() - &m).abs().row_sum().max() <= 1e-10 * norm);
            for w in e.values.windows(2) {
                prop_assert!(w[0] >= w[1]);
            }
        }

        #[test]
        fn prop_make_proper_idempotent(a in -3.2f64..3.2, b in -1.5f64..1.5, c in -3.2f64..3.2, flip in 0usize..8) {
            let mut q = rotation_from((a, b, c));
            for j in 0..3 {
                if flip & (1 << j) != 0 {
                    q.column_mut(j).neg_mut();
                }
            }
            let once = make_proper(&q).unwrap();
            prop_assert!((once.determinant() - 1.0).abs() <= 1e-12);
            let twice = make_proper(&once).unwrap();
            prop_assert_eq!(once, twice);
        }
    }
}
