//! Constrained least-squares quadric fit: minimize the algebraic distance
//! subject to `v^T C(k) v = 1`, and the k-doubling loop around it.
//!
//! The affine coefficients (the constant term, plus the linear terms when the
//! center is free) are eliminated in closed form, leaving a residual `E y` in
//! the six equilibrated quadratic coefficients `y`. The admissible solution
//! with the smallest residual maximizes `yᵀ C' y` over `‖E y‖ = 1`, which the
//! SVD of `E` turns into a symmetric eigenproblem without ever forming `EᵀE`.
//! An exact null vector of `E` is used directly when it is admissible.

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{FitError, Result};
use crate::linalg::{pseudo_solve, sym_eigen, RANK_TOL};
use crate::quadric::{
    algebraic_distance, constraint_matrix, constraint_value, design_matrix, monomials, quadric_to_fisher,
    DesignMatrix, PointSet, QuadricCoeffs,
};

/// Default upper limit on the constraint parameter.
pub const DEFAULT_K_MAX: f64 = 1e10;
/// First constraint parameter tried by [`inner_fit`].
pub const K_START: f64 = 4.0;
/// Relative singular value below which `E` is treated as rank deficient.
const NULL_TOL: f64 = 1e-12;

/// Whether the quadric center is pinned at the origin or estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CenterModel {
    /// `p = q = r = 0`; six points determine the quadric.
    #[default]
    Origin,
    /// All ten coefficients; needs at least nine points.
    Free,
}

impl CenterModel {
    pub fn min_points(&self) -> usize {
        match self {
            CenterModel::Origin => 6,
            CenterModel::Free => 9,
        }
    }
}

/// When the k-doubling loop stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Acceptance {
    /// First fit that is a real ellipsoid.
    Ellipsoid,
    /// First real-ellipsoid fit for which the constraint no longer binds: the
    /// unconstrained least-squares direction already satisfies `kJ - I² > 0`.
    #[default]
    SlackConstraint,
}

/// Result of one constrained solve at a fixed `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinglePassFit {
    /// Normalized so that `v^T C(k_used) v = 1`.
    pub coeffs: QuadricCoeffs,
    pub k_used: f64,
    /// Generalized eigenvalue; equals `omega` under the normalization.
    pub lambda: f64,
    pub omega: f64,
    /// The fit is a real ellipsoid.
    pub ellipsoid: bool,
    /// The unconstrained least-squares direction is admissible at `k_used`.
    pub slack: bool,
    pub accepted: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InnerFit {
    pub fit: SinglePassFit,
    /// Every `k` that was tried, in order.
    pub k_values: Vec<f64>,
}

impl InnerFit {
    pub fn passes(&self) -> usize {
        self.k_values.len()
    }
}

/// The k-independent part of the problem, built once per point set.
pub struct ReducedProblem {
    model: CenterModel,
    shift: Vector3<f64>,
    scale: f64,
    /// Column norms used to equilibrate the quadratic block.
    weights: [f64; 6],
    /// Reduced scatter `Eᵀ E` in equilibrated variables.
    reduced: DMatrix<f64>,
    /// Singular values of `E` and the matching right singular vectors as columns.
    sigma: DVector<f64>,
    right: DMatrix<f64>,
    /// Index of a numerically exact null direction of `E`.
    null_index: Option<usize>,
    /// Maps equilibrated quadratic coefficients to the eliminated affine ones.
    affine_map: DMatrix<f64>,
    /// Design matrix of the original points, used for Ω.
    design: DesignMatrix,
    /// Unconstrained minimizer of Ω under a rotation-invariant norm.
    free_direction: QuadricCoeffs,
}

impl ReducedProblem {
    pub fn new(points: &PointSet, model: CenterModel) -> Result<Self> {
        let n = points.len();
        if n < model.min_points() {
            return Err(FitError::invalid(format!(
                "{n} points given, at least {} needed",
                model.min_points()
            )));
        }
        let shift = match model {
            CenterModel::Origin => Vector3::zeros(),
            CenterModel::Free => points.centroid(),
        };
        let scale = (points.iter().map(|p| (p - shift).norm_squared()).sum::<f64>() / n as f64).sqrt();
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(FitError::invalid("points have no spread"));
        }

        let affine_cols = match model {
            CenterModel::Origin => 1,
            CenterModel::Free => 4,
        };
        let mut quad = DMatrix::zeros(n, 6);
        let mut affine = DMatrix::zeros(n, affine_cols);
        for (i, p) in points.iter().enumerate() {
            let m = monomials(&((p - shift) / scale));
            for j in 0..6 {
                quad[(i, j)] = m[j];
            }
            match model {
                CenterModel::Origin => affine[(i, 0)] = 1.0,
                CenterModel::Free => {
                    for j in 0..4 {
                        affine[(i, j)] = m[6 + j];
                    }
                }
            }
        }

        let mut weights = [1.0; 6];
        for (j, w) in weights.iter_mut().enumerate() {
            let norm = quad.column(j).norm();
            if norm > 0.0 {
                *w = norm;
                quad.column_mut(j).unscale_mut(norm);
            }
        }

        // project the quadratic block onto the orthogonal complement of the
        // affine columns; the residual of the eliminated problem is E v₁
        let svd = affine.clone().svd(true, false);
        let u = svd.u.as_ref().expect("left singular vectors requested");
        let smax = svd.singular_values.max();
        let basis: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&i| svd.singular_values[i] > RANK_TOL * smax)
            .collect();
        let mut residual = quad.clone();
        for &i in &basis {
            let ui = u.column(i);
            let coef = ui.transpose() * &quad;
            residual -= ui * coef;
        }
        let reduced = residual.transpose() * &residual;
        let esvd = residual.svd(false, true);
        let sigma = esvd.singular_values.clone();
        let right = esvd.v_t.as_ref().expect("right singular vectors requested").transpose();
        let imin = sigma.imin();
        let null_index = (sigma[imin] <= NULL_TOL * sigma.max()).then_some(imin);
        let mut affine_map = DMatrix::zeros(affine_cols, 6);
        for j in 0..6 {
            let x = pseudo_solve(&affine, &quad.column(j).into_owned())?;
            affine_map.set_column(j, &x);
        }

        let design = design_matrix(points)?;
        let mut problem = Self {
            model,
            shift,
            scale,
            weights,
            reduced,
            sigma,
            right,
            null_index,
            affine_map,
            design,
            free_direction: QuadricCoeffs::from_array([0.0; 10]),
        };
        problem.free_direction = problem.unconstrained_direction()?;
        Ok(problem)
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    /// Minimizer of Ω subject to `‖K‖_F = 1`; the null vector when Ω can vanish.
    fn unconstrained_direction(&self) -> Result<QuadricCoeffs> {
        if let Some(i) = self.null_index {
            return Ok(self.to_original(&self.right.column(i).into_owned()));
        }
        let frob: [f64; 6] = [1.0, 1.0, 1.0, 2.0, 2.0, 2.0];
        // equilibrated y = W v₁, so ‖K‖²_F = Σ frob_j (y_j / w_j)²
        let metric: Vec<f64> = (0..6).map(|j| frob[j].sqrt() / self.weights[j]).collect();
        let whitened = DMatrix::from_fn(6, 6, |i, j| self.reduced[(i, j)] / (metric[i] * metric[j]));
        let e = sym_eigen(&whitened)?;
        let z = e.vectors.column(5);
        let y = DVector::from_fn(6, |j, _| z[j] / metric[j]);
        Ok(self.to_original(&y))
    }

    /// Full coefficient vector in original coordinates from equilibrated
    /// quadratic coefficients `y`.
    fn to_original(&self, y: &DVector<f64>) -> QuadricCoeffs {
        let affine = -(&self.affine_map * y);
        let v1: Vec<f64> = (0..6).map(|j| y[j] / self.weights[j]).collect();
        let (lin, d_c) = match self.model {
            CenterModel::Origin => (Vector3::zeros(), affine[0]),
            CenterModel::Free => (Vector3::new(affine[0], affine[1], affine[2]), affine[3]),
        };
        // undo q = (p - t) / s
        let s = self.scale;
        let t = self.shift;
        let kc = QuadricCoeffs::from_array([v1[0], v1[1], v1[2], v1[3], v1[4], v1[5], 0.0, 0.0, 0.0, 0.0])
            .quadratic_part()
            .to_matrix();
        let l = lin / s - kc * t / (s * s);
        let d = t.dot(&(kc * t)) / (s * s) - 2.0 * lin.dot(&t) / s + d_c;
        let k = kc / (s * s);
        QuadricCoeffs::from_array([
            k[(0, 0)],
            k[(1, 1)],
            k[(2, 2)],
            k[(1, 2)],
            k[(0, 2)],
            k[(0, 1)],
            l.x,
            l.y,
            l.z,
            d,
        ])
    }

    /// Constrained fit at a single `k`. `accepted` is set to `ellipsoid`.
    pub fn solve(&self, k: f64) -> Result<SinglePassFit> {
        let c6 = constraint_matrix(k)?.quadratic_block();
        let cw = DMatrix::from_fn(6, 6, |i, j| c6[(i, j)] / (self.weights[i] * self.weights[j]));
        let y = self.best_direction(&cw).ok_or(FitError::ConstraintInfeasible { k })?;

        let v = self.to_original(&y);
        let cv = constraint_value(&v, k);
        if !(cv > 0.0 && cv.is_finite()) {
            return Err(FitError::ConstraintInfeasible { k });
        }
        let coeffs = v.scaled(1.0 / cv.sqrt());
        let omega = algebraic_distance(&coeffs, &self.design);
        let ellipsoid = quadric_to_fisher(&coeffs).map(|f| f.is_ellipsoid()).unwrap_or(false);
        let slack = constraint_value(&self.free_direction, k) > 0.0;
        Ok(SinglePassFit {
            coeffs,
            k_used: k,
            lambda: omega,
            omega,
            ellipsoid,
            slack,
            accepted: ellipsoid,
        })
    }

    /// Maximizer of `yᵀ cw y` over `‖E y‖ = 1`, if that maximum is positive.
    fn best_direction(&self, cw: &DMatrix<f64>) -> Option<DVector<f64>> {
        let form = |y: &DVector<f64>| (y.transpose() * cw * y)[(0, 0)];
        let basis = match self.null_index {
            Some(i) => {
                let y0 = self.right.column(i).into_owned();
                let c0 = form(&y0);
                if c0 > 0.0 {
                    return Some(y0);
                }
                // the null component is free; pick it to maximize the form
                let cols: Vec<usize> = (0..6).filter(|&j| j != i).collect();
                let mut p = DMatrix::zeros(6, cols.len());
                for (n, &j) in cols.iter().enumerate() {
                    let vj = self.right.column(j) / self.sigma[j];
                    let alpha = if c0 < 0.0 { -(y0.transpose() * cw * &vj)[(0, 0)] / c0 } else { 0.0 };
                    p.set_column(n, &(vj + &y0 * alpha));
                }
                p
            }
            None => DMatrix::from_fn(6, 6, |r, c| self.right[(r, c)] / self.sigma[c]),
        };
        let h = basis.transpose() * cw * &basis;
        let h = (&h + h.transpose()) * 0.5;
        let e = sym_eigen(&h).ok()?;
        if !(e.values[0] > 0.0) {
            return None;
        }
        Some(&basis * e.vectors.column(0))
    }
}

/// Single constrained solve at `k`.
pub fn fit_for_k(points: &PointSet, k: f64, model: CenterModel) -> Result<SinglePassFit> {
    ReducedProblem::new(points, model)?.solve(k)
}

/// Solves at `k = 4, 8, 16, …` until the fit is accepted under `acceptance`
/// or `k` exceeds `k_max`. The last admissible fit is returned either way.
pub fn inner_fit(points: &PointSet, k_max: f64, acceptance: Acceptance, model: CenterModel) -> Result<InnerFit> {
    let problem = ReducedProblem::new(points, model)?;
    inner_fit_prepared(&problem, k_max, acceptance)
}

pub(crate) fn inner_fit_prepared(problem: &ReducedProblem, k_max: f64, acceptance: Acceptance) -> Result<InnerFit> {
    if !(k_max >= K_START) {
        return Err(FitError::invalid(format!("k_max = {k_max} must be >= {K_START}")));
    }
    let mut k = K_START;
    let mut k_values = Vec::new();
    let mut last = None;
    loop {
        k_values.push(k);
        match problem.solve(k) {
            Ok(mut fit) => {
                fit.accepted = match acceptance {
                    Acceptance::Ellipsoid => fit.ellipsoid,
                    Acceptance::SlackConstraint => fit.ellipsoid && fit.slack,
                };
                let done = fit.accepted;
                last = Some(fit);
                if done {
                    break;
                }
            }
            Err(FitError::ConstraintInfeasible { .. }) => {}
            Err(e) => return Err(e),
        }
        if k > k_max {
            break;
        }
        k *= 2.0;
    }
    match last {
        Some(fit) => Ok(InnerFit { fit, k_values }),
        None => Err(FitError::ConstraintInfeasible { k }),
    }
}
