//! Outer loop: project the points into the current frame, fit, rotate the
//! frame onto the eigenvectors of the fitted quadratic form, repeat until the
//! fitted form is diagonal.

use nalgebra::{Matrix3, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FitError, Result};
use crate::linalg::{make_proper, reorthonormalize, SymMatrix3};
use crate::lsq::{inner_fit_prepared, Acceptance, CenterModel, ReducedProblem, DEFAULT_K_MAX};
use crate::orientation::{recover_orientation, AxisOrder, EulerAngles};
use crate::quadric::{quadric_to_fisher, FisherForm, PointSet, QuadricCoeffs};

/// Relative gap below which two eigenvalues count as equal.
pub const DEGENERACY_TOL: f64 = 1e-9;
/// Consecutive non-improving outer iterations tolerated before giving up.
pub const STALL_LIMIT: usize = 10;
const COPLANAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    /// Eigenvectors of `MᵀM` for a seeded Gaussian `M`.
    #[default]
    Random,
    /// Eigenvectors of the data covariance.
    Fisher,
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub k_max: f64,
    pub max_outer_iterations: usize,
    pub off_diag_tol: f64,
    pub trace_tol: f64,
    pub init_mode: InitMode,
    pub rng_seed: u64,
    pub center_model: CenterModel,
    pub axis_order: AxisOrder,
    pub acceptance: Acceptance,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k_max: DEFAULT_K_MAX,
            max_outer_iterations: 100,
            off_diag_tol: 1e-8,
            trace_tol: 1e-6,
            init_mode: InitMode::Random,
            rng_seed: 0,
            center_model: CenterModel::Origin,
            axis_order: AxisOrder::Descending,
            acceptance: Acceptance::SlackConstraint,
        }
    }
}

impl FitConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { rng_seed: seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_max >= 4.0) {
            return Err(FitError::invalid("k_max must be at least 4"));
        }
        if self.max_outer_iterations == 0 {
            return Err(FitError::invalid("max_outer_iterations must be at least 1"));
        }
        if !(self.off_diag_tol > 0.0 && self.trace_tol > 0.0) {
            return Err(FitError::invalid("tolerances must be positive"));
        }
        Ok(())
    }
}

/// Semi-axes, orientation and center of a fitted ellipsoid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EllipsoidGeometry {
    /// In the order given by [`FitConfig::axis_order`].
    pub semi_axes: [f64; 3],
    pub euler_deg: EulerAngles,
    pub center: [f64; 3],
}

impl EllipsoidGeometry {
    /// Ratio of the longest to the shortest semi-axis.
    pub fn elongation(&self) -> f64 {
        let max = self.semi_axes.iter().copied().fold(f64::MIN, f64::max);
        let min = self.semi_axes.iter().copied().fold(f64::MAX, f64::min);
        max / min
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub outer_iter: usize,
    pub k_used: f64,
    pub inner_passes: usize,
    pub omega: f64,
    /// `max(|f|,|g|,|h|) / max(|a|,|b|,|c|)` of the fitted form in the projected frame.
    pub off_diag_norm: f64,
    pub accepted: bool,
    /// Geometry implied by this iteration, when the fit was an ellipsoid.
    pub geometry: Option<EllipsoidGeometry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitReport {
    pub geometry: EllipsoidGeometry,
    /// Quadratic form in the input frame, scaled so the surface is at level 1.
    pub fisher_original_frame: SymMatrix3,
    /// Cumulative rotation the points were projected with (`q = Rᵀ p`).
    pub rotation: Matrix3<f64>,
    /// Axis directions as columns, matching `geometry.semi_axes`.
    pub axes_frame: Matrix3<f64>,
    pub outer_iterations: usize,
    /// Total constrained solves across all outer iterations.
    pub inner_iterations: usize,
    pub final_k: f64,
    pub omega: f64,
    pub trace: Vec<IterationRecord>,
    pub converged: bool,
    pub axis_degenerate: bool,
    pub gimbal_lock: bool,
    /// Fisher initialization fell back to a random rotation.
    pub init_fallback: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InitRotation {
    pub rotation: Matrix3<f64>,
    pub fell_back: bool,
}

fn random_rotation(seed: u64) -> Result<Matrix3<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = Matrix3::<f64>::from_fn(|_, _| StandardNormal.sample(&mut rng));
    let (_, vecs) = SymMatrix3::from_matrix(&(m.transpose() * m)).eigen3()?;
    make_proper(&vecs)
}

pub fn init_rotation(points: &PointSet, cfg: &FitConfig) -> Result<InitRotation> {
    match cfg.init_mode {
        InitMode::Identity => Ok(InitRotation { rotation: Matrix3::identity(), fell_back: false }),
        InitMode::Random => Ok(InitRotation { rotation: random_rotation(cfg.rng_seed)?, fell_back: false }),
        InitMode::Fisher => {
            let cov = SymMatrix3::from_matrix(&points.covariance_about(&points.centroid()));
            let (vals, vecs) = cov.eigen3()?;
            if points.len() < 4 || !(vals[2] > COPLANAR_TOL * vals[0]) {
                return Ok(InitRotation { rotation: random_rotation(cfg.rng_seed)?, fell_back: true });
            }
            Ok(InitRotation { rotation: make_proper(&vecs)?, fell_back: false })
        }
    }
}

/// Relative size of the cross terms of `k`.
pub fn off_diagonal_ratio(k: &SymMatrix3) -> f64 {
    let off = k.off_diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diag = k.diagonal().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if diag == 0.0 {
        f64::INFINITY
    } else {
        off / diag
    }
}

pub fn converged(k: &SymMatrix3, evecs: &Matrix3<f64>, cfg: &FitConfig) -> bool {
    off_diagonal_ratio(k) <= cfg.off_diag_tol && (evecs.trace() - 3.0).abs() <= cfg.trace_tol
}

/// Eigen-decomposition of `k` in descending order, with near-equal
/// eigenvalues ordered by the coordinate their eigenvector points along.
fn ordered_eigen(k: &SymMatrix3) -> Result<(Vector3<f64>, Matrix3<f64>)> {
    let (vals, vecs) = k.eigen3()?;
    let scale = vals.amax().max(f64::MIN_POSITIVE);
    let dominant = |j: usize| vecs.column(j).iamax();
    let mut order = [0usize, 1, 2];
    let mut start = 0;
    while start < 3 {
        let mut end = start + 1;
        while end < 3 && (vals[start] - vals[end]).abs() <= DEGENERACY_TOL * scale {
            end += 1;
        }
        order[start..end].sort_by_key(|&j| dominant(j));
        start = end;
    }
    let values = Vector3::from_fn(|i, _| vals[order[i]]);
    let vectors = Matrix3::from_fn(|i, j| vecs[(i, order[j])]);
    Ok((values, vectors))
}

/// `k` or `-k`, whichever has the nonnegative trace.
fn sign_fixed(k: &SymMatrix3) -> SymMatrix3 {
    if k.trace() < 0.0 {
        k.scaled(-1.0)
    } else {
        *k
    }
}

struct Extracted {
    geometry: EllipsoidGeometry,
    fisher_xyz: SymMatrix3,
    axes_frame: Matrix3<f64>,
    degenerate: bool,
    gimbal_lock: bool,
}

/// Geometry of a fitted form `kn` (surface at level 1, center `center`)
/// expressed in the frame obtained by `p = rotation · q`.
fn extract(points: &PointSet, kn: &SymMatrix3, center: &Vector3<f64>, rotation: &Matrix3<f64>, order: AxisOrder) -> Result<Extracted> {
    let (vals, vecs) = ordered_eigen(kn)?;
    if !(vals[2] > 0.0) {
        return Err(FitError::NotAnEllipsoid);
    }
    let scale = vals[0];
    let close = |i: usize, j: usize| (vals[i] - vals[j]).abs() <= DEGENERACY_TOL * scale;
    let degenerate = close(0, 1) || close(1, 2) || close(0, 2);
    let axes = [0, 1, 2].map(|i| 1.0 / vals[i].sqrt());
    let center_xyz = rotation * center;
    let fisher_xyz = kn.congruence(rotation);

    let (semi_axes, angles, axes_frame, gimbal_lock) = if close(0, 2) {
        let slots = order.arrange(&axes);
        (slots.map(|i| axes[i]), EulerAngles::zero(), Matrix3::identity(), false)
    } else {
        let frame = rotation * make_proper(&vecs)?;
        let o = recover_orientation(points, &frame, axes, order)?;
        (o.semi_axes, o.angles, o.frame, o.gimbal_lock)
    };
    Ok(Extracted {
        geometry: EllipsoidGeometry { semi_axes, euler_deg: angles, center: center_xyz.into() },
        fisher_xyz,
        axes_frame,
        degenerate,
        gimbal_lock,
    })
}

fn check_points(points: &PointSet, cfg: &FitConfig) -> Result<()> {
    cfg.validate()?;
    if points.len() < cfg.center_model.min_points() {
        return Err(FitError::invalid(format!(
            "{} points given, at least {} needed",
            points.len(),
            cfg.center_model.min_points()
        )));
    }
    if !points.spans_3d(COPLANAR_TOL) {
        return Err(FitError::invalid("points are coplanar"));
    }
    Ok(())
}

struct Iteration {
    coeffs: QuadricCoeffs,
    fisher: Option<FisherForm>,
    rotation: Matrix3<f64>,
    record: IterationRecord,
}

fn report_from(points: &PointSet, it: &Iteration, trace: Vec<IterationRecord>, converged: bool, init_fallback: bool, order: AxisOrder) -> Result<FitReport> {
    let fisher = it.fisher.ok_or(FitError::NotAnEllipsoid)?;
    let ex = extract(points, &fisher.normalized(), &fisher.center, &it.rotation, order)?;
    let inner_iterations = trace.iter().map(|r| r.inner_passes).sum();
    Ok(FitReport {
        geometry: ex.geometry,
        fisher_original_frame: ex.fisher_xyz,
        rotation: it.rotation,
        axes_frame: ex.axes_frame,
        outer_iterations: trace.len(),
        inner_iterations,
        final_k: it.record.k_used,
        omega: it.record.omega,
        trace,
        converged,
        axis_degenerate: ex.degenerate,
        gimbal_lock: ex.gimbal_lock,
        init_fallback,
    })
}

fn run_iteration(points: &PointSet, rotation: &Matrix3<f64>, outer_iter: usize, cfg: &FitConfig, acceptance: Acceptance) -> Result<Iteration> {
    let projected = points.projected(rotation);
    let problem = ReducedProblem::new(&projected, cfg.center_model)?;
    let inner = inner_fit_prepared(&problem, cfg.k_max, acceptance)?;
    let fisher = quadric_to_fisher(&inner.fit.coeffs).ok().filter(|f| f.is_ellipsoid());
    let geometry = fisher.and_then(|f| extract(points, &f.normalized(), &f.center, rotation, cfg.axis_order).ok().map(|e| e.geometry));
    let off = off_diagonal_ratio(&inner.fit.coeffs.quadratic_part());
    Ok(Iteration {
        coeffs: inner.fit.coeffs,
        fisher,
        rotation: *rotation,
        record: IterationRecord {
            outer_iter,
            k_used: inner.fit.k_used,
            inner_passes: inner.passes(),
            omega: inner.fit.omega,
            off_diag_norm: off,
            accepted: inner.fit.accepted,
            geometry,
        },
    })
}

/// Iteratively re-aligned constrained fit.
///
/// Returns the first iteration that satisfies [`converged`] with an accepted
/// ellipsoid fit. Otherwise, after `max_outer_iterations` or a stall of
/// [`STALL_LIMIT`] iterations, the ellipsoid iterate with the smallest
/// off-diagonal ratio is reported with `converged = false`.
pub fn fit_ellipsoid(points: &PointSet, cfg: &FitConfig) -> Result<FitReport> {
    check_points(points, cfg)?;
    let init = init_rotation(points, cfg)?;
    let mut rotation = init.rotation;
    let mut trace = Vec::new();
    let mut best: Option<Iteration> = None;
    let mut best_off = f64::INFINITY;
    let mut stalled = 0;

    for outer in 1..=cfg.max_outer_iterations {
        let it = run_iteration(points, &rotation, outer, cfg, cfg.acceptance)?;
        trace.push(it.record.clone());
        let form = match &it.fisher {
            Some(f) => f.normalized(),
            None => sign_fixed(&it.coeffs.quadratic_part()),
        };
        let (_, vecs) = ordered_eigen(&form)?;
        let refine = make_proper(&vecs)?;

        if let Some(f) = &it.fisher {
            if it.record.accepted && converged(&f.normalized(), &refine, cfg) {
                return report_from(points, &it, trace, true, init.fell_back, cfg.axis_order);
            }
        }

        let off = it.record.off_diag_norm;
        let improved = off < best_off;
        if improved {
            best_off = off;
            stalled = 0;
        } else {
            stalled += 1;
        }
        if it.fisher.is_some() && (improved || best.is_none()) {
            best = Some(it);
        }
        if stalled >= STALL_LIMIT {
            break;
        }
        rotation = reorthonormalize(&(rotation * refine));
    }

    match best {
        Some(it) => report_from(points, &it, trace, false, init.fell_back, cfg.axis_order),
        None => Err(FitError::FitFailed {
            iterations: trace.len(),
            reason: "no iteration produced a real ellipsoid".into(),
        }),
    }
}

/// Single constrained fit in the input frame that stops at the first
/// ellipsoid, without any re-alignment.
pub fn fit_single_pass(points: &PointSet, cfg: &FitConfig) -> Result<FitReport> {
    check_points(points, cfg)?;
    let it = run_iteration(points, &Matrix3::identity(), 1, cfg, Acceptance::Ellipsoid)?;
    let accepted = it.record.accepted && it.fisher.is_some();
    let trace = vec![it.record.clone()];
    match report_from(points, &it, trace, accepted, false, cfg.axis_order) {
        Err(FitError::NotAnEllipsoid) => Err(FitError::FitFailed {
            iterations: 1,
            reason: "fit is not a real ellipsoid".into(),
        }),
        other => other,
    }
}
