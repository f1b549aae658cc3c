//! Synthetic point sets on ellipsoid surfaces.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{FitError, Result};
use crate::linalg::SymMatrix3;
use crate::orientation::{euler_to_matrix, EulerAngles};
use crate::quadric::PointSet;

/// Surface `p = Rᵀ (A cosθ cosφ, B cosθ sinφ, C sinθ)` sampled at uniform θ, φ.
///
/// With the default θ range `[0, π]` the body-frame `z` is never negative,
/// so only one half of the surface is covered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub semi_axes: [f64; 3],
    pub euler_deg: EulerAngles,
    pub n_points: usize,
    pub seed: u64,
    pub noise_sigma: f64,
    pub theta_range: [f64; 2],
    pub phi_range: [f64; 2],
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            semi_axes: [1.0, 1.0, 1.0],
            euler_deg: EulerAngles::zero(),
            n_points: 6,
            seed: 0,
            noise_sigma: 0.0,
            theta_range: [0.0, PI],
            phi_range: [0.0, 2.0 * PI],
        }
    }
}

impl SynthSpec {
    pub fn new(semi_axes: [f64; 3], euler_deg: EulerAngles, n_points: usize, seed: u64) -> Self {
        Self { semi_axes, euler_deg, n_points, seed, ..Self::default() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.semi_axes.iter().all(|a| *a > 0.0 && a.is_finite()) {
            return Err(FitError::invalid("semi-axes must be positive and finite"));
        }
        if self.n_points < 6 {
            return Err(FitError::invalid("at least 6 points are required"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(FitError::invalid("noise_sigma must be nonnegative"));
        }
        let angles = self.euler_deg.to_array();
        let ranges = [self.theta_range, self.phi_range];
        if !angles.iter().chain(ranges.iter().flatten()).all(|v| v.is_finite()) {
            return Err(FitError::invalid("angles and ranges must be finite"));
        }
        if ranges.iter().any(|r| r[0] > r[1]) {
            return Err(FitError::invalid("angle range lower bound exceeds upper bound"));
        }
        Ok(())
    }

    /// Rotation taking input coordinates to body coordinates.
    pub fn rotation(&self) -> Matrix3<f64> {
        euler_to_matrix(&self.euler_deg)
    }

    /// `Rᵀ diag(A⁻², B⁻², C⁻²) R`; the surface is `pᵀ K p = 1`.
    pub fn true_fisher(&self) -> SymMatrix3 {
        let [a, b, c] = self.semi_axes;
        SymMatrix3::from_diagonal([a.powi(-2), b.powi(-2), c.powi(-2)]).congruence(&self.rotation().transpose())
    }

    /// Longest over shortest semi-axis.
    pub fn elongation(&self) -> f64 {
        let max = self.semi_axes.iter().copied().fold(f64::MIN, f64::max);
        let min = self.semi_axes.iter().copied().fold(f64::MAX, f64::min);
        max / min
    }
}

fn draw(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..=range[1])
    }
}

/// The `(θ, φ)` pairs `generate` would draw for `count` points, ignoring noise.
pub fn sample_angles(spec: &SynthSpec, count: usize) -> Vec<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..count)
        .map(|_| {
            let theta = draw(&mut rng, spec.theta_range);
            let phi = draw(&mut rng, spec.phi_range);
            (theta, phi)
        })
        .collect()
}

pub fn generate(spec: &SynthSpec) -> Result<PointSet> {
    spec.validate()?;
    let rt = spec.rotation().transpose();
    let [a, b, c] = spec.semi_axes;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).map_err(|e| FitError::invalid(e.to_string()))?)
    } else {
        None
    };
    let mut points = Vec::with_capacity(spec.n_points);
    for _ in 0..spec.n_points {
        let theta = draw(&mut rng, spec.theta_range);
        let phi = draw(&mut rng, spec.phi_range);
        let body = Vector3::new(a * theta.cos() * phi.cos(), b * theta.cos() * phi.sin(), c * theta.sin());
        let mut p = rt * body;
        if let Some(n) = &noise {
            p += Vector3::from_fn(|_, _| n.sample(&mut rng));
        }
        points.push(p);
    }
    PointSet::new(points)
}

/// Points on `pᵀ g p = level` along directions uniform on the sphere.
pub fn sample_quadric(g: &SymMatrix3, level: f64, n: usize, seed: u64) -> Result<PointSet> {
    PointSet::new(quadric_points(g, level, n, seed)?)
}

pub(crate) fn quadric_points(g: &SymMatrix3, level: f64, n: usize, seed: u64) -> Result<Vec<Vector3<f64>>> {
    if !(level > 0.0 && level.is_finite()) {
        return Err(FitError::invalid("level must be positive"));
    }
    if !g.is_finite() || !g.is_positive_definite() {
        return Err(FitError::invalid("quadratic form must be positive definite"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let d = Vector3::from_fn(|_, _| StandardNormal.sample(&mut rng));
        let norm: f64 = d.norm();
        if norm < 1e-12 {
            continue;
        }
        let d = d / norm;
        out.push(d * (level / g.quadratic_form(&d)).sqrt());
    }
    Ok(out)
}
