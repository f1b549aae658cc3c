//! Seed sweeps and dense surface checks.
//!
//! With the `parallel` feature (on by default) work is spread over the rayon
//! thread pool; without it everything runs on the calling thread. The
//! `_sequential` variants are always available for comparison.

use std::time::Instant;

use nalgebra::Vector3;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::iterative::{fit_ellipsoid, fit_single_pass, FitConfig, FitReport};
use crate::linalg::SymMatrix3;
use crate::orientation::AxisOrder;
use crate::synth::{generate, quadric_points, SynthSpec};

const SPRAY_CHUNK: usize = 4096;

/// Runs `f(0), …, f(n - 1)` and collects the results in index order.
pub fn run_trials<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_trials_sequential(n, f)
    }
}

pub fn run_trials_sequential<T, F: Fn(usize) -> T>(n: usize, f: F) -> Vec<T> {
    (0..n).map(f).collect()
}

/// Per-axis relative errors and per-angle absolute errors (degrees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Errors {
    pub axes: [f64; 3],
    pub angles: [f64; 3],
}

impl Errors {
    pub fn max_axis(&self) -> f64 {
        self.axes.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_angle(&self) -> f64 {
        self.angles.iter().copied().fold(0.0, f64::max)
    }
}

/// Compares a report with the spec it was generated from. The report's axes
/// must be in the spec's order, see [`AxisOrder::matching`].
pub fn errors(spec: &SynthSpec, report: &FitReport) -> Errors {
    let g = &report.geometry;
    Errors {
        axes: [0, 1, 2].map(|i| (g.semi_axes[i] - spec.semi_axes[i]).abs() / spec.semi_axes[i]),
        angles: g.euler_deg.abs_diff(&spec.euler_deg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodOutcome {
    pub semi_axes: [f64; 3],
    pub euler_deg: [f64; 3],
    pub errors: Errors,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub final_k: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub trial: usize,
    pub seed: u64,
    /// `Err` holds the error message.
    pub iterative: std::result::Result<MethodOutcome, String>,
    pub single_pass: std::result::Result<MethodOutcome, String>,
}

fn outcome(spec: &SynthSpec, start: Instant, report: Result<FitReport>) -> std::result::Result<MethodOutcome, String> {
    let seconds = start.elapsed().as_secs_f64();
    let r = report.map_err(|e| e.to_string())?;
    Ok(MethodOutcome {
        semi_axes: r.geometry.semi_axes,
        euler_deg: r.geometry.euler_deg.to_array(),
        errors: errors(spec, &r),
        converged: r.converged,
        outer_iterations: r.outer_iterations,
        inner_iterations: r.inner_iterations,
        final_k: r.final_k,
        seconds,
    })
}

/// Generates `spec` with `seed` and fits it with both methods. The seed is
/// also used for the random initial rotation.
pub fn compare_trial(spec: &SynthSpec, cfg: &FitConfig, trial: usize, seed: u64) -> TrialOutcome {
    let spec = spec.with_seed(seed);
    let cfg = FitConfig { rng_seed: seed, axis_order: AxisOrder::matching(spec.semi_axes), ..*cfg };
    let points = generate(&spec);
    let (iterative, single_pass) = match points {
        Ok(points) => {
            let t = Instant::now();
            let it = outcome(&spec, t, fit_ellipsoid(&points, &cfg));
            let t = Instant::now();
            let sp = outcome(&spec, t, fit_single_pass(&points, &cfg));
            (it, sp)
        }
        Err(e) => (Err(e.to_string()), Err(e.to_string())),
    };
    TrialOutcome { trial, seed, iterative, single_pass }
}

/// `trials` comparisons with seeds `base_seed, base_seed + 1, …`.
pub fn compare_sweep(spec: &SynthSpec, cfg: &FitConfig, base_seed: u64, trials: usize) -> Vec<TrialOutcome> {
    run_trials(trials, |i| compare_trial(spec, cfg, i, base_seed.wrapping_add(i as u64)))
}

pub fn compare_sweep_sequential(spec: &SynthSpec, cfg: &FitConfig, base_seed: u64, trials: usize) -> Vec<TrialOutcome> {
    run_trials_sequential(trials, |i| compare_trial(spec, cfg, i, base_seed.wrapping_add(i as u64)))
}

/// `n` points on `(p - center)ᵀ k (p - center) = 1`, generated in chunks
/// with independent seeds.
pub fn spray_surface(k: &SymMatrix3, center: &Vector3<f64>, n: usize, seed: u64) -> Result<Vec<Vector3<f64>>> {
    let chunks = n.div_ceil(SPRAY_CHUNK);
    let make = |c: usize| -> Result<Vec<Vector3<f64>>> {
        let len = SPRAY_CHUNK.min(n - c * SPRAY_CHUNK);
        let pts = quadric_points(k, 1.0, len, seed.wrapping_add(c as u64))?;
        Ok(pts.into_iter().map(|p| p + center).collect())
    };
    let parts: Vec<Result<Vec<Vector3<f64>>>> = run_trials(chunks, make);
    let mut out = Vec::with_capacity(n);
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

/// Largest `|pᵀ g p / level - 1|` over `points`.
pub fn max_level_deviation(points: &[Vector3<f64>], g: &SymMatrix3, level: f64) -> f64 {
    let dev = |p: &Vector3<f64>| (g.quadratic_form(p) / level - 1.0).abs();
    #[cfg(feature = "parallel")]
    {
        points.par_iter().map(dev).reduce(|| 0.0, f64::max)
    }
    #[cfg(not(feature = "parallel"))]
    {
        points.iter().map(dev).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orientation::EulerAngles;

    #[test]
    fn parallel_matches_sequential() {
        let spec = SynthSpec::new([5.0, 3.0, 1.0], EulerAngles::new(10.0, 20.0, 30.0), 6, 0);
        let cfg = FitConfig::default();
        let strip = |v: Vec<TrialOutcome>| {
            v.into_iter()
                .map(|mut t| {
                    for m in [&mut t.iterative, &mut t.single_pass].into_iter().flatten() {
                        m.seconds = 0.0;
                    }
                    t
                })
                .collect::<Vec<_>>()
        };
        let a = strip(compare_sweep(&spec, &cfg, 40, 6));
        let b = strip(compare_sweep_sequential(&spec, &cfg, 40, 6));
        assert_eq!(a, b);
    }

    #[test]
    fn spray_lies_on_surface() {
        let k = SymMatrix3::new(0.5, 2.0, 9.0, 0.1, -0.3, 0.2);
        let c = Vector3::new(1.0, -2.0, 0.5);
        let pts = spray_surface(&k, &c, 10_000, 7).unwrap();
        assert_eq!(pts.len(), 10_000);
        let shifted: Vec<_> = pts.iter().map(|p| p - c).collect();
        assert!(max_level_deviation(&shifted, &k, 1.0) <= 1e-12);
        assert_eq!(pts, spray_surface(&k, &c, 10_000, 7).unwrap());
    }
}
