use ellipsoid_fit::{FitError, FitReport, IterationRecord};
use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};

use crate::io::RunManifest;

pub const SCHEMA: &str = "ellipsoid-fit-report/v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceRow {
    pub outer_iter: usize,
    pub k_used: f64,
    pub inner_passes: usize,
    pub omega: f64,
    pub off_diag_norm: f64,
    pub accepted: bool,
}

impl From<&IterationRecord> for TraceRow {
    fn from(r: &IterationRecord) -> Self {
        Self {
            outer_iter: r.outer_iter,
            k_used: r.k_used,
            inner_passes: r.inner_passes,
            omega: r.omega,
            off_diag_norm: r.off_diag_norm,
            accepted: r.accepted,
        }
    }
}

/// JSON report. Geometry fields are absent when the fit failed.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JsonReport {
    pub schema: String,
    pub method: String,
    pub converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub semi_axes: Option<[f64; 3]>,
    pub euler_deg: Option<[f64; 3]>,
    pub center: Option<[f64; 3]>,
    /// Quadratic form in the input frame, row-major, surface at level 1.
    pub fisher: Option<[f64; 9]>,
    /// Cumulative projection rotation, row-major.
    pub rotation: Option<[f64; 9]>,
    /// Axis directions as columns, row-major.
    pub axes_frame: Option<[f64; 9]>,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub final_k: Option<f64>,
    pub omega: Option<f64>,
    pub axis_degenerate: bool,
    pub gimbal_lock: bool,
    pub init_fallback: bool,
    pub trace: Vec<TraceRow>,
    pub manifest: Option<serde_json::Value>,
}

fn row_major(m: &Matrix3<f64>) -> [f64; 9] {
    std::array::from_fn(|n| m[(n / 3, n % 3)])
}

impl JsonReport {
    pub fn from_fit(method: &str, r: &FitReport, manifest: &RunManifest) -> Self {
        Self {
            schema: SCHEMA.into(),
            method: method.into(),
            converged: r.converged,
            error: None,
            semi_axes: Some(r.geometry.semi_axes),
            euler_deg: Some(r.geometry.euler_deg.to_array()),
            center: Some(r.geometry.center),
            fisher: Some(row_major(&r.fisher_original_frame.to_matrix())),
            rotation: Some(row_major(&r.rotation)),
            axes_frame: Some(row_major(&r.axes_frame)),
            outer_iterations: r.outer_iterations,
            inner_iterations: r.inner_iterations,
            final_k: Some(r.final_k),
            omega: Some(r.omega),
            axis_degenerate: r.axis_degenerate,
            gimbal_lock: r.gimbal_lock,
            init_fallback: r.init_fallback,
            trace: r.trace.iter().map(TraceRow::from).collect(),
            manifest: serde_json::to_value(manifest).ok(),
        }
    }

    pub fn from_error(method: &str, e: &FitError, manifest: &RunManifest) -> Self {
        let outer_iterations = match e {
            FitError::FitFailed { iterations, .. } => *iterations,
            _ => 0,
        };
        Self {
            schema: SCHEMA.into(),
            method: method.into(),
            converged: false,
            error: Some(e.to_string()),
            semi_axes: None,
            euler_deg: None,
            center: None,
            fisher: None,
            rotation: None,
            axes_frame: None,
            outer_iterations,
            inner_iterations: 0,
            final_k: None,
            omega: None,
            axis_degenerate: false,
            gimbal_lock: false,
            init_fallback: false,
            trace: Vec::new(),
            manifest: serde_json::to_value(manifest).ok(),
        }
    }
}
