//! Ellipsoid fitting to small point sets.
//!
//! A constrained algebraic least-squares fit ([`lsq`]) is wrapped in an
//! outer loop ([`iterative`]) that rotates the data onto the principal axes
//! of the current estimate until the fitted quadratic form is diagonal.
//! Axis lengths come from its eigenvalues and the orientation is reported as
//! Z-Y-X Euler angles ([`orientation`]).
//!
//! ```
//! use ellipsoid_fit::{fit_ellipsoid, generate, EulerAngles, FitConfig, SynthSpec};
//!
//! let spec = SynthSpec::new([10.0, 3.0, 1.0], EulerAngles::new(50.0, 60.0, 40.0), 6, 1);
//! let points = generate(&spec).unwrap();
//! let report = fit_ellipsoid(&points, &FitConfig::with_seed(1)).unwrap();
//! assert!(report.converged);
//! assert!((report.geometry.semi_axes[0] - 10.0).abs() < 1e-6);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod batch;
pub mod error;
pub mod iterative;
pub mod linalg;
pub mod lsq;
pub mod orientation;
pub mod quadric;
pub mod synth;

pub use error::{FitError, Result};
pub use iterative::{fit_ellipsoid, fit_single_pass, EllipsoidGeometry, FitConfig, FitReport, InitMode, IterationRecord};
pub use linalg::SymMatrix3;
pub use lsq::{inner_fit, Acceptance, CenterModel};
pub use orientation::{euler_to_matrix, matrix_to_euler, recover_orientation, AxisOrder, EulerAngles};
pub use quadric::{PointSet, QuadricCoeffs};
pub use synth::{generate, sample_quadric, SynthSpec};
