//! Euler angles for the Z-Y-X rotation convention and recovery of an
//! ellipsoid's orientation from its principal-axis frame.
//!
//! The element formulas are
//!
//! ```text
//! R11 = cα cβ   R12 = sγ sβ cα - cγ sα   R13 = cγ sβ cα + sγ sα
//! R21 = cβ sα   R22 = sγ sα sβ + cγ cα   R23 = cγ sα sβ - sγ cα
//! R31 = -sβ     R32 = sγ cβ              R33 = cγ cβ
//! ```
//!
//! so α turns about Z, β about Y and γ about X, applied in the order X, Y, Z.
//! A body-frame point `b` sits at `R^T b` in the reference frame.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{FitError, Result};
use crate::linalg::orthonormality_error;
use crate::quadric::PointSet;

/// `|cos β|` below which α and γ are no longer separable.
pub const GIMBAL_TOL: f64 = 1e-9;
/// Tolerance of the element-wise consistency check in [`matrix_to_euler`].
pub const CONSISTENCY_TOL: f64 = 1e-8;
/// Relative L∞ tolerance of the reprojection test in [`recover_orientation`].
pub const REPROJECTION_TOL: f64 = 1e-6;

/// Rotation angles in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl EulerAngles {
    pub fn new(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self { alpha, beta, gamma }
    }

    pub fn zero() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn to_array(&self) -> [f64; 3] {
        [self.alpha, self.beta, self.gamma]
    }

    /// Component-wise absolute difference, wrapped into [0, 180].
    pub fn abs_diff(&self, other: &EulerAngles) -> [f64; 3] {
        let a = self.to_array();
        let b = other.to_array();
        [0, 1, 2].map(|i| wrap_degrees(a[i] - b[i]).abs())
    }
}

/// Maps an angle in degrees into (-180, 180].
pub fn wrap_degrees(x: f64) -> f64 {
    let mut y = x % 360.0;
    if y <= -180.0 {
        y += 360.0;
    } else if y > 180.0 {
        y -= 360.0;
    }
    y
}

pub fn euler_to_matrix(angles: &EulerAngles) -> Matrix3<f64> {
    let (sa, ca) = angles.alpha.to_radians().sin_cos();
    let (sb, cb) = angles.beta.to_radians().sin_cos();
    let (sg, cg) = angles.gamma.to_radians().sin_cos();
    Matrix3::new(
        ca * cb,
        sg * sb * ca - cg * sa,
        cg * sb * ca + sg * sa,
        cb * sa,
        sg * sa * sb + cg * ca,
        cg * sa * sb - sg * ca,
        -sb,
        sg * cb,
        cg * cb,
    )
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EulerExtraction {
    pub angles: EulerAngles,
    pub gimbal_lock: bool,
    /// Largest mismatch between the input and the matrix rebuilt from `angles`,
    /// over the six elements not used to solve for the angles.
    pub inconsistency: f64,
}

impl EulerExtraction {
    pub fn is_consistent(&self) -> bool {
        self.inconsistency <= CONSISTENCY_TOL
    }
}

/// Inverts [`euler_to_matrix`] using `R31`, `R21/R11` and `R32/R33`.
///
/// At gimbal lock (`|cos β| < 1e-9`) α is set to zero and γ is solved from
/// `R22` and `R23`.
pub fn matrix_to_euler(r: &Matrix3<f64>) -> Result<EulerExtraction> {
    if r.iter().any(|v| !v.is_finite()) || orthonormality_error(r) > 1e-8 || r.determinant() < 0.0 {
        return Err(FitError::invalid("matrix_to_euler needs a proper rotation"));
    }
    let sb = (-r[(2, 0)]).clamp(-1.0, 1.0);
    let beta = sb.asin();
    let cb = beta.cos();
    let (alpha, gamma, gimbal_lock) = if cb.abs() < GIMBAL_TOL {
        (0.0, (-r[(1, 2)]).atan2(r[(1, 1)]), true)
    } else {
        (r[(1, 0)].atan2(r[(0, 0)]), r[(2, 1)].atan2(r[(2, 2)]), false)
    };
    let angles = EulerAngles::new(
        wrap_degrees(alpha.to_degrees()),
        beta.to_degrees(),
        wrap_degrees(gamma.to_degrees()),
    );
    let rebuilt = euler_to_matrix(&angles);
    let checked = [(0, 1), (0, 2), (1, 1), (1, 2), (2, 1), (2, 2)];
    let checked: &[(usize, usize)] = if gimbal_lock { &[(0, 0), (0, 1), (0, 2), (1, 0), (2, 1), (2, 2)] } else { &checked };
    let inconsistency = checked
        .iter()
        .map(|&(i, j)| (rebuilt[(i, j)] - r[(i, j)]).abs())
        .fold(0.0, f64::max);
    Ok(EulerExtraction { angles, gimbal_lock, inconsistency })
}

/// Which semi-axis is reported first.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisOrder {
    /// Longest axis first.
    #[default]
    Descending,
    /// Shortest axis first.
    Ascending,
    /// `ranks[i]` is the length rank (0 = longest) of the axis reported in slot `i`.
    Ranked([usize; 3]),
}

impl AxisOrder {
    pub fn ranks(&self) -> [usize; 3] {
        match self {
            AxisOrder::Descending => [0, 1, 2],
            AxisOrder::Ascending => [2, 1, 0],
            AxisOrder::Ranked(r) => *r,
        }
    }

    /// Order that reproduces the length ranking of `reference`, e.g. the
    /// semi-axes a synthetic data set was generated with.
    pub fn matching(reference: [f64; 3]) -> Self {
        let mut idx = [0usize, 1, 2];
        idx.sort_by(|&i, &j| reference[j].partial_cmp(&reference[i]).unwrap());
        let mut ranks = [0usize; 3];
        for (rank, &i) in idx.iter().enumerate() {
            ranks[i] = rank;
        }
        match ranks {
            [0, 1, 2] => AxisOrder::Descending,
            [2, 1, 0] => AxisOrder::Ascending,
            r => AxisOrder::Ranked(r),
        }
    }

    pub(crate) fn is_valid(&self) -> bool {
        let mut r = self.ranks();
        r.sort_unstable();
        r == [0, 1, 2]
    }

    fn admits(&self, axes: &[f64; 3]) -> bool {
        let ranks = self.ranks();
        (0..3).all(|i| (0..3).all(|j| ranks[i] >= ranks[j] || axes[i] >= axes[j]))
    }

    /// Slot permutation that arranges `axes` in this order.
    pub fn arrange(&self, axes: &[f64; 3]) -> [usize; 3] {
        let mut by_length = [0usize, 1, 2];
        by_length.sort_by(|&i, &j| axes[j].partial_cmp(&axes[i]).unwrap());
        self.ranks().map(|rank| by_length[rank])
    }
}

/// Orientation recovered for one axis labeling.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Orientation {
    pub angles: EulerAngles,
    /// Semi-axes in the reported order.
    pub semi_axes: [f64; 3],
    /// Relabeled frame; column `i` is the direction of `semi_axes[i]`.
    pub frame: Matrix3<f64>,
    pub gimbal_lock: bool,
}

const PERMUTATIONS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];

/// The 24 proper relabelings of `frame`: column permutations combined with
/// sign patterns, keeping those with determinant +1.
pub fn relabelings(frame: &Matrix3<f64>) -> Vec<([usize; 3], [f64; 3], Matrix3<f64>)> {
    let mut out = Vec::with_capacity(24);
    for perm in PERMUTATIONS {
        for bits in 0..8u8 {
            let signs = [0, 1, 2].map(|j| if bits & (1 << j) == 0 { 1.0 } else { -1.0 });
            let m = Matrix3::from_fn(|i, j| signs[j] * frame[(i, perm[j])]);
            if m.determinant() > 0.0 {
                out.push((perm, signs, m));
            }
        }
    }
    out
}

/// Recovers Euler angles from a principal-axis frame.
///
/// `frame` holds the axis directions as columns and `semi_axes[i]` is the
/// length along column `i`. Every proper relabeling is converted to angles,
/// rebuilt into a rotation and used to reproject `points`; a candidate is
/// consistent when the reprojection matches the relabeled projection to
/// relative L∞ 1e-6. Among consistent candidates the first one whose axes
/// follow `order` and whose α and γ both lie in [-90°, 90°] is returned; that
/// choice removes the sign ambiguity of eigenvector-based frames.
pub fn recover_orientation(
    points: &PointSet,
    frame: &Matrix3<f64>,
    semi_axes: [f64; 3],
    order: AxisOrder,
) -> Result<Orientation> {
    if !order.is_valid() {
        return Err(FitError::invalid("axis order ranks must be a permutation of 0, 1, 2"));
    }
    if orthonormality_error(frame) > 1e-8 {
        return Err(FitError::invalid("orientation frame is not orthonormal"));
    }
    let probe: Vec<Vector3<f64>> = if points.is_empty() {
        vec![Vector3::x(), Vector3::y(), Vector3::z()]
    } else {
        points.points().to_vec()
    };
    let magnitude = probe.iter().map(|p| p.amax()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);

    let mut candidates = Vec::with_capacity(24);
    let mut consistent = Vec::new();
    for (perm, _signs, relabeled) in relabelings(frame) {
        let axes = perm.map(|j| semi_axes[j]);
        let body = relabeled.transpose();
        let extraction = match matrix_to_euler(&body) {
            Ok(e) => e,
            Err(_) => continue,
        };
        candidates.push(extraction.angles);
        let rebuilt = euler_to_matrix(&extraction.angles);
        let deviation = probe
            .iter()
            .map(|p| (rebuilt * p - body * p).amax())
            .fold(0.0, f64::max);
        if deviation <= REPROJECTION_TOL * magnitude {
            consistent.push((axes, relabeled, extraction));
        }
    }

    let canonical = |e: &EulerExtraction| e.angles.alpha.abs() <= 90.0 && e.angles.gamma.abs() <= 90.0;
    let pick = consistent
        .iter()
        .find(|(axes, _, e)| order.admits(axes) && canonical(e))
        .or_else(|| consistent.iter().find(|(axes, _, _)| order.admits(axes)))
        .or_else(|| consistent.first());
    match pick {
        Some((axes, relabeled, e)) => Ok(Orientation {
            angles: e.angles,
            semi_axes: *axes,
            frame: *relabeled,
            gimbal_lock: e.gimbal_lock,
        }),
        None => Err(FitError::OrientationAmbiguous { candidates }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: &Matrix3<f64>, b: &Matrix3<f64>, tol: f64) -> bool {
        (a - b).amax() <= tol
    }

    #[test]
    fn zero_angles_give_identity() {
        assert_eq!(euler_to_matrix(&EulerAngles::zero()), Matrix3::identity());
    }

    #[test]
    fn single_axis_rotations_follow_element_formulas() {
        // α alone: R11 = cos α, R21 = sin α, so x maps to y at 90°
        let rz = euler_to_matrix(&EulerAngles::new(90.0, 0.0, 0.0));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!(close(&rz, &expected, 1e-15));
        // γ alone leaves x fixed: R22 = cos γ, R32 = sin γ
        let rx = euler_to_matrix(&EulerAngles::new(0.0, 0.0, 90.0));
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, -1.0, 0.0, 1.0, 0.0);
        assert!(close(&rx, &expected, 1e-15));
    }

    #[test]
    fn identity_extracts_to_zero() {
        let e = matrix_to_euler(&Matrix3::identity()).unwrap();
        assert_eq!(e.angles, EulerAngles::zero());
        assert!(!e.gimbal_lock);
        assert!(e.is_consistent());
    }

    #[test]
    fn reference_triples_roundtrip() {
        for (a, b, g) in [(30.0, 80.0, 70.0), (70.0, 10.0, 30.0), (50.0, 60.0, 40.0)] {
            let e = matrix_to_euler(&euler_to_matrix(&EulerAngles::new(a, b, g))).unwrap();
            let d = e.angles.abs_diff(&EulerAngles::new(a, b, g));
            assert!(d.iter().all(|&x| x <= 1e-9), "{d:?}");
        }
    }

    #[test]
    fn gimbal_lock_is_flagged() {
        let r = euler_to_matrix(&EulerAngles::new(25.0, 90.0, 40.0));
        assert!((r[(2, 0)] + 1.0).abs() < 1e-15);
        let e = matrix_to_euler(&r).unwrap();
        assert!(e.gimbal_lock);
        assert_eq!(e.angles.alpha, 0.0);
        assert!((e.angles.beta - 90.0).abs() < 1e-6);
        let rebuilt = euler_to_matrix(&e.angles);
        assert!(close(&rebuilt, &r, 1e-6));
    }

    #[test]
    fn rejects_improper_matrix() {
        let reflect = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matrix_to_euler(&reflect).is_err());
    }

    #[test]
    fn there_are_24_proper_relabelings() {
        let all = relabelings(&Matrix3::identity());
        assert_eq!(all.len(), 24);
        assert!(all.iter().all(|(_, _, m)| (m.determinant() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn identity_frame_recovers_zero() {
        let o = recover_orientation(&PointSet::default(), &Matrix3::identity(), [3.0, 2.0, 1.0], AxisOrder::Descending)
            .unwrap();
        assert_eq!(o.angles, EulerAngles::zero());
        assert_eq!(o.semi_axes, [3.0, 2.0, 1.0]);
    }

    fn frame_for(angles: EulerAngles) -> Matrix3<f64> {
        // principal directions are the columns of R^T
        euler_to_matrix(&angles).transpose()
    }

    #[test]
    fn recovers_generating_angles_in_descending_order() {
        let truth = EulerAngles::new(50.0, 60.0, 40.0);
        let frame = frame_for(truth);
        let pts = PointSet::from_rows(&[[1.0, 2.0, 3.0], [-2.0, 0.5, 1.0]]).unwrap();
        let o = recover_orientation(&pts, &frame, [10.0, 3.0, 1.0], AxisOrder::Descending).unwrap();
        assert!(o.angles.abs_diff(&truth).iter().all(|&d| d < 1e-9));
    }

    #[test]
    fn ascending_order_selects_other_labeling() {
        let truth = EulerAngles::new(70.0, 10.0, 30.0);
        let frame = frame_for(truth);
        // generated with A=1, B=3, C=5 along the body axes
        let axes = [1.0, 3.0, 5.0];
        let desc = recover_orientation(&PointSet::default(), &frame, axes, AxisOrder::Descending).unwrap();
        assert_eq!(desc.semi_axes, [5.0, 3.0, 1.0]);
        let asc = recover_orientation(&PointSet::default(), &frame, axes, AxisOrder::matching(axes)).unwrap();
        assert_eq!(asc.semi_axes, axes);
        assert!(asc.angles.abs_diff(&truth).iter().all(|&d| d < 1e-9));
    }

    #[test]
    fn axis_order_matching() {
        assert_eq!(AxisOrder::matching([12.0, 10.0, 8.0]), AxisOrder::Descending);
        assert_eq!(AxisOrder::matching([1.0, 3.0, 5.0]), AxisOrder::Ascending);
        assert_eq!(AxisOrder::matching([3.0, 5.0, 1.0]), AxisOrder::Ranked([1, 0, 2]));
        assert_eq!(AxisOrder::Ranked([1, 0, 2]).arrange(&[5.0, 3.0, 1.0]), [1, 0, 2]);
        assert!(!AxisOrder::Ranked([0, 0, 2]).is_valid());
    }

    fn arb_angles() -> impl Strategy<Value = EulerAngles> {
        (-179.9f64..180.0, -89.0f64..89.0, -179.9f64..180.0).prop_map(|(a, b, g)| EulerAngles::new(a, b, g))
    }

    proptest! {
        #[test]
        fn prop_matrix_is_proper(angles in arb_angles()) {
            let r = euler_to_matrix(&angles);
            prop_assert!(orthonormality_error(&r) <= 1e-14);
            prop_assert!((r.determinant() - 1.0).abs() <= 1e-14);
        }

        #[test]
        fn prop_roundtrip(angles in arb_angles()) {
            let r = euler_to_matrix(&angles);
            let e = matrix_to_euler(&r).unwrap();
            prop_assert!(close(&euler_to_matrix(&e.angles), &r, 1e-9));
            prop_assert!(e.is_consistent());
        }

        #[test]
        fn prop_output_ranges(a in -3.2f64..3.2, b in -1.6f64..1.6, c in -3.2f64..3.2) {
            let r = *nalgebra::Rotation3::from_euler_angles(a, b, c).matrix();
            let e = matrix_to_euler(&r).unwrap().angles;
            prop_assert!(e.beta >= -90.0 && e.beta <= 90.0);
            prop_assert!(e.alpha > -180.0 && e.alpha <= 180.0);
            prop_assert!(e.gamma > -180.0 && e.gamma <= 180.0);
        }

        #[test]
        fn prop_recovery_ignores_column_permutation(angles in arb_angles(), p in 0usize..6) {
            let frame = frame_for(angles);
            let axes = [7.0, 4.0, 2.0];
            let perm = PERMUTATIONS[p];
            let shuffled = Matrix3::from_fn(|i, j| frame[(i, perm[j])]);
            let shuffled_axes = perm.map(|j| axes[j]);
            let a = recover_orientation(&PointSet::default(), &frame, axes, AxisOrder::Descending).unwrap();
            let b = recover_orientation(&PointSet::default(), &shuffled, shuffled_axes, AxisOrder::Descending).unwrap();
            prop_assert!(a.angles.abs_diff(&b.angles).iter().all(|&d| d < 1e-9));
        }
    }
}
