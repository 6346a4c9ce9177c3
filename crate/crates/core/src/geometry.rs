//! Rigid-body math on rotation vectors.
//!
//! Poses are stored as a rotation vector plus a translation. Rotation matrices
//! are materialized on demand and never stored. A pose maps points from its
//! child frame into its parent frame: `x_parent = R(r) * x_child + t`.

use nalgebra::{Matrix3, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use thiserror::Error;

/// Below this angle Rodrigues' formula switches to its Taylor expansion.
const SMALL_ANGLE: f64 = 1e-8;
/// Tolerated deviation from orthonormality when converting matrices.
const ORTHO_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid rotation matrix: orthonormality error {0:.3e}, determinant {1:.6}")]
    InvalidRotation(f64, f64),
}

/// Axis-angle rotation: direction is the axis, norm is the angle in radians.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RotVec(pub Vector3<f64>);

impl RotVec {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vector3::new(x, y, z))
    }

    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }

    pub fn angle(&self) -> f64 {
        self.0.norm()
    }

    pub fn to_matrix(&self) -> Matrix3<f64> {
        rotvec_to_matrix(self)
    }
}

/// Rigid transform with six degrees of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Pose6 {
    pub r: RotVec,
    pub t: Vector3<f64>,
}

impl Pose6 {
    pub fn new(r: RotVec, t: Vector3<f64>) -> Self {
        Self { r, t }
    }

    pub fn identity() -> Self {
        Self::default()
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Self { r: RotVec::zero(), t }
    }

    /// Ground-plane pose: position `(x, y)` and heading `yaw` about +z.
    pub fn planar(x: f64, y: f64, yaw: f64) -> Self {
        Self {
            r: RotVec::new(0.0, 0.0, yaw),
            t: Vector3::new(x, y, 0.0),
        }
    }

    /// Minimal coordinates `(r, t)`.
    pub fn to_vec6(&self) -> Vector6<f64> {
        let r = self.r.0;
        Vector6::new(r.x, r.y, r.z, self.t.x, self.t.y, self.t.z)
    }

    pub fn from_vec6(v: &Vector6<f64>) -> Self {
        Self {
            r: RotVec::new(v[0], v[1], v[2]),
            t: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        rotvec_to_matrix(&self.r)
    }

    /// Heading about +z, meaningful for planar poses.
    pub fn yaw(&self) -> f64 {
        let m = self.rotation();
        m[(1, 0)].atan2(m[(0, 0)])
    }

    pub fn compose(&self, other: &Pose6) -> Pose6 {
        compose(self, other)
    }

    pub fn inverse(&self) -> Pose6 {
        inverse(self)
    }

    pub fn transform_point(&self, x: &Vector3<f64>) -> Vector3<f64> {
        transform_point(self, x)
    }

    /// Right perturbation in minimal coordinates: `self * Pose6(delta)`.
    pub fn oplus(&self, delta: &Vector6<f64>) -> Pose6 {
        compose(self, &Pose6::from_vec6(delta))
    }

    /// Minimal coordinates of `relative(self, other)`.
    pub fn ominus(&self, other: &Pose6) -> Vector6<f64> {
        relative(self, other).to_vec6()
    }
}

pub(crate) fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues' formula.
pub fn rotvec_to_matrix(r: &RotVec) -> Matrix3<f64> {
    let theta = r.0.norm();
    let k = skew(&r.0);
    if theta < SMALL_ANGLE {
        return Matrix3::identity() + k + 0.5 * k * k;
    }
    let a = theta.sin() / theta;
    let b = (1.0 - theta.cos()) / (theta * theta);
    Matrix3::identity() + a * k + b * k * k
}

/// Inverse of [`rotvec_to_matrix`], returning `|r| <= pi`.
///
/// At exactly `pi` the representative whose first nonzero component is
/// positive is returned.
pub fn matrix_to_rotvec(m: &Matrix3<f64>) -> Result<RotVec, GeometryError> {
    let ortho = (m * m.transpose() - Matrix3::identity()).norm();
    let det = m.determinant();
    if !(ortho <= ORTHO_TOL) || !((det - 1.0).abs() <= ORTHO_TOL) {
        return Err(GeometryError::InvalidRotation(ortho, det));
    }

    // Shepperd's method: pick the largest of the four quaternion magnitudes.
    let tr = m.trace();
    let diag = [m[(0, 0)], m[(1, 1)], m[(2, 2)]];
    let (w, v) = if tr >= diag[0] && tr >= diag[1] && tr >= diag[2] {
        let s = (1.0 + tr).sqrt() * 2.0;
        (
            0.25 * s,
            Vector3::new(
                (m[(2, 1)] - m[(1, 2)]) / s,
                (m[(0, 2)] - m[(2, 0)]) / s,
                (m[(1, 0)] - m[(0, 1)]) / s,
            ),
        )
    } else if diag[0] >= diag[1] && diag[0] >= diag[2] {
        let s = (1.0 + diag[0] - diag[1] - diag[2]).sqrt() * 2.0;
        (
            (m[(2, 1)] - m[(1, 2)]) / s,
            Vector3::new(
                0.25 * s,
                (m[(0, 1)] + m[(1, 0)]) / s,
                (m[(0, 2)] + m[(2, 0)]) / s,
            ),
        )
    } else if diag[1] >= diag[2] {
        let s = (1.0 + diag[1] - diag[0] - diag[2]).sqrt() * 2.0;
        (
            (m[(0, 2)] - m[(2, 0)]) / s,
            Vector3::new(
                (m[(0, 1)] + m[(1, 0)]) / s,
                0.25 * s,
                (m[(1, 2)] + m[(2, 1)]) / s,
            ),
        )
    } else {
        let s = (1.0 + diag[2] - diag[0] - diag[1]).sqrt() * 2.0;
        (
            (m[(1, 0)] - m[(0, 1)]) / s,
            Vector3::new(
                (m[(0, 2)] + m[(2, 0)]) / s,
                (m[(1, 2)] + m[(2, 1)]) / s,
                0.25 * s,
            ),
        )
    };
    let (w, v) = if w < 0.0 { (-w, -v) } else { (w, v) };

    let vn = v.norm();
    if vn < SMALL_ANGLE {
        // sin(theta/2) ~ theta/2 and w ~ 1
        return Ok(RotVec(v * (2.0 / w)));
    }
    let theta = 2.0 * vn.atan2(w);
    let mut r = v * (theta / vn);
    if (PI - theta).abs() < 1e-12 {
        let lead = r.iter().copied().find(|c| c.abs() > 1e-12).unwrap_or(0.0);
        if lead < 0.0 {
            r = -r;
        }
    }
    Ok(RotVec(r))
}

/// `T(out) = T(a) * T(b)`.
pub fn compose(a: &Pose6, b: &Pose6) -> Pose6 {
    let ra = a.rotation();
    let rb = b.rotation();
    let r = matrix_to_rotvec(&(ra * rb)).expect("product of rotations is a rotation");
    Pose6 {
        r,
        t: ra * b.t + a.t,
    }
}

pub fn inverse(p: &Pose6) -> Pose6 {
    let rt = p.rotation().transpose();
    Pose6 {
        r: RotVec(-p.r.0),
        t: -(rt * p.t),
    }
}

/// The pose of `b` expressed in the frame of `a`: `compose(a, relative(a, b)) = b`.
pub fn relative(a: &Pose6, b: &Pose6) -> Pose6 {
    compose(&inverse(a), b)
}

pub fn transform_point(p: &Pose6, x: &Vector3<f64>) -> Vector3<f64> {
    p.rotation() * x + p.t
}

/// Wraps an angle into `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a % (2.0 * PI);
    if w <= -PI {
        w += 2.0 * PI;
    } else if w > PI {
        w -= 2.0 * PI;
    }
    w
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Independent route: unit quaternion from axis-angle, then to a matrix.
    fn quat_matrix(r: &Vector3<f64>) -> Matrix3<f64> {
        let theta = r.norm();
        let (w, x, y, z) = if theta == 0.0 {
            (1.0, 0.0, 0.0, 0.0)
        } else {
            let h = 0.5 * theta;
            let s = h.sin() / theta;
            (h.cos(), r.x * s, r.y * s, r.z * s)
        };
        Matrix3::new(
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y - w * z),
            2.0 * (x * z + w * y),
            2.0 * (x * y + w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z - w * x),
            2.0 * (x * z - w * y),
            2.0 * (y * z + w * x),
            1.0 - 2.0 * (x * x + y * y),
        )
    }

    fn random_unit(rng: &mut impl Rng) -> Vector3<f64> {
        loop {
            let v = Vector3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
            );
            let n = v.norm();
            if n > 0.1 && n <= 1.0 {
                return v / n;
            }
        }
    }

    fn random_pose(rng: &mut impl Rng) -> Pose6 {
        let angle = rng.gen_range(0.0..3.0);
        Pose6::new(
            RotVec(random_unit(rng) * angle),
            Vector3::new(
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
                rng.gen_range(-10.0..10.0),
            ),
        )
    }

    fn homogeneous(p: &Pose6) -> nalgebra::Matrix4<f64> {
        let mut m = nalgebra::Matrix4::identity();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&p.rotation());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&p.t);
        m
    }

    fn assert_pose_close(a: &Pose6, b: &Pose6, tol: f64) {
        let d = (homogeneous(a) - homogeneous(b)).abs().max();
        assert!(d < tol, "poses differ by {d:e}: {a:?} vs {b:?}");
    }

    #[test]
    fn zero_rotvec_is_identity() {
        assert_eq!(rotvec_to_matrix(&RotVec::zero()), Matrix3::identity());
    }

    #[test]
    fn quarter_turn_about_z() {
        let m = rotvec_to_matrix(&RotVec::new(0.0, 0.0, PI / 2.0));
        let x = m * Vector3::x();
        assert!((x - Vector3::y()).norm() < 1e-15);
    }

    #[test]
    fn matches_quaternion_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let r = random_unit(&mut rng) * 0.7;
            let m = rotvec_to_matrix(&RotVec(r));
            assert!((m - quat_matrix(&r)).abs().max() < 1e-12);
            assert!((m * m.transpose() - Matrix3::identity()).norm() < 1e-9);
            assert!((m.determinant() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        let r = Vector3::new(3e-9, -2e-9, 5e-9);
        let m = rotvec_to_matrix(&RotVec(r));
        assert!((m - quat_matrix(&r)).abs().max() < 1e-15);
        let back = matrix_to_rotvec(&m).unwrap();
        assert!((back.0 - r).norm() < 1e-15);
    }

    #[test]
    fn identity_matrix_to_zero() {
        assert_eq!(matrix_to_rotvec(&Matrix3::identity()).unwrap(), RotVec::zero());
    }

    #[test]
    fn half_turn_about_z_has_positive_component() {
        let m = Matrix3::new(-1.0, 0.0, 0.0, 0.0, -1.0, 0.0, 0.0, 0.0, 1.0);
        let r = matrix_to_rotvec(&m).unwrap();
        assert!((r.0 - Vector3::new(0.0, 0.0, PI)).norm() < 1e-12);
        let m2 = rotvec_to_matrix(&RotVec::new(0.0, 0.0, -PI));
        let r2 = matrix_to_rotvec(&m2).unwrap();
        assert!((r2.0 - Vector3::new(0.0, 0.0, PI)).norm() < 1e-12);
        // leading component decides when several are nonzero
        let axis = Vector3::new(-1.0, 2.0, 0.5).normalize();
        let r3 = matrix_to_rotvec(&rotvec_to_matrix(&RotVec(axis * PI))).unwrap();
        assert!((r3.0 + axis * PI).norm() < 1e-9);
    }

    #[test]
    fn rejects_non_orthonormal() {
        let m = Matrix3::new(1.0, 0.1, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matches!(
            matrix_to_rotvec(&m),
            Err(GeometryError::InvalidRotation(..))
        ));
        let reflection = Matrix3::new(-1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(matrix_to_rotvec(&reflection).is_err());
    }

    #[test]
    fn round_trip_thousand_rotvecs() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let angle = rng.gen_range(1e-6..PI - 1e-3);
            let r = random_unit(&mut rng) * angle;
            let back = matrix_to_rotvec(&rotvec_to_matrix(&RotVec(r))).unwrap();
            assert!((back.0 - r).norm() < 1e-9, "{r:?} -> {back:?}");
        }
    }

    #[test]
    fn compose_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_pose(&mut rng);
        assert_pose_close(&compose(&Pose6::identity(), &p), &p, 1e-12);
        assert_pose_close(&compose(&p, &inverse(&p)), &Pose6::identity(), 1e-9);
        let a = Pose6::from_translation(Vector3::new(1.0, 2.0, 3.0));
        let b = Pose6::from_translation(Vector3::new(-0.5, 4.0, 1.0));
        assert_eq!(compose(&a, &b).t, Vector3::new(0.5, 6.0, 4.0));
    }

    #[test]
    fn inverse_cases() {
        assert_eq!(inverse(&Pose6::identity()), Pose6::identity());
        let p = Pose6::from_translation(Vector3::new(1.0, -2.0, 0.5));
        assert_eq!(inverse(&p).t, Vector3::new(-1.0, 2.0, -0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let p = random_pose(&mut rng);
            let prod = homogeneous(&inverse(&p)) * homogeneous(&p);
            assert!((prod - nalgebra::Matrix4::identity()).abs().max() < 1e-9);
        }
    }

    #[test]
    fn relative_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let p = random_pose(&mut rng);
        assert_pose_close(&relative(&p, &p), &Pose6::identity(), 1e-9);
        assert_pose_close(&relative(&Pose6::identity(), &p), &p, 1e-12);
        for _ in 0..100 {
            let a = random_pose(&mut rng);
            let b = random_pose(&mut rng);
            assert_pose_close(&compose(&a, &relative(&a, &b)), &b, 1e-9);
        }
    }

    #[test]
    fn transform_point_cases() {
        let x = Vector3::new(0.3, -1.0, 2.0);
        assert_eq!(transform_point(&Pose6::identity(), &x), x);
        let p = Pose6::from_translation(Vector3::new(1.0, 2.0, 0.0));
        assert_eq!(
            transform_point(&p, &Vector3::new(0.5, 0.0, 0.0)),
            Vector3::new(1.5, 2.0, 0.0)
        );
        let q = Pose6::planar(0.0, 0.0, PI / 2.0);
        let y = transform_point(&q, &Vector3::x());
        assert!((y - Vector3::y()).norm() < 1e-12);
    }

    #[test]
    fn wrap_angle_range() {
        assert!((wrap_angle(3.0 * PI) - PI).abs() < 1e-12);
        assert!((wrap_angle(-0.5) + 0.5).abs() < 1e-15);
        assert!((wrap_angle(2.0 * PI + 0.25) - 0.25).abs() < 1e-12);
    }

    fn pose_strategy() -> impl Strategy<Value = Pose6> {
        (
            prop::array::uniform3(-1.8f64..1.8),
            prop::array::uniform3(-20.0f64..20.0),
        )
            .prop_map(|(r, t)| Pose6::new(RotVec(Vector3::from(r)), Vector3::from(t)))
    }

    proptest! {
        #[test]
        fn compose_is_associative(a in pose_strategy(), b in pose_strategy(), c in pose_strategy()) {
            let left = compose(&compose(&a, &b), &c);
            let right = compose(&a, &compose(&b, &c));
            let d = (homogeneous(&left) - homogeneous(&right)).abs().max();
            prop_assert!(d < 1e-9);
        }

        #[test]
        fn relative_is_unique_solution(a in pose_strategy(), b in pose_strategy()) {
            let rel = relative(&a, &b);
            let d = (homogeneous(&compose(&a, &rel)) - homogeneous(&b)).abs().max();
            prop_assert!(d < 1e-9);
            // any other candidate reproduces b only if it equals rel
            let m = homogeneous(&a).try_inverse().unwrap() * homogeneous(&b);
            prop_assert!((m - homogeneous(&rel)).abs().max() < 1e-9);
        }
    }
}
