//! Rigid-body machinery on SE(3).
//!
//! Tangent vectors are ordered translation first, rotation second:
//! `xi = (rho_x, rho_y, rho_z, omega_x, omega_y, omega_z)`.
//!
//! Perturbations are **left-multiplicative**: a pose `T` is perturbed as
//! `exp(delta) * T`. Every Jacobian and covariance in the crate is expressed in
//! this convention; [`Pose3::perturb`] is the single definition site.

use nalgebra::{Matrix3, Matrix3x4, Matrix6, SMatrix, Vector3, Vector6};
use std::fmt;

use crate::error::{Result, SivoError};

/// Below this rotation angle the exp/log maps switch to Taylor expansions.
pub const SMALL_ANGLE: f64 = 1e-8;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Skew-symmetric matrix such that `hat(a) * b = a x b`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Inverse of [`hat`] applied to the antisymmetric part of `m`.
pub fn vee(m: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]) * 0.5
}

/// An element of SO(3) stored as an orthonormal 3x3 matrix.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Rotation3(Matrix3<f64>);

impl Rotation3 {
    pub fn identity() -> Self {
        Rotation3(Matrix3::identity())
    }

    /// Checked constructor: requires `R^T R = I` and `det R = +1` within 1e-9.
    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self> {
        let drift = orthonormality_drift(&m);
        let det = m.determinant();
        if drift > ORTHONORMAL_TOL || (det - 1.0).abs() > ORTHONORMAL_TOL {
            return Err(SivoError::InvalidConfig(format!(
                "matrix is not a rotation (drift {drift:.3e}, det {det:.6})"
            )));
        }
        Ok(Rotation3(m))
    }

    /// Projects an arbitrary matrix onto the closest rotation (polar decomposition).
    pub fn orthonormalize(m: &Matrix3<f64>) -> Self {
        let svd = m.svd(true, true);
        let u = svd.u.expect("svd u");
        let v_t = svd.v_t.expect("svd v_t");
        let mut r = u * v_t;
        if r.determinant() < 0.0 {
            let mut u_fixed = u;
            u_fixed.column_mut(2).neg_mut();
            r = u_fixed * v_t;
        }
        Rotation3(r)
    }

    /// Rodrigues formula.
    pub fn exp(omega: &Vector3<f64>) -> Self {
        let theta_sq = omega.norm_squared();
        let theta = theta_sq.sqrt();
        let w = hat(omega);
        let (a, b) = if theta < SMALL_ANGLE {
            (1.0 - theta_sq / 6.0, 0.5 - theta_sq / 24.0)
        } else {
            (theta.sin() / theta, (1.0 - theta.cos()) / theta_sq)
        };
        Rotation3(Matrix3::identity() + w * a + w * w * b)
    }

    /// Principal-branch logarithm, `|omega| <= pi`. At exactly `pi` either
    /// axis direction may be returned.
    pub fn log(&self) -> Vector3<f64> {
        let r = &self.0;
        let v = vee(r);
        let sin_theta = v.norm();
        let cos_theta = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
        let theta = sin_theta.atan2(cos_theta);

        if theta < SMALL_ANGLE {
            return v * (1.0 + theta * theta / 6.0);
        }
        if std::f64::consts::PI - theta > 1e-2 {
            return v * (theta / sin_theta);
        }

        // Near pi the antisymmetric part vanishes; recover the axis from the
        // symmetric part instead: a a^T = ((R + R^T)/2 - cos I) / (1 - cos).
        let sym = (r + r.transpose()) * 0.5 - Matrix3::identity() * cos_theta;
        let aat = sym / (1.0 - cos_theta);
        let k = (0..3)
            .max_by(|&i, &j| aat[(i, i)].total_cmp(&aat[(j, j)]))
            .unwrap_or(0);
        let mut axis: Vector3<f64> = aat.column(k).into_owned() / aat[(k, k)].max(0.0).sqrt();
        axis.normalize_mut();
        if axis.dot(&v) < 0.0 {
            axis = -axis;
        }
        axis * theta
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.0
    }

    pub fn inverse(&self) -> Self {
        Rotation3(self.0.transpose())
    }

    /// Rotation angle in radians, via the clamped trace formula.
    pub fn angle(&self) -> f64 {
        ((self.0.trace() - 1.0) * 0.5).clamp(-1.0, 1.0).acos()
    }
}

impl std::ops::Mul for Rotation3 {
    type Output = Rotation3;
    fn mul(self, rhs: Rotation3) -> Rotation3 {
        Rotation3(self.0 * rhs.0)
    }
}

impl std::ops::Mul<Vector3<f64>> for Rotation3 {
    type Output = Vector3<f64>;
    fn mul(self, rhs: Vector3<f64>) -> Vector3<f64> {
        self.0 * rhs
    }
}

/// Largest elementwise deviation of `m^T m` from the identity.
pub fn orthonormality_drift(m: &Matrix3<f64>) -> f64 {
    (m.transpose() * m - Matrix3::identity()).amax()
}

/// A 6-DOF tangent vector `(rho, omega)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Twist6(pub Vector6<f64>);

impl Twist6 {
    pub fn new(rho: Vector3<f64>, omega: Vector3<f64>) -> Self {
        Twist6(Vector6::new(rho.x, rho.y, rho.z, omega.x, omega.y, omega.z))
    }

    pub fn zero() -> Self {
        Twist6(Vector6::zeros())
    }

    pub fn rho(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(0).into_owned()
    }

    pub fn omega(&self) -> Vector3<f64> {
        self.0.fixed_rows::<3>(3).into_owned()
    }

    pub fn as_vector(&self) -> &Vector6<f64> {
        &self.0
    }
}

impl From<Vector6<f64>> for Twist6 {
    fn from(v: Vector6<f64>) -> Self {
        Twist6(v)
    }
}

/// `V(omega)`, the matrix mapping `rho` to the translation of `exp(xi)`.
fn left_jacobian_so3(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta_sq = omega.norm_squared();
    let theta = theta_sq.sqrt();
    let w = hat(omega);
    let (b, c) = if theta < 1e-4 {
        (0.5 - theta_sq / 24.0, 1.0 / 6.0 - theta_sq / 120.0)
    } else {
        let half_sin = (0.5 * theta).sin();
        (
            2.0 * half_sin * half_sin / theta_sq,
            (theta - theta.sin()) / (theta_sq * theta),
        )
    };
    Matrix3::identity() + w * b + w * w * c
}

fn left_jacobian_so3_inv(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta_sq = omega.norm_squared();
    let theta = theta_sq.sqrt();
    let w = hat(omega);
    // The closed form cancels catastrophically well above SMALL_ANGLE.
    let c = if theta < 1e-2 {
        1.0 / 12.0 + theta_sq / 720.0 + theta_sq * theta_sq / 30240.0
    } else {
        let half = 0.5 * theta;
        (1.0 - half * half.cos() / half.sin()) / theta_sq
    };
    Matrix3::identity() - w * 0.5 + w * w * c
}

/// Inverse of the SE(3) left Jacobian, so that
/// `log(exp(delta) * exp(xi)) ~ xi + J^-1(xi) delta` for small `delta`.
pub fn left_jacobian_inverse_se3(xi: &Twist6) -> Matrix6<f64> {
    let omega = xi.omega();
    let theta_sq = omega.norm_squared();
    let theta = theta_sq.sqrt();
    let (a, b, c) = if theta < 0.1 {
        let t4 = theta_sq * theta_sq;
        (
            1.0 / 6.0 - theta_sq / 120.0 + t4 / 5040.0,
            1.0 / 24.0 - theta_sq / 720.0 + t4 / 40320.0,
            1.0 / 120.0 - theta_sq / 2520.0 + t4 / 120960.0,
        )
    } else {
        let (s, co) = theta.sin_cos();
        let t4 = theta_sq * theta_sq;
        (
            (theta - s) / (theta_sq * theta),
            (theta_sq + 2.0 * co - 2.0) / (2.0 * t4),
            (2.0 * theta - 3.0 * s + theta * co) / (2.0 * t4 * theta),
        )
    };
    let w = hat(&omega);
    let r = hat(&xi.rho());
    let q = r * 0.5
        + (w * r + r * w + w * r * w) * a
        + (w * w * r + r * w * w - w * r * w * 3.0) * b
        + (w * r * w * w + w * w * r * w) * c;
    let j_inv = left_jacobian_so3_inv(&omega);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&j_inv);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&j_inv);
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-j_inv * q * j_inv));
    out
}

/// A rigid transform. Throughout the estimator it is camera-from-world.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Pose3 {
    pub rotation: Rotation3,
    pub translation: Vector3<f64>,
}

impl Pose3 {
    pub fn new(rotation: Rotation3, translation: Vector3<f64>) -> Self {
        Pose3 {
            rotation,
            translation,
        }
    }

    pub fn identity() -> Self {
        Pose3::new(Rotation3::identity(), Vector3::zeros())
    }

    pub fn from_translation(t: Vector3<f64>) -> Self {
        Pose3::new(Rotation3::identity(), t)
    }

    pub fn exp(xi: &Twist6) -> Self {
        let omega = xi.omega();
        let rotation = Rotation3::exp(&omega);
        let translation = left_jacobian_so3(&omega) * xi.rho();
        Pose3::new(rotation, translation)
    }

    pub fn log(&self) -> Twist6 {
        let omega = self.rotation.log();
        let rho = left_jacobian_so3_inv(&omega) * self.translation;
        Twist6::new(rho, omega)
    }

    /// `self * other`.
    pub fn compose(&self, other: &Pose3) -> Pose3 {
        Pose3::new(
            self.rotation * other.rotation,
            self.rotation * other.translation + self.translation,
        )
    }

    pub fn inverse(&self) -> Pose3 {
        let r_inv = self.rotation.inverse();
        Pose3::new(r_inv, -(r_inv * self.translation))
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * *p + self.translation
    }

    /// Left perturbation `exp(delta) * self`.
    pub fn perturb(&self, delta: &Twist6) -> Pose3 {
        Pose3::exp(delta).compose(self)
    }

    /// Adjoint for the `(rho, omega)` ordering: `exp(Ad * xi) = T exp(xi) T^-1`.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let r = self.rotation.matrix();
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(r);
        ad.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(hat(&self.translation) * r));
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(r);
        ad
    }

    /// Row-major `[R | t]`.
    pub fn to_matrix3x4(&self) -> Matrix3x4<f64> {
        let mut m = Matrix3x4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0)
            .copy_from(self.rotation.matrix());
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&self.translation);
        m
    }

    /// Accepts a `[R | t]` whose rotation block already passes the
    /// orthonormality check.
    pub fn from_matrix3x4(m: &Matrix3x4<f64>) -> Result<Self> {
        let r: Matrix3<f64> = m.fixed_view::<3, 3>(0, 0).into_owned();
        let t: Vector3<f64> = m.fixed_view::<3, 1>(0, 3).into_owned();
        Ok(Pose3::new(Rotation3::from_matrix(r)?, t))
    }

    /// Largest elementwise difference of the 3x4 matrices.
    pub fn max_abs_diff(&self, other: &Pose3) -> f64 {
        (self.to_matrix3x4() - other.to_matrix3x4()).amax()
    }
}

impl fmt::Display for Pose3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let w = self.rotation.log();
        let t = self.translation;
        write!(
            f,
            "Pose3(t: [{:.4}, {:.4}, {:.4}], omega: [{:.4}, {:.4}, {:.4}])",
            t.x, t.y, t.z, w.x, w.y, w.z
        )
    }
}

/// Jacobian of `T * p` with respect to a left perturbation of `T`,
/// evaluated at the transformed point `p_c = T * p`: `[I | -hat(p_c)]`.
pub fn point_jacobian_wrt_left_perturbation(p_c: &Vector3<f64>) -> SMatrix<f64, 3, 6> {
    let mut j = SMatrix::<f64, 3, 6>::zeros();
    j.fixed_view_mut::<3, 3>(0, 0)
        .copy_from(&Matrix3::identity());
    j.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-hat(p_c)));
    j
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn rot_z_90() -> Rotation3 {
        Rotation3::from_matrix(Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0)).unwrap()
    }

    #[test]
    fn exp_of_zero_is_identity() {
        assert_eq!(Pose3::exp(&Twist6::zero()), Pose3::identity());
    }

    #[test]
    fn exp_pure_translation_is_exact() {
        let p = Pose3::exp(&Twist6::new(Vector3::new(1.0, 2.0, 3.0), Vector3::zeros()));
        assert_eq!(p.rotation, Rotation3::identity());
        assert_eq!(p.translation, Vector3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn exp_quarter_turn_about_z() {
        let p = Pose3::exp(&Twist6::new(Vector3::zeros(), Vector3::new(0.0, 0.0, FRAC_PI_2)));
        assert!((p.rotation.matrix() - rot_z_90().matrix()).amax() < 1e-15);
        assert!(p.translation.norm() < 1e-15);
    }

    #[test]
    fn log_identity_and_translation() {
        assert_eq!(Pose3::identity().log().0, Vector6::zeros());
        let xi = Pose3::from_translation(Vector3::new(1.0, 0.0, 0.0)).log();
        assert_eq!(xi.0, Vector6::new(1.0, 0.0, 0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn log_round_trip_at_moderate_angle() {
        let axis = Vector3::new(0.2, -0.5, 0.7).normalize();
        let xi = Twist6::new(Vector3::new(0.3, -1.2, 2.0), axis * 0.3);
        let back = Pose3::exp(&xi).log();
        assert!((back.0 - xi.0).amax() < 1e-9);
    }

    #[test]
    fn log_near_pi_recovers_axis() {
        let axis = Vector3::new(1.0, 2.0, -0.5).normalize();
        for theta in [std::f64::consts::PI - 1e-3, std::f64::consts::PI - 1e-7] {
            let r = Rotation3::exp(&(axis * theta));
            let w = r.log();
            assert!((w - axis * theta).amax() < 1e-7, "{w:?}");
        }
        // At exactly pi either direction is a valid logarithm.
        let r = Rotation3::exp(&(axis * std::f64::consts::PI));
        let w = r.log();
        assert!((Rotation3::exp(&w).matrix() - r.matrix()).amax() < 1e-9);
    }

    #[test]
    fn tiny_angles_use_taylor_branch() {
        let xi = Twist6::new(Vector3::new(1.0, 1.0, 1.0), Vector3::new(1e-10, -2e-10, 3e-10));
        let back = Pose3::exp(&xi).log();
        assert!((back.0 - xi.0).amax() < 1e-15);
    }

    #[test]
    fn transform_point_examples() {
        let p = Vector3::new(1.0, 2.0, 3.0);
        assert_eq!(Pose3::identity().transform_point(&p), p);
        let rz = Pose3::new(rot_z_90(), Vector3::zeros());
        let q = rz.transform_point(&Vector3::new(1.0, 0.0, 0.0));
        assert!((q - Vector3::new(0.0, 1.0, 0.0)).amax() < 1e-12);
    }

    #[test]
    fn rotation_checked_constructor_rejects_reflections() {
        let m = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, -1.0));
        assert!(Rotation3::from_matrix(m).is_err());
        let skewed = Matrix3::new(1.0, 1e-6, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0);
        assert!(Rotation3::from_matrix(skewed).is_err());
        let fixed = Rotation3::orthonormalize(&skewed);
        assert!(orthonormality_drift(fixed.matrix()) < 1e-12);
    }

    #[test]
    fn se3_jacobian_inverse_matches_finite_differences() {
        let eps = 1e-6;
        for (rho, omega) in [
            (Vector3::new(0.3, -1.2, 2.0), Vector3::new(0.0, 0.0, 0.0)),
            (Vector3::new(0.3, -1.2, 2.0), Vector3::new(1e-3, -2e-3, 5e-4)),
            (Vector3::new(-4.0, 0.5, 1.0), Vector3::new(0.05, 0.08, -0.02)),
            (Vector3::new(1.0, 2.0, -3.0), Vector3::new(0.7, -0.4, 1.1)),
        ] {
            let xi = Twist6::new(rho, omega);
            let base = Pose3::exp(&xi);
            let analytic = left_jacobian_inverse_se3(&xi);
            for k in 0..6 {
                let mut d = Vector6::zeros();
                d[k] = eps;
                let plus = Pose3::exp(&Twist6(d)).compose(&base).log().0;
                let minus = Pose3::exp(&Twist6(-d)).compose(&base).log().0;
                let numeric = (plus - minus) / (2.0 * eps);
                let diff = (numeric - analytic.column(k)).amax();
                assert!(diff < 1e-7, "column {k} at {xi:?}: {diff}");
            }
        }
    }

    #[test]
    fn adjoint_conjugates_twists() {
        let t = Pose3::exp(&Twist6::new(Vector3::new(0.4, -0.1, 2.0), Vector3::new(0.3, 0.2, -0.6)));
        let xi = Twist6::new(Vector3::new(0.01, 0.02, -0.03), Vector3::new(-0.02, 0.01, 0.015));
        let lhs = t.compose(&Pose3::exp(&xi)).compose(&t.inverse());
        let rhs = Pose3::exp(&Twist6(t.adjoint() * xi.0));
        assert!(lhs.max_abs_diff(&rhs) < 1e-12);
    }

    prop_compose! {
        fn twist(max_angle: f64)(
            rho in prop::array::uniform3(-10.0f64..10.0),
            dir in prop::array::uniform3(-1.0f64..1.0),
            angle in 0.0f64..max_angle,
        ) -> Twist6 {
            let d = Vector3::from(dir);
            let omega = if d.norm() > 1e-6 { d.normalize() * angle } else { Vector3::zeros() };
            Twist6::new(Vector3::from(rho), omega)
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn exp_log_round_trip(xi in twist(3.0)) {
            let back = Pose3::exp(&xi).log();
            prop_assert!((back.0 - xi.0).amax() < 1e-7);
        }
    }

    proptest! {
        #[test]
        fn composition_is_associative(a in twist(3.0), b in twist(3.0), c in twist(3.0)) {
            let (a, b, c) = (Pose3::exp(&a), Pose3::exp(&b), Pose3::exp(&c));
            let left = a.compose(&b).compose(&c);
            let right = a.compose(&b.compose(&c));
            prop_assert!(left.max_abs_diff(&right) < 1e-9);
        }

        #[test]
        fn inverse_cancels(a in twist(3.0)) {
            let p = Pose3::exp(&a);
            prop_assert!(p.compose(&p.inverse()).max_abs_diff(&Pose3::identity()) < 1e-9);
            prop_assert!(p.inverse().compose(&p).max_abs_diff(&Pose3::identity()) < 1e-9);
        }

        #[test]
        fn transform_point_distributes(a in twist(3.0), b in twist(3.0), p in prop::array::uniform3(-20.0f64..20.0)) {
            let (a, b) = (Pose3::exp(&a), Pose3::exp(&b));
            let p = Vector3::from(p);
            let lhs = a.compose(&b).transform_point(&p);
            let rhs = a.transform_point(&b.transform_point(&p));
            prop_assert!((lhs - rhs).amax() < 1e-9);
        }

        #[test]
        fn rotations_stay_orthonormal(a in twist(3.0)) {
            let r = Pose3::exp(&a).rotation;
            prop_assert!(orthonormality_drift(r.matrix()) < 1e-9);
            prop_assert!((r.matrix().determinant() - 1.0).abs() < 1e-9);
        }
    }
}
