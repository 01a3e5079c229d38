//! Rigid-body transforms in SE(3) and the metrics built on top of them.
//!
//! Tangent vectors are ordered `[rho, phi]`: translational part first,
//! rotational part second. All Jacobians in this module follow the same
//! ordering and use right-multiplied perturbations `T * exp(delta)`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Matrix6, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Below this angle the closed-form coefficients switch to Taylor series.
const SMALL_ANGLE: f64 = 1e-2;

/// Angles closer than this to pi are treated as the ambiguous branch.
const PI_BRANCH_TOL: f64 = 1e-9;

/// A rigid transform: unit quaternion rotation plus translation in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

impl Default for Pose {
    fn default() -> Self {
        Self::identity()
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
        }
    }

    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation,
            translation,
        }
    }

    pub fn from_translation(x: f64, y: f64, z: f64) -> Self {
        Self::new(UnitQuaternion::identity(), Vector3::new(x, y, z))
    }

    /// Builds a pose from raw quaternion components, normalizing them.
    pub fn from_parts(t: [f64; 3], qxyzw: [f64; 4]) -> Result<Self> {
        let q = nalgebra::Quaternion::new(qxyzw[3], qxyzw[0], qxyzw[1], qxyzw[2]);
        let norm = q.norm();
        if !norm.is_finite() || norm < 1e-12 {
            return Err(Error::Parameter(format!("quaternion has norm {norm}")));
        }
        // Already-unit input is taken verbatim so text round trips are exact.
        let rotation = if (norm - 1.0).abs() <= 4.0 * f64::EPSILON {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::new_normalize(q)
        };
        Ok(Self::new(rotation, Vector3::new(t[0], t[1], t[2])))
    }

    /// Pure yaw rotation about z.
    pub fn from_yaw(x: f64, y: f64, z: f64, yaw: f64) -> Self {
        Self::new(
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            Vector3::new(x, y, z),
        )
    }

    pub fn rotation_matrix(&self) -> Matrix3<f64> {
        self.rotation.to_rotation_matrix().into_inner()
    }

    /// `self * other`. The result quaternion is renormalized.
    pub fn compose(&self, other: &Pose) -> Pose {
        let q = self.rotation.quaternion() * other.rotation.quaternion();
        Pose {
            rotation: UnitQuaternion::new_normalize(q),
            translation: self.translation + self.rotation * other.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv = self.rotation.inverse();
        Pose {
            rotation: inv,
            translation: -(inv * self.translation),
        }
    }

    /// `self⁻¹ * other`, the pose of `other` expressed in the frame of `self`.
    pub fn between(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Rotation angle in `[0, pi]`.
    pub fn angle(&self) -> f64 {
        self.rotation.angle()
    }

    /// Adjoint in `[rho, phi]` ordering.
    pub fn adjoint(&self) -> Matrix6<f64> {
        let r = self.rotation_matrix();
        let mut ad = Matrix6::zeros();
        ad.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
        ad.fixed_view_mut::<3, 3>(0, 3)
            .copy_from(&(hat(&self.translation) * r));
        ad
    }

    /// Largest absolute difference over translation and quaternion
    /// components (sign of the quaternion is canonicalized).
    pub fn max_abs_diff(&self, other: &Pose) -> f64 {
        let dt = (self.translation - other.translation).abs().max();
        let a = self.rotation.coords;
        let mut b = other.rotation.coords;
        if a.dot(&b) < 0.0 {
            b = -b;
        }
        dt.max((a - b).abs().max())
    }
}

/// Element of the Lie algebra se(3).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Twist {
    /// Translational part, meters.
    pub rho: Vector3<f64>,
    /// Rotational part, radians.
    pub phi: Vector3<f64>,
}

impl Twist {
    pub fn new(rho: Vector3<f64>, phi: Vector3<f64>) -> Self {
        Self { rho, phi }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn from_vector(v: &Vector6<f64>) -> Self {
        Self {
            rho: Vector3::new(v[0], v[1], v[2]),
            phi: Vector3::new(v[3], v[4], v[5]),
        }
    }

    pub fn to_vector(&self) -> Vector6<f64> {
        Vector6::new(
            self.rho.x, self.rho.y, self.rho.z, self.phi.x, self.phi.y, self.phi.z,
        )
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.rho * s, self.phi * s)
    }

    pub fn neg(&self) -> Self {
        self.scaled(-1.0)
    }
}

/// Weights for the translational and rotational parts of the SE(3) metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricWeights {
    pub translation_weight: f64,
    pub rotation_weight: f64,
}

impl Default for MetricWeights {
    fn default() -> Self {
        Self {
            translation_weight: 1.0,
            rotation_weight: 1.0,
        }
    }
}

impl MetricWeights {
    pub fn new(translation_weight: f64, rotation_weight: f64) -> Result<Self> {
        let w = Self {
            translation_weight,
            rotation_weight,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x >= 0.0;
        if !ok(self.translation_weight) || !ok(self.rotation_weight) {
            return Err(Error::Parameter(
                "metric weights must be finite and non-negative".into(),
            ));
        }
        if self.translation_weight == 0.0 && self.rotation_weight == 0.0 {
            return Err(Error::Parameter("metric weights are both zero".into()));
        }
        Ok(())
    }
}

/// Skew-symmetric matrix such that `hat(a) * b == a.cross(b)`.
pub fn hat(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Left Jacobian of SO(3).
pub fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = hat(phi);
    let (a, b) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (
            0.5 - t2 / 24.0 + t2 * t2 / 720.0,
            1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0,
        )
    } else {
        let t2 = theta * theta;
        ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Inverse of [`so3_left_jacobian`].
pub fn so3_left_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = hat(phi);
    let c = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        1.0 / 12.0 + t2 / 720.0 + t2 * t2 / 30240.0
    } else {
        1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    Matrix3::identity() - k * 0.5 + k * k * c
}

/// The coupling block of the SE(3) left Jacobian.
fn se3_q_block(rho: &Vector3<f64>, phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let p = hat(phi);
    let r = hat(rho);
    let (c1, c2, c3) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        let c1 = 1.0 / 6.0 - t2 / 120.0 + t2 * t2 / 5040.0;
        let c2 = 1.0 / 24.0 - t2 / 720.0 + t2 * t2 / 40320.0;
        let ca = -1.0 / 120.0 + t2 / 5040.0 - t2 * t2 / 362880.0;
        (c1, c2, 0.5 * (c2 + 3.0 * ca))
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        let t3 = t2 * theta;
        let c1 = (theta - s) / t3;
        let c2 = (0.5 * t2 + c - 1.0) / (t2 * t2);
        let ca = (theta - s - t3 / 6.0) / (t3 * t2);
        (c1, c2, 0.5 * (c2 + 3.0 * ca))
    };
    let prp = p * r * p;
    r * 0.5 + (p * r + r * p + prp) * c1 + (p * p * r + r * p * p - prp * 3.0) * c2
        + (prp * p + p * prp) * c3
}

/// Left Jacobian of SE(3) in `[rho, phi]` ordering.
pub fn se3_left_jacobian(xi: &Twist) -> Matrix6<f64> {
    let j = so3_left_jacobian(&xi.phi);
    let q = se3_q_block(&xi.rho, &xi.phi);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&j);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&j);
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&q);
    out
}

/// Inverse of [`se3_left_jacobian`].
pub fn se3_left_jacobian_inv(xi: &Twist) -> Matrix6<f64> {
    let ji = so3_left_jacobian_inv(&xi.phi);
    let q = se3_q_block(&xi.rho, &xi.phi);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&ji);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&ji);
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-ji * q * ji));
    out
}

/// Inverse right Jacobian, `Jr⁻¹(xi) = Jl⁻¹(-xi)`.
pub fn se3_right_jacobian_inv(xi: &Twist) -> Matrix6<f64> {
    se3_left_jacobian_inv(&xi.neg())
}

/// Exponential map se(3) → SE(3).
pub fn exp_map(xi: &Twist) -> Pose {
    let rotation = UnitQuaternion::from_scaled_axis(xi.phi);
    let translation = so3_left_jacobian(&xi.phi) * xi.rho;
    Pose::new(rotation, translation)
}

/// Logarithm map SE(3) → se(3) on the principal branch.
pub fn log_map(pose: &Pose) -> Result<Twist> {
    let angle = pose.angle();
    if PI - angle < PI_BRANCH_TOL {
        return Err(Error::BranchAmbiguity);
    }
    let phi = pose.rotation.scaled_axis();
    let rho = so3_left_jacobian_inv(&phi) * pose.translation;
    Ok(Twist::new(rho, phi))
}

/// Weighted SE(3) distance between two poses:
/// `sqrt(wt * |rho|^2 + wr * |phi|^2)` with `[rho, phi] = log(a⁻¹ b)`.
pub fn se3_distance(a: &Pose, b: &Pose, w: &MetricWeights) -> Result<f64> {
    if a == b {
        return Ok(0.0);
    }
    let xi = log_map(&a.between(b))?;
    let sq = w.translation_weight * xi.rho.norm_squared() + w.rotation_weight * xi.phi.norm_squared();
    Ok(sq.max(0.0).sqrt())
}

/// Same value as [`se3_distance`], but also defined at a rotation angle of
/// pi. There the two candidate logarithms differ only in the sign of the
/// rotation axis, which changes `rho` by a component orthogonal to the rest,
/// so `|rho|` and `|phi|` agree on both branches.
pub fn se3_distance_total(a: &Pose, b: &Pose, w: &MetricWeights) -> f64 {
    if a == b {
        return 0.0;
    }
    let rel = a.between(b);
    let xi = match log_map(&rel) {
        Ok(xi) => xi,
        Err(_) => {
            let v = rel.rotation.quaternion().imag();
            let axis = if v.norm() > 0.0 { v.normalize() } else { Vector3::z() };
            let phi = axis * PI;
            Twist::new(so3_left_jacobian_inv(&phi) * rel.translation, phi)
        }
    };
    (w.translation_weight * xi.rho.norm_squared() + w.rotation_weight * xi.phi.norm_squared())
        .max(0.0)
        .sqrt()
}

/// Trace of `R_b * R_aᵀ`. Equals 3 for identical rotations and decreases
/// as they move apart.
pub fn rotation_distance(a: &Pose, b: &Pose) -> f64 {
    (b.rotation_matrix() * a.rotation_matrix().transpose()).trace()
}

/// Geodesic angle recovered from [`rotation_distance`]; grows with
/// dissimilarity.
pub fn rotation_dissimilarity(a: &Pose, b: &Pose) -> f64 {
    let tr = rotation_distance(a, b);
    ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos()
}

/// Squared-exponential similarity `exp(-delta / (2 sigma^2))`.
pub fn sq_exp_weight(delta: f64, sigma: f64) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    if !(delta >= 0.0) {
        return Err(Error::Parameter(format!(
            "distance must be non-negative, got {delta}"
        )));
    }
    Ok((-delta / (2.0 * sigma * sigma)).exp())
}

/// The sigma for which [`sq_exp_weight`] equals `weight_at_radius` at a
/// distance of `radius`.
pub fn sigma_for_boundary(radius: f64, weight_at_radius: f64) -> f64 {
    (radius / (-2.0 * weight_at_radius.ln())).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::FRAC_PI_2;

    fn random_pose(rng: &mut impl Rng, max_angle: f64) -> Pose {
        let axis = Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        )
        .normalize();
        let angle = rng.random_range(0.0..max_angle);
        Pose::new(
            UnitQuaternion::from_scaled_axis(axis * angle),
            Vector3::new(
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
                rng.random_range(-10.0..10.0),
            ),
        )
    }

    /// Hat operator of se(3) as a 4x4 matrix.
    fn se3_hat(xi: &Twist) -> nalgebra::Matrix4<f64> {
        let mut m = nalgebra::Matrix4::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&hat(&xi.phi));
        m.fixed_view_mut::<3, 1>(0, 3).copy_from(&xi.rho);
        m
    }

    /// Trace-form evaluation with a block-diagonal weighting matrix.
    fn trace_form_distance(a: &Pose, b: &Pose, w: &MetricWeights) -> f64 {
        let xi = log_map(&a.between(b)).unwrap();
        let x = se3_hat(&xi);
        let r = 0.5 * w.rotation_weight;
        let m = nalgebra::Matrix4::from_diagonal(&nalgebra::Vector4::new(
            r,
            r,
            r,
            w.translation_weight,
        ));
        (x * m * x.transpose()).trace().sqrt()
    }

    #[test]
    fn exp_examples() {
        let id = exp_map(&Twist::zero());
        assert!(id.max_abs_diff(&Pose::identity()) < 1e-15);

        let t = exp_map(&Twist::new(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros()));
        assert!(t.max_abs_diff(&Pose::from_translation(1.0, 0.0, 0.0)) < 1e-15);

        // Rodrigues by hand: R = [[0,-1,0],[1,0,0],[0,0,1]].
        let yaw = exp_map(&Twist::new(Vector3::zeros(), Vector3::new(0.0, 0.0, FRAC_PI_2)));
        let expected = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
        assert!((yaw.rotation_matrix() - expected).abs().max() < 1e-15);
        assert!(yaw.translation.norm() < 1e-15);
    }

    #[test]
    fn log_examples() {
        let z = log_map(&Pose::identity()).unwrap();
        assert_eq!(z.to_vector(), Vector6::zeros());

        let t = log_map(&Pose::from_translation(0.0, 2.0, 0.0)).unwrap();
        assert_abs_diff_eq!(t.rho, Vector3::new(0.0, 2.0, 0.0), epsilon = 1e-15);
        assert_abs_diff_eq!(t.phi, Vector3::zeros(), epsilon = 1e-15);

        let p = Pose::from_yaw(1.0, 0.0, 0.0, FRAC_PI_2);
        let back = exp_map(&log_map(&p).unwrap());
        assert!(back.max_abs_diff(&p) < 1e-9);
    }

    #[test]
    fn log_rejects_half_turn() {
        let p = Pose::from_yaw(0.0, 0.0, 0.0, PI);
        assert!(matches!(log_map(&p), Err(Error::BranchAmbiguity)));
    }

    #[test]
    fn distance_examples() {
        let w = MetricWeights::default();
        let a = Pose::identity();
        assert_eq!(se3_distance(&a, &a, &w).unwrap(), 0.0);

        let b = Pose::from_translation(3.0, 4.0, 0.0);
        assert_abs_diff_eq!(se3_distance(&a, &b, &w).unwrap(), 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(trace_form_distance(&a, &b, &w), 5.0, epsilon = 1e-12);

        let c = Pose::from_yaw(0.0, 0.0, 0.0, FRAC_PI_2);
        assert_abs_diff_eq!(se3_distance(&a, &c, &w).unwrap(), FRAC_PI_2, epsilon = 1e-12);
        assert_abs_diff_eq!(trace_form_distance(&a, &c, &w), FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn distance_matches_trace_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let a = random_pose(&mut rng, 3.0);
            let b = random_pose(&mut rng, 3.0);
            let w = MetricWeights::new(rng.random_range(0.1..3.0), rng.random_range(0.1..3.0))
                .unwrap();
            let Ok(d) = se3_distance(&a, &b, &w) else { continue };
            assert_abs_diff_eq!(d, trace_form_distance(&a, &b, &w), epsilon = 1e-9);
        }
    }

    #[test]
    fn total_distance_at_half_turn() {
        let w = MetricWeights::new(1.0, 0.5).unwrap();
        let a = Pose::from_yaw(1.0, 2.0, 0.0, 0.3);
        let b = Pose::from_yaw(4.0, -1.0, 0.5, 0.3 + PI);
        assert!(se3_distance(&a, &b, &w).is_err());
        let d = se3_distance_total(&a, &b, &w);
        // Approach the half turn from both sides; the branch limits agree.
        for eps in [1e-6, -1e-6] {
            let c = Pose::from_yaw(4.0, -1.0, 0.5, 0.3 + PI + eps);
            assert_abs_diff_eq!(se3_distance(&a, &c, &w).unwrap(), d, epsilon = 1e-5);
        }
        let c = Pose::from_yaw(4.0, -1.0, 0.5, 1.0);
        assert_eq!(se3_distance(&a, &c, &w).unwrap(), se3_distance_total(&a, &c, &w));
    }

    #[test]
    fn rotation_distance_examples() {
        let a = Pose::identity();
        assert_abs_diff_eq!(rotation_distance(&a, &a), 3.0, epsilon = 1e-15);
        let half = Pose::from_yaw(0.0, 0.0, 0.0, PI);
        assert_abs_diff_eq!(rotation_distance(&a, &half), -1.0, epsilon = 1e-12);
        let quarter = Pose::from_yaw(0.0, 0.0, 0.0, FRAC_PI_2);
        assert_abs_diff_eq!(rotation_distance(&a, &quarter), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(rotation_dissimilarity(&a, &quarter), FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn weight_examples() {
        assert_eq!(sq_exp_weight(0.0, 1.3).unwrap(), 1.0);
        let s: f64 = 0.7;
        assert_abs_diff_eq!(
            sq_exp_weight(2.0 * s * s, s).unwrap(),
            (-1.0f64).exp(),
            epsilon = 1e-15
        );
        assert!(sq_exp_weight(1.0, 1.0).unwrap() > sq_exp_weight(2.0, 1.0).unwrap());
        assert!(sq_exp_weight(1.0, 0.0).is_err());
        assert!(sq_exp_weight(1.0, -1.0).is_err());
        let sigma = sigma_for_boundary(7.0, 0.1);
        assert_abs_diff_eq!(sq_exp_weight(7.0, sigma).unwrap(), 0.1, epsilon = 1e-12);
    }

    #[test]
    fn metric_weights_validation() {
        assert!(MetricWeights::new(0.0, 0.0).is_err());
        assert!(MetricWeights::new(-1.0, 1.0).is_err());
        assert!(MetricWeights::new(0.0, 1.0).is_ok());
    }

    #[test]
    fn quaternion_norm_survives_long_composition_chains() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let steps: Vec<Pose> = (0..64).map(|_| random_pose(&mut rng, 3.0)).collect();
        let mut acc = Pose::identity();
        let mut worst: f64 = 0.0;
        for i in 0..1_000_000 {
            acc = acc.compose(&steps[i % steps.len()]);
            if i % 997 == 0 {
                worst = worst.max((acc.rotation.quaternion().norm() - 1.0).abs());
            }
        }
        worst = worst.max((acc.rotation.quaternion().norm() - 1.0).abs());
        assert!(worst < 1e-6, "norm drift {worst}");
    }

    #[test]
    fn distance_is_symmetric_premetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let w = MetricWeights::new(1.0, 2.0).unwrap();
        for _ in 0..1000 {
            let a = random_pose(&mut rng, 3.1);
            let b = random_pose(&mut rng, 3.1);
            let (Ok(ab), Ok(ba)) = (se3_distance(&a, &b, &w), se3_distance(&b, &a, &w)) else {
                continue;
            };
            assert!(ab >= 0.0);
            assert_abs_diff_eq!(ab, ba, epsilon = 1e-9);
            assert_eq!(se3_distance(&a, &a, &w).unwrap(), 0.0);
        }
    }

    #[test]
    fn adjoint_moves_twist_across_frames() {
        // T exp(xi) T⁻¹ == exp(Ad_T xi)
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..50 {
            let t = random_pose(&mut rng, 3.0);
            let xi = Twist::from_vector(&Vector6::from_fn(|_, _| rng.random_range(-0.5..0.5)));
            let lhs = t.compose(&exp_map(&xi)).compose(&t.inverse());
            let rhs = exp_map(&Twist::from_vector(&(t.adjoint() * xi.to_vector())));
            assert!(lhs.max_abs_diff(&rhs) < 1e-9);
        }
    }

    #[test]
    fn left_jacobian_inverse_is_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for scale in [1e-5, 1e-3, 0.5, 2.5] {
            let xi = Twist::from_vector(&Vector6::from_fn(|_, _| rng.random_range(-scale..scale)));
            let prod = se3_left_jacobian(&xi) * se3_left_jacobian_inv(&xi);
            assert!((prod - Matrix6::identity()).abs().max() < 1e-10);
        }
    }

    proptest! {
        #[test]
        fn exp_log_round_trip(
            rho in prop::array::uniform3(-20.0f64..20.0),
            axis in prop::array::uniform3(-1.0f64..1.0),
            angle in 0.0f64..(PI - 0.01),
        ) {
            let a = Vector3::from(axis);
            prop_assume!(a.norm() > 1e-3);
            let xi = Twist::new(Vector3::from(rho), a.normalize() * angle);
            let back = log_map(&exp_map(&xi)).unwrap();
            prop_assert!((back.to_vector() - xi.to_vector()).abs().max() < 1e-9);
        }

        #[test]
        fn compose_with_inverse_is_identity(
            t in prop::array::uniform3(-50.0f64..50.0),
            q in prop::array::uniform4(-1.0f64..1.0),
        ) {
            prop_assume!(Vector3::new(q[0], q[1], q[2]).norm() + q[3].abs() > 1e-2);
            let p = Pose::from_parts(t, q).unwrap();
            prop_assert!(p.compose(&p.inverse()).max_abs_diff(&Pose::identity()) < 1e-9);
        }

        #[test]
        fn distance_is_left_invariant(seed in 0u64..10_000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = MetricWeights::new(1.0, 0.5).unwrap();
            let a = random_pose(&mut rng, 3.0);
            let b = random_pose(&mut rng, 3.0);
            let t = random_pose(&mut rng, 3.0);
            if let (Ok(d0), Ok(d1)) = (
                se3_distance(&a, &b, &w),
                se3_distance(&t.compose(&a), &t.compose(&b), &w),
            ) {
                prop_assert!((d0 - d1).abs() < 1e-9);
            }
        }
    }
}
