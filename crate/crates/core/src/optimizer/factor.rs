use nalgebra::{Matrix6, Vector6};

use crate::error::Result;
use crate::pose_graph::PoseEdge;
use crate::se3::{log_map, se3_right_jacobian_inv, Pose};

/// `log(Z⁻¹ · X_from⁻¹ · X_to)` in `[rho, phi]` ordering.
pub fn residual(factor: &PoseEdge, x_from: &Pose, x_to: &Pose) -> Result<Vector6<f64>> {
    let err = factor.measurement.inverse().compose(&x_from.between(x_to));
    Ok(log_map(&err)?.to_vector())
}

/// Residual together with its Jacobians with respect to right
/// perturbations `X exp(δ)` of the two endpoints.
pub fn residual_and_jacobians(
    factor: &PoseEdge,
    x_from: &Pose,
    x_to: &Pose,
) -> Result<(Vector6<f64>, Matrix6<f64>, Matrix6<f64>)> {
    let err = factor.measurement.inverse().compose(&x_from.between(x_to));
    let xi = log_map(&err)?;
    let jr_inv = se3_right_jacobian_inv(&xi);
    let j_to = jr_inv;
    let j_from = -jr_inv * x_to.between(x_from).adjoint();
    Ok((xi.to_vector(), j_from, j_to))
}
