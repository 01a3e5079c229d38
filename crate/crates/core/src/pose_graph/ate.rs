use nalgebra::{Matrix3, Matrix4, Quaternion, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::consistency::{associate_timestamps, DEFAULT_SYNC_TOLERANCE};
use crate::error::{Error, Result};
use crate::se3::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AteResult {
    /// Position RMSE in meters.
    pub rmse: f64,
    /// Rotation RMSE in radians, reported but not optimized by the alignment.
    pub rotation_rmse: f64,
    pub pairs: usize,
}

/// Closed-form rigid transform `T` minimizing `Σ |T·src_i − dst_i|²`.
pub fn align_rigid(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<Pose> {
    if src.len() != dst.len() {
        return Err(Error::DimensionMismatch {
            expected: src.len(),
            got: dst.len(),
        });
    }
    if src.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "rigid alignment needs at least 3 pairs, got {}",
            src.len()
        )));
    }
    let n = src.len() as f64;
    let cs = src.iter().sum::<Vector3<f64>>() / n;
    let cd = dst.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (s, d) in src.iter().zip(dst) {
        h += (s - cs) * (d - cd).transpose();
    }
    // Horn's quaternion form stays well defined for collinear or planar
    // point sets, where the SVD null space is arbitrary.
    let (sxx, sxy, sxz) = (h[(0, 0)], h[(0, 1)], h[(0, 2)]);
    let (syx, syy, syz) = (h[(1, 0)], h[(1, 1)], h[(1, 2)]);
    let (szx, szy, szz) = (h[(2, 0)], h[(2, 1)], h[(2, 2)]);
    let k = Matrix4::new(
        sxx + syy + szz, syz - szy, szx - sxz, sxy - syx,
        syz - szy, sxx - syy - szz, sxy + syx, szx + sxz,
        szx - sxz, sxy + syx, syy - sxx - szz, syz + szy,
        sxy - syx, szx + sxz, syz + szy, szz - sxx - syy,
    );
    let eig = k.symmetric_eigen();
    let q = eig.eigenvectors.column(eig.eigenvalues.imax());
    let rotation = UnitQuaternion::from_quaternion(Quaternion::new(q[0], q[1], q[2], q[3]));
    let translation = cd - rotation * cs;
    Ok(Pose::new(rotation, translation))
}

/// Absolute trajectory error. Samples are associated by nearest timestamp
/// within `tolerance`; with `align` the estimate is first rigidly registered
/// onto the ground truth (positions only, no scale).
pub fn ate(
    estimate: &Trajectory,
    ground_truth: &Trajectory,
    align: bool,
    tolerance: f64,
) -> Result<AteResult> {
    let pairs = associate_timestamps(&estimate.timestamps(), &ground_truth.timestamps(), tolerance);
    if pairs.is_empty() {
        return Err(Error::InsufficientData(
            "no timestamps could be associated".into(),
        ));
    }
    let est: Vec<&Pose> = pairs.iter().map(|&(i, _)| &estimate.samples()[i].pose).collect();
    let gt: Vec<&Pose> = pairs.iter().map(|&(_, j)| &ground_truth.samples()[j].pose).collect();
    let transform = if align {
        let src: Vec<Vector3<f64>> = est.iter().map(|p| p.translation).collect();
        let dst: Vec<Vector3<f64>> = gt.iter().map(|p| p.translation).collect();
        align_rigid(&src, &dst)?
    } else {
        Pose::identity()
    };
    let mut sq = 0.0;
    let mut rot_sq = 0.0;
    for (e, g) in est.iter().zip(&gt) {
        let moved = transform.compose(e);
        sq += (moved.translation - g.translation).norm_squared();
        rot_sq += moved.rotation.angle_to(&g.rotation).powi(2);
    }
    let n = pairs.len() as f64;
    Ok(AteResult {
        rmse: (sq / n).sqrt(),
        rotation_rmse: (rot_sq / n).sqrt(),
        pairs: pairs.len(),
    })
}

/// Position ATE RMSE in meters using the default association tolerance.
pub fn ate_rmse(estimate: &Trajectory, ground_truth: &Trajectory, align: bool) -> Result<f64> {
    ate(estimate, ground_truth, align, DEFAULT_SYNC_TOLERANCE).map(|r| r.rmse)
}
