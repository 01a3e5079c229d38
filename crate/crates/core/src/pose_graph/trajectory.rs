use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::{exp_map, Pose, Twist};

/// Slack for threshold comparisons, so that samples placed exactly at the
/// threshold survive floating-point accumulation.
const THRESHOLD_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stamped {
    pub t: f64,
    pub pose: Pose,
}

impl Stamped {
    pub fn new(t: f64, pose: Pose) -> Self {
        Self { t, pose }
    }
}

/// Time-ordered poses of one robot. Timestamps strictly increase.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    samples: Vec<Stamped>,
}

impl Trajectory {
    pub fn new(samples: Vec<Stamped>) -> Result<Self> {
        for (i, w) in samples.windows(2).enumerate() {
            if !(w[1].t > w[0].t) {
                return Err(Error::Validation(format!(
                    "timestamps not strictly increasing at sample {} ({} after {})",
                    i + 1,
                    w[1].t,
                    w[0].t
                )));
            }
        }
        if let Some(s) = samples.iter().find(|s| !s.t.is_finite()) {
            return Err(Error::Validation(format!("non-finite timestamp {}", s.t)));
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[Stamped] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn timestamps(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn into_samples(self) -> Vec<Stamped> {
        self.samples
    }

    /// Replaces every relative motion `P[i-1]⁻¹ P[i]` by `f(i, motion)` and
    /// re-integrates from the first pose.
    fn remap_motions(&self, mut f: impl FnMut(usize, Pose) -> Pose) -> Trajectory {
        let mut out = Vec::with_capacity(self.samples.len());
        let Some(first) = self.samples.first() else {
            return Trajectory::default();
        };
        out.push(*first);
        for i in 1..self.samples.len() {
            let motion = self.samples[i - 1].pose.between(&self.samples[i].pose);
            let prev = out[i - 1].pose;
            let motion = f(i, motion);
            out.push(Stamped::new(self.samples[i].t, Pose::compose(&prev, &motion)));
        }
        Trajectory { samples: out }
    }
}

/// Keeps the first sample and then every sample that is at least `min_dist`
/// away in translation or `min_rot` away in rotation from the last kept one.
/// A threshold of zero disables that criterion.
pub fn keyframe_select(trajectory: &Trajectory, min_dist: f64, min_rot: f64) -> Result<Trajectory> {
    if !(min_dist > 0.0 || min_rot > 0.0) {
        return Err(Error::Parameter(
            "keyframe_select needs min_dist > 0 or min_rot > 0".into(),
        ));
    }
    let mut kept: Vec<Stamped> = Vec::new();
    for s in trajectory.samples() {
        let keep = match kept.last() {
            None => true,
            Some(last) => {
                let rel = last.pose.between(&s.pose);
                (min_dist > 0.0 && rel.translation.norm() >= min_dist - THRESHOLD_SLACK)
                    || (min_rot > 0.0 && rel.angle() >= min_rot - THRESHOLD_SLACK)
            }
        };
        if keep {
            kept.push(*s);
        }
    }
    Ok(Trajectory { samples: kept })
}

fn in_window(t: f64, start_t: f64, end_t: f64) -> bool {
    t > start_t && t <= end_t
}

/// Right-composes every relative motion ending inside `(start_t, end_t]`
/// with `exp(bias)`. Error accumulated in the window persists afterwards.
pub fn inject_drift(trajectory: &Trajectory, start_t: f64, end_t: f64, bias: &Twist) -> Trajectory {
    if !(start_t < end_t) {
        return trajectory.clone();
    }
    let step = exp_map(bias);
    trajectory.remap_motions(|i, motion| {
        if in_window(trajectory.samples[i].t, start_t, end_t) {
            motion.compose(&step)
        } else {
            motion
        }
    })
}

/// Scales the component along `axis` (body frame) of every relative
/// translation ending inside `(start_t, end_t]` by `beta`. `beta = 0`
/// reproduces a robot that believes it is standing still along `axis`.
pub fn inject_degeneracy(
    trajectory: &Trajectory,
    start_t: f64,
    end_t: f64,
    axis: &Vector3<f64>,
    beta: f64,
) -> Result<Trajectory> {
    if !(0.0..1.0).contains(&beta) {
        return Err(Error::Parameter(format!("beta must lie in [0, 1), got {beta}")));
    }
    let n = axis.norm();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::Parameter("degeneracy axis must be non-zero".into()));
    }
    if !(start_t < end_t) {
        return Ok(trajectory.clone());
    }
    let a = axis / n;
    Ok(trajectory.remap_motions(|i, mut motion| {
        if in_window(trajectory.samples[i].t, start_t, end_t) {
            let along = motion.translation.dot(&a);
            motion.translation -= a * ((1.0 - beta) * along);
        }
        motion
    }))
}
