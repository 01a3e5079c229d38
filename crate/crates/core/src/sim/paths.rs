use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::path::PathBuf;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose_graph::{load_tum, Stamped, Trajectory};
use crate::se3::Pose;

/// Ground-truth path of one robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathConfig {
    /// Counter-clockwise circle starting at `start_angle` (radians).
    Circle {
        center: [f64; 2],
        radius: f64,
        speed: f64,
        #[serde(default)]
        start_angle: f64,
        #[serde(default)]
        z: f64,
    },
    /// Back-and-forth lanes joined by half-circle turns, closed by a return
    /// leg so the pattern repeats. `lanes` must be even.
    Lawnmower {
        origin: [f64; 2],
        #[serde(default)]
        yaw: f64,
        lane_length: f64,
        lane_spacing: f64,
        lanes: usize,
        speed: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        z: f64,
    },
    /// A long straight corridor walked out and back, turning around on a
    /// half circle at each end.
    Corridor {
        origin: [f64; 2],
        #[serde(default)]
        yaw: f64,
        length: f64,
        turn_radius: f64,
        speed: f64,
        #[serde(default)]
        offset: f64,
        #[serde(default)]
        z: f64,
    },
    /// Poses read from a TUM file, shifted to start at time zero and
    /// resampled at the simulation rate.
    Tum { file: PathBuf },
}

#[derive(Debug, Clone, Copy)]
enum Segment {
    Line { start: Vector2<f64>, heading: f64, length: f64 },
    /// `sweep > 0` turns left.
    Arc { center: Vector2<f64>, radius: f64, start_angle: f64, sweep: f64 },
}

impl Segment {
    fn length(&self) -> f64 {
        match *self {
            Segment::Line { length, .. } => length,
            Segment::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    fn eval(&self, s: f64) -> (Vector2<f64>, f64) {
        match *self {
            Segment::Line { start, heading, .. } => (start + Vector2::new(heading.cos(), heading.sin()) * s, heading),
            Segment::Arc {
                center,
                radius,
                start_angle,
                sweep,
            } => {
                let dir = sweep.signum();
                let a = start_angle + dir * s / radius;
                (center + Vector2::new(a.cos(), a.sin()) * radius, a + dir * FRAC_PI_2)
            }
        }
    }

    fn end(&self) -> (Vector2<f64>, f64) {
        self.eval(self.length())
    }
}

/// Closed planar loop traversed at constant speed.
#[derive(Debug, Clone)]
struct Circuit {
    segments: Vec<Segment>,
    total: f64,
}

impl Circuit {
    fn new(segments: Vec<Segment>) -> Self {
        let total = segments.iter().map(Segment::length).sum();
        Self { segments, total }
    }

    fn eval(&self, s: f64) -> (Vector2<f64>, f64) {
        let mut s = s.rem_euclid(self.total);
        for seg in &self.segments {
            let l = seg.length();
            if s <= l {
                return seg.eval(s);
            }
            s -= l;
        }
        self.segments[self.segments.len() - 1].end()
    }
}

/// Appends a turn of `sweep` radians starting where `prev` ends.
fn turn_after(prev: &Segment, radius: f64, sweep: f64) -> Segment {
    let (p, h) = prev.end();
    let left = Vector2::new(-h.sin(), h.cos());
    let side = if sweep > 0.0 { left } else { -left };
    let center = p + side * radius;
    let start_angle = (p - center).y.atan2((p - center).x);
    Segment::Arc {
        center,
        radius,
        start_angle,
        sweep,
    }
}

fn line_after(prev: &Segment, length: f64) -> Segment {
    let (start, heading) = prev.end();
    Segment::Line { start, heading, length }
}

fn lawnmower(lane_length: f64, spacing: f64, lanes: usize) -> Circuit {
    let r = spacing / 2.0;
    let mut segs = vec![Segment::Line {
        start: Vector2::zeros(),
        heading: 0.0,
        length: lane_length,
    }];
    for lane in 1..lanes {
        let sweep = if lane % 2 == 1 { PI } else { -PI };
        let turn = turn_after(segs.last().unwrap(), r, sweep);
        segs.push(turn);
        segs.push(line_after(&turn, lane_length));
    }
    // Return leg: left quarter turn, straight down, left quarter turn home.
    let q1 = turn_after(segs.last().unwrap(), r, FRAC_PI_2);
    segs.push(q1);
    let down = line_after(&q1, (lanes as f64 - 1.0) * spacing - 2.0 * r);
    segs.push(down);
    segs.push(turn_after(&down, r, FRAC_PI_2));
    Circuit::new(segs)
}

fn corridor(length: f64, turn_radius: f64) -> Circuit {
    let out = Segment::Line {
        start: Vector2::zeros(),
        heading: 0.0,
        length,
    };
    let t1 = turn_after(&out, turn_radius, PI);
    let back = line_after(&t1, length);
    let t2 = turn_after(&back, turn_radius, PI);
    Circuit::new(vec![out, t1, back, t2])
}

fn planar_pose(origin: [f64; 2], yaw: f64, z: f64, p: Vector2<f64>, heading: f64) -> Pose {
    let (s, c) = yaw.sin_cos();
    let x = origin[0] + c * p.x - s * p.y;
    let y = origin[1] + s * p.x + c * p.y;
    Pose::from_yaw(x, y, z, (heading + yaw).rem_euclid(TAU))
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Error::Config {
            field: format!("path.{field}"),
            msg: msg.into(),
        };
        let positive = |v: f64, field: &str| if v > 0.0 && v.is_finite() { Ok(()) } else { Err(bad(field, "must be positive")) };
        match self {
            PathConfig::Circle { radius, speed, .. } => {
                positive(*radius, "radius")?;
                positive(*speed, "speed")
            }
            PathConfig::Lawnmower {
                lane_length,
                lane_spacing,
                lanes,
                speed,
                ..
            } => {
                positive(*lane_length, "lane_length")?;
                positive(*lane_spacing, "lane_spacing")?;
                positive(*speed, "speed")?;
                if *lanes < 2 || lanes % 2 != 0 {
                    return Err(bad("lanes", "must be even and at least 2"));
                }
                Ok(())
            }
            PathConfig::Corridor {
                length,
                turn_radius,
                speed,
                ..
            } => {
                positive(*length, "length")?;
                positive(*turn_radius, "turn_radius")?;
                positive(*speed, "speed")
            }
            PathConfig::Tum { .. } => Ok(()),
        }
    }

    /// Samples the path at `rate` Hz over `[0, duration]`.
    pub fn generate(&self, duration: f64, rate: f64) -> Result<Trajectory> {
        self.validate()?;
        let n = (duration * rate).round() as usize;
        let times = (0..=n).map(|k| k as f64 / rate);
        let samples: Vec<Stamped> = match self {
            PathConfig::Circle {
                center,
                radius,
                speed,
                start_angle,
                z,
            } => times
                .map(|t| {
                    let a = start_angle + speed * t / radius;
                    let pose = Pose::from_yaw(
                        center[0] + radius * a.cos(),
                        center[1] + radius * a.sin(),
                        *z,
                        (a + FRAC_PI_2).rem_euclid(TAU),
                    );
                    Stamped::new(t, pose)
                })
                .collect(),
            PathConfig::Lawnmower {
                origin,
                yaw,
                lane_length,
                lane_spacing,
                lanes,
                speed,
                offset,
                z,
            } => {
                let c = lawnmower(*lane_length, *lane_spacing, *lanes);
                times
                    .map(|t| {
                        let (p, h) = c.eval(offset + speed * t);
                        Stamped::new(t, planar_pose(*origin, *yaw, *z, p, h))
                    })
                    .collect()
            }
            PathConfig::Corridor {
                origin,
                yaw,
                length,
                turn_radius,
                speed,
                offset,
                z,
            } => {
                let c = corridor(*length, *turn_radius);
                times
                    .map(|t| {
                        let (p, h) = c.eval(offset + speed * t);
                        Stamped::new(t, planar_pose(*origin, *yaw, *z, p, h))
                    })
                    .collect()
            }
            PathConfig::Tum { file } => {
                let src = load_tum(file)?;
                return resample(&src, duration, rate);
            }
        };
        Trajectory::new(samples)
    }
}

/// Interpolates `src` (shifted to start at zero) at `rate` Hz, up to the
/// shorter of `duration` and the recording length.
fn resample(src: &Trajectory, duration: f64, rate: f64) -> Result<Trajectory> {
    let s = src.samples();
    if s.len() < 2 {
        return Err(Error::InsufficientData("trajectory file needs at least two poses".into()));
    }
    let t0 = s[0].t;
    let span = (s[s.len() - 1].t - t0).min(duration);
    let n = (span * rate + 1e-9).floor() as usize;
    let mut out = Vec::with_capacity(n + 1);
    let mut j = 0;
    for k in 0..=n {
        let t = k as f64 / rate;
        while j + 2 < s.len() && s[j + 1].t - t0 < t {
            j += 1;
        }
        let (a, b) = (&s[j], &s[j + 1]);
        let u = ((t - (a.t - t0)) / (b.t - a.t)).clamp(0.0, 1.0);
        let translation: Vector3<f64> = a.pose.translation.lerp(&b.pose.translation, u);
        let rotation = a.pose.rotation.slerp(&b.pose.rotation, u);
        out.push(Stamped::new(t, Pose::new(rotation, translation)));
    }
    Trajectory::new(out)
}
