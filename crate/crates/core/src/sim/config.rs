use std::path::Path;

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::paths::PathConfig;
use crate::consistency::ConsistencyConfig;
use crate::error::{Error, Result};
use crate::optimizer::SolverConfig;
use crate::se3::Twist;
use crate::server::ServerConfig;

/// Translational drift added to every odometry step inside `(start, end]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftWindow {
    pub start: f64,
    pub end: f64,
    /// Per-step bias twist `[rho, phi]` in the body frame.
    pub bias: [f64; 6],
}

impl DriftWindow {
    pub fn twist(&self) -> Twist {
        Twist::from_vector(&Vector6::from_row_slice(&self.bias))
    }
}

/// Window in which motion along `axis` (body frame) is scaled by `beta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegeneracyWindow {
    pub start: f64,
    pub end: f64,
    pub axis: [f64; 3],
    pub beta: f64,
}

impl DegeneracyWindow {
    pub fn axis(&self) -> Vector3<f64> {
        Vector3::from_row_slice(&self.axis)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RobotConfig {
    pub path: PathConfig,
    #[serde(default)]
    pub drift: Vec<DriftWindow>,
    #[serde(default)]
    pub degeneracy: Vec<DegeneracyWindow>,
}

/// Per-tick odometry noise (standard deviations of the twist components).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OdometryConfig {
    pub trans_std: f64,
    pub rot_std: f64,
}

impl Default for OdometryConfig {
    fn default() -> Self {
        Self {
            trans_std: 0.002,
            rot_std: 0.0002,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeyframeConfig {
    pub min_dist: f64,
    pub min_rot: f64,
    /// Forces a keyframe after this many seconds without one; 0 disables.
    pub max_interval: f64,
}

impl Default for KeyframeConfig {
    fn default() -> Self {
        Self {
            min_dist: 2.0,
            min_rot: 0.5,
            max_interval: 0.0,
        }
    }
}

/// When robots compare their map with the server's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ComparisonConfig {
    pub enabled: bool,
    pub period: f64,
}

impl Default for ComparisonConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            period: 20.0,
        }
    }
}

/// Everything that defines one simulated mission.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    /// Seeds every random draw of the run.
    pub seed: u64,
    #[serde(default = "default_duration")]
    pub duration: f64,
    /// Odometry rate in Hz.
    #[serde(default = "default_rate")]
    pub rate: f64,
    /// Seconds of keyframes per submap.
    #[serde(default = "default_submap_period")]
    pub submap_period: f64,
    pub robots: Vec<RobotConfig>,
    #[serde(default)]
    pub odometry: OdometryConfig,
    #[serde(default)]
    pub keyframes: KeyframeConfig,
    #[serde(default)]
    pub comparison: ComparisonConfig,
    #[serde(default)]
    pub consistency: ConsistencyConfig,
    #[serde(default)]
    pub server: ServerConfig,
    /// Onboard solver settings.
    #[serde(default)]
    pub solver: SolverConfig,
}

fn default_duration() -> f64 {
    600.0
}

fn default_rate() -> f64 {
    10.0
}

fn default_submap_period() -> f64 {
    30.0
}

fn config_err(field: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::Config {
        field: field.into(),
        msg: msg.into(),
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| {
            let msg = e.message().to_string();
            // serde reports missing or unknown keys by name; surface it.
            let field = msg.split('`').nth(1).unwrap_or("config").to_string();
            config_err(field, msg)
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err("config", e.to_string()))
    }

    /// Number of odometry ticks spanned by `period` seconds.
    pub fn ticks(&self, period: f64) -> usize {
        (period * self.rate).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, field: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(config_err(field, "must be positive"))
            }
        };
        positive(self.duration, "duration")?;
        positive(self.rate, "rate")?;
        for (field, period) in [
            ("submap_period", self.submap_period),
            ("comparison.period", self.comparison.period),
            ("server.period", self.server.period),
        ] {
            positive(period, field)?;
            let ticks = period * self.rate;
            if (ticks - ticks.round()).abs() > 1e-6 || ticks.round() < 1.0 {
                return Err(config_err(field, "must be a whole number of odometry ticks"));
            }
        }
        if self.robots.is_empty() {
            return Err(config_err("robots", "at least one robot is required"));
        }
        if !(self.odometry.trans_std >= 0.0 && self.odometry.rot_std >= 0.0) {
            return Err(config_err("odometry", "noise must be non-negative"));
        }
        let k = &self.keyframes;
        if !(k.min_dist >= 0.0 && k.min_rot >= 0.0 && k.max_interval >= 0.0) || k.min_dist + k.min_rot <= 0.0 {
            return Err(config_err("keyframes", "thresholds must be non-negative and one of min_dist, min_rot positive"));
        }
        for (i, r) in self.robots.iter().enumerate() {
            r.path.validate().map_err(|e| match e {
                Error::Config { field, msg } => config_err(format!("robots[{i}].{field}"), msg),
                other => other,
            })?;
            for w in &r.drift {
                if !(w.start < w.end) {
                    return Err(config_err(format!("robots[{i}].drift"), "start must precede end"));
                }
            }
            for w in &r.degeneracy {
                if !(w.start < w.end) {
                    return Err(config_err(format!("robots[{i}].degeneracy"), "start must precede end"));
                }
                if !(0.0..1.0).contains(&w.beta) {
                    return Err(config_err(format!("robots[{i}].degeneracy.beta"), "must lie in [0, 1)"));
                }
                if !(w.axis().norm() > 0.0) {
                    return Err(config_err(format!("robots[{i}].degeneracy.axis"), "must be non-zero"));
                }
            }
        }
        self.server.validate()?;
        self.consistency.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
seed = 3
[[robots]]
path = { kind = "circle", center = [0.0, 0.0], radius = 10.0, speed = 0.5 }
"#;

    #[test]
    fn minimal_config_fills_defaults() {
        let c = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(c.seed, 3);
        assert_eq!(c.duration, 600.0);
        assert_eq!(c.comparison.period, 20.0);
        assert_eq!(c.consistency.top_k, 15);
        assert_eq!(c.consistency.radius, 7.0);
        assert_eq!(c.server.reduction_threshold, 500);
        assert_eq!(c.ticks(c.submap_period), 300);
    }

    #[test]
    fn resolved_config_round_trips() {
        let c = ScenarioConfig::from_toml_str(MINIMAL).unwrap();
        let text = c.to_toml_string().unwrap();
        assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), c);
    }

    #[test]
    fn seed_is_mandatory() {
        let text = MINIMAL.replace("seed = 3", "");
        match ScenarioConfig::from_toml_str(&text) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "seed"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn errors_name_the_field() {
        let bad = format!("{MINIMAL}[comparison]\nperiod = 0.0\n");
        match ScenarioConfig::from_toml_str(&bad) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "comparison.period"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = MINIMAL.replace("radius = 10.0", "radius = -1.0");
        match ScenarioConfig::from_toml_str(&bad) {
            Err(Error::Config { field, .. }) => assert_eq!(field, "robots[0].path.radius"),
            other => panic!("unexpected {other:?}"),
        }
        let bad = format!("{MINIMAL}bogus = 1\n");
        assert!(matches!(ScenarioConfig::from_toml_str(&bad), Err(Error::Config { .. })));
    }
}
