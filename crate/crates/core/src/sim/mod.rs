//! Deterministic mission simulator.
//!
//! A fixed-rate clock drives every robot along a ground-truth path. Robots
//! integrate noisy odometry, keep keyframes, ship them to the server in
//! submaps, and periodically compare their map with the latest broadcast.
//! All randomness is drawn from generators seeded by the scenario seed.

mod config;
mod paths;
mod report;
mod run;

pub use config::{
    ComparisonConfig, DegeneracyWindow, DriftWindow, KeyframeConfig, OdometryConfig, RobotConfig, ScenarioConfig,
};
pub use paths::PathConfig;
pub use report::{emit_report, eval_trajectories, report_json};
pub use run::{
    keyframe_indices, run_scenario, BroadcastRecord, Census, ConstraintRecord, CycleRecord, RobotReport,
    RobotTrajectories, RunReport, SolveSummary, SolverStats, NODE_ID_STRIDE,
};
