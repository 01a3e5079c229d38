use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde_json::json;

use super::run::RunReport;
use crate::error::{Error, Result};
use crate::consistency::DEFAULT_SYNC_TOLERANCE;
use crate::pose_graph::{ate, load_tum, save_tum, AteResult};

/// Writes the artifacts of a run into `out_dir` (created if missing):
///
/// * `report.json`: the report with the resolved configuration;
/// * `robot<i>_{ground_truth,onboard,corrected}.tum`, plus `robot<i>_server.tum`
///   when the server holds enough of the robot's nodes;
/// * `constraints.csv`: one row per emitted constraint;
/// * `broadcast_sizes.csv`: node count of every server broadcast;
/// * `events.jsonl`: server and comparison cycles in time order.
///
/// Files are overwritten, so emitting the same report twice yields the
/// same bytes.
pub fn emit_report(report: &RunReport, out_dir: impl AsRef<Path>) -> Result<()> {
    let dir = out_dir.as_ref();
    fs::create_dir_all(dir)?;
    fs::write(dir.join("report.json"), report_json(report)?)?;

    for (rr, traj) in report.robots.iter().zip(&report.trajectories) {
        let id = rr.robot_id;
        save_tum(&traj.ground_truth, dir.join(format!("robot{id}_ground_truth.tum")))?;
        save_tum(&traj.onboard, dir.join(format!("robot{id}_onboard.tum")))?;
        save_tum(&traj.corrected, dir.join(format!("robot{id}_corrected.tum")))?;
        if let Some(server) = &traj.server {
            save_tum(server, dir.join(format!("robot{id}_server.tum")))?;
        }
    }

    let mut csv = String::from("cycle,robot,kind,node,scale_band,score,from,to\n");
    for c in &report.constraints {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{},{},{}",
            c.cycle,
            c.robot,
            c.kind.as_str(),
            c.node,
            c.scale_band,
            c.score,
            c.from,
            c.to
        );
    }
    fs::write(dir.join("constraints.csv"), csv)?;

    let mut csv = String::from("version,t,representatives,nodes,reduced\n");
    for b in &report.broadcasts {
        let _ = writeln!(csv, "{},{},{},{},{}", b.version, b.t, b.representatives, b.nodes, b.reduced);
    }
    fs::write(dir.join("broadcast_sizes.csv"), csv)?;

    let mut events: Vec<(f64, u8, serde_json::Value)> = Vec::new();
    for b in &report.broadcasts {
        events.push((b.t, 0, json!({ "event": "server", "record": b })));
    }
    for c in &report.cycles {
        events.push((c.t, 1, json!({ "event": "comparison", "record": c })));
    }
    // Stable sort keeps robot order within one instant.
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut lines = String::new();
    for (_, _, v) in events {
        lines.push_str(&serde_json::to_string(&v)?);
        lines.push('\n');
    }
    fs::write(dir.join("events.jsonl"), lines)?;
    Ok(())
}

/// Pretty JSON of the report, newline terminated.
pub fn report_json(report: &RunReport) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s)
}

/// ATE between two TUM files.
pub fn eval_trajectories(est_path: impl AsRef<Path>, gt_path: impl AsRef<Path>, align: bool) -> Result<AteResult> {
    let est = load_tum(est_path)?;
    let gt = load_tum(gt_path)?;
    ate(&est, &gt, align, DEFAULT_SYNC_TOLERANCE).map_err(|e| match e {
        Error::InsufficientData(msg) => Error::InsufficientData(format!("cannot associate trajectories: {msg}")),
        other => other,
    })
}
