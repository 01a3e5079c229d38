use std::collections::BTreeMap;

use log::{debug, warn};
use nalgebra::Vector6;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::{KeyframeConfig, ScenarioConfig};
use crate::consistency::{run_comparison_cycle, ConstraintKind, CycleStatus, RobotConsistencyState};
use crate::error::{Error, Result};
use crate::optimizer::{apply_batch, OptimizationProblem, SolveReport};
use crate::pose_graph::{
    ate_rmse, default_odometry_information, inject_degeneracy, inject_drift, EdgeKind, NodeId, PoseEdge, PoseNode,
    Stamped, Trajectory,
};
use crate::se3::{exp_map, Pose, Twist};
use crate::server::{GlobalGraphMessage, Mailboxes, ServerState, Submap};

/// Node ids are `robot_id * NODE_ID_STRIDE + keyframe index`.
pub const NODE_ID_STRIDE: u64 = 1_000_000;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Census {
    pub adjacent: usize,
    pub n_hop: usize,
    pub submap: usize,
}

impl Census {
    pub fn total(&self) -> usize {
        self.adjacent + self.n_hop + self.submap
    }

    fn count(&mut self, kind: ConstraintKind) {
        match kind {
            ConstraintKind::Adjacent => self.adjacent += 1,
            ConstraintKind::NHop => self.n_hop += 1,
            ConstraintKind::Submap => self.submap += 1,
        }
    }
}

/// One robot-side comparison cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle: usize,
    pub t: f64,
    pub robot: u32,
    pub version: u64,
    pub status: CycleStatus,
    pub synced: usize,
    pub census: Census,
    pub added: usize,
    pub updated: usize,
    pub solve: Option<SolveSummary>,
}

/// A constraint emitted by the ranking of some cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintRecord {
    pub cycle: usize,
    pub robot: u32,
    pub kind: ConstraintKind,
    /// Onboard node whose discrepancy triggered the constraint.
    pub node: NodeId,
    /// Timestamp of the triggering node.
    pub node_t: f64,
    pub from: NodeId,
    pub to: NodeId,
    pub scale_band: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveSummary {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub converged: bool,
}

impl From<&SolveReport> for SolveSummary {
    fn from(r: &SolveReport) -> Self {
        Self {
            iterations: r.iterations,
            initial_cost: r.initial_cost,
            final_cost: r.final_cost,
            converged: r.converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BroadcastRecord {
    pub version: u64,
    pub t: f64,
    pub submaps_ingested: usize,
    pub loop_closures: usize,
    pub representatives: usize,
    pub nodes: usize,
    pub reduced: bool,
    pub solver_failed: bool,
    pub solve: Option<SolveSummary>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub onboard_solves: usize,
    pub onboard_iterations: usize,
    pub server_solves: usize,
    pub server_iterations: usize,
    /// Every accepted step of every solve kept the cost from rising.
    pub monotone: bool,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotReport {
    pub robot_id: u32,
    pub keyframes: usize,
    pub onboard_rmse: f64,
    pub corrected_rmse: f64,
    /// Error of the server's final estimate of this robot's nodes, when it
    /// holds at least three of them.
    pub server_rmse: Option<f64>,
    pub census: Census,
}

/// Trajectories of one robot at its keyframes.
#[derive(Debug, Clone, PartialEq)]
pub struct RobotTrajectories {
    pub ground_truth: Trajectory,
    pub onboard: Trajectory,
    pub corrected: Trajectory,
    /// The server's final estimate of the robot's broadcast nodes.
    pub server: Option<Trajectory>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ScenarioConfig,
    pub robots: Vec<RobotReport>,
    pub census: Census,
    pub cycles: Vec<CycleRecord>,
    pub constraints: Vec<ConstraintRecord>,
    pub broadcasts: Vec<BroadcastRecord>,
    pub solver: SolverStats,
    #[serde(skip)]
    pub trajectories: Vec<RobotTrajectories>,
}

impl RunReport {
    pub fn robot(&self, id: u32) -> Option<&RobotReport> {
        self.robots.iter().find(|r| r.robot_id == id)
    }

    /// Constraints of `robot` whose triggering node lies in `(start, end]`.
    pub fn census_in_window(&self, robot: u32, start: f64, end: f64) -> Census {
        let mut c = Census::default();
        for r in &self.constraints {
            if r.robot == robot && r.node_t > start && r.node_t <= end {
                c.count(r.kind);
            }
        }
        c
    }
}

/// Per-robot simulated sensor data, fixed before the clock starts.
struct RobotData {
    id: u32,
    /// Tick index and keyframe node, time ordered.
    keyframes: Vec<(usize, PoseNode)>,
    truth: Vec<Pose>,
}

/// Integrates noisy odometry along the ground truth, starting from the
/// true initial pose, then applies the configured injections.
fn simulate_odometry(gt: &Trajectory, cfg: &ScenarioConfig, robot: usize, rng: &mut ChaCha8Rng) -> Result<Trajectory> {
    let t_noise = Normal::new(0.0, cfg.odometry.trans_std).map_err(|e| Error::Parameter(e.to_string()))?;
    let r_noise = Normal::new(0.0, cfg.odometry.rot_std).map_err(|e| Error::Parameter(e.to_string()))?;
    let s = gt.samples();
    let mut out = Vec::with_capacity(s.len());
    out.push(s[0]);
    for w in s.windows(2) {
        let motion = w[0].pose.between(&w[1].pose);
        let noise = Vector6::from_fn(|k, _| if k < 3 { t_noise.sample(rng) } else { r_noise.sample(rng) });
        let step = motion.compose(&exp_map(&Twist::from_vector(&noise)));
        let prev = out[out.len() - 1].pose;
        out.push(Stamped::new(w[1].t, prev.compose(&step)));
    }
    let mut traj = Trajectory::new(out)?;
    let rc = &cfg.robots[robot];
    for d in &rc.drift {
        traj = inject_drift(&traj, d.start, d.end, &d.twist());
    }
    for d in &rc.degeneracy {
        traj = inject_degeneracy(&traj, d.start, d.end, &d.axis(), d.beta)?;
    }
    Ok(traj)
}

/// Keyframe indices: the first sample, then every sample far enough from
/// the last keyframe in translation or rotation, or `max_interval` seconds
/// after it.
pub fn keyframe_indices(traj: &Trajectory, kf: &KeyframeConfig) -> Vec<usize> {
    const SLACK: f64 = 1e-9;
    let s = traj.samples();
    let mut out: Vec<usize> = Vec::new();
    for (i, cur) in s.iter().enumerate() {
        let keep = match out.last() {
            None => true,
            Some(&j) => {
                let rel = s[j].pose.between(&cur.pose);
                (kf.min_dist > 0.0 && rel.translation.norm() >= kf.min_dist - SLACK)
                    || (kf.min_rot > 0.0 && rel.angle() >= kf.min_rot - SLACK)
                    || (kf.max_interval > 0.0 && cur.t - s[j].t >= kf.max_interval - SLACK)
            }
        };
        if keep {
            out.push(i);
        }
    }
    out
}

fn prepare_robot(cfg: &ScenarioConfig, robot: usize, rng: &mut ChaCha8Rng) -> Result<RobotData> {
    let gt = cfg.robots[robot].path.generate(cfg.duration, cfg.rate)?;
    let raw = simulate_odometry(&gt, cfg, robot, rng)?;
    let submap_ticks = cfg.ticks(cfg.submap_period);
    let id = robot as u32;
    let mut keyframes = Vec::new();
    let mut truth = Vec::new();
    for (k, tick) in keyframe_indices(&raw, &cfg.keyframes).into_iter().enumerate() {
        let s = raw.samples()[tick];
        let node = PoseNode::new(
            id as u64 * NODE_ID_STRIDE + k as u64,
            id,
            (tick / submap_ticks) as u32,
            s.t,
            s.pose,
        );
        keyframes.push((tick, node));
        truth.push(gt.samples()[tick].pose);
    }
    Ok(RobotData { id, keyframes, truth })
}

/// A robot's onboard pose graph: its keyframe chain plus applied
/// corrections.
struct Onboard {
    problem: OptimizationProblem,
    /// Keyframes added so far (raw odometry poses).
    added: usize,
    state: RobotConsistencyState,
}

impl Onboard {
    fn extend(&mut self, data: &RobotData, tick: usize) -> Result<()> {
        let info = default_odometry_information();
        while self.added < data.keyframes.len() && data.keyframes[self.added].0 <= tick {
            let node = data.keyframes[self.added].1;
            if self.added == 0 {
                self.problem.add_variable(node.node_id, node.pose)?;
                self.problem.set_anchor(node.node_id)?;
            } else {
                let prev = data.keyframes[self.added - 1].1;
                let motion = prev.pose.between(&node.pose);
                let guess = self.problem.variables()[&prev.node_id].compose(&motion);
                self.problem.add_variable(node.node_id, guess)?;
                self.problem
                    .add_factor(PoseEdge::new(prev.node_id, node.node_id, EdgeKind::Odometry, motion, info))?;
            }
            self.added += 1;
        }
        Ok(())
    }

    fn current_nodes(&self, data: &RobotData) -> Vec<PoseNode> {
        data.keyframes[..self.added]
            .iter()
            .map(|(_, n)| PoseNode {
                pose: self.problem.variables()[&n.node_id],
                ..*n
            })
            .collect()
    }
}

fn monotone(r: &SolveReport) -> bool {
    r.cost_history.windows(2).all(|w| w[1] <= w[0])
}

/// Runs one mission on the simulated clock and scores the resulting
/// trajectories against ground truth.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut robots = Vec::with_capacity(cfg.robots.len());
    for i in 0..cfg.robots.len() {
        let mut rng = ChaCha8Rng::seed_from_u64(master.next_u64());
        robots.push(prepare_robot(cfg, i, &mut rng)?);
    }
    let mut server = ServerState::new(master.next_u64());
    let ground_truth: BTreeMap<NodeId, Pose> = robots
        .iter()
        .flat_map(|r| r.keyframes.iter().zip(&r.truth).map(|((_, n), p)| (n.node_id, *p)))
        .collect();

    let mut onboard: Vec<Onboard> = robots
        .iter()
        .map(|r| Onboard {
            problem: OptimizationProblem::new(),
            added: 0,
            state: RobotConsistencyState::new(r.id),
        })
        .collect();
    let mut mailboxes = Mailboxes::new();
    let mut queue: Vec<Submap> = Vec::new();
    let mut report = RunReport {
        config: cfg.clone(),
        robots: Vec::new(),
        census: Census::default(),
        cycles: Vec::new(),
        constraints: Vec::new(),
        broadcasts: Vec::new(),
        solver: SolverStats {
            monotone: true,
            ..SolverStats::default()
        },
        trajectories: Vec::new(),
    };

    let total_ticks = cfg.ticks(cfg.duration);
    let submap_ticks = cfg.ticks(cfg.submap_period);
    let server_ticks = cfg.ticks(cfg.server.period);
    let compare_ticks = cfg.ticks(cfg.comparison.period);
    let mut cycle_index = 0;

    for tick in 0..=total_ticks {
        let t = tick as f64 / cfg.rate;
        for (ob, data) in onboard.iter_mut().zip(&robots) {
            ob.extend(data, tick)?;
        }
        if tick > 0 && tick % submap_ticks == 0 {
            let id = (tick / submap_ticks - 1) as u32;
            for data in &robots {
                let nodes: Vec<PoseNode> =
                    data.keyframes.iter().filter(|(_, n)| n.submap_id == id).map(|(_, n)| *n).collect();
                if !nodes.is_empty() {
                    queue.push(Submap::new(data.id, id, nodes)?);
                }
            }
        }
        if tick > 0 && tick % server_ticks == 0 {
            let batch = std::mem::take(&mut queue);
            let (msg, sr) = server.cycle(&batch, &ground_truth, &cfg.server, t)?;
            if let Some(s) = &sr.solve {
                report.solver.server_solves += 1;
                report.solver.server_iterations += s.iterations;
                report.solver.monotone &= monotone(s);
            }
            if sr.solver_failed {
                report.solver.failures += 1;
            }
            report.broadcasts.push(BroadcastRecord {
                version: msg.version,
                t,
                submaps_ingested: sr.ingested,
                loop_closures: sr.loop_closures,
                representatives: sr.representatives,
                nodes: msg.len(),
                reduced: sr.reduced,
                solver_failed: sr.solver_failed,
                solve: sr.solve.as_ref().map(SolveSummary::from),
            });
            if !msg.is_empty() {
                mailboxes.broadcast(robots.iter().map(|r| r.id), &msg);
            }
        }
        if cfg.comparison.enabled && tick > 0 && tick % compare_ticks == 0 {
            cycle_index += 1;
            for (ob, data) in onboard.iter_mut().zip(&robots) {
                let Some(msg) = mailboxes.peek(data.id) else { continue };
                let record = compare(cfg, ob, data, msg, cycle_index, t, &mut report)?;
                report.cycles.push(record);
            }
        }
    }

    for (ob, data) in onboard.iter().zip(&robots) {
        let (mut rr, trajs) = score_robot(ob, data, &server)?;
        for c in report.constraints.iter().filter(|c| c.robot == data.id) {
            rr.census.count(c.kind);
        }
        report.census.adjacent += rr.census.adjacent;
        report.census.n_hop += rr.census.n_hop;
        report.census.submap += rr.census.submap;
        report.robots.push(rr);
        report.trajectories.push(trajs);
    }
    Ok(report)
}

fn compare(
    cfg: &ScenarioConfig,
    ob: &mut Onboard,
    data: &RobotData,
    msg: &GlobalGraphMessage,
    cycle: usize,
    t: f64,
    report: &mut RunReport,
) -> Result<CycleRecord> {
    let nodes = ob.current_nodes(data);
    let outcome = run_comparison_cycle(msg, &nodes, &mut ob.state, &cfg.consistency)?;
    let mut census = Census::default();
    let stamp: BTreeMap<NodeId, f64> = nodes.iter().map(|n| (n.node_id, n.timestamp)).collect();
    for c in &outcome.candidates {
        census.count(c.kind);
        report.constraints.push(ConstraintRecord {
            cycle,
            robot: data.id,
            kind: c.kind,
            node: c.trigger_id,
            node_t: stamp.get(&c.trigger_id).copied().unwrap_or(t),
            from: c.from_id,
            to: c.to_id,
            scale_band: c.scale_band,
            score: c.score,
        });
    }
    let mut solve = None;
    if !outcome.is_empty() {
        match apply_batch(&mut ob.problem, &outcome.additions, &outcome.updates, &cfg.solver) {
            Ok(b) => {
                if let Some(s) = &b.solve {
                    report.solver.onboard_solves += 1;
                    report.solver.onboard_iterations += s.iterations;
                    report.solver.monotone &= monotone(s);
                    solve = Some(SolveSummary::from(s));
                }
            }
            Err(e) => {
                warn!("robot {}: onboard solve failed: {e}", data.id);
                report.solver.failures += 1;
            }
        }
    }
    debug!(
        "cycle {cycle} robot {}: {:?}, {} synced, {} added, {} updated",
        data.id,
        outcome.status,
        outcome.synced,
        outcome.additions.len(),
        outcome.updates.len()
    );
    Ok(CycleRecord {
        cycle,
        t,
        robot: data.id,
        version: outcome.version,
        status: outcome.status,
        synced: outcome.synced,
        census,
        added: outcome.additions.len(),
        updated: outcome.updates.len(),
        solve,
    })
}

fn score_robot(ob: &Onboard, data: &RobotData, server: &ServerState) -> Result<(RobotReport, RobotTrajectories)> {
    let stamped = |poses: &mut dyn Iterator<Item = (f64, Pose)>| -> Result<Trajectory> {
        Trajectory::new(poses.map(|(t, p)| Stamped::new(t, p)).collect())
    };
    let kfs = &data.keyframes;
    let ground_truth = stamped(&mut kfs.iter().zip(&data.truth).map(|((_, n), p)| (n.timestamp, *p)))?;
    let onboard = stamped(&mut kfs.iter().map(|(_, n)| (n.timestamp, n.pose)))?;
    let corrected = stamped(&mut kfs.iter().map(|(_, n)| (n.timestamp, ob.problem.variables()[&n.node_id])))?;

    let mut on_server: Vec<PoseNode> = server.estimates().into_iter().filter(|n| n.robot_id == data.id).collect();
    on_server.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    let server = if on_server.len() >= 3 {
        Some(stamped(&mut on_server.iter().map(|n| (n.timestamp, n.pose)))?)
    } else {
        None
    };
    let server_rmse = server.as_ref().map(|est| ate_rmse(est, &ground_truth, true)).transpose()?;
    let rr = RobotReport {
        robot_id: data.id,
        keyframes: kfs.len(),
        onboard_rmse: rmse_or_zero(&onboard, &ground_truth)?,
        corrected_rmse: rmse_or_zero(&corrected, &ground_truth)?,
        server_rmse,
        census: Census::default(),
    };
    Ok((
        rr,
        RobotTrajectories {
            ground_truth,
            onboard,
            corrected,
            server,
        },
    ))
}

fn rmse_or_zero(est: &Trajectory, gt: &Trajectory) -> Result<f64> {
    if est.len() < 3 {
        return Ok(0.0);
    }
    ate_rmse(est, gt, true)
}
