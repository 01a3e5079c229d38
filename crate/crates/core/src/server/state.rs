use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use nalgebra::Vector6;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::GlobalGraphMessage;
use crate::error::{Error, Result};
use crate::optimizer::{OptimizationProblem, SolveReport, SolverConfig};
use crate::pose_graph::{
    default_odometry_information, keyframe_select, sort_by_time, EdgeKind, NodeId, PoseEdge, PoseNode, Stamped,
    Trajectory,
};
use crate::se3::{exp_map, sigma_for_boundary, MetricWeights, Pose, Twist};
use crate::spectral::{build_graph, kron_reduce, reduction_keep_count};

/// A contiguous piece of one robot's keyframe chain, in its onboard frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submap {
    pub robot_id: u32,
    pub submap_id: u32,
    pub nodes: Vec<PoseNode>,
}

impl Submap {
    pub fn new(robot_id: u32, submap_id: u32, nodes: Vec<PoseNode>) -> Result<Self> {
        let s = Self {
            robot_id,
            submap_id,
            nodes,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::Validation(format!(
                "submap {} of robot {} is empty",
                self.submap_id, self.robot_id
            )));
        }
        if self.nodes.windows(2).any(|w| !(w[0].timestamp < w[1].timestamp)) {
            return Err(Error::Validation(format!(
                "submap {} of robot {}: timestamps must increase",
                self.submap_id, self.robot_id
            )));
        }
        if self.nodes.iter().any(|n| n.robot_id != self.robot_id || n.submap_id != self.submap_id) {
            return Err(Error::Validation("submap nodes carry foreign robot or submap ids".into()));
        }
        Ok(())
    }

    pub fn entry_time(&self) -> f64 {
        self.nodes[0].timestamp
    }

    pub fn exit_time(&self) -> f64 {
        self.nodes[self.nodes.len() - 1].timestamp
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    /// Simulated seconds between server cycles.
    pub period: f64,
    pub radius: f64,
    pub sigma: f64,
    pub weights: MetricWeights,
    /// Reduce the broadcast graph once it holds more nodes than this.
    pub reduction_threshold: usize,
    /// Fraction of nodes removed by a reduction; 0 caps the graph at the
    /// threshold instead.
    pub reduction_fraction: f64,
    /// Keyframe thresholds picking the representative nodes to broadcast.
    pub representative_min_dist: f64,
    pub representative_min_rot: f64,
    pub loop_radius: f64,
    /// Minimum time between the two ends of a loop closure.
    pub dwell_gap: f64,
    pub loop_trans_std: f64,
    pub loop_rot_std: f64,
    /// Loop-closure information as a multiple of the odometry information.
    pub loop_info_scale: f64,
    pub solver: SolverConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            period: 10.0,
            radius: 7.0,
            sigma: sigma_for_boundary(7.0, 0.1),
            weights: MetricWeights::default(),
            reduction_threshold: 500,
            reduction_fraction: 0.0,
            representative_min_dist: 0.5,
            representative_min_rot: 0.0,
            loop_radius: 3.0,
            dwell_gap: 10.0,
            loop_trans_std: 0.02,
            loop_rot_std: 0.002,
            loop_info_scale: 1.0,
            solver: SolverConfig::default(),
        }
    }
}

impl ServerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Error::Config {
            field: format!("server.{field}"),
            msg: msg.into(),
        };
        if !(self.period > 0.0) {
            return Err(bad("period", "must be positive"));
        }
        if !(self.radius > 0.0) {
            return Err(bad("radius", "must be positive"));
        }
        if !(self.sigma > 0.0) {
            return Err(bad("sigma", "must be positive"));
        }
        self.weights.validate()?;
        if !(0.0..1.0).contains(&self.reduction_fraction) {
            return Err(bad("reduction_fraction", "must lie in [0, 1)"));
        }
        if !(self.representative_min_dist >= 0.0 && self.representative_min_rot >= 0.0)
            || self.representative_min_dist + self.representative_min_rot <= 0.0
        {
            return Err(bad("representative_min_dist", "one keyframe threshold must be positive"));
        }
        if !(self.loop_radius >= 0.0) {
            return Err(bad("loop_radius", "must be non-negative"));
        }
        if !(self.dwell_gap >= 0.0) {
            return Err(bad("dwell_gap", "must be non-negative"));
        }
        if !(self.loop_trans_std >= 0.0 && self.loop_rot_std >= 0.0) {
            return Err(bad("loop_trans_std", "noise must be non-negative"));
        }
        if !(self.loop_info_scale > 0.0) {
            return Err(bad("loop_info_scale", "must be positive"));
        }
        Ok(())
    }
}

/// Bookkeeping for one server cycle.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ServerCycleReport {
    pub version: u64,
    pub ingested: usize,
    pub rejected_submaps: usize,
    pub loop_closures: usize,
    pub solve: Option<SolveReport>,
    pub solver_failed: bool,
    pub representatives: usize,
    pub broadcast_nodes: usize,
    pub reduced: bool,
}

#[derive(Debug, Clone)]
pub struct ServerState {
    problem: OptimizationProblem,
    nodes: BTreeMap<NodeId, PoseNode>,
    submaps: BTreeMap<(u32, u32), Vec<NodeId>>,
    /// Last node and its onboard pose per robot, for inter-submap links.
    tails: BTreeMap<u32, (NodeId, Pose)>,
    /// Node pairs already joined by a closure.
    closed_pairs: BTreeSet<(NodeId, NodeId)>,
    version: u64,
    last_message: Option<GlobalGraphMessage>,
    rng: ChaCha8Rng,
}

impl ServerState {
    pub fn new(seed: u64) -> Self {
        Self {
            problem: OptimizationProblem::new(),
            nodes: BTreeMap::new(),
            submaps: BTreeMap::new(),
            tails: BTreeMap::new(),
            closed_pairs: BTreeSet::new(),
            version: 0,
            last_message: None,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn problem(&self) -> &OptimizationProblem {
        &self.problem
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn submap_count(&self) -> usize {
        self.submaps.len()
    }

    pub fn has_submap(&self, robot: u32, submap: u32) -> bool {
        self.submaps.contains_key(&(robot, submap))
    }

    /// Current estimates of every node with its metadata, by node id.
    pub fn estimates(&self) -> Vec<PoseNode> {
        self.nodes
            .values()
            .map(|n| PoseNode {
                pose: self.problem.variables()[&n.node_id],
                ..*n
            })
            .collect()
    }

    /// Appends a submap with odometry factors between consecutive nodes and
    /// a link to the robot's previous submap. The first node of a robot's
    /// first submap is anchored.
    pub fn ingest_submap(&mut self, submap: &Submap, odometry_information: &crate::pose_graph::Information) -> Result<()> {
        submap.validate()?;
        let key = (submap.robot_id, submap.submap_id);
        if self.submaps.contains_key(&key) {
            return Err(Error::DuplicateSubmap {
                robot: submap.robot_id,
                submap: submap.submap_id,
            });
        }
        if let Some(n) = submap.nodes.iter().find(|n| self.nodes.contains_key(&n.node_id)) {
            return Err(Error::Validation(format!("node {} was already ingested", n.node_id)));
        }
        let tail = self.tails.get(&submap.robot_id).copied();
        if let Some((prev, _)) = tail {
            if self.nodes[&prev].timestamp >= submap.entry_time() {
                return Err(Error::Validation(format!(
                    "submap {} of robot {} starts before its predecessor ends",
                    submap.submap_id, submap.robot_id
                )));
            }
        }

        // Initial guesses continue from the current estimate of the tail.
        let mut prev = tail.map(|(id, raw)| (id, raw, self.problem.variables()[&id]));
        for n in &submap.nodes {
            let guess = match prev {
                Some((_, raw, est)) => est.compose(&raw.between(&n.pose)),
                None => n.pose,
            };
            self.problem.add_variable(n.node_id, guess)?;
            if let Some((pid, raw, _)) = prev {
                self.problem.add_factor(PoseEdge::new(
                    pid,
                    n.node_id,
                    EdgeKind::Odometry,
                    raw.between(&n.pose),
                    *odometry_information,
                ))?;
            } else {
                self.problem.set_anchor(n.node_id)?;
            }
            prev = Some((n.node_id, n.pose, guess));
            self.nodes.insert(n.node_id, *n);
        }
        let last = submap.nodes[submap.nodes.len() - 1];
        self.tails.insert(submap.robot_id, (last.node_id, last.pose));
        self.submaps.insert(key, submap.nodes.iter().map(|n| n.node_id).collect());
        self.problem.anchor_components();
        Ok(())
    }

    /// Synthesizes loop closures from ground truth: for every pair of
    /// submaps, the closest node pair within `loop_radius` whose timestamps
    /// differ by more than the dwell gap and that no earlier closure joined.
    /// Each call adds at most one closure per submap pair. The measurement
    /// is the true relative pose perturbed by seeded noise.
    pub fn detect_loop_closures(
        &mut self,
        ground_truth: &BTreeMap<NodeId, Pose>,
        config: &ServerConfig,
    ) -> Result<Vec<PoseEdge>> {
        let mut best: BTreeMap<((u32, u32), (u32, u32)), (f64, NodeId, NodeId)> = BTreeMap::new();
        let nodes: Vec<&PoseNode> = self.nodes.values().collect();
        let truth = |id: NodeId| {
            ground_truth
                .get(&id)
                .copied()
                .ok_or_else(|| Error::InsufficientData(format!("no ground truth for node {id}")))
        };
        let gt: Vec<Pose> = nodes.iter().map(|n| truth(n.node_id)).collect::<Result<_>>()?;
        let r2 = config.loop_radius * config.loop_radius;
        for i in 0..nodes.len() {
            for j in (i + 1)..nodes.len() {
                let (a, b) = (nodes[i], nodes[j]);
                let ka = (a.robot_id, a.submap_id);
                let kb = (b.robot_id, b.submap_id);
                if ka == kb || (a.timestamp - b.timestamp).abs() <= config.dwell_gap {
                    continue;
                }
                let pair = if ka < kb { (ka, kb) } else { (kb, ka) };
                if self.closed_pairs.contains(&(a.node_id.min(b.node_id), a.node_id.max(b.node_id))) {
                    continue;
                }
                let d2 = (gt[i].translation - gt[j].translation).norm_squared();
                if d2 > r2 {
                    continue;
                }
                // Earlier node first; ties keep the first pair found.
                let (from, to) = if (a.timestamp, a.node_id) <= (b.timestamp, b.node_id) { (i, j) } else { (j, i) };
                match best.get(&pair) {
                    Some(&(bd, _, _)) if bd <= d2 => {}
                    _ => {
                        best.insert(pair, (d2, nodes[from].node_id, nodes[to].node_id));
                    }
                }
            }
        }
        let trans = Normal::new(0.0, config.loop_trans_std.max(0.0)).map_err(|e| Error::Parameter(e.to_string()))?;
        let rot = Normal::new(0.0, config.loop_rot_std.max(0.0)).map_err(|e| Error::Parameter(e.to_string()))?;
        let info = default_odometry_information() * config.loop_info_scale;
        let mut out = Vec::with_capacity(best.len());
        for (_, (_, from, to)) in best {
            let noise = Vector6::from_fn(|k, _| {
                if k < 3 {
                    trans.sample(&mut self.rng)
                } else {
                    rot.sample(&mut self.rng)
                }
            });
            let z = truth(from)?.between(&truth(to)?).compose(&exp_map(&Twist::from_vector(&noise)));
            out.push(PoseEdge::new(from, to, EdgeKind::LoopClosure, z, info));
            self.closed_pairs.insert((from.min(to), from.max(to)));
        }
        Ok(out)
    }

    /// One server iteration: ingest, close loops, optimize, pick
    /// representatives, build and possibly reduce the graph, broadcast.
    pub fn cycle(
        &mut self,
        new_submaps: &[Submap],
        ground_truth: &BTreeMap<NodeId, Pose>,
        config: &ServerConfig,
        now: f64,
    ) -> Result<(GlobalGraphMessage, ServerCycleReport)> {
        let mut report = ServerCycleReport::default();
        let odo = default_odometry_information();
        for s in new_submaps {
            match self.ingest_submap(s, &odo) {
                Ok(()) => report.ingested += 1,
                Err(e) => {
                    warn!("server rejected submap: {e}");
                    report.rejected_submaps += 1;
                }
            }
        }
        let closures = self.detect_loop_closures(ground_truth, config)?;
        report.loop_closures = closures.len();
        for c in closures {
            self.problem.add_factor(c)?;
        }
        self.problem.anchor_components();

        if !self.problem.is_empty() {
            match self.problem.optimize(&config.solver) {
                Ok(r) => report.solve = Some(r),
                Err(e) => {
                    warn!("server solve failed: {e}; re-broadcasting the previous graph");
                    report.solver_failed = true;
                    if let Some(prev) = &self.last_message {
                        let msg = prev.clone();
                        report.version = msg.version;
                        report.broadcast_nodes = msg.len();
                        return Ok((msg, report));
                    }
                }
            }
        }

        let reps = self.representatives(config)?;
        report.representatives = reps.len();
        let broadcast = self.reduce(reps, config, &mut report)?;

        self.version += 1;
        report.version = self.version;
        report.broadcast_nodes = broadcast.len();
        let msg = GlobalGraphMessage {
            version: self.version,
            timestamp: now,
            nodes: broadcast,
        };
        self.last_message = Some(msg.clone());
        Ok((msg, report))
    }

    fn representatives(&self, config: &ServerConfig) -> Result<Vec<PoseNode>> {
        let estimates = self.estimates();
        let mut by_robot: BTreeMap<u32, Vec<PoseNode>> = BTreeMap::new();
        for n in estimates {
            by_robot.entry(n.robot_id).or_default().push(n);
        }
        let mut out = Vec::new();
        for (_, mut nodes) in by_robot {
            sort_by_time(&mut nodes);
            let traj = Trajectory::new(nodes.iter().map(|n| Stamped::new(n.timestamp, n.pose)).collect())?;
            let kept = keyframe_select(&traj, config.representative_min_dist, config.representative_min_rot)?;
            let mut it = nodes.into_iter();
            for s in kept.samples() {
                // Both sequences are time ordered.
                if let Some(n) = it.by_ref().find(|n| n.timestamp == s.t) {
                    out.push(n);
                }
            }
        }
        Ok(out)
    }

    fn reduce(&self, reps: Vec<PoseNode>, config: &ServerConfig, report: &mut ServerCycleReport) -> Result<Vec<PoseNode>> {
        let Some(keep) = reduction_keep_count(reps.len(), config.reduction_threshold, config.reduction_fraction) else {
            return Ok(reps);
        };
        if keep >= reps.len() {
            return Ok(reps);
        }
        let graph = build_graph(&reps, config.radius, config.sigma, &config.weights)?;
        let reduced = kron_reduce(&graph, keep)?;
        if reduced.component_count() != graph.component_count() {
            return Err(Error::Reduction("reduction changed the number of connected components".into()));
        }
        report.reduced = true;
        Ok(reduced.nodes().to_vec())
    }
}
