//! Pose-graph and trajectory containers.
//!
//! Graphs are plain values: build one, validate it, hand out shared
//! references. Mutation goes through the owning code path (the optimizer or
//! the simulator), never through a shared snapshot.

mod ate;
mod io;
mod trajectory;

use std::collections::BTreeMap;

use nalgebra::Matrix6;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::se3::Pose;

pub use ate::{align_rigid, ate, ate_rmse, AteResult};
pub use io::{load_g2o, load_tum, read_g2o, read_tum, save_g2o, save_tum, write_g2o, write_tum};
pub use trajectory::{inject_degeneracy, inject_drift, keyframe_select, Stamped, Trajectory};

pub type NodeId = u64;

/// 6x6 information matrix in `[rho, phi]` ordering.
pub type Information = Matrix6<f64>;

/// `diag(100,100,100, 400,400,400)`: 0.1 m translation and 0.05 rad rotation std.
pub fn default_odometry_information() -> Information {
    Information::from_diagonal(&nalgebra::Vector6::new(
        100.0, 100.0, 100.0, 400.0, 400.0, 400.0,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseNode {
    pub node_id: NodeId,
    pub robot_id: u32,
    pub submap_id: u32,
    pub timestamp: f64,
    pub pose: Pose,
}

impl PoseNode {
    pub fn new(node_id: NodeId, robot_id: u32, submap_id: u32, timestamp: f64, pose: Pose) -> Self {
        Self {
            node_id,
            robot_id,
            submap_id,
            timestamp,
            pose,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    Odometry,
    LoopClosure,
    Correction,
}

impl EdgeKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            EdgeKind::Odometry => "odometry",
            EdgeKind::LoopClosure => "loop_closure",
            EdgeKind::Correction => "correction",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "odometry" => Some(EdgeKind::Odometry),
            "loop_closure" => Some(EdgeKind::LoopClosure),
            "correction" => Some(EdgeKind::Correction),
            _ => None,
        }
    }
}

/// A relative-pose measurement from `from_id` to `to_id`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseEdge {
    pub from_id: NodeId,
    pub to_id: NodeId,
    pub kind: EdgeKind,
    pub measurement: Pose,
    pub information: Information,
}

impl PoseEdge {
    pub fn new(
        from_id: NodeId,
        to_id: NodeId,
        kind: EdgeKind,
        measurement: Pose,
        information: Information,
    ) -> Self {
        Self {
            from_id,
            to_id,
            kind,
            measurement,
            information,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.from_id == self.to_id {
            return Err(Error::Validation(format!(
                "edge {} -> {} is a self loop",
                self.from_id, self.to_id
            )));
        }
        validate_information(&self.information).map_err(|msg| {
            Error::Validation(format!(
                "edge {} -> {}: {msg}",
                self.from_id, self.to_id
            ))
        })
    }
}

fn validate_information(info: &Information) -> std::result::Result<(), String> {
    if info.iter().any(|v| !v.is_finite()) {
        return Err("information matrix has non-finite entries".into());
    }
    if (info - info.transpose()).abs().max() > 1e-9 {
        return Err("information matrix is not symmetric".into());
    }
    if info.cholesky().is_none() {
        return Err("information matrix is not positive definite".into());
    }
    Ok(())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PoseGraph {
    pub nodes: BTreeMap<NodeId, PoseNode>,
    pub edges: Vec<PoseEdge>,
}

impl PoseGraph {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds and validates a graph.
    pub fn from_parts(nodes: Vec<PoseNode>, edges: Vec<PoseEdge>) -> Result<Self> {
        let mut graph = PoseGraph::new();
        for node in nodes {
            graph.insert_node(node)?;
        }
        graph.edges = edges;
        graph.validate()?;
        Ok(graph)
    }

    pub fn insert_node(&mut self, node: PoseNode) -> Result<()> {
        if self.nodes.contains_key(&node.node_id) {
            return Err(Error::Validation(format!(
                "duplicate node id {}",
                node.node_id
            )));
        }
        self.nodes.insert(node.node_id, node);
        Ok(())
    }

    pub fn node(&self, id: NodeId) -> Option<&PoseNode> {
        self.nodes.get(&id)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Checks endpoints and information matrices of every edge.
    pub fn validate(&self) -> Result<()> {
        for edge in &self.edges {
            for id in [edge.from_id, edge.to_id] {
                if !self.nodes.contains_key(&id) {
                    return Err(Error::Validation(format!(
                        "edge {} -> {} references unknown vertex {id}",
                        edge.from_id, edge.to_id
                    )));
                }
            }
            edge.validate()?;
        }
        Ok(())
    }

    /// Checks that odometry edges form one simple chain per robot, with
    /// non-decreasing timestamps along the chain.
    pub fn validate_chains(&self) -> Result<()> {
        let mut out_deg: BTreeMap<NodeId, usize> = BTreeMap::new();
        let mut in_deg: BTreeMap<NodeId, usize> = BTreeMap::new();
        for e in self.edges.iter().filter(|e| e.kind == EdgeKind::Odometry) {
            let (a, b) = (&self.nodes[&e.from_id], &self.nodes[&e.to_id]);
            if a.robot_id != b.robot_id {
                return Err(Error::Validation(format!(
                    "odometry edge {} -> {} crosses robots",
                    e.from_id, e.to_id
                )));
            }
            if b.timestamp < a.timestamp {
                return Err(Error::Validation(format!(
                    "odometry edge {} -> {} goes back in time",
                    e.from_id, e.to_id
                )));
            }
            *out_deg.entry(e.from_id).or_default() += 1;
            *in_deg.entry(e.to_id).or_default() += 1;
        }
        if let Some((id, _)) = out_deg.iter().chain(in_deg.iter()).find(|(_, d)| **d > 1) {
            return Err(Error::Validation(format!(
                "node {id} has more than one odometry edge in the same direction"
            )));
        }
        // A chain with n nodes per robot has exactly n - 1 links; anything
        // more within the degree bounds is a cycle.
        let mut per_robot: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
        for n in self.nodes.values() {
            per_robot.entry(n.robot_id).or_default().0 += 1;
        }
        for e in self.edges.iter().filter(|e| e.kind == EdgeKind::Odometry) {
            per_robot.entry(self.nodes[&e.from_id].robot_id).or_default().1 += 1;
        }
        for (robot, (n, links)) in per_robot {
            if links + 1 != n && links != 0 {
                return Err(Error::Validation(format!(
                    "robot {robot}: {links} odometry edges for {n} nodes do not form one chain"
                )));
            }
        }
        Ok(())
    }

    /// Nodes of one robot ordered by timestamp, then id.
    pub fn robot_nodes(&self, robot_id: u32) -> Vec<PoseNode> {
        let mut v: Vec<PoseNode> = self
            .nodes
            .values()
            .filter(|n| n.robot_id == robot_id)
            .copied()
            .collect();
        sort_by_time(&mut v);
        v
    }
}

/// Sorts nodes by timestamp, breaking ties by id.
pub fn sort_by_time(nodes: &mut [PoseNode]) {
    nodes.sort_by(|a, b| {
        a.timestamp
            .total_cmp(&b.timestamp)
            .then(a.node_id.cmp(&b.node_id))
    });
}
