use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose_graph::PoseNode;
use crate::se3::Pose;

/// Poses of the global multi-robot graph as broadcast to robots. Carries no
/// factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalGraphMessage {
    pub version: u64,
    /// Simulated time of the broadcast.
    pub timestamp: f64,
    pub nodes: Vec<PoseNode>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u64,
    node_count: usize,
    #[serde(default)]
    t: f64,
}

#[derive(Serialize, Deserialize)]
struct NodeLine {
    id: u64,
    robot: u32,
    submap: u32,
    t: f64,
    x: f64,
    y: f64,
    z: f64,
    qx: f64,
    qy: f64,
    qz: f64,
    qw: f64,
}

impl GlobalGraphMessage {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// JSON lines: a `{version, node_count, t}` header, then one line per
    /// node.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        let header = Header {
            version: self.version,
            node_count: self.nodes.len(),
            t: self.timestamp,
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for n in &self.nodes {
            let q = n.pose.rotation.coords;
            let p = n.pose.translation;
            let line = NodeLine {
                id: n.node_id,
                robot: n.robot_id,
                submap: n.submap_id,
                t: n.timestamp,
                x: p.x,
                y: p.y,
                z: p.z,
                qx: q.x,
                qy: q.y,
                qz: q.z,
                qw: q.w,
            };
            writeln!(out, "{}", serde_json::to_string(&line)?)?;
        }
        Ok(())
    }

    pub fn read_jsonl(input: impl BufRead) -> Result<Self> {
        let mut lines = input.lines().enumerate().filter(|(_, l)| !matches!(l, Ok(s) if s.trim().is_empty()));
        let (_, first) = lines.next().ok_or(Error::Parse {
            line: 1,
            msg: "missing header".into(),
        })?;
        let header: Header = serde_json::from_str(&first?).map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?;
        let mut nodes = Vec::with_capacity(header.node_count);
        let mut seen = BTreeMap::new();
        for (i, line) in lines {
            let n: NodeLine = serde_json::from_str(&line?).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            let pose = Pose::from_parts([n.x, n.y, n.z], [n.qx, n.qy, n.qz, n.qw]).map_err(|e| Error::Parse {
                line: i + 1,
                msg: e.to_string(),
            })?;
            if seen.insert(n.id, ()).is_some() {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("duplicate node id {}", n.id),
                });
            }
            nodes.push(PoseNode::new(n.id, n.robot, n.submap, n.t, pose));
        }
        if nodes.len() != header.node_count {
            return Err(Error::Validation(format!(
                "header announces {} nodes, found {}",
                header.node_count,
                nodes.len()
            )));
        }
        Ok(Self {
            version: header.version,
            timestamp: header.t,
            nodes,
        })
    }
}

/// Per-robot delivery slots holding only the newest message.
#[derive(Debug, Clone, Default)]
pub struct Mailboxes {
    slots: BTreeMap<u32, GlobalGraphMessage>,
}

impl Mailboxes {
    pub fn new() -> Self {
        Self::default()
    }

    /// Delivers `msg` to every robot in `robots`, replacing older messages.
    /// A message older than the one already waiting is discarded.
    pub fn broadcast(&mut self, robots: impl IntoIterator<Item = u32>, msg: &GlobalGraphMessage) {
        for r in robots {
            match self.slots.get(&r) {
                Some(old) if old.version >= msg.version => {}
                _ => {
                    self.slots.insert(r, msg.clone());
                }
            }
        }
    }

    pub fn peek(&self, robot: u32) -> Option<&GlobalGraphMessage> {
        self.slots.get(&robot)
    }

    pub fn take(&mut self, robot: u32) -> Option<GlobalGraphMessage> {
        self.slots.remove(&robot)
    }
}
