use std::collections::BTreeMap;

use log::debug;
use serde::{Deserialize, Serialize};

use super::ledger::ConstraintLedger;
use super::select::{select_constraints, BandPartition, ConstraintCandidate, ConstraintKind, SelectionParams, SyncedNode};
use super::signal::{build_signal, scale_distances, ScaleDistances};
use super::sync::{synchronize, DEFAULT_SYNC_TOLERANCE};
use crate::error::{Error, Result};
use crate::pose_graph::{default_odometry_information, sort_by_time, EdgeKind, Information, NodeId, PoseEdge, PoseNode};
use crate::se3::{sigma_for_boundary, MetricWeights, Pose};
use crate::server::GlobalGraphMessage;
use crate::spectral::{build_graph, decompose, laplacian, make_meyer_bank, wavelet_coefficients, MAX_SCALES};

/// Robot-side comparison settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConsistencyConfig {
    pub sync_tolerance: f64,
    pub radius: f64,
    pub sigma: f64,
    pub weights: MetricWeights,
    pub num_scales: usize,
    pub top_k: usize,
    /// Wavelet bands `1..=adjacent_upto` trigger adjacent constraints.
    pub adjacent_upto: usize,
    /// Wavelet bands `submap_from..` and the scaling band trigger submap
    /// constraints.
    pub submap_from: usize,
    pub n_hop: usize,
    pub score_floor: f64,
    pub accumulate_scales: bool,
    pub ledger_trans_tol: f64,
    pub ledger_rot_tol: f64,
    /// Re-derive recorded constraints from each new server estimate.
    pub refresh_ledger: bool,
    /// Correction information as a multiple of the odometry information.
    pub correction_info_scale: f64,
}

impl Default for ConsistencyConfig {
    fn default() -> Self {
        let partition = BandPartition::thirds(MAX_SCALES);
        Self {
            sync_tolerance: DEFAULT_SYNC_TOLERANCE,
            radius: 7.0,
            sigma: sigma_for_boundary(7.0, 0.1),
            weights: MetricWeights::default(),
            num_scales: MAX_SCALES,
            top_k: 15,
            adjacent_upto: partition.adjacent_upto,
            submap_from: partition.submap_from,
            n_hop: 3,
            score_floor: 1e-6,
            accumulate_scales: false,
            ledger_trans_tol: 0.05,
            ledger_rot_tol: 0.01,
            refresh_ledger: true,
            correction_info_scale: 0.5,
        }
    }
}

impl ConsistencyConfig {
    pub fn partition(&self) -> BandPartition {
        BandPartition {
            adjacent_upto: self.adjacent_upto,
            submap_from: self.submap_from,
        }
    }

    pub fn selection(&self) -> SelectionParams {
        SelectionParams {
            top_k: self.top_k,
            partition: self.partition(),
            n_hop: self.n_hop,
            score_floor: self.score_floor,
            accumulate_scales: self.accumulate_scales,
        }
    }

    pub fn correction_information(&self) -> Information {
        default_odometry_information() * self.correction_info_scale
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: String| Error::Config {
            field: format!("consistency.{field}"),
            msg,
        };
        if !(self.sync_tolerance >= 0.0) {
            return Err(bad("sync_tolerance", "must be non-negative".into()));
        }
        if !(self.radius > 0.0) {
            return Err(bad("radius", "must be positive".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(bad("sigma", "must be positive".into()));
        }
        self.weights.validate()?;
        if self.num_scales == 0 || self.num_scales > MAX_SCALES {
            return Err(bad("num_scales", format!("must lie in 1..={MAX_SCALES}")));
        }
        if self.top_k == 0 {
            return Err(bad("top_k", "must be at least 1".into()));
        }
        if self.submap_from <= self.adjacent_upto {
            return Err(bad("submap_from", "must exceed adjacent_upto".into()));
        }
        if self.n_hop == 0 {
            return Err(bad("n_hop", "must be at least 1".into()));
        }
        if !(self.ledger_trans_tol >= 0.0 && self.ledger_rot_tol >= 0.0) {
            return Err(bad("ledger_trans_tol", "tolerances must be non-negative".into()));
        }
        if !(self.correction_info_scale > 0.0 && self.correction_info_scale.is_finite()) {
            return Err(bad("correction_info_scale", "must be positive".into()));
        }
        Ok(())
    }
}

/// Per-robot mutable state carried across comparison cycles.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RobotConsistencyState {
    pub robot_id: u32,
    pub last_version: Option<u64>,
    pub ledger: ConstraintLedger,
}

impl RobotConsistencyState {
    pub fn new(robot_id: u32) -> Self {
        Self {
            robot_id,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleStatus {
    Processed,
    Stale,
    NoOverlap,
    Degenerate,
}

/// Result of one comparison cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutcome {
    pub status: CycleStatus,
    pub version: u64,
    pub synced: usize,
    /// Everything the ranking selected, before the ledger filter.
    pub candidates: Vec<ConstraintCandidate>,
    pub distances: Option<ScaleDistances>,
    /// New correction factors.
    pub additions: Vec<PoseEdge>,
    /// Replacements for factors already applied to the same pair.
    pub updates: Vec<PoseEdge>,
}

impl CycleOutcome {
    fn skipped(status: CycleStatus, version: u64) -> Self {
        Self {
            status,
            version,
            synced: 0,
            candidates: Vec::new(),
            distances: None,
            additions: Vec::new(),
            updates: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.additions.is_empty() && self.updates.is_empty()
    }

    /// Emitted constraints per kind, in `adjacent, n_hop, submap` order.
    pub fn census(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for cand in &self.candidates {
            c[match cand.kind {
                ConstraintKind::Adjacent => 0,
                ConstraintKind::NHop => 1,
                ConstraintKind::Submap => 2,
            }] += 1;
        }
        c
    }
}

/// Compares the latest server estimate of this robot's trajectory with its
/// onboard estimate and returns the correction factors to apply.
///
/// Only server nodes belonging to `state.robot_id` take part. The spectral
/// decomposition is computed on the server nodes alone and reused for both
/// signals, each measured from the first synchronized node of its own map.
pub fn run_comparison_cycle(
    msg: &GlobalGraphMessage,
    onboard: &[PoseNode],
    state: &mut RobotConsistencyState,
    config: &ConsistencyConfig,
) -> Result<CycleOutcome> {
    if state.last_version.is_some_and(|v| msg.version <= v) {
        return Ok(CycleOutcome::skipped(CycleStatus::Stale, msg.version));
    }
    state.last_version = Some(msg.version);

    let mut server: Vec<PoseNode> = msg.nodes.iter().filter(|n| n.robot_id == state.robot_id).copied().collect();
    sort_by_time(&mut server);
    let mut onboard = onboard.to_vec();
    sort_by_time(&mut onboard);
    let sync = synchronize(&server, &onboard, config.sync_tolerance);
    if sync.len() < 2 {
        return Ok(CycleOutcome::skipped(CycleStatus::NoOverlap, msg.version));
    }

    let server_by_id: BTreeMap<NodeId, &PoseNode> = server.iter().map(|n| (n.node_id, n)).collect();
    let onboard_by_id: BTreeMap<NodeId, &PoseNode> = onboard.iter().map(|n| (n.node_id, n)).collect();
    let mut server_synced = Vec::with_capacity(sync.len());
    let mut onboard_synced = Vec::with_capacity(sync.len());
    let mut synced = Vec::with_capacity(sync.len());
    for (sid, oid) in &sync.pairs {
        let s = *server_by_id[sid];
        let o = *onboard_by_id[oid];
        server_synced.push(s);
        onboard_synced.push(o);
        synced.push(SyncedNode {
            onboard_id: o.node_id,
            server_id: s.node_id,
            submap_id: s.submap_id,
            timestamp: o.timestamp,
            server_pose: s.pose,
            onboard_pose: o.pose,
        });
    }

    let graph = match build_graph(&server_synced, config.radius, config.sigma, &config.weights) {
        Ok(g) => g,
        Err(Error::DegenerateGraph(msg_text)) => {
            debug!("robot {}: skipping degenerate graph: {msg_text}", state.robot_id);
            return Ok(CycleOutcome::skipped(CycleStatus::Degenerate, msg.version));
        }
        Err(e) => return Err(e),
    };
    let decomp = decompose(&laplacian(&graph))?;
    if !(decomp.lambda_max() > 0.0) {
        return Ok(CycleOutcome::skipped(CycleStatus::Degenerate, msg.version));
    }
    let bank = make_meyer_bank(decomp.lambda_max(), config.num_scales)?;
    let f = build_signal(&server_synced, 0, &config.weights)?;
    let h = build_signal(&onboard_synced, 0, &config.weights)?;
    let wf = wavelet_coefficients(&decomp, &bank, &f.values)?;
    let wh = wavelet_coefficients(&decomp, &bank, &h.values)?;
    let d = scale_distances(&wf, &wh)?;
    let candidates = select_constraints(&d, &synced, &config.selection())?;

    let (tt, rt) = (config.ledger_trans_tol, config.ledger_rot_tol);
    let now = msg.timestamp;
    let refreshed = if config.refresh_ledger {
        let pose_of: BTreeMap<NodeId, Pose> = synced.iter().map(|s| (s.onboard_id, s.server_pose)).collect();
        state.ledger.refresh(|id| pose_of.get(&id).copied(), tt, rt, now)
    } else {
        Vec::new()
    };
    let mut decision = state.ledger.apply(&candidates, tt, rt, now);
    for r in refreshed {
        let key = (r.from_id, r.to_id);
        let known = |v: &Vec<ConstraintCandidate>| v.iter().any(|c| (c.from_id, c.to_id) == key);
        if !known(&decision.to_add) && !known(&decision.to_update) {
            decision.to_update.push(r);
        }
    }

    let info = config.correction_information();
    let to_edge = |c: &ConstraintCandidate| PoseEdge::new(c.from_id, c.to_id, EdgeKind::Correction, c.measurement, info);
    Ok(CycleOutcome {
        status: CycleStatus::Processed,
        version: msg.version,
        synced: synced.len(),
        additions: decision.to_add.iter().map(to_edge).collect(),
        updates: decision.to_update.iter().map(to_edge).collect(),
        candidates,
        distances: Some(d),
    })
}
