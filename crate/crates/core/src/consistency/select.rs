use serde::{Deserialize, Serialize};

use super::signal::ScaleDistances;
use crate::error::{Error, Result};
use crate::pose_graph::NodeId;
use crate::se3::Pose;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConstraintKind {
    Adjacent,
    NHop,
    Submap,
}

impl ConstraintKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ConstraintKind::Adjacent => "adjacent",
            ConstraintKind::NHop => "n_hop",
            ConstraintKind::Submap => "submap",
        }
    }
}

/// Maps a band index to the constraint kind it triggers.
///
/// Band 0 is the scaling band, band 1 the finest wavelet band and band `J`
/// the coarsest. Bands `1..=adjacent_upto` yield adjacent constraints, bands
/// `submap_from..=J` and the scaling band yield submap constraints, and the
/// bands in between yield n-hop constraints.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BandPartition {
    pub adjacent_upto: usize,
    pub submap_from: usize,
}

impl BandPartition {
    /// Splits `num_scales` wavelet bands into thirds (finest, middle,
    /// coarsest); the scaling band joins the coarsest third.
    pub fn thirds(num_scales: usize) -> Self {
        let third = num_scales / 3;
        Self {
            adjacent_upto: third,
            submap_from: num_scales - third + 1,
        }
    }

    pub fn classify(&self, band: usize) -> ConstraintKind {
        if band == 0 || band >= self.submap_from {
            ConstraintKind::Submap
        } else if band <= self.adjacent_upto {
            ConstraintKind::Adjacent
        } else {
            ConstraintKind::NHop
        }
    }
}

/// Relative constraint proposed from server estimates. Endpoints are onboard
/// node ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintCandidate {
    pub kind: ConstraintKind,
    pub from_id: NodeId,
    pub to_id: NodeId,
    /// `server_pose(from)⁻¹ · server_pose(to)`.
    pub measurement: Pose,
    pub score: f64,
    pub scale_band: usize,
    /// Onboard node whose discrepancy triggered the candidate.
    pub trigger_id: NodeId,
}

/// A synchronized node: the onboard id together with the matching server
/// estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyncedNode {
    pub onboard_id: NodeId,
    pub server_id: NodeId,
    pub submap_id: u32,
    pub timestamp: f64,
    pub server_pose: Pose,
    pub onboard_pose: Pose,
}

/// A (node, band) entry picked by the ranking.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedEntry {
    pub node: usize,
    pub band: usize,
    pub score: f64,
}

/// Orders bands finest first: 1, 2, .., J, then the scaling band 0.
fn fineness(band: usize, num_bands: usize) -> usize {
    if band == 0 {
        num_bands
    } else {
        band
    }
}

/// Top-`k` nodes by their largest scale-wise distance.
///
/// Each node contributes its maximal band (ties to the finer band); nodes are
/// then ranked by score descending, ties by lower node id (sync order),
/// then finer band. With `accumulate` a node's score is the sum over all
/// bands while the reported band stays its maximal one. Entries with score
/// at or below `floor` are ignored.
pub fn rank_entries(d: &ScaleDistances, k: usize, floor: f64, accumulate: bool, ids: &[NodeId]) -> Vec<RankedEntry> {
    let bands = d.num_bands();
    let mut per_node: Vec<RankedEntry> = (0..d.num_nodes())
        .filter_map(|node| {
            let best = (0..bands)
                .map(|band| (band, d.get(node, band)))
                .max_by(|a, b| {
                    a.1.total_cmp(&b.1)
                        .then(fineness(b.0, bands).cmp(&fineness(a.0, bands)))
                })?;
            let score = if accumulate {
                (0..bands).map(|b| d.get(node, b)).sum()
            } else {
                best.1
            };
            (score > floor).then_some(RankedEntry {
                node,
                band: best.0,
                score,
            })
        })
        .collect();
    per_node.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(ids[a.node].cmp(&ids[b.node]))
            .then(fineness(a.band, bands).cmp(&fineness(b.band, bands)))
    });
    per_node.truncate(k);
    per_node
}

/// Parameters of [`select_constraints`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionParams {
    pub top_k: usize,
    pub partition: BandPartition,
    pub n_hop: usize,
    pub score_floor: f64,
    pub accumulate_scales: bool,
}

/// Ranks the scale-wise distances and turns the top entries into relative
/// constraints between synchronized nodes.
///
/// * adjacent: between the direct predecessor and successor of the node;
/// * n-hop: between the nodes `n_hop` steps before and after it;
/// * submap: between the representative (first) node of its submap and the
///   representative of the nearest other submap. Without another submap the
///   candidate degrades to n-hop.
///
/// Indices are clamped at the ends of the synchronized sequence.
pub fn select_constraints(
    d: &ScaleDistances,
    synced: &[SyncedNode],
    params: &SelectionParams,
) -> Result<Vec<ConstraintCandidate>> {
    if params.top_k == 0 {
        return Err(Error::Parameter("top_k must be at least 1".into()));
    }
    if d.num_nodes() != synced.len() {
        return Err(Error::DimensionMismatch {
            expected: synced.len(),
            got: d.num_nodes(),
        });
    }
    let ids: Vec<NodeId> = synced.iter().map(|s| s.onboard_id).collect();
    let ranked = rank_entries(d, params.top_k, params.score_floor, params.accumulate_scales, &ids);
    let last = synced.len().saturating_sub(1);
    let span = |i: usize, h: usize| (i.saturating_sub(h), (i + h).min(last));

    let mut out = Vec::with_capacity(ranked.len());
    for entry in ranked {
        let i = entry.node;
        let mut kind = params.partition.classify(entry.band);
        let endpoints = match kind {
            ConstraintKind::Adjacent => Some(span(i, 1)),
            ConstraintKind::NHop => Some(span(i, params.n_hop.max(1))),
            ConstraintKind::Submap => match submap_pair(synced, i) {
                Some(pair) => Some(pair),
                None => {
                    kind = ConstraintKind::NHop;
                    Some(span(i, params.n_hop.max(1)))
                }
            },
        };
        let Some((a, b)) = endpoints else { continue };
        if a == b {
            continue;
        }
        let (a, b) = if synced[a].timestamp <= synced[b].timestamp { (a, b) } else { (b, a) };
        out.push(ConstraintCandidate {
            kind,
            from_id: synced[a].onboard_id,
            to_id: synced[b].onboard_id,
            measurement: synced[a].server_pose.between(&synced[b].server_pose),
            score: entry.score,
            scale_band: entry.band,
            trigger_id: synced[i].onboard_id,
        });
    }
    Ok(out)
}

/// Representative of the submap holding `i` and of the nearest other
/// submap, by server position.
fn submap_pair(synced: &[SyncedNode], i: usize) -> Option<(usize, usize)> {
    let mut reps: Vec<(u32, usize)> = Vec::new();
    for (idx, s) in synced.iter().enumerate() {
        match reps.iter().position(|(sub, _)| *sub == s.submap_id) {
            Some(p) => {
                if s.timestamp < synced[reps[p].1].timestamp {
                    reps[p].1 = idx;
                }
            }
            None => reps.push((s.submap_id, idx)),
        }
    }
    let own = reps.iter().find(|(sub, _)| *sub == synced[i].submap_id)?.1;
    let p = synced[own].server_pose.translation;
    reps.iter()
        .filter(|(sub, _)| *sub != synced[i].submap_id)
        .min_by(|x, y| {
            let dx = (synced[x.1].server_pose.translation - p).norm();
            let dy = (synced[y.1].server_pose.translation - p).norm();
            dx.total_cmp(&dy).then(x.0.cmp(&y.0))
        })
        .map(|&(_, other)| (own, other))
}
