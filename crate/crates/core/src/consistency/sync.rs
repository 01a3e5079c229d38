use serde::{Deserialize, Serialize};

use crate::pose_graph::{NodeId, PoseNode};

/// Half a 10 Hz keyframe period.
pub const DEFAULT_SYNC_TOLERANCE: f64 = 0.05;

/// Greedy nearest-timestamp matching. Candidate pairs within `tolerance`
/// are accepted in order of increasing time difference (ties by lower
/// indices), skipping any index already used. The result is one-to-one and
/// ordered by the index into `a`.
pub fn associate_timestamps(a: &[f64], b: &[f64], tolerance: f64) -> Vec<(usize, usize)> {
    let mut b_order: Vec<usize> = (0..b.len()).collect();
    b_order.sort_by(|&x, &y| b[x].total_cmp(&b[y]).then(x.cmp(&y)));
    let sorted_b: Vec<f64> = b_order.iter().map(|&j| b[j]).collect();

    let mut candidates: Vec<(f64, usize, usize)> = Vec::new();
    for (i, &ta) in a.iter().enumerate() {
        let lo = sorted_b.partition_point(|&tb| tb < ta - tolerance);
        for (k, &tb) in sorted_b.iter().enumerate().skip(lo) {
            if tb > ta + tolerance {
                break;
            }
            let dt = (tb - ta).abs();
            if dt <= tolerance {
                candidates.push((dt, i, b_order[k]));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// One-to-one pairing of server nodes with onboard nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyncMap {
    /// `(server_node_id, onboard_node_id)` in server timestamp order.
    pub pairs: Vec<(NodeId, NodeId)>,
    pub tolerance: f64,
}

impl SyncMap {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Chronological synchronization of server and onboard nodes.
pub fn synchronize(server_nodes: &[PoseNode], onboard_nodes: &[PoseNode], tolerance: f64) -> SyncMap {
    let ts: Vec<f64> = server_nodes.iter().map(|n| n.timestamp).collect();
    let to: Vec<f64> = onboard_nodes.iter().map(|n| n.timestamp).collect();
    let mut idx = associate_timestamps(&ts, &to, tolerance);
    idx.sort_by(|x, y| {
        server_nodes[x.0]
            .timestamp
            .total_cmp(&server_nodes[y.0].timestamp)
            .then(x.0.cmp(&y.0))
    });
    SyncMap {
        pairs: idx
            .into_iter()
            .map(|(i, j)| (server_nodes[i].node_id, onboard_nodes[j].node_id))
            .collect(),
        tolerance,
    }
}
