use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose_graph::{NodeId, PoseNode};
use crate::se3::{se3_distance_total, MetricWeights};
use crate::spectral::WaveletCoefficients;

/// One non-negative scalar per synchronized node: its SE(3) distance to the
/// map origin node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphSignal {
    pub values: DVector<f64>,
    pub origin_node_id: NodeId,
}

/// Signal over `nodes` (in sync order) relative to `nodes[origin]`.
///
/// Only relative poses enter, so the signal does not depend on the frame the
/// map is expressed in.
pub fn build_signal(nodes: &[PoseNode], origin: usize, weights: &MetricWeights) -> Result<GraphSignal> {
    let Some(o) = nodes.get(origin) else {
        return Err(Error::Parameter(format!(
            "origin index {origin} out of range for {} nodes",
            nodes.len()
        )));
    };
    let values = DVector::from_iterator(
        nodes.len(),
        nodes.iter().map(|n| se3_distance_total(&o.pose, &n.pose, weights)),
    );
    Ok(GraphSignal {
        values,
        origin_node_id: o.node_id,
    })
}

/// Per-node, per-band magnitude of the coefficient difference between the
/// server and the onboard signal.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleDistances {
    pub matrix: DMatrix<f64>,
}

impl ScaleDistances {
    pub fn num_nodes(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn num_bands(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn get(&self, node: usize, band: usize) -> f64 {
        self.matrix[(node, band)]
    }
}

/// `d[n, b] = |W_server[n, b] - W_onboard[n, b]|`. Both coefficient sets
/// must come from the same server-graph decomposition and filter bank, with
/// rows in sync order.
pub fn scale_distances(server: &WaveletCoefficients, onboard: &WaveletCoefficients) -> Result<ScaleDistances> {
    if server.num_bands() != onboard.num_bands() {
        return Err(Error::DimensionMismatch {
            expected: server.num_bands(),
            got: onboard.num_bands(),
        });
    }
    if server.num_nodes() != onboard.num_nodes() {
        return Err(Error::DimensionMismatch {
            expected: server.num_nodes(),
            got: onboard.num_nodes(),
        });
    }
    Ok(ScaleDistances {
        matrix: (&server.matrix - &onboard.matrix).abs(),
    })
}
