use nalgebra::DMatrix;

use super::{decompose, laplacian, WeightedGraph};
use crate::error::{Error, Result};

/// Number of nodes to keep when reducing a graph of `n` nodes, or `None`
/// when `n` does not exceed `threshold`.
///
/// With `fraction > 0` the graph shrinks by that fraction,
/// `floor(n (1 - fraction))`; with `fraction == 0` it is capped at
/// `threshold`.
pub fn reduction_keep_count(n: usize, threshold: usize, fraction: f64) -> Option<usize> {
    if n <= threshold {
        return None;
    }
    let keep = if fraction > 0.0 {
        // Slack absorbs products like 255 * 0.6 = 152.99999999999997.
        (n as f64 * (1.0 - fraction) + 1e-9).floor() as usize
    } else {
        threshold
    };
    Some(keep.clamp(2.min(n), n))
}

/// Picks `keep_count` nodes by their energy in the `keep_count` eigenvectors
/// with the largest eigenvalues. Ties go to the older timestamp, then the
/// lower index. Returned indices are ascending.
pub fn select_kron_nodes(graph: &WeightedGraph, keep_count: usize) -> Result<Vec<usize>> {
    let n = graph.len();
    if keep_count < 2 || keep_count > n {
        return Err(Error::Parameter(format!(
            "keep_count must lie in 2..={n}, got {keep_count}"
        )));
    }
    if keep_count == n {
        return Ok((0..n).collect());
    }
    let decomp = decompose(&laplacian(graph))?;
    let u = &decomp.eigenvectors;
    let energy: Vec<f64> = (0..n)
        .map(|row| ((n - keep_count)..n).map(|l| u[(row, l)].powi(2)).sum())
        .collect();
    let nodes = graph.nodes();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        energy[b]
            .total_cmp(&energy[a])
            .then(nodes[a].timestamp.total_cmp(&nodes[b].timestamp))
            .then(a.cmp(&b))
    });
    let mut kept: Vec<usize> = order.into_iter().take(keep_count).collect();
    kept.sort_unstable();
    Ok(kept)
}

/// Kron reduction onto the nodes at `keep` (ascending, distinct).
///
/// The reduced Laplacian is the Schur complement
/// `L_kk - L_kr L_rr⁻¹ L_rk`; the reduced adjacency is its negated
/// off-diagonal.
pub fn kron_reduce_nodes(graph: &WeightedGraph, keep: &[usize]) -> Result<WeightedGraph> {
    let n = graph.len();
    if keep.windows(2).any(|w| w[0] >= w[1]) || keep.iter().any(|&k| k >= n) {
        return Err(Error::Parameter("keep indices must be ascending, distinct and in range".into()));
    }
    if keep.len() == n {
        return Ok(graph.clone());
    }
    let mut is_kept = vec![false; n];
    for &k in keep {
        is_kept[k] = true;
    }
    let removed: Vec<usize> = (0..n).filter(|&i| !is_kept[i]).collect();
    let l = laplacian(graph);
    let block = |rows: &[usize], cols: &[usize]| {
        DMatrix::from_fn(rows.len(), cols.len(), |i, j| l[(rows[i], cols[j])])
    };
    let l_kk = block(keep, keep);
    let l_kr = block(keep, &removed);
    let l_rr = block(&removed, &removed);
    let chol = l_rr.cholesky().ok_or_else(|| {
        Error::Reduction(
            "removed block is singular; a connected component would be dropped entirely".into(),
        )
    })?;
    let schur = l_kk - &l_kr * chol.solve(&l_kr.transpose());

    let m = keep.len();
    let scale = schur.abs().max().max(1.0);
    let mut adjacency = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let w = -0.5 * (schur[(i, j)] + schur[(j, i)]);
            // Fill-in is non-negative up to round-off.
            let w = if w < 1e-14 * scale { 0.0 } else { w };
            adjacency[(i, j)] = w;
            adjacency[(j, i)] = w;
        }
    }
    let nodes = keep.iter().map(|&k| graph.nodes()[k]).collect();
    WeightedGraph::new(adjacency, nodes)
}

/// Kron reduction keeping `keep_count` nodes chosen by
/// [`select_kron_nodes`].
pub fn kron_reduce(graph: &WeightedGraph, keep_count: usize) -> Result<WeightedGraph> {
    let keep = select_kron_nodes(graph, keep_count)?;
    kron_reduce_nodes(graph, &keep)
}
