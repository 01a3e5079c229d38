//! Graph signal processing on pose graphs.
//!
//! A [`WeightedGraph`] is built from poses by a radius search with
//! squared-exponential weights on the SE(3) distance. Its combinatorial
//! Laplacian `L = D - A` is decomposed densely; the eigenbasis drives the
//! graph Fourier transform, the Meyer wavelet filter bank and the
//! eigenvector-energy node selection of the Kron reduction.

mod dump;
mod kron;
mod meyer;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::pose_graph::PoseNode;
use crate::se3::{se3_distance_total, sq_exp_weight, MetricWeights};

pub use dump::{write_matrix_csv, write_vector_csv};
pub use kron::{kron_reduce, kron_reduce_nodes, reduction_keep_count, select_kron_nodes};
pub use meyer::{
    make_meyer_bank, meyer_scaling_kernel, meyer_wavelet_kernel, wavelet_coefficients, MAX_SCALES,
    wavelet_operator, FilterBank, WaveletCoefficients,
};

/// Lower bound on the weight of an odometry-chain edge. Keeps the chain
/// connected even when consecutive poses are far apart.
pub const CHAIN_MIN_WEIGHT: f64 = 1e-3;

const EIGEN_EPS: f64 = 1e-14;
const EIGEN_MAX_ITERS: usize = 10_000;

/// Undirected weighted graph over pose nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedGraph {
    adjacency: DMatrix<f64>,
    nodes: Vec<PoseNode>,
}

impl WeightedGraph {
    /// Validates symmetry, zero diagonal and non-negativity.
    pub fn new(adjacency: DMatrix<f64>, nodes: Vec<PoseNode>) -> Result<Self> {
        let n = nodes.len();
        if adjacency.nrows() != n || adjacency.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: adjacency.nrows(),
            });
        }
        for i in 0..n {
            if adjacency[(i, i)] != 0.0 {
                return Err(Error::Validation(format!("adjacency diagonal at {i} is non-zero")));
            }
            for j in 0..n {
                let a = adjacency[(i, j)];
                if !(a >= 0.0) || !a.is_finite() {
                    return Err(Error::Validation(format!(
                        "adjacency entry ({i}, {j}) = {a} is not a finite non-negative weight"
                    )));
                }
                if (a - adjacency[(j, i)]).abs() > 1e-12 {
                    return Err(Error::Validation(format!(
                        "adjacency is not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        Ok(Self { adjacency, nodes })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn nodes(&self) -> &[PoseNode] {
        &self.nodes
    }

    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.adjacency[(i, j)]
    }

    /// Connected-component label per node, labels in order of first
    /// appearance.
    pub fn components(&self) -> Vec<usize> {
        let n = self.len();
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        for start in 0..n {
            if label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            let mut stack = vec![start];
            while let Some(i) = stack.pop() {
                for j in 0..n {
                    if self.adjacency[(i, j)] > 0.0 && label[j] == usize::MAX {
                        label[j] = next;
                        stack.push(j);
                    }
                }
            }
            next += 1;
        }
        label
    }

    pub fn component_count(&self) -> usize {
        self.components().into_iter().max().map_or(0, |m| m + 1)
    }

    /// Induced subgraph on `indices`, in the given order.
    pub fn subgraph(&self, indices: &[usize]) -> WeightedGraph {
        let a = DMatrix::from_fn(indices.len(), indices.len(), |i, j| {
            self.adjacency[(indices[i], indices[j])]
        });
        WeightedGraph {
            adjacency: a,
            nodes: indices.iter().map(|&i| self.nodes[i]).collect(),
        }
    }
}

/// Builds the proximity graph over `nodes`.
///
/// Two nodes are linked when their positions lie within `radius`; the
/// weight is `sq_exp_weight(se3_distance(n, m), sigma)`. Consecutive nodes of
/// one robot (by timestamp) are always linked, with weight at least
/// [`CHAIN_MIN_WEIGHT`].
pub fn build_graph(
    nodes: &[PoseNode],
    radius: f64,
    sigma: f64,
    weights: &MetricWeights,
) -> Result<WeightedGraph> {
    if !(radius > 0.0) {
        return Err(Error::Parameter(format!("radius must be positive, got {radius}")));
    }
    if !(sigma > 0.0) {
        return Err(Error::Parameter(format!("sigma must be positive, got {sigma}")));
    }
    weights.validate()?;
    let n = nodes.len();
    if n < 2 {
        return Err(Error::DegenerateGraph(format!("{n} node(s); need at least 2")));
    }
    let mut a = DMatrix::zeros(n, n);
    let r2 = radius * radius;
    for i in 0..n {
        for j in (i + 1)..n {
            let d2 = (nodes[i].pose.translation - nodes[j].pose.translation).norm_squared();
            if d2 <= r2 {
                let delta = se3_distance_total(&nodes[i].pose, &nodes[j].pose, weights);
                let w = sq_exp_weight(delta, sigma)?;
                a[(i, j)] = w;
                a[(j, i)] = w;
            }
        }
    }
    // Chain links: consecutive samples of the same robot in time order.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| {
        nodes[x]
            .robot_id
            .cmp(&nodes[y].robot_id)
            .then(nodes[x].timestamp.total_cmp(&nodes[y].timestamp))
            .then(nodes[x].node_id.cmp(&nodes[y].node_id))
    });
    for w in order.windows(2) {
        let (i, j) = (w[0], w[1]);
        if nodes[i].robot_id != nodes[j].robot_id {
            continue;
        }
        if a[(i, j)] < CHAIN_MIN_WEIGHT {
            let delta = se3_distance_total(&nodes[i].pose, &nodes[j].pose, weights);
            let wgt = sq_exp_weight(delta, sigma)?.max(CHAIN_MIN_WEIGHT);
            a[(i, j)] = wgt;
            a[(j, i)] = wgt;
        }
    }
    WeightedGraph::new(a, nodes.to_vec())
}

/// Combinatorial Laplacian `L = D - A`.
pub fn laplacian(graph: &WeightedGraph) -> DMatrix<f64> {
    laplacian_of(graph.adjacency())
}

pub(crate) fn laplacian_of(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let mut l = -a.clone();
    for i in 0..n {
        let deg: f64 = a.row(i).iter().sum();
        l[(i, i)] = deg;
    }
    l
}

/// Eigenpairs of a graph Laplacian, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct LaplacianDecomposition {
    pub eigenvalues: DVector<f64>,
    /// Column `l` is the eigenvector of `eigenvalues[l]`.
    pub eigenvectors: DMatrix<f64>,
}

impl LaplacianDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn lambda_max(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, f64::max)
    }

    /// `U diag(Λ) Uᵀ`.
    pub fn reconstruct(&self) -> DMatrix<f64> {
        let u = &self.eigenvectors;
        u * DMatrix::from_diagonal(&self.eigenvalues) * u.transpose()
    }

    /// `U diag(g(Λ)) Uᵀ x`.
    pub fn apply_spectral(&self, signal: &DVector<f64>, g: impl Fn(f64) -> f64) -> DVector<f64> {
        let u = &self.eigenvectors;
        let mut spec = u.tr_mul(signal);
        for (c, lam) in spec.iter_mut().zip(self.eigenvalues.iter()) {
            *c *= g(*lam);
        }
        u * spec
    }
}

/// Dense symmetric eigendecomposition with ascending eigenvalues.
pub fn decompose(l: &DMatrix<f64>) -> Result<LaplacianDecomposition> {
    let n = l.nrows();
    if l.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: l.ncols(),
        });
    }
    if l.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("Laplacian has non-finite entries".into()));
    }
    let eig = SymmetricEigen::try_new(l.clone(), EIGEN_EPS, EIGEN_MAX_ITERS)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let mut col = eig.eigenvectors.column(src).clone_owned();
        // Fix the sign so the largest-magnitude entry is positive.
        let pivot = col.iter().copied().fold(0.0f64, |m, v| if v.abs() > m.abs() { v } else { m });
        if pivot < 0.0 {
            col = -col;
        }
        eigenvectors.set_column(dst, &col);
    }
    Ok(LaplacianDecomposition {
        eigenvalues,
        eigenvectors,
    })
}

fn check_len(decomp: &LaplacianDecomposition, len: usize) -> Result<()> {
    if decomp.len() != len {
        return Err(Error::DimensionMismatch {
            expected: decomp.len(),
            got: len,
        });
    }
    Ok(())
}

/// Graph Fourier transform `Uᵀ x`.
pub fn gft(decomp: &LaplacianDecomposition, signal: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(decomp, signal.len())?;
    Ok(decomp.eigenvectors.tr_mul(signal))
}

/// Inverse graph Fourier transform `U X`.
pub fn igft(decomp: &LaplacianDecomposition, spectrum: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(decomp, spectrum.len())?;
    Ok(&decomp.eigenvectors * spectrum)
}
