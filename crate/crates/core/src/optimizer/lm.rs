use std::collections::BTreeMap;

use nalgebra::{DVector, Matrix6, Vector6};
use nalgebra_sparse::factorization::CscCholesky;
use nalgebra_sparse::{CooMatrix, CscMatrix};
use serde::{Deserialize, Serialize};
use sprs::linalg::reverse_cuthill_mckee;
use sprs::{CsMat, TriMat};

use super::factor::residual_and_jacobians;
use super::{residual, OptimizationProblem};
use crate::error::{Error, Result};
use crate::pose_graph::NodeId;
use crate::se3::{exp_map, Pose, Twist};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub lambda_init: f64,
    /// Stop once an accepted step changes the cost by less than this
    /// fraction.
    pub relative_tolerance: f64,
    /// Huber threshold on the whitened residual norm; `None` is plain least
    /// squares.
    pub huber_delta: Option<f64>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 100,
            lambda_init: 1e-4,
            relative_tolerance: 1e-9,
            huber_delta: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub converged: bool,
    /// `rᵀ Ω r` summed per factor kind at the solution.
    pub chi2: BTreeMap<String, f64>,
    /// Cost after every accepted step, starting with the initial cost.
    pub cost_history: Vec<f64>,
}

const LAMBDA_MAX: f64 = 1e12;

fn robust(s: f64, delta: Option<f64>) -> (f64, f64) {
    // Returns (cost contribution, IRLS weight) for squared whitened norm s.
    match delta {
        Some(d) if s > d * d => {
            let e = s.sqrt();
            (2.0 * d * e - d * d, d / e)
        }
        _ => (s, 1.0),
    }
}

fn total_cost(problem: &OptimizationProblem, vars: &BTreeMap<NodeId, Pose>, delta: Option<f64>) -> Result<f64> {
    let mut cost = 0.0;
    for f in problem.factors() {
        let r = residual(f, &vars[&f.from_id], &vars[&f.to_id])?;
        cost += robust((r.transpose() * f.information * r)[0], delta).0;
    }
    Ok(cost)
}

/// Levenberg–Marquardt on the problem's current variables. Anchored
/// variables stay fixed. Returns the optimized variables; the problem
/// itself is left untouched.
pub fn solve(problem: &OptimizationProblem, config: &SolverConfig) -> Result<(BTreeMap<NodeId, Pose>, SolveReport)> {
    problem.validate()?;
    if !(config.lambda_init > 0.0) {
        return Err(Error::Parameter("lambda_init must be positive".into()));
    }
    let mut vars = problem.variables().clone();
    let free: Vec<NodeId> = vars.keys().copied().filter(|id| !problem.anchors().contains(id)).collect();
    let slot = block_order(problem, &free);
    let dim = 6 * free.len();

    let mut cost = total_cost(problem, &vars, config.huber_delta)?;
    let mut report = SolveReport {
        initial_cost: cost,
        cost_history: vec![cost],
        ..SolveReport::default()
    };
    let mut lambda = config.lambda_init;

    if dim > 0 && cost > 0.0 {
        'outer: while report.iterations < config.max_iters {
            report.iterations += 1;
            let (h, b) = linearize(problem, &vars, &slot, dim, config.huber_delta)?;
            // Retry with heavier damping until a step lowers the cost.
            loop {
                let step = match damped_solve(&h, &b, dim, lambda) {
                    Some(s) => s,
                    None => {
                        lambda *= 10.0;
                        if lambda > LAMBDA_MAX {
                            return Err(Error::Solver("normal equations stay singular after damping".into()));
                        }
                        continue;
                    }
                };
                let mut trial = vars.clone();
                for (&id, &i) in &slot {
                    let d = Vector6::from_iterator(step.rows(6 * i, 6).iter().copied());
                    let p = trial.get_mut(&id).expect("free variable exists");
                    *p = p.compose(&exp_map(&Twist::from_vector(&d)));
                }
                let new_cost = match total_cost(problem, &trial, config.huber_delta) {
                    Ok(c) if c.is_finite() => c,
                    _ => f64::INFINITY,
                };
                if new_cost <= cost {
                    let change = (cost - new_cost) / cost.max(f64::MIN_POSITIVE);
                    vars = trial;
                    cost = new_cost;
                    report.cost_history.push(cost);
                    lambda = (lambda / 10.0).max(1e-12);
                    if change < config.relative_tolerance || cost == 0.0 {
                        report.converged = true;
                        break 'outer;
                    }
                    break;
                }
                lambda *= 10.0;
                if lambda > LAMBDA_MAX {
                    // No damping makes progress: already at a minimum.
                    report.converged = true;
                    break 'outer;
                }
            }
        }
    } else {
        report.converged = true;
    }

    report.final_cost = cost;
    for f in problem.factors() {
        let r = residual(f, &vars[&f.from_id], &vars[&f.to_id])?;
        *report.chi2.entry(f.kind.as_str().to_string()).or_insert(0.0) += (r.transpose() * f.information * r)[0];
    }
    Ok((vars, report))
}

/// Gauss–Newton system `H δ = -b` in block coordinates of the free
/// variables. `H` is returned as a coordinate list of 6x6 blocks.
/// Block positions of the free variables in the normal equations. A
/// reverse Cuthill-McKee ordering of the factor graph keeps the Cholesky
/// fill close to the band that loop closures would otherwise blow up.
fn block_order(problem: &OptimizationProblem, free: &[NodeId]) -> BTreeMap<NodeId, usize> {
    let index: BTreeMap<NodeId, usize> = free.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let n = free.len();
    let mut pattern = TriMat::new((n, n));
    for i in 0..n {
        pattern.add_triplet(i, i, 1.0);
    }
    for f in problem.factors() {
        if let (Some(&a), Some(&b)) = (index.get(&f.from_id), index.get(&f.to_id)) {
            pattern.add_triplet(a, b, 1.0);
            pattern.add_triplet(b, a, 1.0);
        }
    }
    let pattern: CsMat<f64> = pattern.to_csr();
    let order = reverse_cuthill_mckee(pattern.view());
    order.perm.vec().into_iter().enumerate().map(|(pos, old)| (free[old], pos)).collect()
}

fn linearize(
    problem: &OptimizationProblem,
    vars: &BTreeMap<NodeId, Pose>,
    slot: &BTreeMap<NodeId, usize>,
    dim: usize,
    delta: Option<f64>,
) -> Result<(BTreeMap<(usize, usize), Matrix6<f64>>, DVector<f64>)> {
    let mut h: BTreeMap<(usize, usize), Matrix6<f64>> = BTreeMap::new();
    let mut b = DVector::zeros(dim);
    for f in problem.factors() {
        let (r, ja, jb) = residual_and_jacobians(f, &vars[&f.from_id], &vars[&f.to_id])?;
        let s = (r.transpose() * f.information * r)[0];
        let omega = f.information * robust(s, delta).1;
        let blocks = [(slot.get(&f.from_id), ja), (slot.get(&f.to_id), jb)];
        for (si, ji) in &blocks {
            let Some(&i) = si else { continue };
            let jt_omega = ji.transpose() * omega;
            let mut seg = b.rows_mut(6 * i, 6);
            seg += jt_omega * r;
            for (sj, jj) in &blocks {
                let Some(&j) = sj else { continue };
                *h.entry((i, j)).or_insert_with(Matrix6::zeros) += jt_omega * jj;
            }
        }
    }
    Ok((h, b))
}

fn damped_solve(h: &BTreeMap<(usize, usize), Matrix6<f64>>, b: &DVector<f64>, dim: usize, lambda: f64) -> Option<DVector<f64>> {
    let mut coo = CooMatrix::new(dim, dim);
    for (&(i, j), blk) in h {
        for r in 0..6 {
            for c in 0..6 {
                let mut v = blk[(r, c)];
                if i == j && r == c {
                    v += lambda * (v.abs() + 1e-6);
                }
                if v != 0.0 {
                    coo.push(6 * i + r, 6 * j + c, v);
                }
            }
        }
    }
    let csc = CscMatrix::from(&coo);
    let chol = CscCholesky::factor(&csc).ok()?;
    let step = DVector::from_column_slice((-chol.solve(b)).as_slice());
    step.iter().all(|v| v.is_finite()).then_some(step)
}
