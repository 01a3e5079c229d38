//! Batch Levenberg–Marquardt pose-graph optimization.
//!
//! Variables are SE(3) poses perturbed on the right by a `[rho, phi]` twist.
//! Each connected component of the factor graph is held in place by one
//! anchored variable. The normal equations are assembled block-sparse and
//! solved with a sparse Cholesky factorization.

mod factor;
mod lm;

use std::collections::{BTreeMap, BTreeSet};

use log::warn;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pose_graph::{EdgeKind, NodeId, PoseEdge, PoseGraph};
use crate::se3::Pose;

pub use factor::{residual, residual_and_jacobians};
pub use lm::{solve, SolveReport, SolverConfig};

/// Variables, factors and gauge anchors of a pose-graph problem.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizationProblem {
    variables: BTreeMap<NodeId, Pose>,
    factors: Vec<PoseEdge>,
    anchors: BTreeSet<NodeId>,
    solves: usize,
}

impl OptimizationProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Problem over all nodes and edges of `graph`, anchored per component.
    pub fn from_graph(graph: &PoseGraph) -> Result<Self> {
        let mut p = Self::new();
        for n in graph.nodes.values() {
            p.add_variable(n.node_id, n.pose)?;
        }
        for e in &graph.edges {
            p.add_factor(e.clone())?;
        }
        p.anchor_components();
        Ok(p)
    }

    pub fn add_variable(&mut self, id: NodeId, pose: Pose) -> Result<()> {
        if self.variables.insert(id, pose).is_some() {
            return Err(Error::Validation(format!("variable {id} already exists")));
        }
        Ok(())
    }

    pub fn set_variable(&mut self, id: NodeId, pose: Pose) -> Result<()> {
        match self.variables.get_mut(&id) {
            Some(p) => {
                *p = pose;
                Ok(())
            }
            None => Err(Error::Validation(format!("unknown variable {id}"))),
        }
    }

    pub fn variable(&self, id: NodeId) -> Option<&Pose> {
        self.variables.get(&id)
    }

    pub fn variables(&self) -> &BTreeMap<NodeId, Pose> {
        &self.variables
    }

    pub fn factors(&self) -> &[PoseEdge] {
        &self.factors
    }

    pub fn anchors(&self) -> &BTreeSet<NodeId> {
        &self.anchors
    }

    /// Number of solves run through [`OptimizationProblem::optimize`].
    pub fn solve_count(&self) -> usize {
        self.solves
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn add_factor(&mut self, factor: PoseEdge) -> Result<()> {
        factor.validate()?;
        for id in [factor.from_id, factor.to_id] {
            if !self.variables.contains_key(&id) {
                return Err(Error::Validation(format!(
                    "factor {} -> {} references unknown variable {id}",
                    factor.from_id, factor.to_id
                )));
            }
        }
        self.factors.push(factor);
        Ok(())
    }

    /// Replaces the factor of the same kind between the same endpoints, or
    /// appends when there is none. Returns whether a factor was replaced.
    pub fn replace_factor(&mut self, factor: PoseEdge) -> Result<bool> {
        let pos = self
            .factors
            .iter()
            .position(|f| f.kind == factor.kind && f.from_id == factor.from_id && f.to_id == factor.to_id);
        match pos {
            Some(i) => {
                factor.validate()?;
                self.factors[i] = factor;
                Ok(true)
            }
            None => self.add_factor(factor).map(|_| false),
        }
    }

    /// Drops every factor for which `pred` holds; returns how many.
    pub fn remove_factors(&mut self, pred: impl Fn(&PoseEdge) -> bool) -> usize {
        let before = self.factors.len();
        self.factors.retain(|f| !pred(f));
        before - self.factors.len()
    }

    pub fn set_anchor(&mut self, id: NodeId) -> Result<()> {
        if !self.variables.contains_key(&id) {
            return Err(Error::Validation(format!("cannot anchor unknown variable {id}")));
        }
        self.anchors.insert(id);
        Ok(())
    }

    /// Connected components of the factor graph, each sorted by id; the
    /// components are ordered by their smallest id.
    pub fn components(&self) -> Vec<Vec<NodeId>> {
        let index: BTreeMap<NodeId, usize> = self.variables.keys().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut parent: Vec<usize> = (0..index.len()).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        for f in &self.factors {
            let (a, b) = (find(&mut parent, index[&f.from_id]), find(&mut parent, index[&f.to_id]));
            if a != b {
                let (lo, hi) = (a.min(b), a.max(b));
                parent[hi] = lo;
            }
        }
        let mut groups: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
        for (&id, &i) in &index {
            let root = find(&mut parent, i);
            groups.entry(root).or_default().push(id);
        }
        groups.into_values().collect()
    }

    /// Leaves exactly one anchor per component: the lowest anchored id if
    /// any, otherwise the lowest id of the component.
    pub fn anchor_components(&mut self) {
        let mut anchors = BTreeSet::new();
        for comp in self.components() {
            let pick = comp.iter().find(|id| self.anchors.contains(id)).unwrap_or(&comp[0]);
            anchors.insert(*pick);
        }
        self.anchors = anchors;
    }

    pub fn validate(&self) -> Result<()> {
        for f in &self.factors {
            for id in [f.from_id, f.to_id] {
                if !self.variables.contains_key(&id) {
                    return Err(Error::Validation(format!("factor references unknown variable {id}")));
                }
            }
        }
        for comp in self.components() {
            let count = comp.iter().filter(|id| self.anchors.contains(id)).count();
            if count != 1 {
                return Err(Error::Validation(format!(
                    "component containing {} has {count} anchors; need exactly one",
                    comp[0]
                )));
            }
        }
        Ok(())
    }

    /// Solves and writes the optimum back into the variables.
    pub fn optimize(&mut self, config: &SolverConfig) -> Result<SolveReport> {
        self.solves += 1;
        let (vars, report) = solve(self, config)?;
        self.variables = vars;
        Ok(report)
    }
}

/// What [`apply_batch`] did with a batch of factors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub added: usize,
    pub replaced: usize,
    pub rejected: usize,
    pub solve: Option<SolveReport>,
}

/// Adds `additions`, replaces factors named by `updates` (same kind and
/// endpoints), then runs a single solve. Edges with unknown endpoints are
/// rejected and logged; the rest of the batch still goes through. An empty
/// batch triggers no solve.
pub fn apply_batch(
    problem: &mut OptimizationProblem,
    additions: &[PoseEdge],
    updates: &[PoseEdge],
    config: &SolverConfig,
) -> Result<BatchReport> {
    let mut report = BatchReport::default();
    for e in additions {
        match problem.add_factor(e.clone()) {
            Ok(()) => report.added += 1,
            Err(err) => {
                warn!("rejected factor {} -> {}: {err}", e.from_id, e.to_id);
                report.rejected += 1;
            }
        }
    }
    for e in updates {
        match problem.replace_factor(e.clone()) {
            Ok(true) => report.replaced += 1,
            Ok(false) => report.added += 1,
            Err(err) => {
                warn!("rejected factor {} -> {}: {err}", e.from_id, e.to_id);
                report.rejected += 1;
            }
        }
    }
    if report.added + report.replaced > 0 {
        problem.anchor_components();
        report.solve = Some(problem.optimize(config)?);
    }
    Ok(report)
}

/// Sum of `rᵀ Ω r` per factor kind at the given variables.
pub fn chi2_by_kind(problem: &OptimizationProblem) -> Result<BTreeMap<EdgeKind, f64>> {
    let mut out = BTreeMap::new();
    for f in problem.factors() {
        let r = residual(f, &problem.variables[&f.from_id], &problem.variables[&f.to_id])?;
        *out.entry(f.kind).or_insert(0.0) += (r.transpose() * f.information * r)[0];
    }
    Ok(out)
}
