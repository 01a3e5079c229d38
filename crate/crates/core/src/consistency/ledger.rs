use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::select::ConstraintCandidate;
use crate::pose_graph::NodeId;
use crate::se3::Pose;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub candidate: ConstraintCandidate,
    pub applied_at: f64,
}

/// Outcome of [`ConstraintLedger::apply`]: what to hand to the optimizer in
/// one batch.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LedgerDecision {
    pub to_add: Vec<ConstraintCandidate>,
    pub to_update: Vec<ConstraintCandidate>,
}

impl LedgerDecision {
    pub fn is_empty(&self) -> bool {
        self.to_add.is_empty() && self.to_update.is_empty()
    }

    pub fn len(&self) -> usize {
        self.to_add.len() + self.to_update.len()
    }
}

/// History of applied correction constraints, at most one per ordered pair.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstraintLedger {
    entries: BTreeMap<(NodeId, NodeId), LedgerEntry>,
}

fn differs(a: &Pose, b: &Pose, trans_tol: f64, rot_tol: f64) -> bool {
    (a.translation - b.translation).norm() > trans_tol || a.rotation.angle_to(&b.rotation) > rot_tol
}

impl ConstraintLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, from: NodeId, to: NodeId) -> Option<&LedgerEntry> {
        self.entries.get(&(from, to))
    }

    pub fn entries(&self) -> impl Iterator<Item = &LedgerEntry> {
        self.entries.values()
    }

    /// New pairs are added; known pairs are updated only when the
    /// measurement moved by more than `trans_tol` meters or `rot_tol`
    /// radians, otherwise dropped. Candidates are processed in order, so a
    /// repeated pair within one batch is dropped unless it differs.
    pub fn apply(
        &mut self,
        candidates: &[ConstraintCandidate],
        trans_tol: f64,
        rot_tol: f64,
        now: f64,
    ) -> LedgerDecision {
        let mut decision = LedgerDecision::default();
        for c in candidates {
            let key = (c.from_id, c.to_id);
            match self.entries.get(&key) {
                None => decision.to_add.push(c.clone()),
                Some(entry) if differs(&entry.candidate.measurement, &c.measurement, trans_tol, rot_tol) => {
                    // An earlier add of the same pair in this batch is
                    // superseded rather than reported twice.
                    if let Some(pos) = decision.to_add.iter().position(|a| (a.from_id, a.to_id) == key) {
                        decision.to_add[pos] = c.clone();
                    } else if let Some(pos) = decision.to_update.iter().position(|a| (a.from_id, a.to_id) == key) {
                        decision.to_update[pos] = c.clone();
                    } else {
                        decision.to_update.push(c.clone());
                    }
                }
                Some(_) => continue,
            }
            self.entries.insert(
                key,
                LedgerEntry {
                    candidate: c.clone(),
                    applied_at: now,
                },
            );
        }
        decision
    }

    /// Re-derives the measurement of every recorded constraint from fresh
    /// server estimates and returns those that moved beyond tolerance.
    /// `server_pose` maps an onboard node id to its current server pose.
    pub fn refresh(
        &mut self,
        server_pose: impl Fn(NodeId) -> Option<Pose>,
        trans_tol: f64,
        rot_tol: f64,
        now: f64,
    ) -> Vec<ConstraintCandidate> {
        let mut changed = Vec::new();
        for entry in self.entries.values_mut() {
            let c = &entry.candidate;
            let (Some(a), Some(b)) = (server_pose(c.from_id), server_pose(c.to_id)) else {
                continue;
            };
            let fresh = a.between(&b);
            if differs(&c.measurement, &fresh, trans_tol, rot_tol) {
                entry.candidate.measurement = fresh;
                entry.applied_at = now;
                changed.push(entry.candidate.clone());
            }
        }
        changed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::consistency::ConstraintKind;

    fn cand(from: u64, to: u64, x: f64) -> ConstraintCandidate {
        ConstraintCandidate {
            kind: ConstraintKind::Adjacent,
            from_id: from,
            to_id: to,
            measurement: Pose::from_translation(x, 0.0, 0.0),
            score: 1.0,
            scale_band: 1,
            trigger_id: from,
        }
    }

    #[test]
    fn fresh_ledger_adds_everything() {
        let mut l = ConstraintLedger::new();
        let d = l.apply(&[cand(0, 2, 1.0), cand(1, 3, 1.0), cand(5, 9, 2.0)], 0.1, 0.05, 0.0);
        assert_eq!((d.to_add.len(), d.to_update.len()), (3, 0));
        assert_eq!(l.len(), 3);
    }

    #[test]
    fn identical_repeat_is_dropped() {
        let mut l = ConstraintLedger::new();
        l.apply(&[cand(0, 2, 1.0)], 0.1, 0.05, 0.0);
        let d = l.apply(&[cand(0, 2, 1.0)], 0.1, 0.05, 20.0);
        assert!(d.is_empty());
        assert_eq!(l.get(0, 2).unwrap().applied_at, 0.0);
    }

    #[test]
    fn shifted_measurement_updates() {
        let mut l = ConstraintLedger::new();
        l.apply(&[cand(0, 2, 1.0)], 0.1, 0.05, 0.0);
        let d = l.apply(&[cand(0, 2, 1.5)], 0.1, 0.05, 20.0);
        assert_eq!((d.to_add.len(), d.to_update.len()), (0, 1));
        assert_eq!(l.get(0, 2).unwrap().candidate.measurement.translation.x, 1.5);
        assert_eq!(l.len(), 1);
        // A small shift stays below tolerance.
        assert!(l.apply(&[cand(0, 2, 1.55)], 0.1, 0.05, 40.0).is_empty());
    }

    #[test]
    fn duplicate_within_batch_collapses() {
        let mut l = ConstraintLedger::new();
        let d = l.apply(&[cand(0, 2, 1.0), cand(0, 2, 1.0), cand(0, 2, 3.0)], 0.1, 0.05, 0.0);
        assert_eq!(d.to_add.len(), 1);
        assert!(d.to_update.is_empty());
        assert_eq!(d.to_add[0].measurement.translation.x, 3.0);
    }

    #[test]
    fn refresh_tracks_moving_server_estimates() {
        let mut l = ConstraintLedger::new();
        l.apply(&[cand(0, 2, 1.0)], 0.1, 0.05, 0.0);
        let same = |id: u64| Some(Pose::from_translation(if id == 0 { 0.0 } else { 1.0 }, 0.0, 0.0));
        assert!(l.refresh(same, 0.1, 0.05, 1.0).is_empty());
        let moved = |id: u64| Some(Pose::from_translation(if id == 0 { 0.0 } else { 1.4 }, 0.0, 0.0));
        let changed = l.refresh(moved, 0.1, 0.05, 2.0);
        assert_eq!(changed.len(), 1);
        assert!((changed[0].measurement.translation.x - 1.4).abs() < 1e-12);
    }
}
