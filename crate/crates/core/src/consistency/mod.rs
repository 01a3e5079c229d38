//! Robot-side consistency checking.
//!
//! Each cycle pairs the robot's onboard keyframes with the server's estimate
//! of the same instants, turns both maps into scalar graph signals, and
//! compares their wavelet coefficients on the server graph. The nodes with
//! the largest scale-wise discrepancies become relative constraints whose
//! measurements come from the server, filtered through a ledger of what was
//! already applied.

mod cycle;
mod ledger;
mod select;
mod signal;
mod sync;

pub use cycle::{run_comparison_cycle, ConsistencyConfig, CycleOutcome, CycleStatus, RobotConsistencyState};
pub use ledger::{ConstraintLedger, LedgerDecision, LedgerEntry};
pub use select::{
    rank_entries, select_constraints, BandPartition, ConstraintCandidate, ConstraintKind, RankedEntry,
    SelectionParams, SyncedNode,
};
pub use signal::{build_signal, scale_distances, GraphSignal, ScaleDistances};
pub use sync::{associate_timestamps, synchronize, SyncMap, DEFAULT_SYNC_TOLERANCE};
