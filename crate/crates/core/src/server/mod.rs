//! The central mapping server: accumulates submaps, closes loops against a
//! ground-truth oracle, optimizes the multi-robot graph and broadcasts its
//! poses to the robots.

mod message;
mod state;

pub use message::{GlobalGraphMessage, Mailboxes};
pub use state::{ServerConfig, ServerCycleReport, ServerState, Submap};
