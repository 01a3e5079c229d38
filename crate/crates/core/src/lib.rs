//! Multi-scale spectral consistency checking between onboard and server
//! pose-graph estimates of a robot team.
//!
//! Robots integrate odometry, ship submaps to a central server and receive
//! the globally optimized multi-robot graph back. Comparing the two
//! estimates with spectral graph wavelets localizes where the onboard map
//! went wrong and at which scale, and relative constraints taken from the
//! server estimate repair it.

pub mod consistency;
pub mod error;
pub mod optimizer;
pub mod pose_graph;
pub mod se3;
pub mod sim;
pub mod server;
pub mod spectral;

pub use error::{Error, Result};
