//! Decentralized dual consensus ADMM for cone-coupled separable problems.

pub mod bpd;
pub mod cones;
pub mod consensus;
pub mod dual;
pub mod error;
pub mod graph;
pub mod network;
pub mod objectives;
pub mod subproblem;
pub mod verify;

pub use cones::{ConeSpec, ConvexCone, Polar};
pub use error::{Error, Result};
pub use graph::Graph;
pub use objectives::LocalObjective;
