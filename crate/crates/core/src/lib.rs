//! Simulation laboratory for SIR diffusion on networks observed with a few
//! missing links.

// `!(x > 0.0)` is the NaN-rejecting guard used throughout; index loops
// mirror the matrix algebra they implement.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod compartmental;
pub mod diffusion;
pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod generate;
pub mod graph;
pub mod ingestion;
pub mod optim;
pub mod peer_effects;
pub mod rng;
pub mod scenario;

pub use error::{Error, Result};
pub use graph::{Graph, NodeId};
