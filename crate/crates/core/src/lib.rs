//! Spread-out Bernoulli bond percolation laboratory.
//!
//! Cluster-exploration Monte Carlo estimators, exact small-graph oracles for
//! the BK, tree-graph and Simon–Lieb inequalities, and random-walk tools for
//! spread-out walks.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod lattice;
pub mod oracle;
pub mod percolation;
pub mod randwalk;
pub mod rng;
pub mod stats;

pub use error::{Error, Result};
pub use lattice::{Block, Point, Region, SpreadOutModel};
pub use rng::RngStream;
pub use stats::Estimate;
