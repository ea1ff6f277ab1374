//! Joint topology inference of related graphs from stationary signals
//! observed on a subset of nodes.
//!
//! The influence of hidden nodes on the observed block of each graph is
//! captured by a lifting matrix per graph, regularized to be column sparse
//! and to share its column support across graphs.

pub mod cli;
pub mod error;
pub mod experiments;
pub mod fixtures;
pub mod graph;
pub mod metrics;
pub mod pajek;
pub mod prox;
pub mod signals;
pub mod solver;

pub use error::{Error, Result};
