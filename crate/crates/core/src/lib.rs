//! Robust training of graph convolutional networks under noisy node labels.
//!
//! Label estimates for each training node are aggregated from a random-walk
//! support set in the GCN's hidden space and fed into a reweighted,
//! corrected and prior-regularised objective.

pub mod dataset;
pub mod error;
pub mod experiment;
pub mod gcn;
pub mod graph;
pub mod noise;
pub mod objective;
pub mod seed;
pub mod sparse;
pub mod trainer;
pub mod unionnet;

pub use error::{Error, LoadError, Result};
