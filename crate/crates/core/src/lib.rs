//! Hemodynamic decomposition of fNIRS signals and workload classification.

pub mod cli;
pub mod decomposer;
pub mod error;
pub mod features;
pub mod filterbank;
pub mod harness;
pub mod hrf;
pub mod ml;
pub mod optim;
pub mod signal;

pub use error::{Error, Result};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
