//! Experiment harness for the relay-aided OFDMA allocator: configuration
//! merging, Monte-Carlo drivers, property suites and result emission. The
//! `relay-ofdma` binary is a thin command-line layer over this crate.

pub mod config;
mod error;
pub mod experiment;
pub mod output;
pub mod properties;

pub use config::{ExperimentKind, ExperimentSpec, FileConfig, Overrides, ProtocolName};
pub use error::{HarnessError, Result};
