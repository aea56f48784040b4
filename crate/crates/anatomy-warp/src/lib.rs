//! File-level tooling around `anatomy-warp-core`: NIfTI reading and
//! writing, the JSON configuration, seeded batch workers, provenance
//! records, detection evaluation over manifests, blinded realism batches,
//! a flat-buffer entry point for host pipelines and the `anatomy-warp`
//! command line.
//!
//! Worker pools are sized by `ANATOMY_WARP_THREADS` (default: all cores).
//! Every seeded entry point gives item `i` its own random stream, so output
//! bytes never depend on the worker count.

pub mod batch;
pub mod cli;
pub mod config;
pub mod deform;
pub mod error;
pub mod eval;
pub mod exchange;
pub mod fsutil;
pub mod io;
pub mod turing;

pub use config::ConfigFile;
pub use error::{Error, Result};
