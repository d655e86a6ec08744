//! File formats, experiment harness and command line for the KiD3 driver
//! activity classifier. The model itself lives in [`kid3_core`].

pub mod backbone;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod fixture;
pub mod formats;
pub mod harness;
pub mod ingest;
pub mod jsonl;
pub mod plot;
pub mod store;

pub use error::{Error, Result};
