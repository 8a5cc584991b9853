//! File formats, dataset IO and the command-line front end for
//! `saldist-core`.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod fixations;
pub mod jsonl;
pub mod manifest;
pub mod pfm;

pub use error::{IoError, IoResult};
