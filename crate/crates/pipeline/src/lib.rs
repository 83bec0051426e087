//! Manifest-driven pipeline from images and outcome scores to correlation
//! and prediction reports.
//!
//! Stages read the manifest named in the run config and exchange files in
//! one output directory: `ingest`, `tags`, `extract`, `cluster`,
//! `correlate`, `predict`, `report`.

pub mod cluster;
pub mod config;
pub mod correlate;
pub mod error;
pub mod extract;
pub mod manifest;
pub mod predict;
pub mod report;
pub mod table;
pub mod tags;

pub use config::RunConfig;
pub use error::{PipelineError, Result};
