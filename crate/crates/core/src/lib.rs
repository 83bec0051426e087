//! Interpretable image features and the statistics used to relate them to
//! mental-health outcomes.
//!
//! - [`imagefeat`]: HSV color, affect and composition features per image, mean
//!   pooled per user.
//! - [`tagcluster`]: NPMI similarity over content tags and spectral clustering
//!   into topic clusters.
//! - [`stats`]: Pearson and partial correlation, t-test p-values and
//!   Benjamini-Hochberg control.
//! - [`mtlearn`]: elastic-net and L2/1 multi-task regression with user-grouped
//!   cross-validation.

pub mod error;
pub mod imagefeat;
pub mod mtlearn;
pub mod stats;
pub mod tagcluster;

pub use error::{Error, Result};
