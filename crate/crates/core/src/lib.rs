//! Contrastive label enhancement.
//!
//! Recovers per-sample label distributions from binary logical labels by
//! projecting features and labels into a shared space, aligning the two views
//! with an instance-level contrastive loss, and decoding their concatenation
//! into distributions constrained to agree with the logical labels.
//!
//! Modules, bottom-up: [`dataset`] (loading, binarization, folds, synthetic
//! data), [`diffnet`] (the small MLP with exact backprop), [`objective`] (loss
//! terms and their gradients), [`trainer`] (SGD loop), [`metrics`] (the six
//! distribution measures and average ranks), [`baselines`], and [`harness`]
//! (experiment commands behind the CLI).

pub mod baselines;
pub mod dataset;
pub mod diffnet;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod objective;
pub mod rng;
pub mod trainer;

pub use error::{Error, Result};
