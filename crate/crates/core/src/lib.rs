//! One-step and two-step abusive language classification.
//!
//! The crate covers the whole experiment path: corpus loading and
//! segmentation, text encoding, a small reverse-mode numeric core, the
//! character, word and hybrid CNNs, linear baselines, training with early
//! stopping, weighted metrics and the cross-validated one-step/two-step
//! comparison.

pub mod baselines;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod models;
pub mod nd;
pub mod pipeline;
pub mod synth;
pub mod system;
pub mod textprep;
pub mod train;

pub use error::{Error, Result};
