//! Position-aware click/conversion multi-task models (PACC and PACC-PE),
//! a position-biased click-log simulator with known ground truth, and
//! propensity-weighted ranking metrics with position-swap analysis.

pub mod analysis;
pub mod error;
pub mod metrics;
pub mod models;
pub mod nn;
pub mod simlog;
pub mod training;

pub use error::{Error, Result};
