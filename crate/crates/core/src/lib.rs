//! Feature-attribution stability laboratory for gradient-boosted trees.
//!
//! The crate trains small boosted regression ensembles on synthetic collinear
//! data (or CSV input), computes exact interventional SHAP attributions, runs
//! seed-stability diagnostics (multi-model Z-test, single-model split-frequency
//! screen, SNR calibration) and aggregates attributions across models with the
//! DASH consensus.
//!
//! Module map:
//!
//! * [`synthdata`]: equicorrelated Gaussian data generation and CSV I/O.
//! * [`boost`]: exact-greedy gradient boosting with split accounting.
//! * [`attribution`]: interventional TreeSHAP, permutation and split-count importance.
//! * [`stability`]: correlation groups, flip rates, Z-test, screen and closed-form bounds.
//! * [`dash`]: consensus aggregation, tie reporting and progressive ensemble sizing.
//! * [`experiments`]: deterministic sweep runners emitting CSV/JSON rows.

// `!(x > 0.0)` is how parameters reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod attribution;
pub mod boost;
pub mod dash;
mod error;
pub mod experiments;
pub mod report;
pub mod rng;
pub mod stability;
pub mod synthdata;

pub use error::{Error, Result};
