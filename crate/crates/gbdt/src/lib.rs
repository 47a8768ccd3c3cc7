//! Histogram-based gradient-boosted decision trees with a softmax
//! multiclass objective.
//!
//! Training standardizes features with training-set statistics (optional),
//! bins every feature at training-data quantiles, then runs boosting rounds.
//! Each round computes softmax gradients and hessians once and fits one
//! depth-limited regression tree per class by greedy histogram split search,
//! using the second-order gain
//!
//! ```text
//! gain = 1/2 * (G_L^2 / (H_L + l2) + G_R^2 / (H_R + l2) - G^2 / (H + l2))
//! ```
//!
//! Rows are subsampled once per round and columns once per tree, both from a
//! seeded ChaCha stream, so a fit is a pure function of data and config.

mod binning;
mod config;
mod error;
mod matrix;
mod model;
mod standardize;
mod tree;

pub use binning::{BinMapper, BinnedMatrix};
pub use config::TrainConfig;
pub use error::{GbdtError, Result};
pub use matrix::DenseMatrix;
pub use model::{argmax, GbdtModel, TrainingLog, MODEL_FORMAT_VERSION};
pub use standardize::{StandardizationStats, STD_FLOOR};
pub use tree::Tree;
