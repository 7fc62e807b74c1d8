//! Centroid detection by Gaussian-heatmap regression.
//!
//! - [`heatmap`]: point sets ↔ fixed-σ Gaussian heatmaps.
//! - [`nnet`]: the tensor engine and U-Net with exact backward passes.
//! - [`data`]: imagery, polygons, tiling, synthetic datasets, file formats.
//! - [`trainer`]: MSE + Adam training and tiled inference.
//! - [`eval`]: point matching and precision / recall / F1.

pub mod data;
pub mod error;
pub mod eval;
pub mod heatmap;
pub mod nnet;
pub mod trainer;

pub use error::{Error, Result};
pub use eval::{compute_metrics, evaluate_dataset, match_points, MatchResult, Metrics, MetricsReport};
pub use heatmap::{decode, decode_peaks, encode, gaussian_patch, Heatmap, KernelSpec, Peak, Point, PointSet};
pub use nnet::{AdamConfig, ModelMeta, UNet, UNetConfig};
pub use trainer::{predict, train, PredictOptions, Prediction, TilingOptions, TrainConfig, TrainHistory, TrainOutcome};
