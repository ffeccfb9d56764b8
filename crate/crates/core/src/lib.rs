//! Pair-based and mean-field deep metric learning losses with closed-form
//! gradients, plus the machinery around them: small embedding models,
//! optimizers, class-balanced sampling, k-NN retrieval metrics, a training
//! engine with checkpoints, a wall-time scaling harness and the
//! infinite-range magnet that motivates the mean-field construction.
//!
//! All arithmetic is `f64`. Heavy inner loops run on rayon when the
//! `parallel` feature is enabled (the default); reductions always happen in
//! a fixed order, so results are bit-identical with and without it.

pub mod bench;
pub mod data;
pub mod error;
pub mod losses;
pub mod magnet;
pub mod matrix;
pub mod meanfield;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod optim;
pub mod par;
pub mod train;

pub use error::{Error, Result};
pub use losses::{Batch, LossResult, LossSpec};
pub use matrix::Matrix;
pub use meanfield::{InitScheme, MeanFieldBank};
pub use numerics::DistanceKind;
