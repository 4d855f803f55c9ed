//! Dynamic-forecasting augmentation for multivariate time series.
//!
//! An LSTM forecaster (stateless block or recursive one-step) extends every
//! subject's series past its end; three age regressors (multi-channel CNN,
//! CNN with multi-head attention, time-attention LSTM) are then trained on
//! the original and extended series under subject-level k-fold
//! cross-validation to measure whether the extension helps.
//!
//! Modules, bottom-up:
//!
//! - [`numerics`]: matrices, activations, losses, Adam, gradient checking.
//! - [`dataset`]: records, CSV/binary IO, z-scoring, decimation, windows,
//!   subject splits, synthetic generator.
//! - [`forecast`]: LSTM with BPTT, both forecasters, training, checkpoints.
//! - [`predict`]: the three regressors, their training and MAE evaluation.
//! - [`pipeline`]: augmentation stage, dataset extension, paired
//!   cross-validation, step sweep, reports and run manifest.

pub mod container;
pub mod dataset;
pub mod error;
pub mod forecast;
pub mod numerics;
pub mod pipeline;
pub mod predict;
mod training;

pub use error::{Error, Result};
