//! LSTM forecasters used to extend short series.
//!
//! Two heads share the same LSTM encoder: the stateless forecaster emits the
//! whole target block at once, the recursive one predicts a single step and
//! feeds it back. Both train on sliding windows from the training subjects
//! only and are stored as TSAF checkpoints.

mod checkpoint;
mod lstm;
mod models;
mod train;

pub use checkpoint::{load_checkpoint, load_checkpoint_as, save_checkpoint, CheckpointMeta, ForecasterCheckpoint};
pub use lstm::{lstm_backward, lstm_forward, lstm_step, LstmParams, LstmStack, LstmTrace};
pub use models::{ForecastMode, Forecaster, RecursiveForecaster, StatelessForecaster};
pub use train::{evaluate_forecaster, loss_log_csv, train_forecaster, ForecastTrainConfig, ForecastTraining, LossRow};
