//! Age regressors used to validate augmented datasets: a multi-channel
//! time-series CNN (optionally with two-head self-attention after pooling)
//! and a stacked LSTM with time attention, plus training and MAE evaluation.

mod attention;
mod checkpoint;
mod cnn;
mod conv;
mod model;
mod report;
mod talstm;
mod train;

pub use attention::{sdpa_backward, sdpa_forward, time_attention, Attended, MhaTrace, MultiHeadAttention, TimeAttention, TimeAttentionOutput};
pub use checkpoint::{load_predictor, predictor_from_container, predictor_to_container, save_predictor};
pub use cnn::{CnnModel, CnnShape, CnnTrace};
pub use conv::{
    conv1d, conv1d_backward, maxpool1d, maxpool1d_backward, pool_len, tower_lengths, Conv1d, ConvTower, Pooled, TowerTrace,
    POOL_KERNEL, POOL_PAD, POOL_STRIDE,
};
pub use model::{standardize_input, Predictor, PredictorArch, PredictorKind, PredictorNet};
pub use report::{mean_std, DatasetArm, EvalReport};
pub use talstm::{TalstmTrace, TimeAttentionLstm};
pub use train::{evaluate_mae, predict_ages, train_predictor, PredictorTrainConfig, PredictorTraining};
