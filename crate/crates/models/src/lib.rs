//! Forecasting models: Temporal Fusion Transformer, LSTM, ARIMA and a
//! seasonal naive baseline, behind one trained-model type.

mod arima;
mod config;
mod data;
mod error;
mod lstm;
mod model;
mod naive;
mod tft;
mod train;

pub use arima::{arima_fit, min_length as arima_min_length, ArimaFit};
pub use config::{ArimaConfig, LstmConfig, ModelConfig, NaiveConfig, TftConfig};
pub use data::SeriesScaling;
pub use error::ModelError;
pub use gridcast_nn::GradCheckReport;
pub use model::{
    arima_train, lstm_train, tft_gradient_error, tft_train, train, TrainOptions, TrainedModel,
    VariableImportance,
};
pub use naive::seasonal_naive;
pub use train::EpochRecord;
