//! Model hyperparameters. Field names match the configuration files.

use serde::{Deserialize, Serialize};

use crate::ModelError;

fn default_tft_lr() -> f64 {
    1e-3
}
fn default_max_epochs() -> usize {
    100
}
fn default_patience() -> usize {
    10
}
fn default_stride() -> usize {
    1
}

fn check_common(
    input_window: usize,
    horizon: usize,
    dropout: f64,
    batch_size: usize,
    learning_rate: f64,
    max_epochs: usize,
    window_stride: usize,
) -> Result<(), ModelError> {
    if input_window == 0 {
        return Err(ModelError::config("input_window", "must be at least 1"));
    }
    if horizon != 24 && horizon != 168 {
        return Err(ModelError::config(
            "horizon",
            format!("must be 24 or 168, got {horizon}"),
        ));
    }
    if !(0.0..1.0).contains(&dropout) {
        return Err(ModelError::config(
            "dropout",
            format!("must lie in [0, 1), got {dropout}"),
        ));
    }
    if batch_size == 0 {
        return Err(ModelError::config("batch_size", "must be at least 1"));
    }
    if !(learning_rate > 0.0 && learning_rate.is_finite()) {
        return Err(ModelError::config("learning_rate", "must be positive"));
    }
    if max_epochs == 0 {
        return Err(ModelError::config("max_epochs", "must be at least 1"));
    }
    if window_stride == 0 {
        return Err(ModelError::config("window_stride", "must be at least 1"));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TftConfig {
    pub attention_heads: usize,
    pub hidden_size: usize,
    pub lstm_layers: usize,
    pub input_window: usize,
    pub dropout: f64,
    pub batch_size: usize,
    #[serde(default = "default_tft_lr")]
    pub learning_rate: f64,
    pub horizon: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Hours between consecutive training origins.
    #[serde(default = "default_stride")]
    pub window_stride: usize,
}

impl TftConfig {
    /// Grid-level day-ahead reference row (consumption + calendar, DE).
    pub fn reference_de_day() -> Self {
        Self {
            attention_heads: 1,
            hidden_size: 64,
            lstm_layers: 2,
            input_window: 24,
            dropout: 0.1,
            batch_size: 32,
            learning_rate: default_tft_lr(),
            horizon: 24,
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            window_stride: 1,
        }
    }

    /// Smallest useful configuration, used for tests and smoke runs.
    pub fn tiny(horizon: usize) -> Self {
        Self {
            attention_heads: 1,
            hidden_size: 8,
            lstm_layers: 1,
            input_window: 48,
            dropout: 0.0,
            batch_size: 32,
            learning_rate: 1e-2,
            horizon,
            max_epochs: 30,
            patience: 5,
            window_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_size == 0 {
            return Err(ModelError::config("hidden_size", "must be at least 1"));
        }
        if self.attention_heads == 0 {
            return Err(ModelError::config("attention_heads", "must be at least 1"));
        }
        if !self.hidden_size.is_multiple_of(self.attention_heads) {
            return Err(ModelError::config(
                "attention_heads",
                format!("must divide hidden_size {}", self.hidden_size),
            ));
        }
        if self.lstm_layers == 0 {
            return Err(ModelError::config("lstm_layers", "must be at least 1"));
        }
        check_common(
            self.input_window,
            self.horizon,
            self.dropout,
            self.batch_size,
            self.learning_rate,
            self.max_epochs,
            self.window_stride,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LstmConfig {
    pub hidden_size: usize,
    pub num_layers: usize,
    pub input_window: usize,
    pub dropout: f64,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub horizon: usize,
    #[serde(default = "default_max_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_stride")]
    pub window_stride: usize,
}

impl LstmConfig {
    /// Grid-level day-ahead reference row (consumption + calendar, DE).
    pub fn reference_de_day() -> Self {
        Self {
            hidden_size: 64,
            num_layers: 2,
            input_window: 48,
            dropout: 0.2,
            batch_size: 10,
            learning_rate: 0.01,
            horizon: 24,
            max_epochs: default_max_epochs(),
            patience: default_patience(),
            window_stride: 1,
        }
    }

    pub fn tiny(horizon: usize) -> Self {
        Self {
            hidden_size: 16,
            num_layers: 1,
            input_window: 48,
            dropout: 0.0,
            batch_size: 32,
            learning_rate: 1e-2,
            horizon,
            max_epochs: 30,
            patience: 5,
            window_stride: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.hidden_size == 0 {
            return Err(ModelError::config("hidden_size", "must be at least 1"));
        }
        if self.num_layers == 0 {
            return Err(ModelError::config("num_layers", "must be at least 1"));
        }
        check_common(
            self.input_window,
            self.horizon,
            self.dropout,
            self.batch_size,
            self.learning_rate,
            self.max_epochs,
            self.window_stride,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArimaConfig {
    pub p: usize,
    pub d: usize,
    pub q: usize,
    #[serde(default = "ArimaConfig::default_horizon")]
    pub horizon: usize,
}

impl Default for ArimaConfig {
    fn default() -> Self {
        Self {
            p: 2,
            d: 1,
            q: 2,
            horizon: 24,
        }
    }
}

impl ArimaConfig {
    fn default_horizon() -> usize {
        24
    }

    /// `p + q = 0` is accepted only with differencing (a random walk with
    /// drift); otherwise there is nothing to estimate.
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.p + self.q == 0 && self.d == 0 {
            return Err(ModelError::config("p", "p + q must be at least 1 when d = 0"));
        }
        if self.d > 2 {
            return Err(ModelError::config(
                "d",
                "differencing order above 2 is not supported",
            ));
        }
        if self.horizon == 0 {
            return Err(ModelError::config("horizon", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NaiveConfig {
    #[serde(default = "NaiveConfig::default_season")]
    pub season: usize,
    pub horizon: usize,
}

impl NaiveConfig {
    fn default_season() -> usize {
        168
    }

    pub fn new(horizon: usize) -> Self {
        Self { season: 168, horizon }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.season == 0 {
            return Err(ModelError::config("season", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(ModelError::config("horizon", "must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelConfig {
    Tft(TftConfig),
    Lstm(LstmConfig),
    Arima(ArimaConfig),
    Naive(NaiveConfig),
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            ModelConfig::Tft(c) => c.validate(),
            ModelConfig::Lstm(c) => c.validate(),
            ModelConfig::Arima(c) => c.validate(),
            ModelConfig::Naive(c) => c.validate(),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ModelConfig::Tft(_) => "tft",
            ModelConfig::Lstm(_) => "lstm",
            ModelConfig::Arima(_) => "arima",
            ModelConfig::Naive(_) => "naive",
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            ModelConfig::Tft(c) => c.horizon,
            ModelConfig::Lstm(c) => c.horizon,
            ModelConfig::Arima(c) => c.horizon,
            ModelConfig::Naive(c) => c.horizon,
        }
    }

    /// Past hours a forecast needs; ARIMA and naive use the whole history.
    pub fn input_window(&self) -> usize {
        match self {
            ModelConfig::Tft(c) => c.input_window,
            ModelConfig::Lstm(c) => c.input_window,
            ModelConfig::Arima(_) => 1,
            ModelConfig::Naive(c) => c.season,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_hidden_names_field() {
        let mut c = TftConfig::tiny(24);
        c.hidden_size = 0;
        match c.validate() {
            Err(ModelError::Config { field, .. }) => assert_eq!(field, "hidden_size"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reference_rows_are_valid() {
        TftConfig::reference_de_day().validate().unwrap();
        LstmConfig::reference_de_day().validate().unwrap();
        ArimaConfig::default().validate().unwrap();
    }

    #[test]
    fn heads_must_divide_hidden() {
        let mut c = TftConfig::tiny(24);
        c.attention_heads = 3;
        assert!(matches!(
            c.validate(),
            Err(ModelError::Config {
                field: "attention_heads",
                ..
            })
        ));
    }

    #[test]
    fn horizon_is_day_or_week() {
        let mut c = LstmConfig::tiny(24);
        c.horizon = 48;
        assert!(matches!(
            c.validate(),
            Err(ModelError::Config { field: "horizon", .. })
        ));
    }

    #[test]
    fn arima_orders() {
        let c = ArimaConfig {
            p: 0,
            d: 0,
            q: 0,
            horizon: 24,
        };
        assert!(c.validate().is_err());
        let c = ArimaConfig {
            p: 0,
            d: 1,
            q: 0,
            horizon: 24,
        };
        assert!(c.validate().is_ok());
    }

    #[test]
    fn tagged_round_trip() {
        let c = ModelConfig::Tft(TftConfig::tiny(168));
        let s = serde_json::to_string(&c).unwrap();
        assert!(s.contains("\"model\":\"tft\""));
        assert_eq!(serde_json::from_str::<ModelConfig>(&s).unwrap(), c);
    }
}
