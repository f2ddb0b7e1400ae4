//! Model and search-space configuration files.
//!
//! Both formats are TOML with a mandatory `schema_version`; unknown keys
//! are errors.

use std::collections::BTreeMap;

use clap::ValueEnum;
use gridcast_core::eval::{Sample, SearchSpace};
use gridcast_core::WindowKind;
use gridcast_models::{ArimaConfig, LstmConfig, ModelConfig, NaiveConfig, TftConfig};
use serde::{Deserialize, Serialize};

use crate::dataset::SCHEMA_VERSION;
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    Tft,
    Lstm,
    Arima,
    Naive,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Tft => "tft",
            ModelKind::Lstm => "lstm",
            ModelKind::Arima => "arima",
            ModelKind::Naive => "naive",
        }
    }
}

/// Reference configuration for `kind`; week-ahead models read one week of
/// input.
pub fn default_model_config(kind: ModelKind, horizon: WindowKind) -> ModelConfig {
    let h = horizon.horizon();
    match kind {
        ModelKind::Tft => ModelConfig::Tft(TftConfig {
            horizon: h,
            input_window: TftConfig::reference_de_day().input_window.max(h),
            ..TftConfig::reference_de_day()
        }),
        ModelKind::Lstm => ModelConfig::Lstm(LstmConfig {
            horizon: h,
            input_window: LstmConfig::reference_de_day().input_window.max(h),
            ..LstmConfig::reference_de_day()
        }),
        ModelKind::Arima => ModelConfig::Arima(ArimaConfig {
            horizon: h,
            ..ArimaConfig::default()
        }),
        ModelKind::Naive => ModelConfig::Naive(NaiveConfig::new(h)),
    }
}

fn check_version(table: &mut toml::Table, what: &str) -> Result<(), CliError> {
    match table.remove("schema_version") {
        Some(toml::Value::Integer(v)) if v == SCHEMA_VERSION as i64 => Ok(()),
        Some(v) => Err(CliError::invalid(format!(
            "{what}: schema_version {v} is not supported (expected {SCHEMA_VERSION})"
        ))),
        None => Err(CliError::invalid(format!("{what}: missing schema_version"))),
    }
}

/// Parse a model configuration file. `model` and `horizon` from the
/// command line fill in missing keys and must agree with present ones.
pub fn parse_model_config(
    text: &str,
    model: Option<ModelKind>,
    horizon: Option<WindowKind>,
) -> Result<ModelConfig, CliError> {
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::invalid(format!("model config: {}", e.message())))?;
    check_version(&mut table, "model config")?;
    match (table.get("model"), model) {
        (Some(toml::Value::String(found)), Some(flag)) if found != flag.as_str() => {
            return Err(CliError::invalid(format!(
                "model config is for `{found}` but --model is `{}`",
                flag.as_str()
            )));
        }
        (None, Some(flag)) => {
            table.insert("model".into(), flag.as_str().into());
        }
        (None, None) => return Err(CliError::invalid("model config: missing `model`")),
        _ => {}
    }
    match (table.get("horizon"), horizon) {
        (Some(toml::Value::Integer(found)), Some(flag)) if *found != flag.horizon() as i64 => {
            return Err(CliError::invalid(format!(
                "model config horizon {found} contradicts --horizon {} ({} hours)",
                flag.as_str(),
                flag.horizon()
            )));
        }
        (None, Some(flag)) => {
            table.insert("horizon".into(), (flag.horizon() as i64).into());
        }
        _ => {}
    }
    let config: ModelConfig = toml::Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| CliError::invalid(format!("model config: {}", e.message())))?;
    config.validate()?;
    Ok(config)
}

/// TOML rendering of a configuration, loadable by [`parse_model_config`].
pub fn render_model_config(config: &ModelConfig) -> String {
    let mut table = toml::Table::new();
    table.insert("schema_version".into(), (SCHEMA_VERSION as i64).into());
    let body = toml::Value::try_from(config).expect("config is a table");
    if let toml::Value::Table(t) = body {
        table.extend(t);
    }
    toml::to_string(&table).expect("table renders")
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct SpaceFile {
    schema_version: u32,
    #[serde(default)]
    budget: Option<usize>,
    #[serde(default)]
    seed: Option<u64>,
    params: BTreeMap<String, Vec<f64>>,
}

/// Parse a search-space file; `budget` and `seed` flags win over the file.
pub fn parse_search_space(
    text: &str,
    budget: Option<usize>,
    seed: Option<u64>,
) -> Result<SearchSpace, CliError> {
    let file: SpaceFile =
        toml::from_str(text).map_err(|e| CliError::invalid(format!("search space: {}", e.message())))?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(CliError::invalid(format!(
            "search space: schema_version {} is not supported (expected {SCHEMA_VERSION})",
            file.schema_version
        )));
    }
    let space = SearchSpace {
        params: file.params,
        budget: budget.or(file.budget).unwrap_or(10),
        seed: seed.or(file.seed).unwrap_or(0),
    };
    space.validate()?;
    Ok(space)
}

/// Override fields of `base` with a sampled configuration. Every sampled
/// name must be a field of the model; integer fields need integral values.
pub fn apply_sample(base: &ModelConfig, sample: &Sample) -> Result<ModelConfig, CliError> {
    let mut value = serde_json::to_value(base).expect("config serializes");
    let fields = value.as_object_mut().expect("config is an object");
    for (name, &v) in sample {
        let slot = fields
            .get_mut(name)
            .filter(|_| name != "model")
            .ok_or_else(|| CliError::invalid(format!("`{name}` is not a {} hyperparameter", base.name())))?;
        *slot = if slot.is_u64() {
            if v < 0.0 || v.fract() != 0.0 {
                return Err(CliError::invalid(format!(
                    "`{name}` needs a whole number, got {v}"
                )));
            }
            serde_json::Value::from(v as u64)
        } else {
            serde_json::Value::from(v)
        };
    }
    let config: ModelConfig = serde_json::from_value(value)
        .map_err(|e| CliError::invalid(format!("sampled configuration: {e}")))?;
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_fill_missing_keys() {
        let cfg = parse_model_config(
            "schema_version = 1\nhidden_size = 8\nattention_heads = 2\nlstm_layers = 1\ninput_window = 48\ndropout = 0.0\nbatch_size = 16\n",
            Some(ModelKind::Tft),
            Some(WindowKind::Week),
        )
        .unwrap();
        assert_eq!(cfg.name(), "tft");
        assert_eq!(cfg.horizon(), 168);
    }

    #[test]
    fn zero_hidden_size_is_named() {
        let err = parse_model_config(
            "schema_version = 1\nmodel = \"lstm\"\nhidden_size = 0\nnum_layers = 1\ninput_window = 48\ndropout = 0.0\nbatch_size = 16\nlearning_rate = 0.01\nhorizon = 24\n",
            None,
            None,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 1);
        assert!(err.to_string().contains("hidden_size"), "{err}");
    }

    #[test]
    fn typos_and_contradictions_are_rejected() {
        let base = "schema_version = 1\nmodel = \"arima\"\np = 1\nd = 1\nq = 1\n";
        assert!(parse_model_config(base, None, Some(WindowKind::Day)).is_ok());
        let typo = format!("{base}qq = 2\n");
        assert!(parse_model_config(&typo, None, None)
            .unwrap_err()
            .to_string()
            .contains("qq"));
        assert!(parse_model_config(base, Some(ModelKind::Tft), None).is_err());
        let week = format!("{base}horizon = 168\n");
        assert!(parse_model_config(&week, None, Some(WindowKind::Day)).is_err());
        assert!(parse_model_config(&base.replace("schema_version = 1\n", ""), None, None).is_err());
    }

    #[test]
    fn rendered_configs_parse_back() {
        for kind in [
            ModelKind::Tft,
            ModelKind::Lstm,
            ModelKind::Arima,
            ModelKind::Naive,
        ] {
            for h in [WindowKind::Day, WindowKind::Week] {
                let cfg = default_model_config(kind, h);
                assert_eq!(
                    parse_model_config(&render_model_config(&cfg), None, None).unwrap(),
                    cfg
                );
            }
        }
    }

    #[test]
    fn week_horizon_is_168() {
        assert_eq!(
            default_model_config(ModelKind::Tft, WindowKind::Week).horizon(),
            168
        );
    }

    #[test]
    fn samples_override_fields() {
        let base = default_model_config(ModelKind::Tft, WindowKind::Day);
        let sample: Sample = [("hidden_size".to_string(), 32.0), ("dropout".to_string(), 0.3)].into();
        let ModelConfig::Tft(c) = apply_sample(&base, &sample).unwrap() else {
            panic!()
        };
        assert_eq!((c.hidden_size, c.dropout), (32, 0.3));
        let bad: Sample = [("hiden".to_string(), 1.0)].into();
        assert!(apply_sample(&base, &bad).is_err());
        let frac: Sample = [("hidden_size".to_string(), 1.5)].into();
        assert!(apply_sample(&base, &frac).is_err());
    }

    #[test]
    fn default_space_files_match_builtin_lists() {
        let text = "schema_version = 1\nbudget = 3\n[params]\nattention_heads = [1, 4]\n";
        let s = parse_search_space(text, None, Some(9)).unwrap();
        assert_eq!((s.budget, s.seed), (3, 9));
        assert_eq!(s.params["attention_heads"], [1.0, 4.0]);
    }
}
