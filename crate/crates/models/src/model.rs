//! Trained forecasters, their forecasting entry points and persistence.

use std::path::{Path, PathBuf};

use gridcast_core::eval::derive_seed;
use gridcast_core::preprocess::{CovariateFrame, Horizon, Schema, WindowInput};
use gridcast_core::SplitSpec;
use gridcast_nn::{
    decode_checkpoint, encode_checkpoint, grad_check_report, GradCheckReport, ParameterStore, Tensor,
};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arima::{arima_fit, ArimaFit};
use crate::config::{ArimaConfig, LstmConfig, ModelConfig, TftConfig};
use crate::data::{check_schema, Batch, Origin, SeriesData, SeriesScaling};
use crate::lstm::LstmNet;
use crate::naive::seasonal_naive;
use crate::tft::TftNet;
use crate::train::{batch_loss, fit, predict, EpochRecord, FitSettings};
use crate::ModelError;

const SIDECAR_FORMAT: u32 = 1;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TrainOptions {
    /// Train one parameter set per series instead of one shared model.
    pub per_series: bool,
}

#[derive(Debug, Clone)]
enum Arch {
    Tft(Box<TftNet>),
    Lstm(LstmNet),
    Statistical,
}

#[derive(Debug, Clone)]
enum Params {
    Nets(Vec<ParameterStore>),
    Arima(Vec<ArimaFit>),
    None,
}

/// A fitted model; immutable after training and safe to share across
/// threads for forecasting.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub config: ModelConfig,
    pub schema: Schema,
    pub series: Vec<SeriesScaling>,
    pub per_series: bool,
    pub history: Vec<EpochRecord>,
    pub seed: u64,
    arch: Arch,
    params: Params,
}

/// Named, simplex-valued importance weights of a TFT forecast.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableImportance {
    pub past: Vec<(String, f64)>,
    pub future: Vec<(String, f64)>,
    pub statics: Vec<(String, f64)>,
    /// Mean attention paid by the horizon steps to each input hour.
    pub attention_past: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    format: u32,
    config: ModelConfig,
    config_hash: String,
    schema: Schema,
    series: Vec<SeriesScaling>,
    per_series: bool,
    seed: u64,
    history: Vec<EpochRecord>,
    #[serde(default)]
    arima: Vec<ArimaFit>,
}

fn config_hash(config: &ModelConfig, schema: &Schema) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(serde_json::to_vec(config).expect("config serializes"));
    h.update(serde_json::to_vec(schema).expect("schema serializes"));
    h.finalize().into()
}

fn build_arch(
    config: &ModelConfig,
    schema: &Schema,
    seed: u64,
) -> Result<(Arch, Option<ParameterStore>), ModelError> {
    let (n_past, n_known) = (schema.count(Horizon::Past), schema.count(Horizon::Future));
    Ok(match config {
        ModelConfig::Tft(c) => {
            let mut store = ParameterStore::new(seed);
            let net = TftNet::new(&mut store, c, n_past, n_known, &schema.static_cardinalities())?;
            (Arch::Tft(Box::new(net)), Some(store))
        }
        ModelConfig::Lstm(c) => {
            let mut store = ParameterStore::new(seed);
            let net = LstmNet::new(&mut store, c, n_past, n_known)?;
            (Arch::Lstm(net), Some(store))
        }
        _ => (Arch::Statistical, None),
    })
}

fn member_seed(seed: u64, member: usize, per_series: bool) -> u64 {
    if per_series {
        derive_seed(seed, member as u64)
    } else {
        seed
    }
}

fn fit_settings(config: &ModelConfig) -> Option<FitSettings> {
    match config {
        ModelConfig::Tft(c) => Some(FitSettings {
            k: c.input_window,
            h: c.horizon,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            max_epochs: c.max_epochs,
            patience: c.patience,
            stride: c.window_stride,
        }),
        ModelConfig::Lstm(c) => Some(FitSettings {
            k: c.input_window,
            h: c.horizon,
            batch_size: c.batch_size,
            learning_rate: c.learning_rate,
            max_epochs: c.max_epochs,
            patience: c.patience,
            stride: c.window_stride,
        }),
        _ => None,
    }
}

/// Train any model kind on `frames`, using only rows before the split.
pub fn train(
    config: &ModelConfig,
    frames: &[CovariateFrame],
    split: &SplitSpec,
    seed: u64,
    opts: TrainOptions,
) -> Result<TrainedModel, ModelError> {
    config.validate()?;
    let first = frames
        .first()
        .ok_or_else(|| ModelError::NoTrainingWindows("no series given".into()))?;
    for f in frames {
        check_schema(&first.schema, &f.schema)?;
    }
    let train_lens = frames
        .iter()
        .map(|f| split.train_len(&f.index))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| ModelError::config("split", e.to_string()))?;
    let series: Vec<SeriesScaling> = frames
        .iter()
        .zip(&train_lens)
        .map(|(f, &n)| SeriesScaling::fit(f, n))
        .collect();
    let schema = first.schema.clone();
    let per_series = opts.per_series && !matches!(config, ModelConfig::Naive(_));
    let (arch, _) = build_arch(config, &schema, seed)?;
    let mut history = Vec::new();
    let params = match config {
        ModelConfig::Tft(_) | ModelConfig::Lstm(_) => {
            let settings = fit_settings(config).expect("neural config");
            let data: Vec<SeriesData> = frames
                .iter()
                .zip(&series)
                .map(|(f, s)| SeriesData::new(s, &f.past_known, &f.future_known, &f.static_ids))
                .collect();
            let groups: Vec<Vec<usize>> = if per_series {
                (0..frames.len()).map(|i| vec![i]).collect()
            } else {
                vec![(0..frames.len()).collect()]
            };
            let mut stores = Vec::with_capacity(groups.len());
            for (member, group) in groups.iter().enumerate() {
                let mseed = member_seed(seed, member, per_series);
                let (_, store) = build_arch(config, &schema, mseed)?;
                let mut store = store.expect("neural model has parameters");
                let sub: Vec<SeriesData> = group.iter().map(|&i| data[i].clone()).collect();
                let lens: Vec<usize> = group.iter().map(|&i| train_lens[i]).collect();
                let h = match &arch {
                    Arch::Tft(net) => fit(net.as_ref(), &mut store, &sub, &lens, &settings, mseed, member)?,
                    Arch::Lstm(net) => fit(net, &mut store, &sub, &lens, &settings, mseed, member)?,
                    Arch::Statistical => unreachable!("neural config"),
                };
                history.extend(h);
                stores.push(store);
            }
            Params::Nets(stores)
        }
        ModelConfig::Arima(c) => Params::Arima(
            frames
                .iter()
                .zip(&train_lens)
                .map(|(f, &n)| arima_fit(&f.target()[..n], c))
                .collect::<Result<_, _>>()?,
        ),
        ModelConfig::Naive(_) => Params::None,
    };
    Ok(TrainedModel {
        config: config.clone(),
        schema,
        series,
        per_series,
        history,
        seed,
        arch,
        params,
    })
}

pub fn tft_train(
    config: &TftConfig,
    frames: &[CovariateFrame],
    split: &SplitSpec,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    train(
        &ModelConfig::Tft(config.clone()),
        frames,
        split,
        seed,
        TrainOptions::default(),
    )
}

pub fn lstm_train(
    config: &LstmConfig,
    frames: &[CovariateFrame],
    split: &SplitSpec,
    seed: u64,
) -> Result<TrainedModel, ModelError> {
    train(
        &ModelConfig::Lstm(config.clone()),
        frames,
        split,
        seed,
        TrainOptions::default(),
    )
}

/// Fit one ARIMA per series on its training span.
pub fn arima_train(
    config: &ArimaConfig,
    frames: &[CovariateFrame],
    split: &SplitSpec,
) -> Result<TrainedModel, ModelError> {
    train(
        &ModelConfig::Arima(config.clone()),
        frames,
        split,
        0,
        TrainOptions::default(),
    )
}

impl TrainedModel {
    pub fn name(&self) -> &'static str {
        self.config.name()
    }

    pub fn horizon(&self) -> usize {
        self.config.horizon()
    }

    pub fn input_window(&self) -> usize {
        self.config.input_window()
    }

    /// Parameters of a neural model (the first member when per-series).
    pub fn parameters(&self) -> Option<&ParameterStore> {
        match &self.params {
            Params::Nets(s) => s.first(),
            _ => None,
        }
    }

    pub fn arima_fits(&self) -> &[ArimaFit] {
        match &self.params {
            Params::Arima(f) => f,
            _ => &[],
        }
    }

    fn store_for(&self, series: usize) -> &ParameterStore {
        match &self.params {
            Params::Nets(s) if self.per_series => &s[series],
            Params::Nets(s) => &s[0],
            _ => unreachable!("neural model"),
        }
    }

    fn check_series(&self, frame: &CovariateFrame, series: usize) -> Result<(), ModelError> {
        check_schema(&self.schema, &frame.schema)?;
        match self.series.get(series) {
            Some(s) if s.id == frame.series_id => Ok(()),
            _ => Err(ModelError::UnknownSeries {
                index: series,
                id: frame.series_id.clone(),
            }),
        }
    }

    fn run_net(
        &self,
        data: &[SeriesData],
        series: usize,
        origins: &[Origin],
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        let (k, h) = (self.input_window(), self.horizon());
        let store = self.store_for(series);
        let raw = match &self.arch {
            Arch::Tft(net) => predict(net.as_ref(), store, data, origins, k, h)?,
            Arch::Lstm(net) => predict(net, store, data, origins, k, h)?,
            Arch::Statistical => unreachable!("neural model"),
        };
        let scale = &self.series[series];
        Ok(raw
            .into_iter()
            .map(|v| v.into_iter().map(|x| scale.target_from_unit(x)).collect())
            .collect())
    }

    /// Forecast `horizon` hours from each origin (a row position of
    /// `frame`), in original units.
    pub fn forecast_many(
        &self,
        frame: &CovariateFrame,
        series: usize,
        origins: &[usize],
    ) -> Result<Vec<Vec<f64>>, ModelError> {
        self.check_series(frame, series)?;
        let (k, h) = (self.input_window(), self.horizon());
        for &o in origins {
            if o < k {
                return Err(ModelError::WindowTooShort {
                    what: "past inputs",
                    needed: k,
                    got: o,
                });
            }
            if o + h > frame.len() && matches!(self.arch, Arch::Tft(_) | Arch::Lstm(_)) {
                return Err(ModelError::WindowTooShort {
                    what: "future-known inputs",
                    needed: h,
                    got: frame.len() - o,
                });
            }
        }
        match (&self.arch, &self.params) {
            (Arch::Tft(_) | Arch::Lstm(_), _) => {
                let data = vec![SeriesData::new(
                    &self.series[series],
                    &frame.past_known,
                    &frame.future_known,
                    &frame.static_ids,
                )];
                let origins: Vec<Origin> = origins
                    .iter()
                    .map(|&origin| Origin { series: 0, origin })
                    .collect();
                self.run_net(&data, series, &origins)
            }
            (_, Params::Arima(fits)) => {
                let target = frame.target();
                origins
                    .iter()
                    .map(|&o| fits[series].forecast(&target[..o], h))
                    .collect()
            }
            (_, _) => {
                let target = frame.target();
                let season = match &self.config {
                    ModelConfig::Naive(c) => c.season,
                    _ => unreachable!("naive model"),
                };
                origins
                    .iter()
                    .map(|&o| seasonal_naive(&target[..o], season, h))
                    .collect()
            }
        }
    }

    pub fn forecast(
        &self,
        frame: &CovariateFrame,
        series: usize,
        origin: usize,
    ) -> Result<Vec<f64>, ModelError> {
        Ok(self.forecast_many(frame, series, &[origin])?.remove(0))
    }

    /// Forecast from a self-contained window: `k` (or more) past rows and
    /// `past rows + horizon` future-known rows.
    pub fn forecast_window(&self, window: &WindowInput) -> Result<Vec<f64>, ModelError> {
        let (k, h) = (self.input_window(), self.horizon());
        let n_past = self.schema.count(Horizon::Past);
        let n_known = self.schema.count(Horizon::Future);
        if window.past_known.cols() != n_past {
            return Err(ModelError::WindowWidth {
                what: "past-known input",
                expected: n_past,
                got: window.past_known.cols(),
            });
        }
        let rows = window.past_known.rows();
        if rows < k {
            return Err(ModelError::WindowTooShort {
                what: "past inputs",
                needed: k,
                got: rows,
            });
        }
        let series = window.series;
        if series >= self.series.len() {
            return Err(ModelError::UnknownSeries {
                index: series,
                id: String::new(),
            });
        }
        match (&self.arch, &self.params) {
            (Arch::Tft(_) | Arch::Lstm(_), _) => {
                if window.known.cols() != n_known {
                    return Err(ModelError::WindowWidth {
                        what: "future-known input",
                        expected: n_known,
                        got: window.known.cols(),
                    });
                }
                if window.known.rows() != rows + h {
                    return Err(ModelError::WindowTooShort {
                        what: "future-known inputs",
                        needed: rows + h,
                        got: window.known.rows(),
                    });
                }
                let past = window.past_known.slice_rows(rows - k, k);
                let known = window.known.slice_rows(rows - k, k + h);
                let data = vec![SeriesData::new(
                    &self.series[series],
                    &past,
                    &known,
                    &window.static_ids,
                )];
                Ok(self
                    .run_net(&data, series, &[Origin { series: 0, origin: k }])?
                    .remove(0))
            }
            (_, Params::Arima(fits)) => fits[series].forecast(&window.past_known.column(0), h),
            (_, _) => {
                let season = match &self.config {
                    ModelConfig::Naive(c) => c.season,
                    _ => unreachable!("naive model"),
                };
                seasonal_naive(&window.past_known.column(0), season, h)
            }
        }
    }

    /// Variable selection weights and attention over the input window for
    /// the forecast made at `origin`.
    pub fn variable_importance(
        &self,
        frame: &CovariateFrame,
        series: usize,
        origin: usize,
    ) -> Result<VariableImportance, ModelError> {
        let Arch::Tft(net) = &self.arch else {
            return Err(ModelError::Unsupported("variable importance"));
        };
        self.check_series(frame, series)?;
        let (k, h) = (self.input_window(), self.horizon());
        if origin < k || origin + h > frame.len() {
            return Err(ModelError::WindowTooShort {
                what: "inputs",
                needed: k + h,
                got: frame.len().min(origin),
            });
        }
        let data = vec![SeriesData::new(
            &self.series[series],
            &frame.past_known,
            &frame.future_known,
            &frame.static_ids,
        )];
        let batch = Batch::assemble(&data, &[Origin { series: 0, origin }], k, h);
        let mut tape = gridcast_nn::Tape::new();
        let out = net.run(&mut tape, self.store_for(series), &batch)?;
        let mean_cols = |v: gridcast_nn::Var| -> Vec<f64> {
            let (rows, cols) = tape.shape(v);
            let d = tape.data(v);
            (0..cols)
                .map(|c| (0..rows).map(|r| d[r * cols + c]).sum::<f64>() / rows as f64)
                .collect()
        };
        let named = |names: Vec<&str>, w: Vec<f64>| -> Vec<(String, f64)> {
            names.into_iter().map(String::from).zip(w).collect()
        };
        let attention = mean_cols(out.attention[0]);
        Ok(VariableImportance {
            past: named(self.schema.names(Horizon::Past), mean_cols(out.past_weights)),
            future: named(self.schema.names(Horizon::Future), mean_cols(out.known_weights)),
            statics: out
                .static_weights
                .map(|w| named(self.schema.names(Horizon::Static), mean_cols(w)))
                .unwrap_or_default(),
            attention_past: attention[..k].to_vec(),
        })
    }

    fn member_stores(&self) -> &[ParameterStore] {
        match &self.params {
            Params::Nets(s) => s,
            _ => &[],
        }
    }

    /// Binary named-tensor checkpoint and its JSON sidecar.
    pub fn to_bytes(&self) -> (Vec<u8>, String) {
        let hash = config_hash(&self.config, &self.schema);
        let named: Vec<(String, &Tensor)> = self
            .member_stores()
            .iter()
            .enumerate()
            .flat_map(|(m, store)| store.named_values().map(move |(n, t)| (format!("m{m}/{n}"), t)))
            .collect();
        let ckpt = encode_checkpoint(self.seed, &hash, named.iter().map(|(n, t)| (n.as_str(), *t)));
        let sidecar = Sidecar {
            format: SIDECAR_FORMAT,
            config: self.config.clone(),
            config_hash: hex::encode(hash),
            schema: self.schema.clone(),
            series: self.series.clone(),
            per_series: self.per_series,
            seed: self.seed,
            history: self.history.clone(),
            arima: self.arima_fits().to_vec(),
        };
        let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
        (ckpt, json)
    }

    pub fn from_bytes(ckpt: &[u8], sidecar: &str) -> Result<Self, ModelError> {
        let side: Sidecar =
            serde_json::from_str(sidecar).map_err(|e| ModelError::Checkpoint(format!("sidecar: {e}")))?;
        if side.format != SIDECAR_FORMAT {
            return Err(ModelError::Checkpoint(format!(
                "unsupported sidecar format {}",
                side.format
            )));
        }
        side.config.validate()?;
        let decoded = decode_checkpoint(ckpt)?;
        let hash = config_hash(&side.config, &side.schema);
        if hex::encode(hash) != side.config_hash || decoded.config_hash != hash {
            return Err(ModelError::Checkpoint("configuration hash does not match".into()));
        }
        if decoded.seed != side.seed {
            return Err(ModelError::Checkpoint(
                "seed differs between checkpoint and sidecar".into(),
            ));
        }
        let (arch, _) = build_arch(&side.config, &side.schema, side.seed)?;
        let params = match arch {
            Arch::Tft(_) | Arch::Lstm(_) => {
                let members = if side.per_series { side.series.len() } else { 1 };
                let mut stores = Vec::with_capacity(members);
                for m in 0..members {
                    let (_, store) = build_arch(
                        &side.config,
                        &side.schema,
                        member_seed(side.seed, m, side.per_series),
                    )?;
                    let mut store = store.expect("neural model has parameters");
                    let prefix = format!("m{m}/");
                    store.load(
                        decoded
                            .tensors
                            .iter()
                            .filter_map(|(n, t)| n.strip_prefix(&prefix).map(|n| (n, t))),
                    )?;
                    stores.push(store);
                }
                let expected: usize = stores.iter().map(ParameterStore::len).sum();
                if decoded.tensors.len() != expected {
                    return Err(ModelError::Checkpoint(format!(
                        "{} tensors stored, model has {expected}",
                        decoded.tensors.len()
                    )));
                }
                Params::Nets(stores)
            }
            Arch::Statistical => match side.config {
                ModelConfig::Arima(_) => {
                    if side.arima.len() != side.series.len() {
                        return Err(ModelError::Checkpoint("one ARIMA fit per series expected".into()));
                    }
                    Params::Arima(side.arima)
                }
                _ => Params::None,
            },
        };
        Ok(Self {
            config: side.config,
            schema: side.schema,
            series: side.series,
            per_series: side.per_series,
            history: side.history,
            seed: side.seed,
            arch,
            params,
        })
    }

    /// Write `<stem>.ckpt` and `<stem>.json`.
    pub fn save(&self, stem: &Path) -> Result<(PathBuf, PathBuf), ModelError> {
        let (ckpt, json) = self.to_bytes();
        let ckpt_path = stem.with_extension("ckpt");
        let json_path = stem.with_extension("json");
        let io = |p: &Path| {
            let p = p.display().to_string();
            move |e: std::io::Error| ModelError::Io {
                path: p,
                message: e.to_string(),
            }
        };
        std::fs::write(&ckpt_path, ckpt).map_err(io(&ckpt_path))?;
        std::fs::write(&json_path, json).map_err(io(&json_path))?;
        Ok((ckpt_path, json_path))
    }

    /// Load a checkpoint written by [`TrainedModel::save`]; the sidecar is
    /// the `.json` file next to it.
    pub fn load(ckpt_path: &Path) -> Result<Self, ModelError> {
        let json_path = ckpt_path.with_extension("json");
        let read_err = |p: &Path| {
            let p = p.display().to_string();
            move |e: std::io::Error| ModelError::Io {
                path: p,
                message: e.to_string(),
            }
        };
        let ckpt = std::fs::read(ckpt_path).map_err(read_err(ckpt_path))?;
        let json = std::fs::read_to_string(&json_path).map_err(read_err(&json_path))?;
        Self::from_bytes(&ckpt, &json)
    }
}

/// Worst relative error between backpropagated and central-difference
/// gradients of the training loss of a freshly initialized TFT, over every
/// parameter. Dropout is off (evaluation tape). `origins` are
/// `(series, row)` pairs into `frames`.
pub fn tft_gradient_error(
    config: &TftConfig,
    frames: &[CovariateFrame],
    split: &SplitSpec,
    origins: &[(usize, usize)],
    seed: u64,
    eps: f64,
) -> Result<GradCheckReport, ModelError> {
    config.validate()?;
    let first = frames
        .first()
        .ok_or_else(|| ModelError::NoTrainingWindows("no series given".into()))?;
    let data = frames
        .iter()
        .map(|f| {
            let n = split
                .train_len(&f.index)
                .map_err(|e| ModelError::config("split", e.to_string()))?;
            let scale = SeriesScaling::fit(f, n);
            Ok(SeriesData::new(
                &scale,
                &f.past_known,
                &f.future_known,
                &f.static_ids,
            ))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    let (k, h) = (config.input_window, config.horizon);
    let origins: Vec<Origin> = origins
        .iter()
        .map(|&(series, origin)| Origin { series, origin })
        .collect();
    if let Some(o) = origins
        .iter()
        .find(|o| o.series >= frames.len() || o.origin < k || o.origin + h > frames[o.series].len())
    {
        return Err(ModelError::WindowTooShort {
            what: "gradient-check window",
            needed: k + h,
            got: o.origin,
        });
    }
    let (arch, store) = build_arch(&ModelConfig::Tft(config.clone()), &first.schema, seed)?;
    let (Arch::Tft(net), Some(mut store)) = (arch, store) else {
        unreachable!("TFT config builds a TFT");
    };
    let batch = Batch::assemble(&data, &origins, k, h);
    Ok(grad_check_report(&mut store, eps, |tape, store| {
        batch_loss(net.as_ref(), tape, store, &batch)
    })?)
}
