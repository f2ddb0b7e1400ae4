use std::path::PathBuf;

use clap::Args;
use gridcast_core::preprocess::Level;
use gridcast_core::WindowKind;
use gridcast_models::{train, TrainOptions};

use crate::config::{default_model_config, parse_model_config, render_model_config, ModelKind};
use crate::dataset::{resolve_root, Dataset};
use crate::manifest::{digest_file, RunDir};
use crate::{CliError, OutArgs};

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory holding dataset.toml (default: GRIDCAST_DATA_DIR).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: ModelKind,
    /// `grid` trains on the grid total; `substation` trains one multi-series model.
    #[arg(long, default_value = "grid")]
    pub level: Level,
    /// `day` (24 h) or `week` (168 h).
    #[arg(long, default_value = "day")]
    pub horizon: WindowKind,
    /// Model configuration TOML; defaults to the reference configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train one parameter set per substation instead of a shared model.
    #[arg(long)]
    pub per_series: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn run(args: TrainArgs, arguments: Vec<String>, threads: usize) -> Result<(), CliError> {
    let root = resolve_root(args.dataset.as_deref())?;
    let dataset = Dataset::load(&root)?;
    let mut inputs = dataset.inputs.clone();
    let config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            inputs.push(digest_file(path)?);
            parse_model_config(&text, Some(args.model), Some(args.horizon))?
        }
        None => default_model_config(args.model, args.horizon),
    };
    let frames = dataset.frames(args.level)?;
    log::info!(
        "training {} on {} series of {} hours",
        config.name(),
        frames.len(),
        frames[0].len()
    );
    let model = train(
        &config,
        &frames,
        &dataset.split,
        args.seed,
        TrainOptions {
            per_series: args.per_series,
        },
    )?;

    let mut run = RunDir::create(args.out.out.as_deref(), "train", arguments)?;
    let (ckpt, sidecar) = model.to_bytes();
    run.write("model.ckpt", &ckpt)?;
    run.write("model.json", sidecar.as_bytes())?;
    run.write("config.toml", render_model_config(&config).as_bytes())?;
    let mut history = String::from("member,epoch,train_loss,val_loss\n");
    for r in &model.history {
        let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
        history.push_str(&format!("{},{},{},{}\n", r.member, r.epoch, r.train_loss, val));
    }
    run.write("history.csv", history.as_bytes())?;
    let hash = serde_json::from_str::<serde_json::Value>(&sidecar)
        .ok()
        .and_then(|v| v["config_hash"].as_str().map(String::from));
    let out = run.root.clone();
    run.finish(hash, vec![args.seed], threads, inputs)?;
    println!("{}", out.join("model.ckpt").display());
    Ok(())
}
