use std::path::PathBuf;

use clap::Args;
use gridcast_core::eval::{random_search, SearchSpace};
use gridcast_core::preprocess::{CovariateFrame, Level};
use gridcast_core::{SplitSpec, WindowKind};
use gridcast_models::{train, TrainOptions, TrainedModel};

use crate::config::{
    apply_sample, default_model_config, parse_model_config, parse_search_space, render_model_config,
    ModelKind,
};
use crate::dataset::{resolve_root, Dataset};
use crate::evaluation::evaluate_model;
use crate::manifest::{digest_file, RunDir};
use crate::{CliError, OutArgs};

/// Share of the training span used to fit trials; the rest scores them.
const SEARCH_TRAIN_FRACTION: f64 = 0.9;

#[derive(Debug, Args)]
pub struct SearchArgs {
    /// Dataset directory holding dataset.toml (default: GRIDCAST_DATA_DIR).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub model: ModelKind,
    #[arg(long, default_value = "grid")]
    pub level: Level,
    #[arg(long, default_value = "day")]
    pub horizon: WindowKind,
    /// Search-space TOML; defaults to the built-in lists for the model.
    #[arg(long)]
    pub space: Option<PathBuf>,
    /// Base model configuration the samples override.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub budget: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutArgs,
}

fn csv_cell(v: f64) -> String {
    format!("{v}")
}

pub fn run(args: SearchArgs, arguments: Vec<String>, threads: usize) -> Result<(), CliError> {
    let root = resolve_root(args.dataset.as_deref())?;
    let dataset = Dataset::load(&root)?;
    let mut inputs = dataset.inputs.clone();
    let space = match &args.space {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            inputs.push(digest_file(path)?);
            parse_search_space(&text, args.budget, args.seed)?
        }
        None => {
            let (budget, seed) = (args.budget.unwrap_or(10), args.seed.unwrap_or(0));
            match args.model {
                ModelKind::Tft => SearchSpace::tft_default(args.horizon, budget, seed),
                ModelKind::Lstm => SearchSpace::lstm_default(args.horizon, budget, seed),
                other => {
                    return Err(CliError::invalid(format!(
                        "no built-in search space for {}; pass --space",
                        other.as_str()
                    )))
                }
            }
        }
    };
    let base = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            inputs.push(digest_file(path)?);
            parse_model_config(&text, Some(args.model), Some(args.horizon))?
        }
        None => default_model_config(args.model, args.horizon),
    };

    // Trials never see the test span.
    let train_len = dataset.train_len()?;
    let frames: Vec<CovariateFrame> = dataset
        .frames(args.level)?
        .iter()
        .map(|f| f.slice(0, train_len))
        .collect();
    let split = SplitSpec::fraction(SEARCH_TRAIN_FRACTION)?;
    let fit_len = split.train_len(&frames[0].index)?;
    let aggregate = args.level == Level::Substation;
    let outcome = random_search(
        &space,
        threads,
        |sample, seed| -> Result<TrainedModel, CliError> {
            let config = apply_sample(&base, sample)?;
            Ok(train(&config, &frames, &split, seed, TrainOptions::default())?)
        },
        |model| {
            let reports = evaluate_model(
                model,
                &frames,
                fit_len,
                dataset.calendar_zone,
                aggregate,
                &dataset.spec.name,
                1,
            )?;
            Ok(reports[0].1.summary.mape.mean)
        },
    )?;
    for w in &outcome.warnings {
        log::warn!("{w:?}");
    }

    let names: Vec<&String> = space.params.keys().collect();
    let mut csv = String::from("rank,trial,seed,validation_mape,runtime_secs,error");
    for n in &names {
        csv.push(',');
        csv.push_str(n);
    }
    csv.push('\n');
    for (rank, t) in outcome.ranked.iter().enumerate() {
        let error = t.error.as_deref().unwrap_or("").replace(['"', '\n'], " ");
        csv.push_str(&format!(
            "{},{},{},{},{},\"{}\"",
            rank + 1,
            t.index,
            t.seed,
            t.score.map(csv_cell).unwrap_or_default(),
            t.runtime_secs,
            error
        ));
        for n in &names {
            csv.push(',');
            csv.push_str(&csv_cell(t.config[*n]));
        }
        csv.push('\n');
    }
    let mut run = RunDir::create(args.out.out.as_deref(), "search", arguments)?;
    run.write("trials.csv", csv.as_bytes())?;
    match outcome.best() {
        Some(best) => {
            let config = apply_sample(&base, &best.config)?;
            let text = render_model_config(&config);
            run.write("best.toml", text.as_bytes())?;
            println!(
                "best trial {} (validation MAPE {:.3}):\n{text}",
                best.index,
                best.score.expect("best has a score")
            );
        }
        None => log::warn!("every trial failed"),
    }
    let out = run.root.clone();
    run.finish(None, vec![space.seed], threads, inputs)?;
    println!("{}", out.display());
    Ok(())
}
