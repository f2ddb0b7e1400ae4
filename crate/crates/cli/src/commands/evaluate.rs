use std::path::PathBuf;

use clap::Args;
use gridcast_core::preprocess::Level;
use gridcast_models::TrainedModel;

use crate::dataset::{resolve_root, Dataset};
use crate::evaluation::{evaluate_model, is_substation_model};
use crate::manifest::{digest_file, RunDir};
use crate::{CliError, OutArgs};

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Checkpoint file, or a train run directory holding model.ckpt.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Dataset directory holding dataset.toml (default: GRIDCAST_DATA_DIR).
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Sum substation forecasts to the grid before scoring (hierarchical level).
    #[arg(long)]
    pub aggregate: bool,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn run(args: EvaluateArgs, arguments: Vec<String>, threads: usize) -> Result<(), CliError> {
    let ckpt = if args.checkpoint.is_dir() {
        args.checkpoint.join("model.ckpt")
    } else {
        args.checkpoint.clone()
    };
    let model = TrainedModel::load(&ckpt)?;
    let root = resolve_root(args.dataset.as_deref())?;
    let dataset = Dataset::load(&root)?;
    let substation = is_substation_model(&model);
    if args.aggregate && !substation {
        return Err(CliError::invalid(
            "--aggregate needs a substation-level checkpoint",
        ));
    }
    let level = if substation {
        Level::Substation
    } else {
        Level::Grid
    };
    let frames = dataset.frames(level)?;
    let reports = evaluate_model(
        &model,
        &frames,
        dataset.train_len()?,
        dataset.calendar_zone,
        args.aggregate,
        &dataset.spec.name,
        threads,
    )?;

    let mut run = RunDir::create(args.out.out.as_deref(), "evaluate", arguments)?;
    let csv_err = |e: gridcast_core::eval::EvalError| CliError::invalid(e.to_string());
    for (label, report) in &reports {
        let prefix = if label.is_empty() {
            String::new()
        } else {
            format!("{label}/")
        };
        let mut scores = Vec::new();
        report.write_scores_csv(&mut scores).map_err(csv_err)?;
        run.write(&format!("{prefix}scores.csv"), &scores)?;
        let mut forecasts = Vec::new();
        report.write_forecasts_csv(&mut forecasts).map_err(csv_err)?;
        run.write(&format!("{prefix}forecasts.csv"), &forecasts)?;
        run.write(&format!("{prefix}summary.json"), report.summary_json().as_bytes())?;
        let s = &report.summary;
        println!(
            "{}{} {} {}: {} windows, MAPE {:.3} (± {:.3}), SMAPE {:.3}, RMSE {:.3}",
            prefix,
            s.model,
            s.level,
            s.horizon.as_str(),
            s.windows,
            s.mape.mean,
            s.mape.std,
            s.smape.mean,
            s.rmse.mean
        );
    }
    let mut inputs = dataset.inputs.clone();
    inputs.push(digest_file(&ckpt)?);
    inputs.push(digest_file(&ckpt.with_extension("json"))?);
    let out = run.root.clone();
    run.finish(None, vec![model.seed], threads, inputs)?;
    println!("{}", out.display());
    Ok(())
}
