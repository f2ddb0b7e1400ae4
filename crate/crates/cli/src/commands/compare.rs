use std::path::{Path, PathBuf};

use clap::Args;
use gridcast_core::eval::{check_same_windows, read_scores_csv, welch_ttest, WindowScore};
use serde::Serialize;

use crate::manifest::{digest_file, RunDir};
use crate::{CliError, OutArgs};

#[derive(Debug, Args)]
pub struct CompareArgs {
    /// First report: an evaluate run directory or its scores.csv.
    pub a: PathBuf,
    /// Second report.
    pub b: PathBuf,
    #[command(flatten)]
    pub out: OutArgs,
}

#[derive(Debug, Serialize)]
struct Comparison {
    a: String,
    b: String,
    windows: usize,
    mean_mape_a: f64,
    mean_mape_b: f64,
    t: f64,
    df: f64,
    p: f64,
    p_display: String,
    /// Positive when `a` has the lower MAPE.
    cohens_d: f64,
}

fn scores_path(p: &Path) -> PathBuf {
    if p.is_dir() {
        p.join("scores.csv")
    } else {
        p.to_path_buf()
    }
}

fn read(path: &Path) -> Result<Vec<WindowScore>, CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    read_scores_csv(file).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

pub fn run(args: CompareArgs, arguments: Vec<String>, threads: usize) -> Result<(), CliError> {
    let (pa, pb) = (scores_path(&args.a), scores_path(&args.b));
    let (a, b) = (read(&pa)?, read(&pb)?);
    check_same_windows(&a, &b)?;
    let mape = |s: &[WindowScore]| s.iter().map(|w| w.mape).collect::<Vec<_>>();
    let (ma, mb) = (mape(&a), mape(&b));
    let r = welch_ttest(&ma, &mb)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let result = Comparison {
        a: pa.display().to_string(),
        b: pb.display().to_string(),
        windows: a.len(),
        mean_mape_a: mean(&ma),
        mean_mape_b: mean(&mb),
        t: r.t,
        df: r.df,
        p: r.p,
        p_display: r.p_display(),
        cohens_d: r.cohens_d,
    };
    let mut run = RunDir::create(args.out.out.as_deref(), "compare", arguments)?;
    let json = serde_json::to_string_pretty(&result).expect("comparison serializes");
    run.write("significance.json", json.as_bytes())?;
    println!(
        "t({:.2}) = {:.2}, p {}, d = {:.2} over {} windows",
        r.df,
        r.t,
        r.p_display(),
        r.cohens_d,
        a.len()
    );
    let out = run.root.clone();
    run.finish(
        None,
        Vec::new(),
        threads,
        vec![digest_file(&pa)?, digest_file(&pb)?],
    )?;
    println!("{}", out.display());
    Ok(())
}
