use chrono::NaiveDate;
use clap::{Args, ValueEnum};
use gridcast_core::ingest::{
    generate_synthetic, write_gefc_load, write_gefc_temperature, write_household_long, SyntheticConfig,
};

use crate::dataset::{CleanMode, DatasetSpec, LoadFormat, SplitConfig, DATASET_FILE, SCHEMA_VERSION};
use crate::manifest::RunDir;
use crate::{CliError, OutArgs};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SynthFormat {
    /// One long-format meter file per substation.
    Household,
    /// A single GEFC'12 wide load file.
    Gefc,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 8)]
    pub substations: usize,
    #[arg(long, default_value_t = 90)]
    pub days: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// First day (UTC).
    #[arg(long, default_value = "2021-01-04")]
    pub start: NaiveDate,
    #[arg(long, default_value_t = 20.0)]
    pub daily_amplitude: f64,
    #[arg(long, default_value_t = 10.0)]
    pub weekly_amplitude: f64,
    #[arg(long, default_value_t = 2.0)]
    pub temp_sensitivity: f64,
    #[arg(long, default_value_t = 2.0)]
    pub noise_std: f64,
    #[arg(long, value_enum, default_value_t = SynthFormat::Household)]
    pub format: SynthFormat,
    /// Days at the end held out for testing, recorded in dataset.toml.
    #[arg(long, default_value_t = 18)]
    pub test_days: usize,
    #[command(flatten)]
    pub out: OutArgs,
}

pub fn run(args: SynthArgs, arguments: Vec<String>, threads: usize) -> Result<(), CliError> {
    let config = SyntheticConfig {
        n_substations: args.substations,
        n_days: args.days,
        daily_amplitude: args.daily_amplitude,
        weekly_amplitude: args.weekly_amplitude,
        temp_sensitivity: args.temp_sensitivity,
        noise_std: args.noise_std,
        seed: args.seed,
        start: args.start,
    };
    let (set, temperature) = generate_synthetic(&config).map_err(CliError::invalid)?;
    if args.test_days == 0 || args.test_days >= args.days {
        return Err(CliError::invalid(format!(
            "--test-days must lie in 1..{} for a {}-day dataset",
            args.days, args.days
        )));
    }
    let mut run = RunDir::create(args.out.out.as_deref(), "synth", arguments)?;

    let load = match args.format {
        SynthFormat::Household => {
            for s in &set.substations {
                let mut buf = Vec::new();
                write_household_long(&mut buf, std::slice::from_ref(s))?;
                run.write(&format!("substations/{}.csv", s.id()), &buf)?;
            }
            "substations"
        }
        SynthFormat::Gefc => {
            let mut buf = Vec::new();
            write_gefc_load(&mut buf, &set.substations)?;
            run.write("load.csv", &buf)?;
            "load.csv"
        }
    };
    let mut buf = Vec::new();
    write_gefc_temperature(&mut buf, &temperature)?;
    run.write("temperature.csv", &buf)?;

    let spec = DatasetSpec {
        schema_version: SCHEMA_VERSION,
        name: format!("synthetic-{}x{}-seed{}", args.substations, args.days, args.seed),
        format: match args.format {
            SynthFormat::Household => LoadFormat::Household,
            SynthFormat::Gefc => LoadFormat::Gefc,
        },
        load: load.into(),
        temperature: "temperature.csv".into(),
        holidays: None,
        incidence: None,
        zone: "UTC".into(),
        harmonize_dst: false,
        clean: CleanMode::None,
        split: SplitConfig {
            test_days: Some(args.test_days),
            ..SplitConfig::default()
        },
    };
    let text = toml::to_string(&spec).expect("dataset spec renders");
    run.write(DATASET_FILE, text.as_bytes())?;
    let root = run.root.clone();
    run.finish(None, vec![args.seed], threads, Vec::new())?;
    println!("{}", root.display());
    Ok(())
}
