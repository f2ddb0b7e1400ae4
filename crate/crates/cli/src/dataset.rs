//! `dataset.toml` descriptions and the ingest + preprocessing pipeline
//! that turns them into model-ready frames.

use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, Duration, Utc};
use chrono_tz::Tz;
use gridcast_core::ingest::{read_gefc_load, read_gefc_temperature, read_household_long, read_incidence};
use gridcast_core::preprocess::{
    assemble_covariates, filter_low_consumption, harmonize_dst, interpolate_flagged, iqr_clean,
    CovariateFrame, HolidayCalendar, Level,
};
use gridcast_core::timeseries::parse_timestamp;
use gridcast_core::{aggregate_bottom_up, align, rebuild_grid, HierarchicalSet, Series, SplitSpec};
use serde::{Deserialize, Serialize};

use crate::manifest::{digest_file, FileDigest};
use crate::CliError;

pub const DATASET_FILE: &str = "dataset.toml";
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LoadFormat {
    /// Directory of long-format meter files, one file per substation.
    Household,
    /// One GEFC'12 wide load file, one zone per substation.
    Gefc,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CleanMode {
    #[default]
    None,
    /// Lower IQR fence per substation, then interpolation.
    Iqr,
}

/// Exactly one field must be set.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_days: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_start: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub schema_version: u32,
    pub name: String,
    pub format: LoadFormat,
    pub load: PathBuf,
    pub temperature: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holidays: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub incidence: Option<PathBuf>,
    /// IANA zone for calendar features and day boundaries.
    #[serde(default = "default_zone")]
    pub zone: String,
    #[serde(default)]
    pub harmonize_dst: bool,
    #[serde(default)]
    pub clean: CleanMode,
    pub split: SplitConfig,
}

fn default_zone() -> String {
    "UTC".into()
}

/// Parse and check a dataset description.
pub fn parse_dataset_spec(text: &str) -> Result<DatasetSpec, CliError> {
    let spec: DatasetSpec =
        toml::from_str(text).map_err(|e| CliError::invalid(format!("{DATASET_FILE}: {}", e.message())))?;
    if spec.schema_version != SCHEMA_VERSION {
        return Err(CliError::invalid(format!(
            "{DATASET_FILE}: schema_version {} is not supported (expected {SCHEMA_VERSION})",
            spec.schema_version
        )));
    }
    spec.zone
        .parse::<Tz>()
        .map_err(|e| CliError::invalid(format!("{DATASET_FILE}: zone: {e}")))?;
    let s = &spec.split;
    let set = [
        s.test_days.is_some(),
        s.test_start.is_some(),
        s.train_fraction.is_some(),
    ]
    .iter()
    .filter(|b| **b)
    .count();
    if set != 1 {
        return Err(CliError::invalid(format!(
            "{DATASET_FILE}: split needs exactly one of test_days, test_start, train_fraction"
        )));
    }
    if s.test_days == Some(0) {
        return Err(CliError::invalid(format!(
            "{DATASET_FILE}: split.test_days must be at least 1"
        )));
    }
    if let Some(f) = s.train_fraction {
        SplitSpec::fraction(f).map_err(|e| CliError::invalid(format!("{DATASET_FILE}: split: {e}")))?;
    }
    if let Some(ts) = &s.test_start {
        parse_timestamp(ts).ok_or_else(|| {
            CliError::invalid(format!(
                "{DATASET_FILE}: split.test_start `{ts}` is not a timestamp"
            ))
        })?;
    }
    Ok(spec)
}

/// A loaded, cleaned dataset.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub spec: DatasetSpec,
    pub set: HierarchicalSet,
    pub temperature: Series,
    pub incidence: Option<Series>,
    pub holidays: HolidayCalendar,
    /// Zone used for calendar features; `UTC` after DST harmonization.
    pub calendar_zone: Tz,
    pub split: SplitSpec,
    pub inputs: Vec<FileDigest>,
}

/// Resolve the dataset directory from the flag and `GRIDCAST_DATA_DIR`.
pub fn resolve_root(flag: Option<&Path>) -> Result<PathBuf, CliError> {
    let env = std::env::var_os("GRIDCAST_DATA_DIR").map(PathBuf::from);
    match (flag, env) {
        (Some(p), Some(base)) if p.is_relative() && !p.exists() => Ok(base.join(p)),
        (Some(p), _) => Ok(p.to_path_buf()),
        (None, Some(base)) => Ok(base),
        (None, None) => Err(CliError::invalid(
            "no dataset given: pass --dataset or set GRIDCAST_DATA_DIR",
        )),
    }
}

fn list_csv(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|e| CliError::io(dir, e)))
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::invalid(format!(
            "{}: no .csv substation files",
            dir.display()
        )));
    }
    Ok(files)
}

impl Dataset {
    pub fn load(root: &Path) -> Result<Self, CliError> {
        let spec_path = root.join(DATASET_FILE);
        let text = std::fs::read_to_string(&spec_path).map_err(|e| CliError::io(&spec_path, e))?;
        let spec = parse_dataset_spec(&text)?;
        let zone: Tz = spec.zone.parse().expect("checked by parse_dataset_spec");
        let mut inputs = vec![digest_file(&spec_path)?];
        let harmonize = |s: Series| -> Result<Series, CliError> {
            Ok(if spec.harmonize_dst {
                harmonize_dst(&s, zone)?
            } else {
                s
            })
        };

        let load_path = root.join(&spec.load);
        let set = match spec.format {
            LoadFormat::Household => {
                let mut substations = Vec::new();
                for file in list_csv(&load_path)? {
                    inputs.push(digest_file(&file)?);
                    let (kept, report) = filter_low_consumption(read_household_long(&file)?);
                    if !report.households_dropped.is_empty() {
                        log::info!(
                            "{}: dropped {} low-consumption meters",
                            file.display(),
                            report.households_dropped.len()
                        );
                    }
                    if kept.is_empty() {
                        return Err(CliError::invalid(format!(
                            "{}: every meter was dropped",
                            file.display()
                        )));
                    }
                    let meters = kept
                        .iter()
                        .map(|h| harmonize(interpolate_flagged(h)?.0))
                        .collect::<Result<Vec<_>, CliError>>()?;
                    let id = file
                        .file_stem()
                        .expect("csv file has a stem")
                        .to_string_lossy()
                        .into_owned();
                    substations.push(aggregate_bottom_up(&align(&meters)?)?.with_id(id));
                }
                HierarchicalSet::from_substations("grid", align(&substations)?)?
            }
            LoadFormat::Gefc => {
                inputs.push(digest_file(&load_path)?);
                read_gefc_load(&load_path)?
            }
        };
        let clean_mode = spec.clean;
        let set = set.map_substations(|s| -> Result<Series, CliError> {
            let s = match clean_mode {
                CleanMode::Iqr => {
                    let (cleaned, report) = iqr_clean(s)?;
                    log::info!("{}: IQR fence removed {} values", s.id(), report.removed_count);
                    cleaned
                }
                CleanMode::None => s.clone(),
            };
            let s = interpolate_flagged(&s)?.0;
            if spec.format == LoadFormat::Gefc {
                harmonize(s)
            } else {
                Ok(s)
            }
        })?;
        let set = rebuild_grid(&set)?;

        let temp_path = root.join(&spec.temperature);
        inputs.push(digest_file(&temp_path)?);
        let temperature = harmonize(interpolate_flagged(&read_gefc_temperature(&temp_path)?)?.0)?;
        let incidence = match &spec.incidence {
            Some(p) => {
                let p = root.join(p);
                inputs.push(digest_file(&p)?);
                Some(read_incidence(&p)?)
            }
            None => None,
        };
        let holidays = match &spec.holidays {
            Some(p) => {
                let p = root.join(p);
                inputs.push(digest_file(&p)?);
                HolidayCalendar::read(&p)?
            }
            None => {
                let idx = set.index();
                let years = idx.start().year()..=(idx.end() - Duration::hours(1)).year();
                HolidayCalendar::weekends_only(years)
            }
        };
        let calendar_zone = if spec.harmonize_dst { Tz::UTC } else { zone };
        let split = split_spec(&spec.split, &set)?;
        Ok(Self {
            root: root.to_path_buf(),
            spec,
            set,
            temperature,
            incidence,
            holidays,
            calendar_zone,
            split,
            inputs,
        })
    }

    pub fn frames(&self, level: Level) -> Result<Vec<CovariateFrame>, CliError> {
        Ok(assemble_covariates(
            &self.set,
            &self.temperature,
            self.incidence.as_ref(),
            &self.holidays,
            self.calendar_zone,
            level,
        )?)
    }

    pub fn train_len(&self) -> Result<usize, CliError> {
        Ok(self.split.train_len(self.set.index())?)
    }
}

fn split_spec(cfg: &SplitConfig, set: &HierarchicalSet) -> Result<SplitSpec, CliError> {
    let index = set.index();
    if let Some(days) = cfg.test_days {
        let boundary: DateTime<Utc> = index.end() - Duration::hours(24 * days as i64);
        return Ok(SplitSpec::Boundary(boundary));
    }
    if let Some(ts) = &cfg.test_start {
        return Ok(SplitSpec::Boundary(
            parse_timestamp(ts).expect("checked by parse_dataset_spec"),
        ));
    }
    Ok(SplitSpec::fraction(
        cfg.train_fraction.expect("one split field is set"),
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
schema_version = 1
name = "demo"
format = "household"
load = "substations"
temperature = "temperature.csv"
split = { test_days = 18 }
"#;

    #[test]
    fn minimal_spec_parses_with_defaults() {
        let spec = parse_dataset_spec(MINIMAL).unwrap();
        assert_eq!(spec.zone, "UTC");
        assert_eq!(spec.clean, CleanMode::None);
        assert!(!spec.harmonize_dst);
    }

    #[test]
    fn unknown_keys_are_errors() {
        let text = format!("{MINIMAL}\nlaod = \"x\"\n");
        let err = parse_dataset_spec(&text).unwrap_err().to_string();
        assert!(err.contains("laod"), "{err}");
    }

    #[test]
    fn split_must_name_one_rule() {
        let text = MINIMAL.replace("{ test_days = 18 }", "{ test_days = 18, train_fraction = 0.8 }");
        assert!(parse_dataset_spec(&text).is_err());
        let text = MINIMAL.replace("{ test_days = 18 }", "{}");
        assert!(parse_dataset_spec(&text).is_err());
    }

    #[test]
    fn wrong_version_and_zone_are_rejected() {
        assert!(parse_dataset_spec(&MINIMAL.replace("schema_version = 1", "schema_version = 2")).is_err());
        let text = format!("{MINIMAL}\nzone = \"Mars/Olympus\"\n");
        assert!(parse_dataset_spec(&text).is_err());
    }
}
