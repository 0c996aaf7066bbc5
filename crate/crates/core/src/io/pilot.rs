//! Pilot and analysis data from delimited text with a header row.

use std::collections::HashSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Arm, PilotDataset, PilotRow, Validate};

/// Maps CSV columns onto treatment, covariates and outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSchema {
    pub treatment_column: String,
    #[serde(default)]
    pub covariate_columns: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome_column: Option<String>,
}

/// What to do with rows that have an empty required field.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MissingPolicy {
    #[default]
    Reject,
    DropIncomplete,
}

/// Parsed data plus the (1-based) data rows dropped as incomplete.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadedData {
    pub data: PilotDataset,
    pub dropped: Vec<usize>,
}

const MISSING: [&str; 4] = ["", "NA", "na", "."];

fn is_missing(s: &str) -> bool {
    MISSING.contains(&s.trim())
}

impl DataSchema {
    fn check(&self) -> Result<()> {
        let mut seen = HashSet::new();
        let all = std::iter::once(&self.treatment_column)
            .chain(&self.covariate_columns)
            .chain(&self.outcome_column);
        for c in all {
            if !seen.insert(c.as_str()) {
                return Err(Error::Schema(format!(
                    "column '{c}' is mapped more than once"
                )));
            }
        }
        Ok(())
    }
}

/// Reads a CSV file, rejecting any row with a missing required field.
pub fn read_pilot_csv(path: impl AsRef<Path>, schema: &DataSchema) -> Result<PilotDataset> {
    Ok(read_pilot_csv_with(path, schema, MissingPolicy::Reject)?.data)
}

pub fn read_pilot_csv_with(
    path: impl AsRef<Path>,
    schema: &DataSchema,
    policy: MissingPolicy,
) -> Result<LoadedData> {
    parse_pilot(File::open(path)?, schema, policy)
}

/// Parses CSV text. Row numbers in errors count data rows from 1.
pub fn parse_pilot<R: Read>(
    reader: R,
    schema: &DataSchema,
    policy: MissingPolicy,
) -> Result<LoadedData> {
    schema.check()?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut names = HashSet::new();
    for h in &headers {
        if !names.insert(h) {
            return Err(Error::Schema(format!("duplicate header '{h}'")));
        }
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let t_col = find(&schema.treatment_column)?;
    let x_cols = schema
        .covariate_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<Vec<_>>>()?;
    let y_col = schema.outcome_column.as_deref().map(find).transpose()?;

    let mut rows = Vec::new();
    let mut incomplete = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let field = |c: usize| record.get(c).unwrap_or("");
        let required = std::iter::once(t_col)
            .chain(x_cols.iter().copied())
            .chain(y_col);
        if required.clone().any(|c| is_missing(field(c))) {
            incomplete.push(row);
            continue;
        }
        let a = match field(t_col) {
            "0" | "0.0" => Arm::Control,
            "1" | "1.0" => Arm::Treated,
            other => {
                return Err(Error::Parse {
                    row,
                    column: schema.treatment_column.clone(),
                    message: format!("treatment must be 0 or 1, got '{other}'"),
                })
            }
        };
        let number = |c: usize, name: &str| -> Result<f64> {
            let s = field(c);
            match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(Error::Parse {
                    row,
                    column: name.to_string(),
                    message: format!("expected a finite number, got '{s}'"),
                }),
            }
        };
        let x = x_cols
            .iter()
            .zip(&schema.covariate_columns)
            .map(|(&c, name)| number(c, name))
            .collect::<Result<Vec<_>>>()?;
        let y = match (y_col, &schema.outcome_column) {
            (Some(c), Some(name)) => Some(number(c, name)?),
            _ => None,
        };
        rows.push(PilotRow { a, x, y });
    }
    if !incomplete.is_empty() && policy == MissingPolicy::Reject {
        return Err(Error::IncompleteRows { rows: incomplete });
    }
    let data = PilotDataset {
        covariate_names: schema.covariate_columns.clone(),
        rows,
    }
    .validate()
    .map_err(Error::Invalid)?;
    Ok(LoadedData {
        data,
        dropped: incomplete,
    })
}
