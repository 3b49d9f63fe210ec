//! Trial and target cohorts: schema, ingestion, support trimming and
//! baseline balance.

mod balance;
mod trim;

use std::borrow::Cow;
use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use balance::{balance_table, BalanceRow, BalanceTable, GroupSummary, TestKind};
pub(crate) use balance::align as align_rows;
pub use trim::{trim_to_support, SupportTrimmer, TrimMethod, TrimReport};

/// Name of the treatment-arm column in trial files.
pub const ARM_COLUMN: &str = "arm";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateKind {
    Continuous,
    Binary,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    pub kind: CovariateKind,
}

/// Ordered covariate list. The order is canonical for every covariate
/// vector in the crate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovariateSchema {
    entries: Vec<Covariate>,
}

impl CovariateSchema {
    pub fn new(entries: Vec<Covariate>) -> Result<Self> {
        if entries.is_empty() {
            return Err(Error::Schema {
                line: 0,
                message: "schema declares no covariates".into(),
            });
        }
        for (i, c) in entries.iter().enumerate() {
            if c.name.trim().is_empty() {
                return Err(Error::Schema {
                    line: i + 1,
                    message: "empty covariate name".into(),
                });
            }
            if c.name == ARM_COLUMN {
                return Err(Error::Schema {
                    line: i + 1,
                    message: format!("`{ARM_COLUMN}` is reserved for the treatment column"),
                });
            }
            if entries[..i].iter().any(|o| o.name == c.name) {
                return Err(Error::Schema {
                    line: i + 1,
                    message: format!("duplicate covariate `{}`", c.name),
                });
            }
        }
        Ok(Self { entries })
    }

    /// Parses `name:kind` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (name, kind) = line.split_once(':').ok_or_else(|| Error::Schema {
                line: idx + 1,
                message: format!("expected `name:kind`, got `{line}`"),
            })?;
            let kind = match kind.trim().to_ascii_lowercase().as_str() {
                "continuous" => CovariateKind::Continuous,
                "binary" => CovariateKind::Binary,
                other => {
                    return Err(Error::Schema {
                        line: idx + 1,
                        message: format!("unknown kind `{other}` (continuous or binary)"),
                    })
                }
            };
            entries.push(Covariate {
                name: name.trim().to_string(),
                kind,
            });
        }
        Self::new(entries)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for c in &self.entries {
            let kind = match c.kind {
                CovariateKind::Continuous => "continuous",
                CovariateKind::Binary => "binary",
            };
            out.push_str(&format!("{}:{}\n", c.name, kind));
        }
        out
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Covariate] {
        &self.entries
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|c| c.name == name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|c| c.name.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Trial,
    Target,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnitRecord {
    pub covariates: Vec<f64>,
    pub arm: Option<u8>,
    /// Observed outcomes; a follow-up that was not recorded is simply absent.
    pub outcomes: BTreeMap<String, f64>,
}

impl UnitRecord {
    pub fn target(covariates: Vec<f64>) -> Self {
        Self {
            covariates,
            arm: None,
            outcomes: BTreeMap::new(),
        }
    }

    pub fn trial(covariates: Vec<f64>, arm: u8, outcomes: BTreeMap<String, f64>) -> Self {
        Self {
            covariates,
            arm: Some(arm),
            outcomes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyDataset {
    schema: CovariateSchema,
    source: Source,
    outcome_names: Vec<String>,
    records: Vec<UnitRecord>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct IngestOptions {
    /// Drop rows with missing covariates or arm instead of failing.
    pub drop_missing: bool,
}

#[derive(Debug, Clone)]
pub struct Ingested {
    pub dataset: StudyDataset,
    /// Rows removed by complete-case filtering.
    pub dropped_rows: usize,
}

fn is_missing(cell: &str) -> bool {
    matches!(cell.trim(), "" | "NA" | "na" | "NaN" | "nan" | ".")
}

impl StudyDataset {
    pub fn new(
        schema: CovariateSchema,
        source: Source,
        outcome_names: Vec<String>,
        records: Vec<UnitRecord>,
    ) -> Result<Self> {
        let p = schema.len();
        for (row, rec) in records.iter().enumerate() {
            if rec.covariates.len() != p {
                return Err(Error::InvalidArgument(format!(
                    "record {row} has {} covariates, schema declares {p}",
                    rec.covariates.len()
                )));
            }
            for (j, c) in schema.entries().iter().enumerate() {
                let v = rec.covariates[j];
                if !v.is_finite() {
                    return Err(Error::MissingValue {
                        row,
                        column: c.name.clone(),
                    });
                }
                if c.kind == CovariateKind::Binary && v != 0.0 && v != 1.0 {
                    return Err(Error::BinaryOutOfRange {
                        row,
                        column: c.name.clone(),
                        value: v,
                    });
                }
            }
            match source {
                Source::Trial => {
                    if rec.arm.is_none() {
                        return Err(Error::MissingValue {
                            row,
                            column: ARM_COLUMN.into(),
                        });
                    }
                    if rec.outcomes.is_empty() {
                        return Err(Error::InvalidArgument(format!(
                            "trial record {row} has no observed outcome"
                        )));
                    }
                }
                Source::Target => {
                    if rec.arm.is_some() || !rec.outcomes.is_empty() {
                        return Err(Error::InvalidArgument(format!(
                            "target record {row} carries trial-only fields"
                        )));
                    }
                }
            }
        }
        let ds = Self {
            schema,
            source,
            outcome_names,
            records,
        };
        if source == Source::Trial {
            let treated = ds.records.iter().filter(|r| r.arm == Some(1)).count();
            if treated == 0 || treated == ds.records.len() {
                return Err(Error::DegenerateSample(
                    "trial needs units in both arms".into(),
                ));
            }
        }
        Ok(ds)
    }

    pub fn ingest(
        path: impl AsRef<Path>,
        schema: &CovariateSchema,
        source: Source,
        options: IngestOptions,
    ) -> Result<Ingested> {
        Self::ingest_reader(File::open(path)?, schema, source, options)
    }

    pub fn ingest_reader<R: Read>(
        reader: R,
        schema: &CovariateSchema,
        source: Source,
        options: IngestOptions,
    ) -> Result<Ingested> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        let find = |name: &str| {
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn {
                    column: name.to_string(),
                })
        };
        let cov_cols = schema.names().map(find).collect::<Result<Vec<_>>>()?;
        let arm_col = match source {
            Source::Trial => Some(find(ARM_COLUMN)?),
            Source::Target => None,
        };
        let outcome_cols: Vec<(usize, String)> = match source {
            Source::Trial => header
                .iter()
                .enumerate()
                .filter(|(i, _)| !cov_cols.contains(i) && Some(*i) != arm_col)
                .map(|(i, h)| (i, h.clone()))
                .collect(),
            Source::Target => Vec::new(),
        };
        if source == Source::Trial && outcome_cols.is_empty() {
            return Err(Error::MissingColumn {
                column: "<outcome>".into(),
            });
        }

        let parse = |row: usize, col: usize, cell: &str| -> Result<f64> {
            cell.trim().parse::<f64>().map_err(|_| Error::NonNumericCell {
                row,
                column: header[col].clone(),
                value: cell.to_string(),
            })
        };

        let mut records = Vec::new();
        let mut dropped_rows = 0;
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            // 1-based data row numbering, header excluded.
            let row = row + 1;
            let cell = |col: usize| rec.get(col).unwrap_or("");

            let mut missing = None;
            let mut covariates = Vec::with_capacity(cov_cols.len());
            for (j, &col) in cov_cols.iter().enumerate() {
                let text = cell(col);
                if is_missing(text) {
                    missing.get_or_insert(col);
                    covariates.push(f64::NAN);
                    continue;
                }
                let v = parse(row, col, text)?;
                if schema.entries()[j].kind == CovariateKind::Binary && v != 0.0 && v != 1.0 {
                    return Err(Error::BinaryOutOfRange {
                        row,
                        column: header[col].clone(),
                        value: v,
                    });
                }
                covariates.push(v);
            }
            let mut arm = None;
            if let Some(col) = arm_col {
                let text = cell(col);
                if is_missing(text) {
                    missing.get_or_insert(col);
                } else {
                    let v = parse(row, col, text)?;
                    if v != 0.0 && v != 1.0 {
                        return Err(Error::BinaryOutOfRange {
                            row,
                            column: header[col].clone(),
                            value: v,
                        });
                    }
                    arm = Some(v as u8);
                }
            }
            let mut outcomes = BTreeMap::new();
            for (col, name) in &outcome_cols {
                let text = cell(*col);
                if !is_missing(text) {
                    outcomes.insert(name.clone(), parse(row, *col, text)?);
                }
            }
            if source == Source::Trial && outcomes.is_empty() && missing.is_none() {
                missing = Some(outcome_cols[0].0);
            }
            if let Some(col) = missing {
                if options.drop_missing {
                    dropped_rows += 1;
                    continue;
                }
                return Err(Error::MissingValue {
                    row,
                    column: header[col].clone(),
                });
            }
            records.push(UnitRecord {
                covariates,
                arm,
                outcomes,
            });
        }
        let outcome_names = outcome_cols.into_iter().map(|(_, n)| n).collect();
        let dataset = Self::new(schema.clone(), source, outcome_names, records)?;
        Ok(Ingested {
            dataset,
            dropped_rows,
        })
    }

    /// Writes the dataset back as CSV. Numbers use the shortest
    /// representation that parses back to the same `f64`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header: Vec<&str> = self.schema.names().collect();
        if self.source == Source::Trial {
            header.push(ARM_COLUMN);
            header.extend(self.outcome_names.iter().map(String::as_str));
        }
        w.write_record(&header)?;
        for rec in &self.records {
            let mut row: Vec<String> = rec.covariates.iter().map(|v| v.to_string()).collect();
            if let Some(a) = rec.arm {
                row.push(a.to_string());
                for name in &self.outcome_names {
                    row.push(rec.outcomes.get(name).map(f64::to_string).unwrap_or_default());
                }
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn schema(&self) -> &CovariateSchema {
        &self.schema
    }

    pub fn source(&self) -> Source {
        self.source
    }

    pub fn records(&self) -> &[UnitRecord] {
        &self.records
    }

    pub fn outcome_names(&self) -> &[String] {
        &self.outcome_names
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn covariate_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.records.iter().map(|r| r.covariates.as_slice())
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.covariates[j]).collect()
    }

    pub fn arms(&self) -> Vec<u8> {
        self.records.iter().map(|r| r.arm.unwrap_or(0)).collect()
    }

    pub fn treated_fraction(&self) -> f64 {
        let treated = self.records.iter().filter(|r| r.arm == Some(1)).count();
        treated as f64 / self.records.len() as f64
    }

    /// Outcome values in record order. Only meaningful on a dataset returned
    /// by [`StudyDataset::for_outcome`], where every unit has the outcome.
    pub fn outcome_values(&self, outcome: &str) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| r.outcomes.get(outcome).copied().unwrap_or(f64::NAN))
            .collect()
    }

    /// Trial units with `outcome` observed, all other outcomes removed.
    /// Borrows when the dataset already has that shape.
    pub fn for_outcome(&self, outcome: &str) -> Result<Cow<'_, StudyDataset>> {
        if self.source != Source::Trial {
            return Err(Error::InvalidArgument("outcomes exist only on trial data".into()));
        }
        if !self.outcome_names.iter().any(|n| n == outcome) {
            return Err(Error::MissingColumn {
                column: outcome.to_string(),
            });
        }
        if self.outcome_names.len() == 1 && self.records.iter().all(|r| r.outcomes.contains_key(outcome)) {
            return Ok(Cow::Borrowed(self));
        }
        let records = self
            .records
            .iter()
            .filter_map(|r| {
                r.outcomes.get(outcome).map(|&y| UnitRecord {
                    covariates: r.covariates.clone(),
                    arm: r.arm,
                    outcomes: BTreeMap::from([(outcome.to_string(), y)]),
                })
            })
            .collect();
        StudyDataset::new(
            self.schema.clone(),
            Source::Trial,
            vec![outcome.to_string()],
            records,
        )
        .map(Cow::Owned)
    }

    /// Same cohort restricted to the given record indices (repeats allowed).
    pub fn subset(&self, indices: &[usize]) -> StudyDataset {
        StudyDataset {
            schema: self.schema.clone(),
            source: self.source,
            outcome_names: self.outcome_names.clone(),
            records: indices.iter().map(|&i| self.records[i].clone()).collect(),
        }
    }

    /// Applies `f` to every outcome value. Used by equivariance checks and
    /// unit conversions.
    pub fn map_outcomes(&self, f: impl Fn(f64) -> f64) -> StudyDataset {
        let mut out = self.clone();
        for r in &mut out.records {
            for v in r.outcomes.values_mut() {
                *v = f(*v);
            }
        }
        out
    }

    /// Drops covariate `j` from schema and records.
    pub fn without_covariate(&self, j: usize) -> Result<StudyDataset> {
        let mut entries = self.schema.entries().to_vec();
        entries.remove(j);
        let schema = CovariateSchema::new(entries)?;
        let records = self
            .records
            .iter()
            .map(|r| {
                let mut r = r.clone();
                r.covariates.remove(j);
                r
            })
            .collect();
        StudyDataset::new(schema, self.source, self.outcome_names.clone(), records)
    }
}
